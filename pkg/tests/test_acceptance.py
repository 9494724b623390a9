"""Acceptance criteria 1-10 at their stated tolerances.

Each test records a one-line verdict that is printed in the terminal summary.
"""

import time

import numpy as np
import pytest
from scipy import integrate

from conftest import random_target, record
from test_solver import complementarity, oracle_system, q_norm
from vescap import cli
from vescap.capacity import capacity_indices, energy_capacity, power_capacity
from vescap.cli import Pipeline
from vescap.config import ResultDocument, load_config
from vescap.constraints import BinSpec, EnsembleSpec, build_constraints
from vescap.dynamics import QosEnvelope, commercial_hvac, energy_window_gain_sq
from vescap.ensemble import aggregate_bounds, correlated_paths
from vescap.grid import FrequencyGrid, SpectralDensity
from vescap.montecarlo import _functionals, functional_variances, synthesize_paths, verify_chebyshev
from vescap.solver import project, project_onto, solve_bounds
from vescap.spectral import (
    ArmaSpectrum, TimeSeries, estimate_psd, evaluate_arma_psd, fit_arma_spectrum, log_rmse,
    simulate_arma,
)

pytestmark = pytest.mark.acceptance

HIGH_BAND = ["passband.lo=2.0", "passband.hi=60.0"]
LOW_BAND = ["passband.lo=0.125", "passband.hi=0.5"]


def planning_target(band):
    return Pipeline(load_config(None, band)).target()


def test_c1_solver_oracle(oracles):
    worst_err = worst_time = 0.0
    ok = True
    for case in oracles["qp5"]:
        t, cs = oracle_system(case)
        t0 = time.perf_counter()
        res = project_onto(t, cs)
        elapsed = time.perf_counter() - t0
        err = float(np.max(np.abs(res.per_bin[0].values - np.array(case["x"]))))
        worst_err, worst_time = max(worst_err, err), max(worst_time, elapsed)
        ok = ok and res.converged and err <= 1e-4 and elapsed < 1.0
    record(1, ok, f"20 cases, max |x - x*| = {worst_err:.1e}, max time {worst_time:.3f} s")
    assert ok


def test_c2_feasibility_and_kkt(planning_grid):
    rng = np.random.default_rng(2024)
    worst_margin, worst_comp, worst_time = np.inf, 0.0, 0.0
    ok = True
    for _ in range(10):
        bins = []
        for _ in range(int(rng.integers(1, 4))):
            qos, dyn = commercial_hvac(str(rng.choice(["small", "large"])))
            bins.append(BinSpec(qos, dyn, int(rng.integers(1, 5000))))
        ens = EnsembleSpec(tuple(bins))
        t = random_target(planning_grid, rng).scaled(10 ** rng.uniform(2, 7))
        t0 = time.perf_counter()
        pair = solve_bounds(t, ens)
        elapsed = time.perf_counter() - t0
        worst_time = max(worst_time, elapsed)
        for res in (pair.lower, pair.upper):
            margin = float(np.min(res.feasibility.relative_margins))
            comp = complementarity(res)
            worst_margin, worst_comp = min(worst_margin, margin), max(worst_comp, comp)
            ok = ok and res.converged and res.feasibility.feasible and margin >= -1e-6 and comp <= 1e-6
        ok = ok and elapsed < 30.0
    record(2, ok, f"10 instances, min margin/budget {worst_margin:.1e}, "
                  f"max complementarity {worst_comp:.1e}, max time {worst_time:.2f} s")
    assert ok


def test_c3_idempotent_projection(planning_grid):
    rng = np.random.default_rng(3)
    worst = 0.0
    for frac in (0.05, 0.3, 0.6, 0.9, 1.0):
        ens = EnsembleSpec((BinSpec(*commercial_hvac("large"), int(rng.integers(1, 1000))),))
        cs = build_constraints(ens, planning_grid)
        t = random_target(planning_grid, rng)
        # scale so the tightest budget is used to the given fraction (1.0 sits on the boundary)
        t = t.scaled(frac / max(r.value(t.values) / r.budget for r in cs.rows))
        res = project(t, ens)
        worst = max(worst, res.objective / q_norm(planning_grid, t.values) ** 2)
    ok = worst <= 1e-10
    record(3, ok, f"5 feasible targets, max objective/||t||^2 = {worst:.1e}")
    assert ok


def test_c4_capacity_cancellation_and_saturation(planning_grid, oracles):
    from test_capacity import saturating_spectrum

    rng = np.random.default_rng(4)
    spread = 0.0
    for _ in range(10):
        t = random_target(planning_grid, rng)
        agg = SpectralDensity(planning_grid, t.values * rng.uniform(0, 1, len(planning_grid)))
        z = np.array([capacity_indices(agg, t, (e, e), 24.0) for e in (0.01, 0.05, 0.5)])
        spread = max(spread, float(np.max(np.abs(z - z[1]) / np.maximum(1.0, np.abs(z[1])))))
    qos, dyn = commercial_hvac("small")
    s, _ = saturating_spectrum(planning_grid, qos, dyn, oracles["small_saturation"]["bands"])
    pow_err = abs(power_capacity(s, qos.eps[0]) - 4.0) / 4.0
    eng_err = abs(energy_capacity(s, qos.eps[2], qos.horizon_T) - 0.5) / 0.5
    ok = spread <= 1e-12 and pow_err <= 1e-9 and eng_err <= 1e-9
    record(4, ok, f"eps spread {spread:.1e}; Pow rel err {pow_err:.1e}, Eng rel err {eng_err:.1e}")
    assert ok


def _first_reach(n, z, level):
    hit = np.nonzero(z >= level)[0]
    return n[hit[0]] if hit.size else np.inf


def test_c5_sweep_shape():
    t0 = time.perf_counter()
    curves = {}
    for name, band in (("high", HIGH_BAND), ("low", LOW_BAND)):
        pipe = Pipeline(load_config(None, band + ["ensemble.bins=[{count: 15000, size: large}]"]))
        rows = pipe.sweep()
        curves[name] = (np.array([r["n"] for r in rows]),
                        np.array([r["zeta_p"] for r in rows]),
                        np.array([r["zeta_e"] for r in rows]),
                        all(r["converged"] for r in rows))
    elapsed = time.perf_counter() - t0
    n = curves["high"][0]
    ok = len(n) == 12 and curves["high"][3] and curves["low"][3] and elapsed < 300
    for name in ("high", "low"):
        for z in curves[name][1:3]:
            # nondecreasing up to the solver tolerance on the percentage scale
            ok = ok and bool(np.all(np.diff(z) >= -1e-6 * 100))
    hp, he = curves["high"][1:3]
    ok = ok and hp.max() >= 99 and he.max() >= 99
    levels = [1, 5, 10, 20, 30, 40, 50, 60, 70, 80, 90, 99]
    for k in (1, 2):
        for lev in levels:
            nh = _first_reach(n, curves["high"][k], lev)
            nl = _first_reach(n, curves["low"][k], lev)
            ok = ok and nh < np.inf and nl > nh
    lp, le = curves["low"][1:3]
    record(5, ok, f"high zeta_P {hp[0]:.1f}->{hp[-1]:.1f}, zeta_E {he[0]:.1f}->{he[-1]:.1f}; "
                  f"low zeta_P {lp[0]:.2f}->{lp[-1]:.1f}, zeta_E {le[0]:.2f}->{le[-1]:.1f}; "
                  f"{elapsed:.1f} s")
    assert ok


def test_c6_heterogeneous_bounds():
    pipe = Pipeline(load_config(None, HIGH_BAND + [
        "ensemble.bins=[{count: 900, size: small}, {count: 2100, size: large}]"]))
    pair = pipe.project()
    lo, hi = pair.lower.aggregate.values, pair.upper.aggregate.values
    z = pair.zeta
    ok = (bool(np.all(lo <= hi)) and z["lower"]["zeta_p"] <= z["upper"]["zeta_p"]
          and z["lower"]["zeta_e"] <= z["upper"]["zeta_e"]
          and pair.lower.converged and pair.upper.converged)
    record(6, ok, f"zeta_P {z['lower']['zeta_p']:.2f} <= {z['upper']['zeta_p']:.2f}, "
                  f"zeta_E {z['lower']['zeta_e']:.2f} <= {z['upper']['zeta_e']:.2f}, pointwise ok")
    assert ok


def test_c7_chebyshev_monte_carlo():
    t0 = time.perf_counter()
    base, dyn = commercial_hvac("small")
    qos = QosEnvelope(base.c1, base.c2, base.c3, base.c4, base.delta, horizon_T=1.0, eps=(0.1,) * 4)
    res = project(planning_target(HIGH_BAND), EnsembleSpec((BinSpec(qos, dyn, 1),)))
    psd = res.per_bin[0]
    good = 0
    worst = 0.0
    for batch in range(200):
        rep = verify_chebyshev(psd, qos, dyn, trials=200, seed=batch, n_samples=4096)
        p = max(v.p_hat for v in rep.per_qos)
        worst = max(worst, p)
        good += p <= 0.1
    elapsed = time.perf_counter() - t0
    ok = res.feasibility.feasible and good >= 190 and elapsed < 120
    record(7, ok, f"{good}/200 batches with every p_hat <= 0.1 (worst {worst:.4f}), {elapsed:.1f} s")
    assert ok


def _lowpass(dt, n=1025):
    g = FrequencyGrid(np.linspace(0, np.pi / dt, n))
    return SpectralDensity(g, 1.0 / (1.0 + (g.omegas / 20.0) ** 2))


def test_c8_spectral_machinery():
    checks = {}
    dt = 10.0 / 3600.0
    qos, dyn = commercial_hvac("small")
    qos = QosEnvelope(qos.c1, qos.c2, qos.c3, qos.c4, qos.delta, horizon_T=1.0)
    s = _lowpass(dt)
    batch = synthesize_paths(s, 2**14, dt, 64, seed=8)
    # Parseval: path variance and Welch estimate against the spectrum
    est = estimate_psd(TimeSeries(batch.data[0], dt), segment_length=2048)
    checks["parseval"] = max(abs(batch.data.var() / s.variance() - 1),
                             abs(est.variance() / batch.data[0].var() - 1)) <= 0.05
    power, ramp, energy, theta = _functionals(batch.data, dt, qos, dyn)
    pred = functional_variances(s, qos, dyn)
    checks["transport"] = (abs(np.var(theta) / pred[3] - 1) <= 0.10
                           and abs(np.var(energy) / pred[2] - 1) <= 0.10)
    # ramp identity with the empirical autocovariance at lags 0 and delta
    m = round(qos.delta / dt)
    x = batch.data
    r0 = np.mean(x * x)
    rd = np.mean(x[:, m:] * x[:, :-m])
    checks["ramp"] = abs(np.var(ramp) / (2 * (r0 - rd)) - 1) <= 0.05
    # energy window: time-domain double integral of R against the |G|^2 form
    T = qos.horizon_T
    R = lambda tau: s.grid.integrate(s.values * np.cos(s.omegas * tau)) / np.pi
    time_domain = 2 * integrate.quad(lambda tau: (T - tau) * R(tau), 0, T, limit=200)[0]
    freq = integrate.quad(lambda w: energy_window_gain_sq(T, w) * s.interp(w), 0, s.grid.omega_max,
                          limit=2000)[0] / np.pi
    checks["energy window"] = abs(time_domain / freq - 1) <= 0.05
    # homogeneous aggregation: two duplicated paths give four times the single spectrum
    pair = correlated_paths(s, [2], 2**14, dt, rho=0.0, seed=9)
    single = estimate_psd(TimeSeries(pair[0], dt), segment_length=2048)
    double = estimate_psd(TimeSeries(pair.sum(axis=0), dt), segment_length=2048)
    checks["n^2"] = abs(double.integral() / single.integral() / 4 - 1) <= 0.10
    # sandwich: averaged estimate of correlated groups inside [lower, upper]
    sizes = [3, 5]
    seg = 256
    est_grid = FrequencyGrid(2 * np.pi * np.fft.rfftfreq(seg, d=dt))
    reps = [estimate_psd(TimeSeries(correlated_paths(s, sizes, 4096, dt, rho=0.5, seed=k).sum(axis=0),
                                    dt), segment_length=seg).values for k in range(60)]
    agg = SpectralDensity(est_grid, np.mean(reps, axis=0))
    per = SpectralDensity(est_grid, s.interp(est_grid.omegas))
    inside = aggregate_bounds([per.scaled(n**2) for n in sizes]).contains(agg)[1:]
    checks["sandwich"] = inside.mean() >= 0.95
    ok = all(checks.values())
    record(8, ok, ", ".join(f"{k} {'ok' if v else 'FAILED'}" for k, v in checks.items()))
    assert ok


def test_c9_arma_round_trip(oracles):
    o = oracles["arma21"]
    true = ArmaSpectrum(o["ar"], o["ma"], o["sigma2"], o["dt"])
    ts = simulate_arma(true, 2**17, seed=9)
    est = estimate_psd(ts, segment_length=1024)
    fit = fit_arma_spectrum(est, 2, 1, dt=ts.dt, seed=0)
    again = fit_arma_spectrum(est, 2, 1, dt=ts.dt, seed=0)
    err = log_rmse(evaluate_arma_psd(fit, est.grid), evaluate_arma_psd(true, est.grid))
    same = np.array_equal(fit.ar, again.ar) and np.array_equal(fit.ma, again.ma) \
        and fit.sigma2 == again.sigma2
    ok = err <= 0.1 and same
    record(9, ok, f"log-spectrum RMSE {err:.3f}, refit identical: {same}")
    assert ok


def test_c10_end_to_end_determinism(tmp_path, capsys):
    hashes = []
    codes = []
    for name in ("first", "second"):
        codes.append(cli.main(["all", "--seed", "11", "--out", str(tmp_path / name)]))
        doc = ResultDocument.model_validate_json((tmp_path / name / "result.json").read_text())
        hashes.append(doc.hash)
    ok = codes == [0, 0] and hashes[0] == hashes[1]
    record(10, ok, f"exit codes {codes}, hashes {hashes[0][:12]} / {hashes[1][:12]}")
    assert ok
