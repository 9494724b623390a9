"""Projection of a target spectrum onto the ensemble feasible set.

The problem is the quadratic program::

    min  sum_k q_k (sum_l x_lk - t_k)^2 + r sum_lk q_k x_lk^2
    s.t. a_i . x_{l(i)} <= b_i,   x >= 0

with trapezoid weights ``q``, a handful of budget rows per bin and the small
regularizer ``r`` selecting the minimum-norm split between bins.  It is solved
in the dual: for fixed multipliers the Lagrangian separates over frequencies
into tiny nonnegative least-squares problems with a closed-form
water-filling solution, and the concave, piecewise-quadratic dual is
maximized by projected Newton steps with an Armijo search.  The returned
KKT residuals certify the solution.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .constraints import ConstraintSystem, EnsembleSpec, FeasibilityReport, build_constraints, feasibility_report
from .errors import GridMismatchError
from .grid import SpectralDensity, sum_spectra

log = logging.getLogger(__name__)

REGULARIZATION = 1e-8


@dataclass(frozen=True, eq=False)
class ProjectionResult:
    per_bin: tuple[SpectralDensity, ...]
    aggregate: SpectralDensity
    objective: float
    kkt: dict
    iterations: int
    converged: bool
    duals: np.ndarray = field(repr=False)
    n_bin_scale: int = 1
    feasibility: FeasibilityReport | None = field(default=None, repr=False)

    def summary(self) -> dict:
        return {
            "objective": self.objective,
            "iterations": self.iterations,
            "converged": self.converged,
            "n_bin_scale": self.n_bin_scale,
            "kkt": dict(self.kkt),
            "duals": [float(v) for v in self.duals],
        }


@dataclass(frozen=True, eq=False)
class BoundPair:
    lower: ProjectionResult
    upper: ProjectionResult
    zeta: dict = field(default_factory=dict)


class _DualProblem:
    """Normalized data and oracle evaluations for the dual of the projection QP."""

    def __init__(self, target: np.ndarray, cs: ConstraintSystem, reg: float):
        q = cs.grid.weights
        self.scale = float(np.max(target))
        self.t = target / self.scale
        self.wnorm = float(np.dot(q, self.t**2))
        self.q = q / self.wnorm
        self.reg = reg
        self.nb = cs.n_bins
        self.bin_of = np.array([r.bin_index for r in cs.rows])
        # rows scaled so every budget is 1 in normalized units
        self.A = np.array([r.coefficients * self.scale / r.budget for r in cs.rows])
        self.m = len(cs.rows)

    def primal(self, lam: np.ndarray):
        """Lagrangian minimizer x (nb, N) and active-bin counts per frequency."""
        r = self.reg
        c = np.zeros((self.nb, self.t.size))
        np.add.at(c, self.bin_of, lam[:, None] * self.A)
        d = (c / self.q).T  # (N, nb)
        order = np.argsort(d, axis=1, kind="stable")
        ds = np.take_along_axis(d, order, axis=1)
        cum = np.cumsum(ds, axis=1)
        ms = np.arange(1, self.nb + 1)
        means = cum / ms
        t = self.t[:, None]
        head = (t - 0.5 * means) / (r + ms)
        ok = head > (ds - means) / (2 * r)
        # active sets are prefixes of the sorted order
        count = np.where(ok.any(axis=1), self.nb - np.argmax(ok[:, ::-1], axis=1), 0)
        k = np.maximum(count, 1) - 1
        rows = np.arange(self.t.size)
        mean_a = means[rows, k]
        head_a = head[rows, k]
        x_sorted = head_a[:, None] - (ds - mean_a[:, None]) / (2 * r)
        x_sorted = np.where(ms[None, :] <= count[:, None], np.maximum(x_sorted, 0.0), 0.0)
        x = np.empty_like(x_sorted)
        np.put_along_axis(x, order, x_sorted, axis=1)
        return x.T, c, count, order

    def value(self, lam, x, c) -> float:
        s = x.sum(axis=0)
        f = np.dot(self.q, (s - self.t) ** 2) + self.reg * np.sum(self.q * x**2)
        return float(f + np.sum(c * x) - lam.sum())

    def gradient(self, x) -> np.ndarray:
        return np.einsum("ik,ik->i", self.A, x[self.bin_of]) - 1.0

    def hessian(self, count, order) -> np.ndarray:
        """Curvature of the negated dual (positive semidefinite)."""
        r = self.reg
        n = self.t.size
        ranks = np.empty_like(order)
        np.put_along_axis(ranks, order, np.arange(self.nb)[None, :].repeat(n, 0), axis=1)
        active = ranks < count[:, None]
        cnt = count.astype(float)
        diag = (r + (cnt - 1.0)) / (2 * r * (r + cnt))
        off = -1.0 / (2 * r * (r + cnt))
        diag = np.where(count > 0, diag, 0.0)
        off = np.where(count > 0, off, 0.0)
        H = np.zeros((self.m, self.m))
        for l1 in range(self.nb):
            i1 = np.flatnonzero(self.bin_of == l1)
            for l2 in range(self.nb):
                i2 = np.flatnonzero(self.bin_of == l2)
                both = active[:, l1] & active[:, l2]
                coef = (diag if l1 == l2 else off) * both / self.q
                H[np.ix_(i1, i2)] = (self.A[i1] * coef) @ self.A[i2].T
        return 0.5 * (H + H.T)

    def kkt(self, lam, x, c) -> dict:
        g = self.gradient(x)
        s = x.sum(axis=0)
        grad_x = 2 * self.q * (s - self.t) + 2 * self.reg * self.q * x + c
        scale = np.maximum(np.abs(self.t), 1.0)
        stat = np.abs(x - np.maximum(0.0, x - grad_x / (2 * self.q))) / scale
        return {
            "stationarity_resid": float(np.max(stat)),
            "primal_resid": float(max(0.0, np.max(g))),
            "dual_resid": float(max(0.0, -np.min(lam))),
            "complementarity": float(np.max(lam * np.abs(g) / np.maximum(lam, 1.0))),
        }


def project_onto(target: SpectralDensity, cs: ConstraintSystem, tol: float = 1e-6,
                 max_iter: int = 50_000, warm_start=None, log_every: int = 50,
                 reg: float = REGULARIZATION) -> ProjectionResult:
    """Project ``target`` onto the set described by an assembled constraint system."""
    if target.grid != cs.grid:
        raise GridMismatchError("target grid differs from constraint grid")
    grid = cs.grid
    nb = cs.n_bins
    if float(np.max(target.values)) == 0.0:
        zeros = tuple(SpectralDensity.zeros(grid) for _ in range(nb))
        kkt = dict.fromkeys(("stationarity_resid", "primal_resid", "dual_resid", "complementarity"), 0.0)
        return ProjectionResult(zeros, SpectralDensity.zeros(grid), 0.0, kkt, 0, True,
                                np.zeros(len(cs.rows)), cs.n_bin_scale, feasibility_report(zeros, cs))

    values = np.asarray(target.values, dtype=float)
    lam = np.zeros(len(cs.rows)) if warm_start is None else np.maximum(np.asarray(warm_start, float), 0.0)
    # continuation in the regularizer: with several bins the dual at tiny r is
    # nearly piecewise linear, so start smooth and warm-start each stage
    stages = [reg]
    if nb > 1 and warm_start is None:
        stages = [r for r in (1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7) if r > reg] + [reg]
    it = 0
    for k, r in enumerate(stages):
        final = k == len(stages) - 1
        dp = _DualProblem(values, cs, r)
        lam, x, c, kkt, n, converged = _maximize(dp, lam, tol if final else max(tol, 1e-6),
                                                 max_iter - it, log_every)
        it += n
        if it >= max_iter and not final:
            dp = _DualProblem(values, cs, reg)
            x, c, _, _ = dp.primal(lam)
            kkt = dp.kkt(lam, x, c)
            converged = False
            break

    x_raw = x * dp.scale
    per_bin = [SpectralDensity.clipped(grid, xb) for xb in x_raw]
    report = feasibility_report(per_bin, cs)
    if not report.feasible:
        # shrink each bin onto its own budgets; only reached without convergence
        shrunk = []
        for ell, s in enumerate(per_bin):
            worst = max((r.value(s.values) / r.budget for r in cs.rows_for(ell)), default=0.0)
            shrunk.append(s.scaled(1.0 / worst) if worst > 1.0 else s)
        per_bin = shrunk
        report = feasibility_report(per_bin, cs)
        converged = False
    aggregate = sum_spectra(per_bin)
    resid = aggregate.values - target.values
    objective = float(np.dot(grid.weights, resid**2))
    if not converged:
        log.warning("projection did not converge in %d iterations", it)
    return ProjectionResult(tuple(per_bin), aggregate, objective, kkt, it, converged,
                            lam, cs.n_bin_scale, report)


def _maximize(dp: _DualProblem, lam, tol, max_iter, log_every):
    """Projected Newton ascent on the dual; returns the final state and KKT residuals."""
    x, c, count, order = dp.primal(lam)
    val = dp.value(lam, x, c)
    converged = False
    rel_change = 0.0
    it = 0
    while True:
        kkt = dp.kkt(lam, x, c)
        kkt_ok = (kkt["primal_resid"] <= tol and kkt["complementarity"] <= tol
                  and kkt["stationarity_resid"] <= tol)
        if kkt_ok and rel_change < 1e-9:
            converged = True
            break
        if it >= max_iter:
            break
        it += 1
        grad = dp.gradient(x)
        H = dp.hessian(count, order)
        pg = lam - np.maximum(0.0, lam + grad)
        eps_act = min(1e-8, float(np.linalg.norm(pg)))
        bound = (lam <= eps_act) & (grad < 0)
        free = ~bound
        step = grad.copy()
        if free.any():
            Hf = H[np.ix_(free, free)]
            mu = 1e-10 * max(float(np.trace(Hf)) / free.sum(), 1e-12)
            try:
                step[free] = np.linalg.solve(Hf + mu * np.eye(free.sum()), grad[free])
            except np.linalg.LinAlgError:
                step[free] = np.linalg.lstsq(Hf, grad[free], rcond=None)[0]
        step[bound] = 0.0
        accepted = _line_search(dp, lam, val, grad, step)
        if accepted is None:
            # the projected arc failed; search exactly along the feasible segment
            accepted = _segment_search(dp, lam, val, grad, step)
        if accepted is None:
            accepted = _segment_search(dp, lam, val, grad, grad)
        if accepted is None:
            converged = kkt_ok
            if not kkt_ok:
                log.warning("projection: line search stalled at iteration %d", it)
            break
        lam, x, c, count, order, val_new = accepted
        rel_change = abs(val_new - val) / max(abs(val), 1e-300)
        val = val_new
        if log_every and it % log_every == 0:
            log.info("projection iteration", extra={"iteration": it, "dual_value": val,
                                                    "rel_change": rel_change, **kkt})
    return lam, x, c, kkt, it, converged


def _line_search(dp: _DualProblem, lam, val, grad, step, sigma=1e-4, max_halvings=60):
    """Backtracking along the projected path.

    Sufficient increase is judged on the dual value.  Once the steps get small
    that value suffers cancellation, so a step whose value change is at
    round-off level is also taken when the directional derivative at its end
    is still nonnegative, which for a concave dual means it did not overshoot.
    """
    alpha = 1.0
    for _ in range(max_halvings):
        trial = np.maximum(0.0, lam + alpha * step)
        move = trial - lam
        gain = float(np.dot(grad, move))
        if gain > 0:
            x, c, count, order = dp.primal(trial)
            v = dp.value(trial, x, c)
            slope_end = float(np.dot(dp.gradient(x), move))
            roundoff = v >= val - 1e-13 * max(1.0, abs(val))
            if v >= val + sigma * gain or (roundoff and slope_end >= 0):
                return trial, x, c, count, order, v
        alpha *= 0.5
    return None


def _segment_search(dp: _DualProblem, lam, val, grad, step, max_evals=100):
    """Maximize the dual along ``lam + alpha * step`` for ``alpha`` in ``[0, alpha_max]``.

    The dual is concave, so its directional derivative is nonincreasing in
    ``alpha``; the root is bracketed and refined by the Illinois variant of
    regula falsi, which is exact on the piecewise-linear derivative once the
    bracket sits inside one piece.
    """
    # components pushing a zero multiplier negative would pin alpha at 0
    step = np.where((lam <= 0.0) & (step < 0.0), 0.0, step)
    slope0 = float(np.dot(grad, step))
    if not slope0 > 0:
        return None
    neg = step < 0
    alpha_max = float(np.min(-lam[neg] / step[neg])) if neg.any() else np.inf
    if not alpha_max > 0:
        return None

    def evaluate(alpha):
        trial = np.maximum(0.0, lam + alpha * step)
        x, c, count, order = dp.primal(trial)
        return trial, x, c, count, order, float(np.dot(dp.gradient(x), step))

    lo, f_lo = 0.0, slope0
    hi = alpha_max if np.isfinite(alpha_max) else 1.0
    state = evaluate(hi)
    n = 1
    while np.isinf(alpha_max) and state[-1] > 0 and n < max_evals:
        lo, f_lo, best = hi, state[-1], state
        hi *= 4.0
        state = evaluate(hi)
        n += 1
    if state[-1] >= 0:
        best = state
    else:
        f_hi = state[-1]
        best = None
        side = 0
        while n < max_evals and hi - lo > 1e-15 * hi:
            mid = hi - f_hi * (hi - lo) / (f_hi - f_lo)
            if not lo < mid < hi:
                mid = 0.5 * (lo + hi)
            cand = evaluate(mid)
            n += 1
            f = cand[-1]
            if f > 0:
                lo, f_lo, best = mid, f, cand
                if side == 1:
                    f_hi *= 0.5
                side = 1
            elif f < 0:
                hi, f_hi = mid, f
                if side == -1:
                    f_lo *= 0.5
                side = -1
            else:
                best = cand
                break
            if best is not None and abs(f) <= 1e-12 * slope0:
                break
        if best is None:
            return None
    trial, x, c, count, order, _ = best
    v = dp.value(trial, x, c)
    return trial, x, c, count, order, max(v, val)


def project(target: SpectralDensity, ens: EnsembleSpec, tol: float = 1e-6,
            max_iter: int = 50_000, n_bin: int | None = None, warm_start=None,
            log_every: int = 50) -> ProjectionResult:
    """Closest per-bin feasible spectra (in quadrature-weighted L2) to ``target``.

    ``n_bin`` overrides the budget scaling factor; by default it equals the
    number of bins in ``ens``.
    """
    if np.any(target.values < 0):
        raise ValueError("target spectrum must be nonnegative")
    cs = build_constraints(ens, target.grid, n_bin=n_bin)
    return project_onto(target, cs, tol=tol, max_iter=max_iter,
                        warm_start=warm_start, log_every=log_every)


def solve_bounds(target: SpectralDensity, ens: EnsembleSpec, tol: float = 1e-6,
                 max_iter: int = 50_000) -> BoundPair:
    """Solve twice: budgets scaled by 1 (lower bound) and by the bin count (upper bound)."""
    from .capacity import capacity_indices

    lower = project(target, ens, tol=tol, max_iter=max_iter, n_bin=1)
    if ens.n_bin == 1:
        upper = lower
    else:
        upper = project(target, ens, tol=tol, max_iter=max_iter, n_bin=ens.n_bin)
    qos = ens.bins[0].qos
    eps_pair = (qos.eps[0], qos.eps[2])
    zl = capacity_indices(lower.aggregate, target, eps_pair, qos.horizon_T)
    zu = capacity_indices(upper.aggregate, target, eps_pair, qos.horizon_T)
    zeta = {"lower": {"zeta_p": zl[0], "zeta_e": zl[1]},
            "upper": {"zeta_p": zu[0], "zeta_e": zu[1]}}
    return BoundPair(lower, upper, zeta)
