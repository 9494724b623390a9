"""Command-line pipeline: estimate, project, verify and sweep.

Every subcommand writes ``result.json`` (plus plot-ready ``omega,value``
CSV curves) into the output directory.  ``project`` and ``all`` exit with
status 2 when the solver did not converge and 3 when a Monte-Carlo check
failed; results are written in both cases.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import platform
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .capacity import capacity_indices, capacity_report
from .config import CurveModel, ResultDocument, RunConfig, load_config
from .constraints import EnsembleSpec
from .errors import SeriesError, VescapError
from .grid import FrequencyGrid, SpectralDensity, hybrid_grid
from .dynamics import SECONDS_PER_HOUR
from .montecarlo import verify_chebyshev
from .solver import BoundPair, project
from .spectral import (
    ArmaSpectrum, Passband, TimeSeries, bandpass_target, estimate_psd, evaluate_arma_psd,
    fit_arma_spectrum, read_net_demand_csv, simulate_arma, synthetic_model, SYNTHETIC_LEVEL,
)

log = logging.getLogger("vescap")

EXIT_OK, EXIT_ERROR, EXIT_NOT_CONVERGED, EXIT_VERIFY_FAILED = 0, 1, 2, 3


class Pipeline:
    """Holds intermediate products so that ``all`` computes each stage once."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.spectra: dict[str, SpectralDensity] = {}
        self.doc: dict = {}
        self.converged = True
        self._bounds: BoundPair | None = None

    # -- stages -----------------------------------------------------------
    def planning_grid(self) -> FrequencyGrid:
        g = self.cfg.grid
        dt = g.dt_seconds / SECONDS_PER_HOUR
        return hybrid_grid(np.pi / dt, n=g.n, split=g.split, n_linear=g.n_linear)

    def load_series(self) -> TimeSeries:
        d = self.cfg.data
        if d.path is not None:
            ts = read_net_demand_csv(d.path, fill=d.fill)
        else:
            syn = d.synthetic
            base = synthetic_model()
            model = ArmaSpectrum(base.ar, base.ma, syn.sigma**2, base.dt)
            seed = self.cfg.seed if syn.seed is None else syn.seed
            ts = simulate_arma(model, syn.n_samples, seed=seed, level=SYNTHETIC_LEVEL)
        if np.ptp(ts.samples) == 0:
            raise SeriesError("degenerate series: zero variance")
        return ts

    def estimate(self) -> SpectralDensity:
        if "snd" in self.spectra:
            return self.spectra["snd"]
        ts = self.load_series()
        w = self.cfg.welch
        est = estimate_psd(ts, w.segment_length, w.overlap)
        a = self.cfg.arma
        model = fit_arma_spectrum(est, a.p, a.q, dt=ts.dt, n_starts=a.n_starts, seed=self.cfg.seed)
        snd = evaluate_arma_psd(model, self.planning_grid())
        self.spectra["snd_estimate"] = est
        self.spectra["snd"] = snd
        self.doc["fit"] = {
            "p": a.p, "q": a.q, "ar": model.ar.tolist(), "ma": model.ma.tolist(),
            "sigma2": model.sigma2, "dt_hours": model.dt,
            "log_mse": model.objective, "n_samples": len(ts), "series_dt_hours": ts.dt,
        }
        return snd

    def target(self) -> SpectralDensity:
        if "target" not in self.spectra:
            pb = self.cfg.passband
            self.spectra["target"] = bandpass_target(self.estimate(), Passband(pb.lo, pb.hi, pb.order))
        return self.spectra["target"]

    def ensemble(self) -> EnsembleSpec:
        return self.cfg.ensemble.to_spec()

    def project(self) -> BoundPair:
        if self._bounds is not None:
            return self._bounds
        tgt = self.target()
        ens = self.ensemble()
        s = self.cfg.solver
        lower = project(tgt, ens, tol=s.tol, max_iter=s.max_iter, n_bin=1, log_every=s.log_every)
        upper = lower if ens.n_bin == 1 else project(tgt, ens, tol=s.tol, max_iter=s.max_iter,
                                                     n_bin=ens.n_bin, log_every=s.log_every)
        qos = ens.bins[0].qos
        eps_pair = (qos.eps[0], qos.eps[2])
        zeta = {}
        for name, res in (("lower", lower), ("upper", upper)):
            zp, ze = capacity_indices(res.aggregate, tgt, eps_pair, qos.horizon_T)
            zeta[name] = {"zeta_p": zp, "zeta_e": ze}
        bounds = BoundPair(lower, upper, zeta)
        self._bounds = bounds
        self.converged = self.converged and lower.converged and upper.converged
        for name, res in (("lower", lower), ("upper", upper)):
            self.spectra[f"aggregate_{name}"] = res.aggregate
            for i, sd in enumerate(res.per_bin):
                self.spectra[f"bin{i}_{name}"] = sd
        self.doc["bounds"] = {
            "n_bin": ens.n_bin,
            "zeta": zeta,
            "feasible": {"lower": lower.feasibility.feasible, "upper": upper.feasibility.feasible},
            "feasibility": {"lower": lower.feasibility.as_dict(), "upper": upper.feasibility.as_dict()},
        }
        self.doc["solver"] = {"lower": lower.summary(), "upper": upper.summary()}
        self.doc["capacity"] = {
            "lower": capacity_report(lower.per_bin, tgt, ens, lower.n_bin_scale).as_dict(),
            "upper": capacity_report(upper.per_bin, tgt, ens, upper.n_bin_scale).as_dict(),
        }
        return bounds

    def verify(self) -> bool:
        bounds = self.project()
        ens = self.ensemble()
        mc = self.cfg.montecarlo
        reports = []
        ok = True
        for i, (sd, b) in enumerate(zip(bounds.lower.per_bin, ens.bins)):
            # per-load spectrum of the bin under the attainable (lower-bound) budgets
            per_load = sd.scaled(mc.scale / b.count)
            rep = verify_chebyshev(per_load, b.qos, b.dyn, trials=mc.trials,
                                   seed=self.cfg.seed + i, n_samples=mc.n_samples,
                                   thresholds=mc.thresholds, align_window=mc.align_window)
            ok = ok and rep.passed
            reports.append({"bin": i, "label": b.label, **rep.as_dict()})
        self.doc["verification"] = {"pass": ok, "bins": reports}
        return ok

    def sweep(self) -> list[dict]:
        tgt = self.target()
        base = self.ensemble()
        s = self.cfg.solver
        qos = base.bins[0].qos
        eps_pair = (qos.eps[0], qos.eps[2])
        rows = []
        for n in self.cfg.sweep.resolved():
            res = project(tgt, base.with_count(n), tol=s.tol, max_iter=s.max_iter,
                          log_every=s.log_every)
            zp, ze = capacity_indices(res.aggregate, tgt, eps_pair, qos.horizon_T)
            self.converged = self.converged and res.converged
            rows.append({"n": n, "zeta_p": zp, "zeta_e": ze, "converged": res.converged,
                         "iterations": res.iterations})
        self.doc["sweep"] = {"bin": base.bins[0].label, "points": rows}
        return rows

    # -- output -------------------------------------------------------------
    def document(self, command: str) -> ResultDocument:
        spectra = {name: CurveModel(omega=sd.omegas.tolist(), values=sd.values.tolist())
                   for name, sd in sorted(self.spectra.items())}
        doc = ResultDocument(
            command=command,
            created=datetime.now(timezone.utc).isoformat(timespec="seconds"),
            seed=self.cfg.seed,
            versions={"vescap": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                      "python": platform.python_version()},
            config=self.cfg.model_dump(mode="json"),
            spectra=spectra,
            converged=self.converged,
            **self.doc,
        )
        return doc.with_hash()

    def write(self, command: str) -> ResultDocument:
        out = Path(self.cfg.output.dir)
        out.mkdir(parents=True, exist_ok=True)
        doc = self.document(command)
        (out / "result.json").write_text(doc.model_dump_json(indent=1) + "\n")
        if self.cfg.output.write_csv:
            for name, sd in self.spectra.items():
                _write_curve(out / f"{name}.csv", sd.omegas, sd.values)
            if "sweep" in self.doc:
                with open(out / "sweep.csv", "w", newline="") as fh:
                    wr = csv.writer(fh)
                    wr.writerow(["n", "zeta_p", "zeta_e"])
                    for r in self.doc["sweep"]["points"]:
                        wr.writerow([r["n"], repr(r["zeta_p"]), repr(r["zeta_e"])])
        if "fit" in self.doc:
            fit = dict(self.doc["fit"])
            fit["omega"] = self.spectra["snd"].omegas.tolist()
            fit["values"] = self.spectra["snd"].values.tolist()
            (out / "snd.json").write_text(json.dumps(fit, indent=1) + "\n")
        log.info("wrote results", extra={"dir": str(out), "hash": doc.hash})
        return doc


def _write_curve(path: Path, omegas, values) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["omega", "value"])
        for w, v in zip(omegas, values):
            wr.writerow([repr(float(w)), repr(float(v))])


def run(command: str, cfg: RunConfig) -> tuple[int, ResultDocument]:
    """Run one subcommand; returns the exit status and the written document."""
    pipe = Pipeline(cfg)
    status = EXIT_OK
    if command == "estimate":
        pipe.estimate()
    elif command == "project":
        pipe.project()
    elif command == "verify":
        if not pipe.verify():
            status = EXIT_VERIFY_FAILED
    elif command == "sweep":
        pipe.sweep()
    elif command == "all":
        pipe.project()
        passed = pipe.verify()
        pipe.sweep()
        if not passed:
            status = EXIT_VERIFY_FAILED
    else:
        raise ValueError(f"unknown command {command!r}")
    doc = pipe.write(command)
    if not pipe.converged:
        log.warning("solver did not converge; results flagged")
        status = EXIT_NOT_CONVERGED
    return status, doc


def _configure_logging() -> None:
    level = os.environ.get("VESCAP_LOG_LEVEL", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vescap", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "estimate": "estimate and fit the net-demand spectrum",
        "project": "project the band-passed need spectrum onto the ensemble",
        "verify": "project, then check the QoS guarantees by Monte-Carlo",
        "sweep": "capacity indices of the first bin over a range of load counts",
        "all": "project, verify and sweep in one run",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", type=Path, help="YAML or JSON run configuration")
        p.add_argument("--seed", type=int, help="overrides the configured seed")
        p.add_argument("--out", type=Path, help="output directory")
        p.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="KEY=VALUE", help="override a config entry, e.g. solver.tol=1e-8")
    return parser


def main(argv=None) -> int:
    _configure_logging()
    args = build_parser().parse_args(argv)
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.out is not None:
        overrides.append(f"output.dir={args.out}")
    try:
        cfg = load_config(args.config, overrides)
        status, doc = run(args.command, cfg)
    except (VescapError, OSError, ValueError) as exc:
        print(f"vescap: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    print(f"{args.command}: {'converged' if doc.converged else 'NOT converged'}; "
          f"hash {doc.hash[:16]}; wrote {cfg.output.dir}")
    return status
