"""Run configuration and result document schemas."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Literal

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .constraints import BinSpec, EnsembleSpec
from .dynamics import SECONDS_PER_HOUR, LoadDynamics, QosEnvelope, commercial_hvac
from .spectral import SYNTHETIC_SIGMA


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SyntheticConfig(_Strict):
    n_samples: int = Field(2**16, ge=64)
    sigma: float = Field(SYNTHETIC_SIGMA, gt=0)
    seed: int | None = None  # falls back to the run seed


class DataConfig(_Strict):
    path: str | None = None
    fill: Literal["linear"] | None = None
    synthetic: SyntheticConfig = SyntheticConfig()


class WelchConfig(_Strict):
    segment_length: int | None = Field(None, ge=2)
    overlap: float = Field(0.5, ge=0, lt=1)


class ArmaConfig(_Strict):
    p: int = Field(2, ge=1)
    q: int = Field(1, ge=0)
    n_starts: int = Field(8, ge=1)


class PassbandConfig(_Strict):
    lo: float = Field(2.0, ge=0)
    hi: float = Field(60.0, gt=0)
    order: int = Field(4, ge=1)

    @model_validator(mode="after")
    def _ordered(self):
        if not self.lo < self.hi:
            raise ValueError("passband needs lo < hi")
        return self


class GridConfig(_Strict):
    dt_seconds: float = Field(10.0, gt=0)
    n: int = Field(2048, ge=16)
    split: float = Field(1.0, gt=0)
    n_linear: int = Field(256, ge=2)


class BinConfig(_Strict):
    """One homogeneous bin.

    ``size`` selects a commercial-building preset whose entries any explicit
    key overrides; without a preset every QoS and dynamics key is required.
    ``eps`` sets all four tolerances at once, ``eps1..eps4`` individually.
    """

    count: int = Field(ge=1)
    size: Literal["small", "large"] | None = None
    label: str = ""
    c1_kw: float | None = Field(None, gt=0)
    c2_kw: float | None = Field(None, gt=0)
    c3_kwh: float | None = Field(None, gt=0)
    c4: float | None = Field(None, gt=0)
    delta_s: float | None = Field(None, gt=0)
    T_h: float | None = Field(None, gt=0)
    eps: float = Field(0.05, gt=0, le=1)
    eps1: float | None = Field(None, gt=0, le=1)
    eps2: float | None = Field(None, gt=0, le=1)
    eps3: float | None = Field(None, gt=0, le=1)
    eps4: float | None = Field(None, gt=0, le=1)
    kind: Literal["thermal", "battery"] | None = None
    pole_per_h: float | None = Field(None, gt=0)
    gain: float | None = Field(None, gt=0)

    _REQUIRED = ("c1_kw", "c2_kw", "c3_kwh", "c4", "pole_per_h", "gain")

    @model_validator(mode="after")
    def _complete(self):
        if self.size is None:
            missing = [k for k in self._REQUIRED if getattr(self, k) is None]
            if missing:
                raise ValueError(f"bin without 'size' needs {', '.join(missing)}")
        return self

    def to_spec(self) -> BinSpec:
        if self.size is not None:
            qos0, dyn0 = commercial_hvac(self.size)
            base = {"c1_kw": qos0.c1, "c2_kw": qos0.c2, "c3_kwh": qos0.c3, "c4": qos0.c4,
                    "delta_s": qos0.delta * SECONDS_PER_HOUR, "T_h": qos0.horizon_T,
                    "kind": dyn0.kind, "pole_per_h": dyn0.pole, "gain": dyn0.gain}
        else:
            base = {"delta_s": 10.0, "T_h": 24.0, "kind": "thermal"}
        v = {k: (getattr(self, k) if getattr(self, k) is not None else base.get(k))
             for k in ("c1_kw", "c2_kw", "c3_kwh", "c4", "delta_s", "T_h", "kind",
                       "pole_per_h", "gain")}
        eps = tuple(e if e is not None else self.eps
                    for e in (self.eps1, self.eps2, self.eps3, self.eps4))
        qos = QosEnvelope(v["c1_kw"], v["c2_kw"], v["c3_kwh"], v["c4"],
                          delta=v["delta_s"] / SECONDS_PER_HOUR, horizon_T=v["T_h"], eps=eps)
        dyn = LoadDynamics(v["kind"], v["pole_per_h"], v["gain"])
        return BinSpec(qos, dyn, self.count, self.label or (self.size or ""))


class EnsembleConfig(_Strict):
    bins: list[BinConfig] = Field(default_factory=lambda: [BinConfig(size="large", count=15000)],
                                  min_length=1)

    def to_spec(self) -> EnsembleSpec:
        return EnsembleSpec(tuple(b.to_spec() for b in self.bins))


class SolverConfig(_Strict):
    tol: float = Field(1e-6, gt=0)
    max_iter: int = Field(50_000, ge=1)
    log_every: int = Field(50, ge=0)


class MonteCarloConfig(_Strict):
    n_samples: int = Field(2**16, ge=16)  # minimum; see align_window
    align_window: bool = True
    trials: int = Field(200, ge=1)
    thresholds: Literal["qos", "capacity"] = "qos"
    scale: float = Field(1.0, gt=0)  # multiplies the per-load spectra before verification


class SweepConfig(_Strict):
    counts: list[int] | None = None
    n_min: int = Field(100, ge=1)
    n_max: int = Field(10_000_000, ge=1)
    n_points: int = Field(12, ge=2)

    def resolved(self) -> list[int]:
        if self.counts:
            return sorted({int(c) for c in self.counts if c >= 1})
        pts = np.unique(np.round(np.geomspace(self.n_min, self.n_max, self.n_points)).astype(int))
        return [int(v) for v in pts]


class OutputConfig(_Strict):
    dir: str = "results"
    write_csv: bool = True


class RunConfig(_Strict):
    data: DataConfig = DataConfig()
    welch: WelchConfig = WelchConfig()
    arma: ArmaConfig = ArmaConfig()
    passband: PassbandConfig = PassbandConfig()
    grid: GridConfig = GridConfig()
    ensemble: EnsembleConfig = EnsembleConfig()
    solver: SolverConfig = SolverConfig()
    montecarlo: MonteCarloConfig = MonteCarloConfig()
    sweep: SweepConfig = SweepConfig()
    output: OutputConfig = OutputConfig()
    seed: int = 0


def _set_dotted(tree: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    node = tree
    for k in keys[:-1]:
        node = node.setdefault(k, {})
        if not isinstance(node, dict):
            raise ValueError(f"cannot set {dotted!r}: {k!r} is not a section")
    node[keys[-1]] = value


def load_config(path=None, overrides=()) -> RunConfig:
    """Defaults, then the YAML/JSON file, then ``key.sub=value`` overrides."""
    tree: dict = {}
    if path is not None:
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise OSError(f"cannot read config {path}: {exc.strerror}") from exc
        loaded = yaml.safe_load(text)
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ValueError(f"{path}: config must be a mapping")
        tree = loaded
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ValueError(f"override {item!r} is not of the form key=value")
        _set_dotted(tree, key.strip(), yaml.safe_load(raw))
    return RunConfig.model_validate(tree)


class CurveModel(_Strict):
    omega: list[float]
    values: list[float] = Field(description="nonnegative spectral values")

    @model_validator(mode="after")
    def _check(self):
        if len(self.omega) != len(self.values):
            raise ValueError("omega and values differ in length")
        if any(v < 0 for v in self.values):
            raise ValueError("spectral values must be nonnegative")
        return self


class ResultDocument(_Strict):
    """Self-contained run record.

    The hash covers everything except ``created``, ``hash`` itself and the
    output section of the config echo.
    """

    schema_version: int = 1
    command: str
    created: str
    seed: int
    versions: dict[str, str]
    config: dict
    spectra: dict[str, CurveModel] = Field(default_factory=dict)
    fit: dict | None = None
    capacity: dict | None = None
    bounds: dict | None = None
    solver: dict | None = None
    verification: dict | None = None
    sweep: dict | None = None
    converged: bool = True
    hash: str = ""

    def canonical_json(self) -> str:
        body = self.model_dump(mode="json", exclude={"created", "hash"})
        # where the files went does not change what was computed
        body["config"] = {k: v for k, v in body["config"].items() if k != "output"}
        return json.dumps(body, sort_keys=True, separators=(",", ":"), allow_nan=False)

    def compute_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    def with_hash(self) -> "ResultDocument":
        return self.model_copy(update={"hash": self.compute_hash()})
