"""Discretized ensemble constraint sets and membership checks.

For bin ``l`` with ``n_l`` loads and ``n_bin`` bins the aggregate bin spectrum
``Sigma`` must satisfy, besides ``Sigma >= 0``::

    int Sigma                  <= n_bin n_l pi eps1 c1^2
    int (1 - cos w delta) Sigma <= n_bin n_l pi eps2 c2^2 / 2
    int |G|^2 Sigma            <= n_bin n_l pi eps3 c3^2
    int |H|^2 Sigma            <= n_bin n_l pi eps4 c4^2
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .dynamics import LoadDynamics, QosEnvelope, energy_window_gain_sq, ramp_weight, storage_gain_sq
from .errors import CoarseGridError, GridMismatchError
from .grid import FrequencyGrid, SpectralDensity

TAGS = ("power", "ramp", "energy", "storage")
FEASIBILITY_RTOL = 1e-6


@dataclass(frozen=True)
class BinSpec:
    qos: QosEnvelope
    dyn: LoadDynamics
    count: int
    label: str = ""

    def __post_init__(self):
        if int(self.count) != self.count or self.count < 1:
            raise ValueError("bin count must be a positive integer")


@dataclass(frozen=True)
class EnsembleSpec:
    bins: tuple[BinSpec, ...]

    def __post_init__(self):
        bins = tuple(self.bins)
        if not bins:
            raise ValueError("an ensemble needs at least one bin")
        object.__setattr__(self, "bins", bins)

    @property
    def n_bin(self) -> int:
        return len(self.bins)

    @property
    def n_loads(self) -> int:
        return sum(b.count for b in self.bins)

    def with_count(self, n: int) -> "EnsembleSpec":
        """Single-bin copy of the first bin holding ``n`` loads."""
        b = self.bins[0]
        return EnsembleSpec((BinSpec(b.qos, b.dyn, n, b.label),))


@dataclass(frozen=True, eq=False)
class ConstraintRow:
    weights: np.ndarray  # effective pointwise weight, see row_coefficients
    budget: float
    tag: str
    bin_index: int
    coefficients: np.ndarray = field(repr=False)  # weights * quadrature weights

    def value(self, values) -> float:
        return float(np.dot(self.coefficients, values))


@dataclass(frozen=True, eq=False)
class ConstraintSystem:
    grid: FrequencyGrid
    rows: tuple[ConstraintRow, ...]
    n_bin_scale: int

    @property
    def n_bins(self) -> int:
        return 1 + max(r.bin_index for r in self.rows)

    def rows_for(self, bin_index: int) -> list[ConstraintRow]:
        return [r for r in self.rows if r.bin_index == bin_index]

    def budgets(self) -> np.ndarray:
        return np.array([r.budget for r in self.rows])


def _weight_function(tag: str, qos: QosEnvelope, dyn: LoadDynamics):
    """Pointwise weight and the sub-step needed to integrate it accurately."""
    if tag == "power":
        return (lambda w: np.ones_like(w)), None
    if tag == "ramp":
        # 1 - cos(w delta), the half of ramp_weight used in the ensemble set
        return (lambda w: 0.5 * ramp_weight(qos.delta, w)), 2 * np.pi / qos.delta / 32
    if tag == "storage":
        return (lambda w: storage_gain_sq(dyn, w)), dyn.pole / 4
    raise ValueError(f"unknown constraint tag {tag!r}")


def row_coefficients(grid: FrequencyGrid, tag: str, qos: QosEnvelope,
                     dyn: LoadDynamics) -> np.ndarray:
    """Vector ``a`` with ``a @ S ~= integral(weight * S)`` for the given tag.

    The weight is integrated exactly against the linear interpolant of the
    spectrum, so the result does not alias the day-scale lobes of |G|^2.
    """
    if tag == "power":
        return grid.weights.copy()
    if tag == "energy":
        return energy_window_coefficients(grid, qos.horizon_T).copy()
    func, step = _weight_function(tag, qos, dyn)
    return grid.hat_moments(func, step)


@lru_cache(maxsize=64)
def energy_window_coefficients(grid: FrequencyGrid, horizon_T: float) -> np.ndarray:
    """Quadrature vector for ``integral(|G(jw)|^2 S(w) dw)``; cached per grid and window."""
    out = grid.hat_moments(lambda w: energy_window_gain_sq(horizon_T, w),
                           2 * np.pi / horizon_T / 16)
    out.setflags(write=False)
    return out


def single_load_budgets(qos: QosEnvelope) -> dict[str, float]:
    e1, e2, e3, e4 = qos.eps
    return {
        "power": np.pi * e1 * qos.c1**2,
        "ramp": np.pi * e2 * qos.c2**2 / 2.0,
        "energy": np.pi * e3 * qos.c3**2,
        "storage": np.pi * e4 * qos.c4**2,
    }


def check_resolution(grid: FrequencyGrid, delta: float, points_per_period: int = 8) -> None:
    """Reject grids sampling ``cos(w delta)`` with fewer than 8 points per period."""
    spacing = float(np.max(np.diff(grid.omegas)))
    if spacing > 2 * np.pi / delta / points_per_period:
        raise CoarseGridError(
            f"grid spacing {spacing:.4g} rad/h too coarse for ramp interval {delta:.4g} h")


def build_constraints(ens: EnsembleSpec, grid: FrequencyGrid,
                      n_bin: int | None = None) -> ConstraintSystem:
    """Four budget rows per bin; budgets scale with ``n_bin * n_l``.

    ``n_bin`` defaults to the number of bins in ``ens``; pass 1 to build the
    lower-bound set of a heterogeneous ensemble.
    """
    scale_bins = ens.n_bin if n_bin is None else int(n_bin)
    if scale_bins < 1:
        raise ValueError("n_bin must be positive")
    q = grid.weights
    rows = []
    for idx, b in enumerate(ens.bins):
        check_resolution(grid, b.qos.delta)
        budgets = single_load_budgets(b.qos)
        for tag in TAGS:
            coef = row_coefficients(grid, tag, b.qos, b.dyn)
            rows.append(ConstraintRow(
                weights=coef / q,
                budget=scale_bins * b.count * budgets[tag],
                tag=tag,
                bin_index=idx,
                coefficients=coef,
            ))
    return ConstraintSystem(grid, tuple(rows), scale_bins)


@dataclass(frozen=True, eq=False)
class FeasibilityReport:
    margins: np.ndarray
    budgets: np.ndarray
    tags: tuple[str, ...]
    bin_indices: tuple[int, ...]
    nonnegative: bool
    rtol: float = FEASIBILITY_RTOL

    @property
    def relative_margins(self) -> np.ndarray:
        return self.margins / self.budgets

    @property
    def feasible(self) -> bool:
        return self.nonnegative and bool(np.all(self.margins >= -self.rtol * self.budgets))

    def as_dict(self) -> dict:
        return {
            "feasible": self.feasible,
            "rows": [
                {"bin": b, "tag": t, "budget": float(bud), "margin": float(m)}
                for b, t, bud, m in zip(self.bin_indices, self.tags, self.budgets, self.margins)
            ],
        }


def feasibility_report(psd_per_bin, cs: ConstraintSystem,
                       rtol: float = FEASIBILITY_RTOL) -> FeasibilityReport:
    """Margins ``budget - row value`` of every row; feasible iff all >= -rtol*budget."""
    spectra = list(psd_per_bin)
    if len(spectra) != cs.n_bins:
        raise ValueError(f"expected {cs.n_bins} spectra, got {len(spectra)}")
    arrays = []
    for s in spectra:
        if isinstance(s, SpectralDensity):
            if s.grid != cs.grid:
                raise GridMismatchError("spectrum grid differs from constraint grid")
            vals = s.values
        else:
            # raw arrays may carry negative entries, which SpectralDensity forbids
            vals = np.asarray(s, dtype=float)
            if vals.shape != cs.grid.omegas.shape:
                raise GridMismatchError("array length differs from constraint grid")
        arrays.append(vals)
    nonneg = all(bool(np.all(v >= 0)) for v in arrays)
    margins = np.array([r.budget - r.value(arrays[r.bin_index]) for r in cs.rows])
    return FeasibilityReport(
        margins=margins,
        budgets=cs.budgets(),
        tags=tuple(r.tag for r in cs.rows),
        bin_indices=tuple(r.bin_index for r in cs.rows),
        nonnegative=nonneg,
        rtol=rtol,
    )
