"""Frequency grids, one-sided spectral densities and quadrature.

All frequencies are angular, in rad/hour.  Spectra are one-sided on
``[0, omega_max]`` and the variance of the underlying process is
``(1/pi) * integral(S, d omega)``; mass above ``omega_max`` is taken as zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import GridMismatchError

# 4-point Gauss-Legendre on [0, 1]
_GL_X, _GL_W = np.polynomial.legendre.leggauss(4)
_GL_X = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


def trapezoid_weights(omegas: np.ndarray) -> np.ndarray:
    """Composite trapezoid weights for samples at ``omegas``."""
    omegas = np.asarray(omegas, dtype=float)
    h = np.diff(omegas)
    w = np.zeros_like(omegas)
    w[:-1] += 0.5 * h
    w[1:] += 0.5 * h
    return w


@dataclass(frozen=True, eq=False)
class FrequencyGrid:
    """Strictly increasing angular frequencies starting at 0, with trapezoid weights."""

    omegas: np.ndarray

    def __post_init__(self):
        om = np.asarray(self.omegas, dtype=float)
        if om.ndim != 1 or om.size < 2:
            raise ValueError("a frequency grid needs at least two points")
        if not np.all(np.isfinite(om)):
            raise ValueError("grid frequencies must be finite")
        if om[0] != 0.0:
            raise ValueError("grid must start at omega = 0")
        if np.any(np.diff(om) <= 0):
            raise ValueError("grid frequencies must be strictly increasing")
        object.__setattr__(self, "omegas", _frozen(om))
        object.__setattr__(self, "_weights", _frozen(trapezoid_weights(om)))

    @property
    def weights(self) -> np.ndarray:
        return self._weights

    @property
    def omega_max(self) -> float:
        return float(self.omegas[-1])

    def __len__(self) -> int:
        return self.omegas.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, FrequencyGrid):
            return NotImplemented
        return self is other or np.array_equal(self.omegas, other.omegas)

    def __hash__(self) -> int:
        return hash(self.omegas.tobytes())

    def integrate(self, values) -> float:
        """Trapezoid rule for samples on this grid."""
        return float(np.dot(self.weights, np.asarray(values, dtype=float)))

    def check_same(self, other: "FrequencyGrid") -> None:
        if self != other:
            raise GridMismatchError("frequency grids differ")

    def hat_moments(self, func: Callable[[np.ndarray], np.ndarray],
                    max_step: float | None = None) -> np.ndarray:
        """Integrals of ``func`` against the piecewise-linear hat basis.

        ``result[k] = integral(func(w) * phi_k(w) dw)`` over the grid span, so
        ``result @ S`` integrates ``func`` times the linear interpolant of ``S``
        exactly up to the inner Gauss-Legendre rule.  Cells wider than
        ``max_step`` are subdivided, which keeps oscillatory weights such as
        ``|G(jw)|^2`` resolved on coarse grids.
        """
        om = self.omegas
        width = np.diff(om)
        if max_step is None or max_step <= 0:
            nsub = np.ones(width.size, dtype=int)
        else:
            nsub = np.maximum(1, np.ceil(width / max_step).astype(int))
        cell = np.repeat(np.arange(width.size), nsub)
        # position of each sub-cell inside its parent cell
        first = np.cumsum(nsub) - nsub
        j = np.arange(cell.size) - np.repeat(first, nsub)
        frac_lo = j / nsub[cell]
        frac_w = 1.0 / nsub[cell]
        # local coordinate in [0, 1] across the parent cell
        u = frac_lo[:, None] + frac_w[:, None] * _GL_X[None, :]
        w_nodes = om[cell][:, None] + width[cell][:, None] * u
        f = np.asarray(func(w_nodes.ravel()), dtype=float).reshape(w_nodes.shape)
        scale = (width[cell] * frac_w)[:, None] * _GL_W[None, :]
        left = np.sum(f * (1.0 - u) * scale, axis=1)
        right = np.sum(f * u * scale, axis=1)
        out = np.zeros(om.size)
        np.add.at(out, cell, left)
        np.add.at(out, cell + 1, right)
        return out


def linear_grid(omega_max: float, n: int) -> FrequencyGrid:
    return FrequencyGrid(np.linspace(0.0, omega_max, n))


def hybrid_grid(omega_max: float, n: int = 2048, split: float = 1.0,
                n_linear: int = 256) -> FrequencyGrid:
    """Linear spacing on ``[0, split)`` and logarithmic spacing on ``[split, omega_max]``."""
    if not omega_max > split > 0:
        raise ValueError("need 0 < split < omega_max")
    if not 2 <= n_linear < n - 1:
        raise ValueError("n_linear must leave room for the logarithmic part")
    lin = np.linspace(0.0, split, n_linear, endpoint=False)
    log = np.geomspace(split, omega_max, n - n_linear)
    return FrequencyGrid(np.concatenate([lin, log]))


@dataclass(frozen=True, eq=False)
class SpectralDensity:
    """Nonnegative one-sided spectrum (kW^2 per rad/hour) sampled on a grid."""

    grid: FrequencyGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.omegas.shape:
            raise ValueError("values must have one entry per grid point")
        if not np.all(np.isfinite(v)):
            raise ValueError("spectral values must be finite")
        if np.any(v < 0):
            raise ValueError("spectral density must be nonnegative")
        object.__setattr__(self, "values", _frozen(v + 0.0))

    @classmethod
    def zeros(cls, grid: FrequencyGrid) -> "SpectralDensity":
        return cls(grid, np.zeros(len(grid)))

    @classmethod
    def clipped(cls, grid: FrequencyGrid, values) -> "SpectralDensity":
        """Build from values that may carry round-off negatives."""
        return cls(grid, np.maximum(np.asarray(values, dtype=float), 0.0))

    @property
    def omegas(self) -> np.ndarray:
        return self.grid.omegas

    def integral(self) -> float:
        return self.grid.integrate(self.values)

    def variance(self) -> float:
        """``(1/pi) * integral(S)``: variance of the process with this spectrum."""
        return self.integral() / np.pi

    def scaled(self, factor: float) -> "SpectralDensity":
        if factor < 0:
            raise ValueError("scale factor must be nonnegative")
        return SpectralDensity(self.grid, self.values * factor)

    def __add__(self, other: "SpectralDensity") -> "SpectralDensity":
        if not isinstance(other, SpectralDensity):
            return NotImplemented
        self.grid.check_same(other.grid)
        return SpectralDensity(self.grid, self.values + other.values)

    def interp(self, omegas) -> np.ndarray:
        """Linear interpolation; zero outside the grid span."""
        return np.interp(omegas, self.grid.omegas, self.values, left=0.0, right=0.0)


def sum_spectra(spectra) -> SpectralDensity:
    spectra = list(spectra)
    if not spectra:
        raise ValueError("need at least one spectrum")
    grid = spectra[0].grid
    total = np.zeros(len(grid))
    for s in spectra:
        grid.check_same(s.grid)
        total = total + s.values
    return SpectralDensity(grid, total)
