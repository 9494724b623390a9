"""Ensemble spectra: homogeneous scaling, heterogeneous bounds and correlated paths."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import SpectralDensity, sum_spectra
from .montecarlo import color_noise, make_rng


@dataclass(frozen=True, eq=False)
class AggregateBounds:
    """``lower <= S_aggregate <= upper`` with ``upper = n_bin * lower``."""

    lower: SpectralDensity
    upper: SpectralDensity
    n_bin: int

    def contains(self, S: SpectralDensity, rtol: float = 0.0) -> np.ndarray:
        """Pointwise mask of grid points where ``S`` lies within the bounds."""
        S.grid.check_same(self.lower.grid)
        lo = self.lower.values * (1 - rtol)
        hi = self.upper.values * (1 + rtol)
        return (S.values >= lo) & (S.values <= hi)


def homogeneous_aggregate(per_load: SpectralDensity, n: int) -> SpectralDensity:
    """Spectrum of the sum of ``n`` identical (fully correlated) loads: ``n**2 * per_load``."""
    if int(n) != n or n < 1:
        raise ValueError("n must be a positive integer")
    return per_load.scaled(float(n) ** 2)


def aggregate_bounds(bin_sums, n_bin: int | None = None) -> AggregateBounds:
    """Bounds from per-bin spectra already scaled by their bin counts.

    ``lower`` is the pointwise sum and ``upper`` is ``n_bin`` times it;
    ``n_bin`` defaults to the number of spectra given.
    """
    bin_sums = list(bin_sums)
    lower = sum_spectra(bin_sums)
    n_bin = len(bin_sums) if n_bin is None else int(n_bin)
    if n_bin < 1:
        raise ValueError("n_bin must be positive")
    return AggregateBounds(lower, lower.scaled(float(n_bin)), n_bin)


def correlated_paths(psd: SpectralDensity, group_sizes, n_samples: int, dt: float,
                     rho: float = 0.5, seed: int = 0, identical_within: bool = True) -> np.ndarray:
    """Paths with nonnegative cross-spectra built from a shared innovation.

    Every path is ``sqrt(rho) * common + sqrt(1 - rho) * own`` with all
    streams coloured by ``psd``.  With ``identical_within`` the ``own``
    stream is shared by the paths of a group, so a group behaves as one
    homogeneous bin; otherwise each path draws its own stream.  Every
    cross-spectrum is ``rho * psd`` or ``psd``, never negative.

    Returns
    -------
    ndarray
        Array of shape ``(sum(group_sizes), n_samples)``, groups in order.
    """
    if not 0 <= rho <= 1:
        raise ValueError("rho must lie in [0, 1]")
    sizes = [int(s) for s in group_sizes]
    if not sizes or min(sizes) < 1:
        raise ValueError("group sizes must be positive")
    rng = make_rng(seed)
    n_streams = len(sizes) if identical_within else sum(sizes)
    white = rng.standard_normal((1 + n_streams, n_samples))
    colored = color_noise(white, psd, dt)
    common, own = colored[0], colored[1:]
    if identical_within:
        own = np.repeat(own, sizes, axis=0)
    return np.sqrt(rho) * common + np.sqrt(1.0 - rho) * own
