"""Power and energy capacity of a spectrum and the aggregate capacity indices."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .constraints import EnsembleSpec, energy_window_coefficients
from .dynamics import QosEnvelope
from .errors import InfeasibleSpectrumError, UndefinedIndexError
from .grid import SpectralDensity

# relative slack on c1 / c3, matching the 1e-6 budget tolerance after the square root
_UNUSED_RTOL = 5e-7


@dataclass(frozen=True)
class CapacityReport:
    pow_kw: float
    eng_kwh: float
    zeta_p: float
    zeta_e: float
    unused_pow_kw: float
    unused_eng_kwh: float
    eps_used: tuple[float, float]

    def as_dict(self) -> dict:
        d = asdict(self)
        d["eps_used"] = list(self.eps_used)
        return d


def _check_eps(eps: float) -> None:
    if not 0 < eps <= 1:
        raise ValueError("eps must lie in (0, 1]")


def power_capacity(S: SpectralDensity, eps: float) -> float:
    """``sqrt(integral(S) / (pi eps))`` in kW."""
    _check_eps(eps)
    return float(np.sqrt(max(S.integral(), 0.0) / (np.pi * eps)))


def energy_capacity(S: SpectralDensity, eps: float, horizon_T: float) -> float:
    """``sqrt(integral(|G|^2 S) / (pi eps))`` in kWh for an energy window of ``horizon_T`` hours."""
    _check_eps(eps)
    coef = energy_window_coefficients(S.grid, float(horizon_T))
    return float(np.sqrt(max(float(coef @ S.values), 0.0) / (np.pi * eps)))


def capacity_indices(aggregate: SpectralDensity, target: SpectralDensity,
                     eps_pair: tuple[float, float], horizon_T: float) -> tuple[float, float]:
    """Percentages of the target's power and energy capacity covered by ``aggregate``.

    The shared eps cancels; it only enters through the capacity definitions.
    """
    aggregate.grid.check_same(target.grid)
    eps_p, eps_e = eps_pair
    pow_t = power_capacity(target, eps_p)
    eng_t = energy_capacity(target, eps_e, horizon_T)
    if pow_t == 0.0 or eng_t == 0.0:
        raise UndefinedIndexError("target spectrum has zero capacity; index undefined")
    zeta_p = 100.0 * power_capacity(aggregate, eps_p) / pow_t
    zeta_e = 100.0 * energy_capacity(aggregate, eps_e, horizon_T) / eng_t
    return zeta_p, zeta_e


def unused_capacity(S: SpectralDensity, qos: QosEnvelope) -> tuple[float, float]:
    """Headroom ``(c1 - Pow(S), c3 - Eng(S))`` of a single-load spectrum, eps = (eps1, eps3)."""
    u_pow = qos.c1 - power_capacity(S, qos.eps[0])
    u_eng = qos.c3 - energy_capacity(S, qos.eps[2], qos.horizon_T)
    if u_pow < -_UNUSED_RTOL * qos.c1 - 1e-12 or u_eng < -_UNUSED_RTOL * qos.c3 - 1e-12:
        raise InfeasibleSpectrumError(
            f"spectrum exceeds the load's capacity (unused power {u_pow:.4g} kW, energy {u_eng:.4g} kWh)")
    return u_pow, u_eng


def capacity_report(per_bin, target: SpectralDensity, ens: EnsembleSpec,
                    n_bin_scale: int) -> CapacityReport:
    """Capacities of the aggregate of ``per_bin`` plus unused headroom summed over bins.

    Bin ``l`` represents ``n_bin_scale * n_l`` single-load budgets, so its
    headroom is ``sqrt(k) * unused(Sigma_l / k)`` with ``k = n_bin_scale * n_l``.
    The eps of the first bin is used for the aggregate figures.
    """
    per_bin = list(per_bin)
    aggregate = per_bin[0]
    for s in per_bin[1:]:
        aggregate = aggregate + s
    qos0 = ens.bins[0].qos
    eps_pair = (qos0.eps[0], qos0.eps[2])
    zeta_p, zeta_e = capacity_indices(aggregate, target, eps_pair, qos0.horizon_T)
    u_pow = u_eng = 0.0
    for s, b in zip(per_bin, ens.bins):
        k = n_bin_scale * b.count
        up, ue = unused_capacity(s.scaled(1.0 / k), b.qos)
        u_pow += np.sqrt(k) * up
        u_eng += np.sqrt(k) * ue
    return CapacityReport(
        pow_kw=power_capacity(aggregate, eps_pair[0]),
        eng_kwh=energy_capacity(aggregate, eps_pair[1], qos0.horizon_T),
        zeta_p=zeta_p,
        zeta_e=zeta_e,
        unused_pow_kw=float(u_pow),
        unused_eng_kwh=float(u_eng),
        eps_used=eps_pair,
    )
