"""Load QoS envelopes, first-order storage dynamics and frequency-response weights.

Units are hours, kW, kWh and degC throughout; a 10 s ramp interval is
stored as ``1/360`` h.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

SECONDS_PER_HOUR = 3600.0


@dataclass(frozen=True)
class QosEnvelope:
    """QoS bounds of one load class.

    c1 bounds the power deviation (kW), c2 its increment over ``delta`` (kW),
    c3 the energy deviation over a moving window of ``horizon_T`` hours (kWh)
    and c4 the storage variable (degC for thermal loads, kWh for batteries).
    ``eps`` holds the four tolerated violation probabilities in the same order.
    """

    c1: float
    c2: float
    c3: float
    c4: float
    delta: float
    horizon_T: float
    eps: tuple[float, float, float, float] = (0.05, 0.05, 0.05, 0.05)

    def __post_init__(self):
        for name in ("c1", "c2", "c3", "c4", "delta", "horizon_T"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        eps = tuple(float(e) for e in self.eps)
        if len(eps) != 4 or not all(0 < e <= 1 for e in eps):
            raise ValueError("eps must hold four values in (0, 1]")
        object.__setattr__(self, "eps", eps)

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        return (self.c1, self.c2, self.c3, self.c4)


@dataclass(frozen=True)
class LoadDynamics:
    """First-order storage model ``H(s) = gain / (s + pole)``."""

    kind: Literal["thermal", "battery"]
    pole: float
    gain: float

    def __post_init__(self):
        if self.kind not in ("thermal", "battery"):
            raise ValueError(f"unknown load kind {self.kind!r}")
        if not (np.isfinite(self.pole) and self.pole > 0):
            raise ValueError("pole must be positive and finite")
        if not (np.isfinite(self.gain) and self.gain > 0):
            raise ValueError("gain must be positive and finite")

    @classmethod
    def battery(cls, leakage: float) -> "LoadDynamics":
        return cls("battery", leakage, 1.0)


@dataclass(frozen=True)
class ThermalParams:
    """Lumped RC building model: R in degC/kW, C in kWh/degC."""

    R: float
    C: float
    eta_cop: float
    theta_bar: float = 22.0

    def __post_init__(self):
        for name in ("R", "C", "eta_cop"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


def derive_dynamics(tp: ThermalParams) -> LoadDynamics:
    """Linearized deviation dynamics about the setpoint: pole 1/(RC), gain eta/C."""
    pole = 1.0 / (tp.R * tp.C)
    if not (np.isfinite(pole) and pole > 0):
        raise ValueError("R*C too large: pure-integrator limit is not supported")
    return LoadDynamics("thermal", pole, tp.eta_cop / tp.C)


def baseline_power(tp: ThermalParams, theta0: float, q_int: float) -> float:
    """Power that holds the indoor temperature at ``theta_bar`` (kW)."""
    return -(theta0 - tp.theta_bar) / (tp.eta_cop * tp.R) - q_int / tp.eta_cop


def storage_gain_sq(dyn: LoadDynamics, omega):
    """``|H(j omega)|^2 = gain^2 / (omega^2 + pole^2)``."""
    omega = np.asarray(omega, dtype=float)
    return dyn.gain**2 / (omega**2 + dyn.pole**2)


def energy_window_gain_sq(horizon_T: float, omega):
    """``|G(j omega)|^2`` for the moving-window integral ``G(s) = (1 - exp(-sT)) / s``.

    Evaluated as ``4 sin^2(T omega / 2) / omega^2``, which equals
    ``2 (1 - cos(T omega)) / omega^2`` without the cancellation near 0.
    """
    omega = np.asarray(omega, dtype=float)
    tol = 1e-6 / horizon_T
    safe = np.where(omega > tol, omega, 1.0)
    val = 4.0 * np.sin(0.5 * horizon_T * safe) ** 2 / safe**2
    return np.where(omega > tol, val, horizon_T**2)


def ramp_weight(delta: float, omega):
    """``2 - 2 cos(omega delta)``: spectral weight of the increment over ``delta``."""
    omega = np.asarray(omega, dtype=float)
    return 4.0 * np.sin(0.5 * omega * delta) ** 2


# Commercial HVAC classes: (c1, c2, c3, c4, pole, gain); T = 24 h, delta = 10 s
_HVAC_CLASSES = {
    "small": (4.0, 0.8, 0.5, 1.11, 2.78, 0.3597),
    "large": (40.0, 8.0, 5.0, 1.11, 177.6, 0.0450),
}


def commercial_hvac(size: str, eps: float = 0.05) -> tuple[QosEnvelope, LoadDynamics]:
    """QoS envelope and dynamics for a small or large commercial building."""
    try:
        c1, c2, c3, c4, pole, gain = _HVAC_CLASSES[size]
    except KeyError:
        raise ValueError(f"unknown building size {size!r}") from None
    qos = QosEnvelope(c1, c2, c3, c4, delta=10.0 / SECONDS_PER_HOUR,
                      horizon_T=24.0, eps=(eps,) * 4)
    return qos, LoadDynamics("thermal", pole, gain)
