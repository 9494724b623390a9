"""Spectral estimation, rational spectral models and band-pass shaping.

Spectra follow the package convention: one-sided in rad/hour with
``variance = (1/pi) * integral(S)``.  A discrete-time series sampled every
``dt`` hours therefore has a spectrum living on ``[0, pi/dt]``.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

import numpy as np
from scipy import optimize, signal

from .errors import FitError, SeriesError
from .grid import FrequencyGrid, SpectralDensity

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """Uniformly sampled real series; ``dt`` in hours."""

    samples: np.ndarray
    dt: float
    label: str = ""

    def __post_init__(self):
        x = np.array(self.samples, dtype=float)
        if x.ndim != 1 or x.size < 2:
            raise SeriesError("a time series needs at least two samples")
        if not np.all(np.isfinite(x)):
            raise SeriesError("time series contains non-finite samples")
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise SeriesError("dt must be positive")
        x.setflags(write=False)
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "dt", float(self.dt))

    def __len__(self) -> int:
        return self.samples.size

    @property
    def nyquist(self) -> float:
        """Highest resolvable angular frequency ``pi/dt`` (rad/hour)."""
        return np.pi / self.dt


def _stable_poly(coeffs) -> bool:
    """True if ``1 + c1 z + ... + cp z^p`` has all roots strictly outside the unit disk."""
    c = np.asarray(coeffs, dtype=float)
    if c.size == 0:
        return True
    # roots of z^p + c1 z^(p-1) + ... + cp are the reciprocals
    return bool(np.all(np.abs(np.roots(np.concatenate([[1.0], c]))) < 1.0))


@dataclass(frozen=True, eq=False)
class ArmaSpectrum:
    """Rational spectrum ``sigma2 dt |1 + sum ma z^k|^2 / |1 + sum ar z^k|^2``, ``z = exp(-j w dt)``.

    ``objective`` is the mean squared log-spectrum residual of the fit that
    produced the model, when there was one.
    """

    ar: np.ndarray
    ma: np.ndarray
    sigma2: float
    dt: float
    objective: float | None = field(default=None, compare=False)

    def __post_init__(self):
        ar = np.atleast_1d(np.asarray(self.ar, dtype=float))
        ma = np.atleast_1d(np.asarray(self.ma, dtype=float))
        if not (np.isfinite(self.sigma2) and self.sigma2 > 0):
            raise ValueError("sigma2 must be positive")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not _stable_poly(ar):
            raise ValueError("AR polynomial is not stable")
        for name, arr in (("ar", ar), ("ma", ma)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def p(self) -> int:
        return self.ar.size

    @property
    def q(self) -> int:
        return self.ma.size

    @property
    def nyquist(self) -> float:
        return np.pi / self.dt

    def _log_shape(self, omegas) -> np.ndarray:
        return _log_ratio(self.ar, self.ma, np.asarray(omegas, float) * self.dt)


@dataclass(frozen=True)
class Passband:
    """Band edges in rad/hour and the Butterworth-style order."""

    lo: float
    hi: float
    order: int = 4

    def __post_init__(self):
        if not (0 <= self.lo < self.hi and np.isfinite(self.hi)):
            raise ValueError("passband needs 0 <= lo < hi")
        if int(self.order) != self.order or self.order < 1:
            raise ValueError("filter order must be a positive integer")

    def gain_sq(self, omega) -> np.ndarray:
        """``|F(j omega)|^2``: low-pass at ``hi`` times high-pass at ``lo``."""
        w = np.asarray(omega, dtype=float)
        n2 = 2 * int(self.order)
        low = 1.0 / (1.0 + (w / self.hi) ** n2)
        if self.lo == 0:
            return low
        r = (w / self.lo) ** n2
        with np.errstate(over="ignore", invalid="ignore"):
            high = np.where(np.isinf(r), 1.0, r / (1.0 + r))
        return low * high


def estimate_psd(series: TimeSeries, segment_length: int | None = None,
                 overlap_fraction: float = 0.5) -> SpectralDensity:
    """Welch estimate with a Hann window, returned on ``[0, pi/dt]`` rad/hour.

    The default segment length gives 8 half-overlapping segments.  The mean
    is removed per segment.
    """
    x = series.samples
    n = x.size
    if segment_length is None:
        segment_length = max(2, (2 * n) // 9)
    segment_length = int(segment_length)
    if not 0 <= overlap_fraction < 1:
        raise ValueError("overlap_fraction must lie in [0, 1)")
    if segment_length < 2 or segment_length > n:
        raise SeriesError(f"series of length {n} too short for segments of {segment_length}")
    noverlap = min(int(round(overlap_fraction * segment_length)), segment_length - 1)
    f, pxx = signal.welch(x, fs=1.0 / series.dt, window="hann", nperseg=segment_length,
                          noverlap=noverlap, detrend="constant", scaling="density",
                          return_onesided=True)
    # density per cycle/hour with variance = int P df  ->  per rad/hour with var = int S dw / pi
    grid = FrequencyGrid(2.0 * np.pi * f)
    return SpectralDensity.clipped(grid, 0.5 * pxx)


def _poly_response_sq(coeffs, theta) -> np.ndarray:
    """``|1 + sum c_k exp(-j k theta)|^2``."""
    k = np.arange(1, len(coeffs) + 1)
    z = np.exp(-1j * np.outer(theta, k))
    return np.abs(1.0 + z @ np.asarray(coeffs, dtype=float)) ** 2


def _log_ratio(ar, ma, theta) -> np.ndarray:
    num = np.log(_poly_response_sq(ma, theta)) if len(ma) else 0.0
    return num - np.log(_poly_response_sq(ar, theta))


def _reflection_to_poly(kappa) -> np.ndarray:
    """Levinson step-up: reflection coefficients in (-1, 1) to a stable polynomial."""
    a = np.zeros(0)
    for k in kappa:
        a = np.concatenate([a + k * a[::-1], [k]])
    return a


def evaluate_arma_psd(model: ArmaSpectrum, grid: FrequencyGrid) -> SpectralDensity:
    """Model spectrum on ``grid``; frequencies above ``pi/dt`` take the Nyquist value."""
    w = np.minimum(grid.omegas, model.nyquist)
    vals = model.sigma2 * model.dt * np.exp(model._log_shape(w))
    return SpectralDensity.clipped(grid, vals)


def fit_arma_spectrum(psd: SpectralDensity, p: int, q: int, dt: float | None = None,
                      n_starts: int = 8, seed: int = 0) -> ArmaSpectrum:
    """Least-squares fit of the log model spectrum to ``log(psd)``.

    Both polynomials are parameterized by reflection coefficients
    ``tanh(u)``, so every candidate AR part is stable and the MA part is
    minimum phase.  For fixed shape the optimal ``log(sigma2)`` is the mean
    log residual, which leaves a nonlinear problem in ``p + q`` unknowns
    solved from ``n_starts`` seeded starting points.  Grid points where the
    estimate is zero are excluded.

    Parameters
    ----------
    psd : SpectralDensity
        Target spectrum, usually a Welch estimate.
    p, q : int
        AR and MA orders; ``p >= 1``.
    dt : float, optional
        Sampling interval of the model in hours.  Defaults to
        ``pi / psd.grid.omega_max``.
    n_starts : int
        Number of starting points; the first is the white-noise model.
    seed : int
        Seed for the remaining starting points.

    Returns
    -------
    ArmaSpectrum
        Best model found, with the mean squared log residual in ``objective``.
    """
    if p < 1 or q < 0:
        raise ValueError("need p >= 1 and q >= 0")
    if dt is None:
        dt = np.pi / psd.grid.omega_max
    mask = psd.values > 0
    if np.count_nonzero(mask) < p + q + 1:
        raise FitError("too few positive spectral values for this model order")
    theta = psd.omegas[mask] * dt
    if np.any(theta > np.pi * (1 + 1e-9)):
        raise FitError("psd extends above the model Nyquist frequency")
    log_s = np.log(psd.values[mask]) - np.log(dt)

    def split(u):
        return _reflection_to_poly(np.tanh(u[:p])), _reflection_to_poly(np.tanh(u[p:]))

    def resid(u):
        ar, ma = split(u)
        with np.errstate(divide="ignore", invalid="ignore"):
            g = _log_ratio(ar, ma, theta) - log_s
        if not np.all(np.isfinite(g)):
            # a root on the unit circle; steer the optimizer away
            return np.full(g.size, 1e6)
        return g - g.mean()

    rng = np.random.default_rng(seed)
    starts = [np.zeros(p + q)] + [rng.uniform(-2.0, 2.0, p + q) for _ in range(max(n_starts, 1) - 1)]
    best = None
    for u0 in starts:
        try:
            sol = optimize.least_squares(resid, u0, method="lm", xtol=1e-12, ftol=1e-12)
        except (ValueError, np.linalg.LinAlgError):
            continue
        if not np.all(np.isfinite(sol.x)):
            continue
        cost = float(np.mean(sol.fun**2))
        if best is None or cost < best[0]:
            best = (cost, sol.x)
    if best is None:
        raise FitError(f"no stable ARMA({p},{q}) model found")
    cost, u = best
    ar, ma = split(u)
    try:
        model_shape = _log_ratio(ar, ma, theta)
        sigma2 = float(np.exp(np.mean(log_s - model_shape)))
        model = ArmaSpectrum(ar, ma, sigma2, dt, objective=cost)
    except ValueError as exc:
        # a reflection coefficient saturated at +-1
        raise FitError(f"ARMA({p},{q}) fit reached the stability boundary") from exc
    log.debug("arma fit", extra={"p": p, "q": q, "objective": cost})
    return model


def bandpass_target(snd: SpectralDensity, band: Passband) -> SpectralDensity:
    """Shape ``snd`` by the band-pass magnitude ``|F|^2`` of ``band``."""
    if band.hi > snd.grid.omega_max:
        raise ValueError("passband extends beyond the grid")
    return SpectralDensity.clipped(snd.grid, band.gain_sq(snd.omegas) * snd.values)


def log_rmse(model: SpectralDensity, reference: SpectralDensity) -> float:
    """Root mean squared difference of the log spectra over points where both are positive."""
    model.grid.check_same(reference.grid)
    mask = (model.values > 0) & (reference.values > 0)
    if not mask.any():
        raise ValueError("no common positive support")
    d = np.log(model.values[mask]) - np.log(reference.values[mask])
    return float(np.sqrt(np.mean(d**2)))


# Default synthetic net demand: ARMA(2,1) at 5-minute resolution in kW.
# Poles 0.995 exp(+-0.02 j) give a slow swing of roughly a 2.6 h period,
# the zero at -0.5 tempers the high-frequency end.
SYNTHETIC_DT = 5.0 / 60.0
SYNTHETIC_AR = (-2 * 0.995 * np.cos(0.02), 0.995**2)
SYNTHETIC_MA = (0.5,)
SYNTHETIC_SIGMA = 25.0  # innovation standard deviation, kW
SYNTHETIC_LEVEL = 1.0e6  # mean net demand, kW


def synthetic_model() -> ArmaSpectrum:
    """Spectrum of the default synthetic net-demand generator."""
    return ArmaSpectrum(np.array(SYNTHETIC_AR), np.array(SYNTHETIC_MA),
                        SYNTHETIC_SIGMA**2, SYNTHETIC_DT)


def simulate_arma(model: ArmaSpectrum, n_samples: int, seed: int = 0,
                  level: float = 0.0, burn_in: int = 1000) -> TimeSeries:
    """Gaussian sample path of ``model`` with ``n_samples`` points spaced ``model.dt``."""
    if n_samples < 2:
        raise ValueError("need at least two samples")
    rng = np.random.default_rng(seed)
    e = rng.standard_normal(n_samples + burn_in) * np.sqrt(model.sigma2)
    b = np.concatenate([[1.0], model.ma])
    a = np.concatenate([[1.0], model.ar])
    x = signal.lfilter(b, a, e)[burn_in:]
    return TimeSeries(x + level, model.dt, label=f"arma({model.p},{model.q})")


def synthetic_net_demand(n_samples: int = 2**16, seed: int = 0) -> TimeSeries:
    """Synthetic net-demand record from the default ARMA(2,1) generator."""
    ts = simulate_arma(synthetic_model(), n_samples, seed=seed, level=SYNTHETIC_LEVEL)
    return TimeSeries(ts.samples, ts.dt, label="synthetic net demand")


def read_net_demand_csv(path, fill: str | None = None) -> TimeSeries:
    """Read ``timestamp_iso8601, net_demand_kw`` rows with a header.

    Sampling must be uniform.  Missing samples (gaps that are whole multiples
    of the step) are an error unless ``fill="linear"``, which interpolates
    them linearly.
    """
    if fill not in (None, "linear"):
        raise ValueError(f"unknown fill mode {fill!r}")
    path = Path(path)
    try:
        fh = path.open(newline="")
    except OSError as exc:
        raise OSError(f"cannot read net-demand file {path}: {exc.strerror}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or len(header) < 2:
            raise SeriesError(f"{path}: missing header row")
        times, values = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or not "".join(row).strip():
                continue
            try:
                times.append(datetime.fromisoformat(row[0].strip()).timestamp())
                values.append(float(row[1]))
            except (ValueError, IndexError) as exc:
                raise SeriesError(f"{path}:{lineno}: bad row {row!r}") from exc
    if len(times) < 2:
        raise SeriesError(f"{path}: need at least two samples")
    t = np.array(times) / 3600.0
    v = np.array(values)
    steps = np.diff(t)
    if np.any(steps <= 0):
        raise SeriesError(f"{path}: timestamps must be strictly increasing")
    dt = float(np.min(steps))
    ratio = steps / dt
    k = np.rint(ratio)
    if np.any(np.abs(ratio - k) > 1e-6 * k):
        raise SeriesError(f"{path}: non-uniform sampling")
    if np.any(k > 1):
        if fill != "linear":
            raise SeriesError(f"{path}: {int(np.sum(k - 1))} missing samples; use fill='linear'")
        idx = np.concatenate([[0], np.cumsum(k)]).astype(int)
        v = np.interp(np.arange(idx[-1] + 1), idx, v)
    return TimeSeries(v, dt, label=path.stem)
