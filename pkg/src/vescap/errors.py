"""Exception hierarchy for vescap."""


class VescapError(Exception):
    """Base class for all package errors."""


class GridMismatchError(VescapError):
    """Two spectra (or a spectrum and a constraint system) live on different grids."""


class SeriesError(VescapError, ValueError):
    """A time series is too short, non-finite, degenerate or irregularly sampled."""


class FitError(VescapError):
    """No stable ARMA model could be fitted at the requested order."""


class CoarseGridError(VescapError, ValueError):
    """The frequency grid is too coarse to resolve the ramp weight (aliasing risk)."""


class InfeasibleSpectrumError(VescapError):
    """A spectrum violates the constraint set it is required to satisfy."""


class UndefinedIndexError(VescapError):
    """A capacity index was requested against a target with zero capacity."""


class AliasingError(VescapError, ValueError):
    """A spectrum carries mass above the Nyquist frequency of the requested sampling."""


class IncompatibleSamplingError(VescapError, ValueError):
    """The sampling interval does not divide the ramp interval or energy window."""
