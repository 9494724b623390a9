"""Virtual-energy-storage capacity of flexible-load ensembles from spectral-density constraints."""

__version__ = "0.1.0"

from .capacity import CapacityReport, capacity_indices, energy_capacity, power_capacity, unused_capacity
from .constraints import BinSpec, ConstraintSystem, EnsembleSpec, build_constraints, feasibility_report
from .dynamics import LoadDynamics, QosEnvelope, ThermalParams, commercial_hvac, derive_dynamics
from .ensemble import AggregateBounds, aggregate_bounds, homogeneous_aggregate
from .grid import FrequencyGrid, SpectralDensity, hybrid_grid, linear_grid
from .montecarlo import PathBatch, ViolationReport, qos_functionals, synthesize_paths, verify_chebyshev
from .solver import BoundPair, ProjectionResult, project, solve_bounds
from .spectral import (
    ArmaSpectrum, Passband, TimeSeries, bandpass_target, estimate_psd, evaluate_arma_psd,
    fit_arma_spectrum,
)

__all__ = [
    "AggregateBounds", "ArmaSpectrum", "BinSpec", "BoundPair", "CapacityReport",
    "ConstraintSystem", "EnsembleSpec", "FrequencyGrid", "LoadDynamics", "Passband",
    "PathBatch", "ProjectionResult", "QosEnvelope", "SpectralDensity", "ThermalParams",
    "TimeSeries", "ViolationReport", "aggregate_bounds", "bandpass_target", "build_constraints",
    "capacity_indices", "commercial_hvac", "derive_dynamics", "energy_capacity", "estimate_psd",
    "evaluate_arma_psd", "feasibility_report", "fit_arma_spectrum", "homogeneous_aggregate",
    "hybrid_grid", "linear_grid", "power_capacity", "project", "qos_functionals",
    "solve_bounds", "synthesize_paths", "unused_capacity", "verify_chebyshev",
]
