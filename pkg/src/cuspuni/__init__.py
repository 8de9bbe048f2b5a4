"""Numerical toolkit for cusp universality of Wigner-type random matrices."""
from .density import DensityProfile, DysonSolver, EnsembleSpec, Flat, Full, scdos, solve_dyson
from .ensembles import atomic, deformed_wigner, matched_four_atom, reference_ensemble, semicircle
from .flow import CuspKind, CuspReport, FlowState, find_cusp_time, fit_slope, free_convolve, locate_features
from .quantiles import fluctuation_scale, interpolate, quantile, quantile_set
from .shape import CuspModel, EdgeModel, MinModel, classify_profile, model_density, psi_edge, psi_min

__version__ = "0.1.0"

__all__ = [
    "DensityProfile", "DysonSolver", "EnsembleSpec", "Flat", "Full", "scdos", "solve_dyson",
    "atomic", "deformed_wigner", "matched_four_atom", "reference_ensemble", "semicircle",
    "CuspKind", "CuspReport", "FlowState", "find_cusp_time", "fit_slope", "free_convolve", "locate_features",
    "fluctuation_scale", "interpolate", "quantile", "quantile_set",
    "CuspModel", "EdgeModel", "MinModel", "classify_profile", "model_density", "psi_edge", "psi_min",
]
