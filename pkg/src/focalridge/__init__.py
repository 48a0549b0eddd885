"""Selective-shrinkage estimation of many overlapping sub-treatment effects.

A ridge regression penalizes sub-treatment coefficients but never the focal
("any treatment") coefficient, so the single-treatment estimate can be
reconstructed exactly from a fit at any penalty.
"""

from .core import ColumnRoles, Dataset, FocalSpec, ResidualizedDesign, apply_focal, validate_dataset
from .reconstruction import (
    ReconstructedEffects,
    analytic_tau0_binary_max,
    reconstruct,
    reconstruct_tau0,
    reconstruct_tau_j,
    sum_focal_decomposition,
    univariate_projection,
)
from .residualize import NuisanceSpec, predict_nuisance, residualize
from .ridge import RidgeFit, estimate_covariance, fit_path, fit_ridge, residual_variance
from .simulation import SimulationConfig, analytic_targets, run_mse_decomposition, shrinkage_path, simulate_dgp
from .tuning import TuningConfig, tune_lambda

__version__ = "0.1.0"

__all__ = [
    "ColumnRoles",
    "Dataset",
    "FocalSpec",
    "NuisanceSpec",
    "ReconstructedEffects",
    "ResidualizedDesign",
    "RidgeFit",
    "SimulationConfig",
    "TuningConfig",
    "analytic_targets",
    "analytic_tau0_binary_max",
    "apply_focal",
    "estimate_covariance",
    "fit_path",
    "fit_ridge",
    "predict_nuisance",
    "reconstruct",
    "reconstruct_tau0",
    "reconstruct_tau_j",
    "residual_variance",
    "residualize",
    "run_mse_decomposition",
    "shrinkage_path",
    "simulate_dgp",
    "sum_focal_decomposition",
    "tune_lambda",
    "univariate_projection",
]
