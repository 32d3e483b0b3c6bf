"""Generalized-propensity-score estimation of linear dose-response functions."""

__version__ = "0.1.0"

from .analysis import ROWS, analyze
from .dataset import Dataset, load_csv, split_by_strata
from .drf import DrfFit, assign_strata, fit_naive, fit_stratified, fit_weighted, predict_drf
from .gps import PropensityFit, WeightSet, fit_propensity, stabilized_weights, weight_diagnostics
from .variance import (
    VarianceEstimate,
    linearized_weighted,
    pooled_linearized,
    pooled_model_based,
    var_bootstrap,
    var_model_based,
    var_sandwich_weighted,
)

__all__ = [
    "ROWS", "Dataset", "DrfFit", "PropensityFit", "VarianceEstimate", "WeightSet", "analyze",
    "assign_strata", "fit_naive", "fit_propensity", "fit_stratified", "fit_weighted",
    "linearized_weighted", "load_csv", "pooled_linearized", "pooled_model_based", "predict_drf",
    "split_by_strata", "stabilized_weights", "var_bootstrap", "var_model_based",
    "var_sandwich_weighted", "weight_diagnostics",
]
