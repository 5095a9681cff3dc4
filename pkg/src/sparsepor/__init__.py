"""Sparse pseudo-outcome regression for mean potential outcomes under
high-dimensional discrete treatments."""

from .core import (
    D1,
    D2,
    Dataset,
    EstimatorConfig,
    InternalError,
    InvalidInputError,
    Method,
    NumericError,
    SparsityNorm,
    TargetParameter,
    TreatmentKind,
    TreatmentSpec,
    empirical_proportions,
    split_folds,
)

__version__ = "0.1.0"

__all__ = [
    "D1", "D2", "Dataset", "EstimatorConfig", "InternalError", "InvalidInputError", "Method",
    "NumericError", "SparsityNorm", "TargetParameter", "TreatmentKind", "TreatmentSpec",
    "empirical_proportions", "split_folds",
]
