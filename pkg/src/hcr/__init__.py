"""Joint densities of time-series residuals as orthonormal polynomials on [0, 1]^d."""

from .basis import BasisSpec, enumerate_indices, legendre_table, poly_1d, product_eval
from .density import (
    CoefficientTensor,
    baseline_sigma,
    condition_slice,
    estimate,
    evaluate,
    marginalize,
    prune,
    region_stats,
    sigma,
    top_k,
)
from .errors import (
    BasisTooLargeError,
    DegenerateScaleError,
    DomainError,
    HCRError,
    InvalidInputError,
    NonPositiveContextDensityError,
)
from .model import EvaluationReport, Model, ModelConfig, evaluate_matrix, fit, load_model, save_model
from .normalize import NormalizerParams, RawSeries, ResidualSeries, UniformSeries

__version__ = "0.1.0"

__all__ = [
    "BasisSpec",
    "enumerate_indices",
    "legendre_table",
    "poly_1d",
    "product_eval",
    "CoefficientTensor",
    "baseline_sigma",
    "condition_slice",
    "estimate",
    "evaluate",
    "marginalize",
    "prune",
    "region_stats",
    "sigma",
    "top_k",
    "BasisTooLargeError",
    "DegenerateScaleError",
    "DomainError",
    "HCRError",
    "InvalidInputError",
    "NonPositiveContextDensityError",
    "EvaluationReport",
    "Model",
    "ModelConfig",
    "evaluate_matrix",
    "fit",
    "load_model",
    "save_model",
    "NormalizerParams",
    "RawSeries",
    "ResidualSeries",
    "UniformSeries",
]
