"""Bayesian CATE estimation in a partially linear model with GP priors."""

__version__ = "0.1.0"

from .errors import ConfigError, EstimationError, NumericalError, PLGPError, ShapeError
from .kernels import KernelSpec, gram, rbf, scaled
from .model import Dataset, ModelConfig, PartiallyLinearGP, PosteriorPredictive, posterior_cate
from .hyperopt import HyperFitOptions, fit_hyperparameters, log_marginal_likelihood
from .synthetic import SimSpec, simulate
from .baselines import DmlConfig, dml_linear_cate

__all__ = [
    "ConfigError", "EstimationError", "NumericalError", "PLGPError", "ShapeError",
    "KernelSpec", "gram", "rbf", "scaled",
    "Dataset", "ModelConfig", "PartiallyLinearGP", "PosteriorPredictive", "posterior_cate",
    "HyperFitOptions", "fit_hyperparameters", "log_marginal_likelihood",
    "SimSpec", "simulate",
    "DmlConfig", "dml_linear_cate",
]
