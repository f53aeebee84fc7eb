"""Optimal information acquisition for a Bayesian CARA investor."""

from ._kernels import BACKEND
from .errors import (
    ConfigurationError,
    DomainCapError,
    DomainError,
    InfoAcqError,
    IntegrationFailure,
    NoConvergence,
    NumericalFailure,
    ShootingError,
    UnsupportedVariantError,
)
from .model import INFINITY, GaussKernel, ModelParams, Power, Regularized, TruncatedLinear
from .paths import StrategyPath

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ConfigurationError",
    "DomainCapError",
    "DomainError",
    "GaussKernel",
    "INFINITY",
    "InfoAcqError",
    "IntegrationFailure",
    "ModelParams",
    "NoConvergence",
    "NumericalFailure",
    "Power",
    "Regularized",
    "ShootingError",
    "StrategyPath",
    "TruncatedLinear",
    "UnsupportedVariantError",
    "__version__",
]
