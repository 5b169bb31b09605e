"""Finite element pricing engine for the SABR and CEV models."""

from .model import (
    CoefficientSet,
    ParameterError,
    SabrParams,
    WellPosednessCert,
    is_wellposed,
    mu_range,
    operator_coefficients,
    validate_params,
    wellposedness_constants,
)

__version__ = "0.1.0"

__all__ = [
    "CoefficientSet",
    "ParameterError",
    "SabrParams",
    "WellPosednessCert",
    "is_wellposed",
    "mu_range",
    "operator_coefficients",
    "validate_params",
    "wellposedness_constants",
    "__version__",
]
