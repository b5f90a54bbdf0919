"""Pseudo-spectral Boussinesq solver and Littlewood-Paley analysis toolkit on the torus."""

from .exceptions import (
    ConfigurationError,
    DivergenceError,
    PreconditionError,
    SmallnessError,
    StepSizeError,
)
from .spectral import SpectralField, TorusGrid, transform_forward, transform_inverse

__all__ = [
    "ConfigurationError",
    "DivergenceError",
    "PreconditionError",
    "SmallnessError",
    "StepSizeError",
    "SpectralField",
    "TorusGrid",
    "transform_forward",
    "transform_inverse",
]

__version__ = "0.1.0"
