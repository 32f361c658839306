"""Shared utilities: errors, random streams, logging and progress reporting."""

from .errors import (
    ConfigurationError,
    CorruptedModelError,
    DivergenceError,
    DomainError,
    NonFiniteDriftError,
    NumericalError,
    ReflectedDiffusionError,
    TargetConstructionError,
    UnsupportedError,
    exit_code_for,
)
from .rng_utils import stream

__all__ = [
    "ConfigurationError",
    "CorruptedModelError",
    "DivergenceError",
    "DomainError",
    "NonFiniteDriftError",
    "NumericalError",
    "ReflectedDiffusionError",
    "TargetConstructionError",
    "UnsupportedError",
    "exit_code_for",
    "stream",
]
