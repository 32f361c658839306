"""
Error Hierarchy

Every failure raised by the library derives from ReflectedDiffusionError.
The CLI maps the three families (configuration, numerical, I/O) onto
distinct exit codes.
"""

from typing import Any, Dict, Optional


class ReflectedDiffusionError(Exception):
    """Base class for all library errors."""

    exit_code = 1


class ConfigurationError(ReflectedDiffusionError, ValueError):
    """Invalid configuration, infeasible geometry or refused lattice size."""

    exit_code = 2


class DomainError(ReflectedDiffusionError, ValueError):
    """Argument outside the domain of an operation (non-finite input, eps <= 0, empty samples)."""

    exit_code = 2


class TargetConstructionError(ConfigurationError):
    """Target support cannot be placed inside the cube at the requested margin."""


class UnsupportedError(ConfigurationError):
    """Requested dimension is outside what the quadrature routines handle."""


class NumericalError(ReflectedDiffusionError, ArithmeticError):
    """Base class for numerical failures."""

    exit_code = 3


class DivergenceError(NumericalError):
    """Training loss became NaN or infinite."""

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class CorruptedModelError(NumericalError):
    """Model parameters are non-finite or a checkpoint is malformed."""


class NonFiniteDriftError(NumericalError):
    """Backward sampler received a non-finite score."""

    def __init__(self, message: str, interval: Optional[int] = None):
        super().__init__(message)
        self.interval = interval


def exit_code_for(exc: BaseException) -> int:
    """
    Map an exception to the CLI exit code.

    Args:
        exc: Raised exception

    Returns:
        0-4 exit code (4 for I/O errors)
    """
    if isinstance(exc, ReflectedDiffusionError):
        return exc.exit_code
    if isinstance(exc, OSError):
        return 4
    return 1
