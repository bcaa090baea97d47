"""
Exception hierarchy shared by the physics layer and the command line.
"""

from typing import Optional


class RydspecError(Exception):
    """Root of every error raised deliberately by rydspec."""


class DomainError(RydspecError, ValueError):
    """An input violates a documented precondition (negative OD, n below minimum, ...)."""


class SteadyStateError(RydspecError):
    """The Lindblad generator has no unique steady state for a velocity class."""

    def __init__(self, message: str, node: Optional[int] = None, velocity: Optional[float] = None):
        self.node = node
        self.velocity = velocity
        if node is not None:
            message = f"{message} (node {node}, v={velocity!r} m/s)"
        super().__init__(message)


class CalibrationError(RydspecError):
    """An optical-depth reference evaluated to zero or a non-finite value."""


class ConfigError(RydspecError):
    """A run configuration field failed validation."""

    def __init__(self, message: str, field: Optional[str] = None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class DataError(RydspecError):
    """An input data file is missing, malformed or too short."""
