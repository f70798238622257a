"""Exception types shared across the package."""


class TopoNetError(Exception):
    """Base class for all package errors."""


class DimensionError(TopoNetError, ValueError):
    """Operand extents are incompatible."""


class NumericError(TopoNetError, ArithmeticError):
    """A value is undefined or non-finite (NaN/Inf, zero spectrum, ...)."""


class InsufficientDataError(TopoNetError, ValueError):
    """Not enough data to compute a statistic."""


class FitError(TopoNetError, RuntimeError):
    """Curve fitting failed on every start point."""


class TrainingError(TopoNetError, RuntimeError):
    """Training diverged."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


class ConfigError(TopoNetError, ValueError):
    """A configuration file or value is invalid."""


class CheckpointError(TopoNetError, OSError):
    """A checkpoint is missing, truncated or fails its hash check."""
