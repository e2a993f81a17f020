"""Exception hierarchy shared across the toolkit."""


class FpsrError(Exception):
    """Base class for all toolkit errors."""


class ShapeError(FpsrError, ValueError):
    """Operands have incompatible or invalid dimensions."""


class NumericError(FpsrError, ArithmeticError):
    """A forward or backward pass produced NaN/Inf, or an op got an
    out-of-domain value (sqrt of a negative, log of zero)."""


class ConfigError(FpsrError, ValueError):
    """Invalid configuration value or malformed config file."""


class DataError(FpsrError, ValueError):
    """Unreadable, malformed or inconsistent image / manifest data."""


class CheckpointError(FpsrError, ValueError):
    """Corrupt, truncated or version-incompatible checkpoint file."""
