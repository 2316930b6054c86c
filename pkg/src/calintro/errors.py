"""Exception types shared across the package."""


class CalintroError(Exception):
    """Base class for all package errors."""


class ConfigError(CalintroError):
    """Invalid configuration or violated precondition."""


class ShapeError(CalintroError):
    """Dimension mismatch between arrays or network layers."""


class NumericalError(CalintroError):
    """Non-finite value where a finite one is required."""


class ParseError(CalintroError):
    """Malformed input file; message carries the offending line when known."""


class CheckpointError(CalintroError):
    """Unreadable, unsupported, or internally inconsistent checkpoint."""
