"""Exception types raised across the package."""


class PLGPError(Exception):
    """Base class for all package errors."""


class ShapeError(PLGPError, ValueError):
    """Array inputs have incompatible shapes."""


class ConfigError(PLGPError, ValueError):
    """A configuration value is out of its valid range."""


class NumericalError(PLGPError, ArithmeticError):
    """A factorization failed even after the jitter ladder was exhausted."""


class EstimationError(PLGPError, RuntimeError):
    """An estimator could not be fitted on the supplied data."""
