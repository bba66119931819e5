"""Exception hierarchy shared across the package."""


class FilterLabError(Exception):
    """Base class for all filterlab errors."""


class StructureError(FilterLabError):
    """Input violates a structural requirement (hermiticity, dimension, tags)."""


class PreconditionError(FilterLabError):
    """Caller violated a documented precondition (normalization, positivity)."""


class ZeroProbabilityError(FilterLabError):
    """Conditioning on an outcome of (numerically) zero probability."""


class ConfigError(FilterLabError):
    """Invalid configuration: bad scenario file, violated stability bound."""


class FilterCollapseError(FilterLabError):
    """Filter mass/trace underflowed; the run cannot continue honestly."""
