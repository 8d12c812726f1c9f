"""Exception types shared across the package."""


class FracPercError(Exception):
    """Base class for all package errors."""


class ConfigError(FracPercError):
    """Invalid experiment configuration or malformed input."""


class BudgetError(FracPercError):
    """A depth, memory or enumeration budget was exceeded."""


class SingularityError(FracPercError):
    """A rank-deficient Jacobian was detected on a variety."""


class DegenerateInputError(FracPercError):
    """Degenerate geometric input (non-orthonormal basis, repeated points, ...)."""
