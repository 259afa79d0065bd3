"""Exception hierarchy shared across the package."""


class TreedHazardsError(Exception):
    """Base class for all package errors."""


class DataError(TreedHazardsError, ValueError):
    """Raised for malformed or inconsistent survival data."""


class ConfigError(TreedHazardsError, ValueError):
    """Raised for invalid run or move configuration."""


class InvalidTreeError(TreedHazardsError, ValueError):
    """Raised when a tree is inconsistent with the data it is evaluated on."""


class NumericalError(TreedHazardsError, ArithmeticError):
    """Raised when Newton iterations, optimization or factorization fail.

    The ``diagnostics`` mapping carries whatever state helps reproduce the
    failure (iteration counts, parameter values, gradient norms).
    """

    def __init__(self, message, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics
