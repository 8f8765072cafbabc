"""Exception types shared across the package.

The CLI maps :class:`ConfigError` to exit code 2 and every
:class:`NumericError` subclass to exit code 3.
"""


class ConfigError(ValueError):
    """Malformed scenario or experiment configuration."""


class NumericError(ArithmeticError):
    """Non-finite values or a failed numerical routine."""

    def __init__(self, message, where=None):
        super().__init__(message if where is None else f"{message} (at {where})")
        self.where = where


class SingularMatrixError(NumericError):
    """A matrix expected to be positive definite is singular or indefinite.

    ``pivot`` is the zero-based index of the first failing Cholesky pivot.
    """

    def __init__(self, message, pivot=None):
        super().__init__(message, where=None if pivot is None else f"pivot {pivot}")
        self.pivot = pivot


class UnidentifiableError(NumericError):
    """The parameter set cannot be identified, e.g. azimuth at boresight."""
