"""Exception types shared across the package.

Each class maps to one CLI exit code (see ``fdrsplit.cli``).
"""


class FDRError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class InvalidInputError(FDRError, ValueError):
    exit_code = 2


class NonFiniteInputError(InvalidInputError):
    """An input array contains inf or nan."""


class NumericalFailureError(FDRError, ArithmeticError):
    """Raised when an iteration or factorization breaks down.

    ``last`` carries the last finite estimate or state, when there is one.
    """

    exit_code = 3

    def __init__(self, msg, last=None):
        super().__init__(msg)
        self.last = last


class InsufficientDataError(FDRError):
    exit_code = 4


class UnsupportedFeatureError(FDRError, NotImplementedError):
    exit_code = 2
