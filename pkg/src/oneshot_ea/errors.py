"""Exception hierarchy shared by every module."""


class OneShotError(Exception):
    """Base class for all errors raised by this package."""


class SizeError(OneShotError):
    """An operand would exceed the configured dimension cap."""


class LayoutError(OneShotError):
    """Unknown label, duplicate label or dimension mismatch against a layout."""


class DomainError(OneShotError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class SolverError(OneShotError):
    """The SDP solver did not reach an optimal status."""

    def __init__(self, message, solution=None):
        super().__init__(message)
        self.solution = solution
