"""Exception types raised by hrkriging."""


class HRKError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(HRKError, ValueError):
    pass


class DuplicatePointError(HRKError, ValueError):
    pass


class IllConditionedError(HRKError, ArithmeticError):
    pass


class IterationLimitError(HRKError, RuntimeError):
    """Raised when an iterative routine exhausts its budget.

    The last iterate is kept on ``last`` so callers can inspect or reuse it.
    """

    def __init__(self, message, last=None):
        super().__init__(message)
        self.last = last


class InfeasiblePointError(HRKError, ValueError):
    pass


class BoundarySingularityError(HRKError, ValueError):
    pass


class NotFoundError(HRKError, KeyError):
    pass


class ConfigError(HRKError, ValueError):
    pass


class ParseError(HRKError, ValueError):
    pass
