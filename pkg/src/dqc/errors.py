"""Exception hierarchy shared by every module."""


class DQCError(Exception):
    """Base class for all library errors."""


class ConfigurationError(DQCError, ValueError):
    """Invalid sizes, indices, or option combinations."""


class DomainError(DQCError, ValueError):
    """A variable value lies outside the admissible interval of a map."""


class NumericError(DQCError, ArithmeticError):
    """Non-finite or singular values met during evaluation.

    ``x`` carries the grid point that triggered it, when known.
    """

    def __init__(self, message, x=None):
        super().__init__(message)
        self.x = x


class LogicError(DQCError, RuntimeError):
    """An operation was called in a state that does not support it."""


class ConvergenceError(DQCError, RuntimeError):
    """An iterative procedure exhausted its budget."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual
