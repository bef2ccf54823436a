"""Exception types raised by the optimizer."""


class BadsError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatch(BadsError, ValueError):
    pass


class InvalidBounds(BadsError, ValueError):
    pass


class StartOutOfBounds(BadsError, ValueError):
    pass


class OutOfBounds(BadsError, ValueError):
    pass


class NonPositiveDefinite(BadsError, ArithmeticError):
    """Kernel matrix could not be factorized even after jitter escalation."""


class FitFailed(BadsError, RuntimeError):
    """Every hyperparameter optimization start diverged."""


class BudgetExhausted(BadsError):
    """Raised when an evaluation is requested with no budget left."""


class ObjectiveRaised(BadsError, RuntimeError):
    """The user objective raised; ``partial_result`` holds what was done so far."""

    def __init__(self, message, partial_result=None):
        super().__init__(message)
        self.partial_result = partial_result
