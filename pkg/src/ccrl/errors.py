"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """Raised when an argument violates a shape or domain precondition."""


class NumericalError(ArithmeticError):
    """Raised when a factorisation fails even after the jitter ladder."""


class OptimizationDiverged(RuntimeError):
    """Raised when an optimizer meets a non-finite loss.

    The last parameter vector with a finite loss is kept on ``params`` so the
    caller can recover or inspect it.
    """

    def __init__(self, message, params=None, loss=None):
        super().__init__(message)
        self.params = params
        self.loss = loss
