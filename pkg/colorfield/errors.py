"""Exception types raised across colorfield.

The CLI maps `UsageError` to exit code 1 and `NumericalError` (and its
subclasses) to exit code 2.
"""


class ColorFieldError(Exception):
    pass


class UsageError(ColorFieldError):
    pass


class NumericalError(ColorFieldError):
    pass


class InvalidStateError(NumericalError):
    pass


class CriticalityError(NumericalError):
    pass


class ConvergenceError(NumericalError):
    def __init__(self, message: str, residual: float = float("nan"), iterations: int = 0):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations
