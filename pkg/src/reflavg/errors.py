"""Exception types shared across the package."""


class ReflavgError(Exception):
    """Base class for all package errors."""


class InvalidArgument(ReflavgError, ValueError):
    pass


class NumericalFailure(ReflavgError, ArithmeticError):
    """A computation produced non-finite values or failed to converge.

    ``step`` carries the time-step index when the failure happened inside a
    path or backward sweep.
    """

    def __init__(self, message, step=None, diagnostics=None):
        super().__init__(message)
        self.step = step
        self.diagnostics = diagnostics or {}


class NonAveragingError(NumericalFailure):
    """Horizon doubling did not settle within the allowed number of doublings."""


class EllipticityViolation(NumericalFailure):
    pass
