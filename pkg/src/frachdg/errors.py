"""Exception types raised by the solver."""


class FracHDGError(Exception):
    """Base class for solver errors."""


class ValidationError(FracHDGError, ValueError):
    """Invalid input data, configuration or dimensions."""


class SolverError(FracHDGError, RuntimeError):
    """Linear solve failed or did not reach the residual contract."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual
