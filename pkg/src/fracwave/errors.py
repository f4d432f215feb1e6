"""Exception types shared across the package."""


class FracwaveError(Exception):
    """Base class for all package-specific errors."""


class DomainError(FracwaveError, ValueError):
    """An argument violates a documented precondition."""


class ConvergenceError(FracwaveError, RuntimeError):
    """A quadrature did not converge within its subdivision budget."""


class BlowUpError(FracwaveError, RuntimeError):
    """A simulated path produced non-finite or absurdly large values."""

    def __init__(self, message, path_index=None, step_index=None):
        super().__init__(message)
        self.path_index = path_index
        self.step_index = step_index


class ConfigError(FracwaveError, ValueError):
    """An experiment configuration failed validation."""
