"""Exception types shared across the package."""


class VarChartError(Exception):
    """Base class for all package errors."""


class CausalityError(VarChartError):
    """Raised when an AR polynomial has a root on or inside the unit circle."""


class NumericalError(VarChartError):
    """Raised when a prediction error variance stops being positive."""


class DomainError(VarChartError, ValueError):
    """Raised for arguments outside a function's domain."""


class UnsupportedScheme(VarChartError):
    """Raised when a scheme has no implementation for the given process."""


class ConfigError(VarChartError, ValueError):
    """Raised for invalid run configurations."""


class CalibrationError(VarChartError):
    """Raised when a control limit cannot be bracketed or bisected."""

    def __init__(self, message, history=()):
        super().__init__(message)
        self.history = list(history)


class EstimationError(VarChartError):
    """Raised when a Monte Carlo estimate cannot be formed."""
