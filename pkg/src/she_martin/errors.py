"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid, unknown, or inconsistent configuration input."""


class CapacityError(RuntimeError):
    """A requested construction exceeds the configured size budget."""


class AccuracyError(RuntimeError):
    """A certified numerical tolerance could not be met."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class StabilityError(RuntimeError):
    """Time stepping produced non-finite values."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class WeakDisorderError(RuntimeError):
    """The requested operation needs a positive weak-disorder margin."""
