"""Exception types shared across the package."""


class DietLabError(Exception):
    """Base class for all diet-lab errors."""


class ShapeError(DietLabError, ValueError):
    """Operands have incompatible dimensions."""


class NumericError(DietLabError, ValueError):
    """Non-finite values where finite ones are required."""


class FormatError(DietLabError, ValueError):
    """A file does not conform to its declared binary/text format."""


class ConvergenceError(DietLabError, RuntimeError):
    """An iterative routine exhausted its iteration budget."""

    def __init__(self, message, sweeps=None):
        super().__init__(message)
        self.sweeps = sweeps


class StateError(DietLabError, RuntimeError):
    """An operation was called out of order (e.g. backward before forward)."""


class ConfigError(DietLabError, ValueError):
    """A run configuration is invalid or contains unknown keys."""


class TrainingDivergedError(NumericError):
    """Training hit a non-finite loss; carries the last good state."""

    def __init__(self, message, model=None, metrics=None):
        super().__init__(message)
        self.model = model
        self.metrics = metrics
