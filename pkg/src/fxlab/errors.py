"""Error taxonomy shared across the lab.

The CLI maps these to distinct exit codes, so raising the right class is part
of the contract: ConfigError for bad settings, DataError for bad inputs,
DimensionError for shape mismatches, NumericError and TrainingError for
runtime numerics.
"""


class ConfigError(ValueError):
    """A configuration value is missing, malformed, or out of range."""


class DataError(ValueError):
    """Input data violates a pipeline precondition (bad CSV, misaligned dates, zero variance)."""


class DimensionError(ValueError):
    """Array shapes are incompatible. Messages name both shapes."""


class NumericError(ArithmeticError):
    """Non-finite values reached an operation that requires finite inputs."""


class TrainingError(RuntimeError):
    """Training diverged. Carries the epoch at which the loss became non-finite."""

    def __init__(self, message: str, epoch: int | None = None):
        super().__init__(message)
        self.epoch = epoch
