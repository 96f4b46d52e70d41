"""
Exception hierarchy for CODReg and the CLI exit status each one maps to.
"""


class CODRegError(Exception):
    """Base class for every error raised on purpose by this package."""

    exit_status = 1


class UsageError(CODRegError):
    """Bad command line or unknown metric / ablation term."""

    exit_status = 2


class ConfigError(UsageError):
    """Experiment file is missing a field or holds an invalid value."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class ShapeError(CODRegError, ValueError):
    """Matrix shapes do not conform, or input violates a numeric precondition."""

    exit_status = 3


class DataError(CODRegError):
    """Dataset could not be read or does not fit the requested operation."""

    exit_status = 3


class NumericalError(CODRegError):
    """Linear algebra failed or produced a value outside its contract."""

    exit_status = 4


class DegenerateSpectrumError(NumericalError):
    """A nuclear-norm site sits at a nondifferentiable point."""


class TrainingDivergedError(NumericalError):
    """Loss became nonfinite or exceeded the divergence limit."""

    def __init__(self, message, epoch=None, step=None, loss=None):
        super().__init__(message)
        self.epoch = epoch
        self.step = step
        self.loss = loss


def exit_status_for(exc):
    """Map an exception to the CLI exit status (0 ok, 2 usage, 3 data, 4 numerical)."""
    if isinstance(exc, CODRegError):
        return exc.exit_status
    if isinstance(exc, (FileNotFoundError, PermissionError, IsADirectoryError)):
        return 3
    return 1
