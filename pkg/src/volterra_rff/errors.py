"""Exception hierarchy. The CLI maps each family onto an exit code."""


class RFFError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(RFFError, ValueError):
    """Invalid parameters or configuration."""

    exit_code = 2


class StratificationError(ConfigError):
    """A class is missing from a split, or has too few samples for k folds."""


class PreconditionError(RFFError, ValueError):
    exit_code = 2


class DegenerateInputError(RFFError, ValueError):
    """Input carries no usable energy or variance."""

    exit_code = 4


class PersistenceError(RFFError, OSError):
    """Reading or writing a file failed."""

    exit_code = 3


class FormatError(PersistenceError):
    """A file exists but does not parse as the expected format."""


class NumericalError(RFFError, ArithmeticError):
    exit_code = 4
