"""Exception hierarchy shared by every module."""


class FusionBenchError(Exception):
    """Base class for all library errors."""


class DimensionError(FusionBenchError, ValueError):
    """Operand shapes do not conform."""


class ParameterError(FusionBenchError, ValueError):
    """An argument lies outside its valid range."""


class ConfigurationError(FusionBenchError, ValueError):
    """A model spec or run config is inconsistent or malformed."""


class ValidationError(FusionBenchError, ValueError):
    """Data failed a consistency check (non-finite values, shape vs manifest)."""


class FormatError(FusionBenchError, ValueError):
    """A text file could not be parsed."""

    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)


class VersionError(FusionBenchError):
    """File format version is not supported by this build."""


class DivergenceError(FusionBenchError, ArithmeticError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch, message=None):
        self.epoch = epoch
        super().__init__(message or f"non-finite loss at epoch {epoch}")
