"""Exception types. The CLI maps each family to an exit code."""


class KrstError(Exception):
    exit_code = 1


class ConfigError(KrstError, ValueError):
    exit_code = 2


class DimensionError(KrstError, ValueError):
    exit_code = 2


class DataError(KrstError):
    exit_code = 3


class FormatError(DataError):
    """Malformed checkpoint or feature file."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class DatasetError(DataError):
    pass


class VocabularyError(DataError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


class LabelError(DataError, ValueError):
    pass


class SampleLookupError(DataError, LookupError):
    pass


class NumericError(KrstError, ArithmeticError):
    exit_code = 4


class OptimizerError(KrstError):
    exit_code = 4
