"""Exception hierarchy. ``exit_code`` is what the command line reports."""


class PateForgeError(Exception):
    exit_code = 1


class ConfigError(PateForgeError, ValueError):
    exit_code = 2


class MissingArtifactError(PateForgeError, FileNotFoundError):
    exit_code = 3


class StaleArtifactError(PateForgeError):
    """An artifact on disk was produced under a different config digest."""

    exit_code = 3


class BudgetViolation(PateForgeError):
    exit_code = 4


class NumericalError(PateForgeError, ArithmeticError):
    exit_code = 5


class CsvFormatError(PateForgeError, ValueError):
    """Malformed feature file. ``row`` is the 1-based line number, if known."""

    exit_code = 2

    def __init__(self, message, row=None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
