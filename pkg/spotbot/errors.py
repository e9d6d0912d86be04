"""
Exception hierarchy shared by all spotbot tools.

Validation problems map to CLI exit code 1, everything else to exit code 2.
"""


class SpotBotError(Exception):
    """Base class for spotbot failures."""


class ValidationError(SpotBotError, ValueError):
    """Invalid argument, precondition or configuration value."""


class IngestionError(SpotBotError):
    """A source document could not be read or decoded."""

    def __init__(self, message: str, path: str = None, offset: int = None):
        self.path = path
        self.offset = offset
        if path:
            message = f"{path}: {message}"
        super().__init__(message)


class EmbeddingFormatError(ValidationError):
    """Malformed line in a plain-text vector file."""

    def __init__(self, message: str, line_number: int):
        self.line_number = line_number
        super().__init__(f"line {line_number}: {message}")


class StageError(SpotBotError):
    """A pipeline stage failed; carries the stage name and the cause."""

    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {cause}")
