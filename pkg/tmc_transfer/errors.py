"""
Exception hierarchy for tmc-transfer
Every error carries the CLI exit code it maps to
"""

from typing import Optional


class TMCError(Exception):
    """Base class for all toolkit errors"""

    exit_code = 2


class UsageError(TMCError):
    """Bad command line usage"""

    exit_code = 1


class ArgumentError(TMCError, ValueError):
    """Invalid argument passed to an operation"""

    exit_code = 2


class ValidationError(TMCError, ValueError):
    """
    A record or field failed schema validation

    Args:
        message: What went wrong
        row: 1-based data row number (header excluded), if known
        field: Offending column name, if known
    """

    exit_code = 2

    def __init__(self, message: str, row: Optional[int] = None, field: Optional[str] = None):
        self.message = message
        self.row = row
        self.field = field
        super().__init__(str(self))

    def __str__(self) -> str:
        where = []
        if self.row is not None:
            where.append(f"row {self.row}")
        if self.field is not None:
            where.append(f"field '{self.field}'")
        if where:
            return f"{', '.join(where)}: {self.message}"
        return self.message


class NumericError(TMCError, ArithmeticError):
    """Non-finite inputs or a numerical failure"""

    exit_code = 3


class MatchingError(TMCError):
    """Intersection matching could not be computed"""

    exit_code = 2


class ModelFormatError(TMCError):
    """A persisted model file is unreadable, truncated or of an unsupported version"""

    exit_code = 2


class StorageError(TMCError):
    """An input or output path could not be read or written"""

    exit_code = 2


class PipelineStageError(TMCError):
    """A transfer pipeline stage failed; keeps the cause's exit code"""

    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 2)
        super().__init__(f"stage '{stage}' failed: {cause}")
