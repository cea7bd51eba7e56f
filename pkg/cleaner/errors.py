"""
Exception hierarchy for the CLEANER toolkit
"""

from typing import Optional


class CleanerError(Exception):
    """Base class for all toolkit errors"""


class ContractViolation(CleanerError, ValueError):
    """An operation was called outside its precondition"""


class PurificationError(ContractViolation):
    """Offline purification was given already-purified input"""


class ConfigError(CleanerError, ValueError):
    """Invalid experiment configuration"""


class TrajectoryFormatError(CleanerError, ValueError):
    """Malformed trajectory line"""

    def __init__(self, message: str, line: Optional[int] = None, field: Optional[str] = None):
        self.line = line
        self.field = field
        location = []
        if line is not None:
            location.append(f"line {line}")
        if field:
            location.append(field)
        prefix = ": ".join(location)
        super().__init__(f"{prefix}: {message}" if prefix else message)


class NonFiniteObjectiveError(CleanerError):
    """The surrogate objective or its gradient became non-finite"""

    def __init__(self, message: str, group_index: int):
        self.group_index = group_index
        super().__init__(message)


class TrainingAborted(CleanerError):
    """Training stopped early; diagnostics were written to disk"""

    def __init__(self, message: str, diagnostics_path: Optional[str] = None):
        self.diagnostics_path = diagnostics_path
        super().__init__(message)


class RunValidationError(CleanerError):
    """A run directory is missing expected files"""

    def __init__(self, message: str, missing: Optional[list] = None):
        self.missing = list(missing or [])
        super().__init__(message)


class UsageError(CleanerError, ValueError):
    """Bad command-line arguments"""
