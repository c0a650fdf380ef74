"""
Exception hierarchy
Every error raised on purpose by the engine derives from GreeneryError
"""

from typing import List, Optional


class GreeneryError(Exception):
    """Base class for engine errors"""


class ConfigurationError(GreeneryError):
    """Configuration is unusable (missing files, bad ranges, mismatched coordinate systems)"""


class GeometryDomainError(GreeneryError, ValueError):
    """Geometry input outside the domain of an operation"""


class IngestionError(GreeneryError):
    """
    Input table failed a content check

    The offending 1-based data row numbers are kept so reports can list them.
    """

    def __init__(self, message: str, rows: Optional[List[int]] = None):
        self.rows = list(rows or [])
        if self.rows:
            shown = ", ".join(str(r) for r in self.rows[:20])
            more = "" if len(self.rows) <= 20 else f" (+{len(self.rows) - 20} more)"
            message = f"{message} [rows: {shown}{more}]"
        super().__init__(message)


class ModelError(GreeneryError):
    """Statistical model could not be fitted"""


class SeparationError(ModelError):
    """Treatment is perfectly predicted by the covariates"""


class StageFailure(GreeneryError):
    """A pipeline stage raised; dependents are not run"""

    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"Stage '{stage}' failed: {cause}")
