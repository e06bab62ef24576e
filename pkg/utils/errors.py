"""Exceptions raised across molmip; the CLI maps them to exit codes."""

from typing import Any, Optional


class DomainError(ValueError):
    """A precondition or domain rule was violated (exit code 1)."""


class UnsupportedError(DomainError):
    """The request is outside what this build supports, e.g. a size cap."""


class ModelFormatError(DomainError):
    """A weight file could not be parsed; ``location`` points at the bad field."""

    def __init__(self, message: str, location: Optional[str] = None):
        super().__init__(message)
        self.location = location


class BuildError(DomainError):
    """The MILP could not be built as requested."""


class BudgetExceededError(RuntimeError):
    """The time budget ran out; ``partial`` carries whatever was computed so far."""

    def __init__(self, message: str, partial: Any = None):
        super().__init__(message)
        self.partial = partial
