"""Exception types shared across bohmflow."""

from typing import Optional


class BohmflowError(Exception):
    """Base class for bohmflow errors."""


class ConfigError(BohmflowError, ValueError):
    """Invalid or unreadable run configuration."""

    def __init__(self, message: str, key: Optional[str] = None,
                 line: Optional[int] = None, column: Optional[int] = None):
        super().__init__(message)
        self.key = key
        self.line = line
        self.column = column


class NumericalAbort(BohmflowError, RuntimeError):
    """A computation produced non-finite values or lost numerical integrity."""

    def __init__(self, message: str, step: Optional[int] = None):
        super().__init__(message if step is None else f"{message} (step {step})")
        self.step = step
