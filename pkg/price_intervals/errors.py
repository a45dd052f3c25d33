from typing import Any, Dict, Optional


class PriceIntervalsError(Exception):
    """Base class for all errors raised by this package."""


class DataFormatError(PriceIntervalsError, ValueError):
    """Input data could not be parsed.

    Args:
        message (str): What went wrong.
        line (int): 1-based data line (the header is line 0), if known.
    """

    def __init__(self, message: str, line: Optional[int] = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ConfigError(PriceIntervalsError, ValueError):
    """A configuration document violates its schema."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class ModelFitError(PriceIntervalsError, RuntimeError):
    """Estimation failed after all restarts."""

    def __init__(self,
                 message: str,
                 diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class FilterDivergenceError(PriceIntervalsError, FloatingPointError):
    """A recursive filter produced a non-finite value."""


class TrainingDivergedError(PriceIntervalsError, RuntimeError):
    def __init__(self, epoch: int, message: str = "non-finite loss"):
        super().__init__(f"{message} at epoch {epoch}")
        self.epoch = epoch
