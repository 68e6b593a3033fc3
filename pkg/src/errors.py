"""Exception hierarchy for the team performance predictor."""

from typing import Optional


class StgcnError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(StgcnError, ValueError):
    """Array shapes do not agree."""


class GraphDegeneracyError(StgcnError, ValueError):
    """A degree used for normalization is not strictly positive."""


class ConfigurationError(StgcnError, ValueError):
    """Invalid configuration or unusable training input."""


class TraceParseError(StgcnError, ValueError):
    """A trace line could not be decoded."""

    def __init__(self, message: str, line_number: Optional[int] = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class TraceSchemaError(StgcnError, ValueError):
    """A trace is structurally incomplete (e.g. an agent is missing)."""


class TraceValidationError(TraceParseError):
    """A trace record violates a field or ordering constraint."""


class CheckpointError(StgcnError, ValueError):
    """A checkpoint document is malformed or does not match its config."""


class CheckpointVersionError(CheckpointError):
    """A checkpoint was written with an incompatible format version."""


class LayoutError(StgcnError, RuntimeError):
    """Victims could not be placed within the retry budget."""


class ClassImbalanceError(StgcnError, RuntimeError):
    """A generated dataset has too few samples of the minority label."""


class MetricsError(StgcnError, ValueError):
    """Inputs to a metric computation are inconsistent."""


class DivergenceError(StgcnError, ArithmeticError):
    """Training or a matrix product produced non-finite values."""
