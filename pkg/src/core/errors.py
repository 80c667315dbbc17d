"""
Exception Hierarchy

Every failure the library raises on purpose derives from McRecError so the
CLI can report it and exit cleanly.
"""

from typing import Optional, Sequence


class McRecError(Exception):
    """Base class for all library errors"""


class ConfigError(McRecError):
    """Invalid or unreadable configuration"""


class DatasetError(McRecError):
    """Problems with rating logs or interaction sets"""


class ParseError(DatasetError):
    """A rating line could not be parsed"""

    def __init__(self, message: str, line_number: Optional[int] = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class ValidationError(DatasetError):
    """A parsed value violates its declared range"""


class EmptyDatasetError(DatasetError):
    """An operation produced or received an empty dataset"""


class GraphError(McRecError):
    """Invalid graph structure or propagation input"""


class DimensionMismatchError(GraphError):
    """Feature table does not match the graph's node count"""


class DegenerateInputError(McRecError):
    """PairNorm input whose centered table is all zeros"""


class NumericError(McRecError):
    """NaN or Inf appeared during computation"""

    def __init__(self, message: str, layer: Optional[int] = None):
        self.layer = layer
        if layer is not None:
            message = f"layer {layer}: {message}"
        super().__init__(message)


class EvaluationError(McRecError):
    """Ranking evaluation could not be performed"""


class CheckpointError(McRecError):
    """Missing, corrupt or incompatible checkpoint"""


class UnknownUserError(McRecError):
    """A user id that is not in the model's index space"""

    def __init__(self, user_id: str, suggestions: Sequence[str] = ()):
        self.user_id = user_id
        self.suggestions = list(suggestions)
        message = f"unknown user id '{user_id}'"
        if self.suggestions:
            message += f"; nearest known ids: {', '.join(self.suggestions)}"
        super().__init__(message)
