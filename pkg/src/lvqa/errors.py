"""Exception hierarchy shared across the pipeline.

``PipelineError`` covers validation problems (CLI exit code 1);
``NumericError`` covers non-finite values discovered mid-computation
(CLI exit code 2).
"""


class PipelineError(Exception):
    """Base class for recoverable validation errors."""


class DimensionError(PipelineError):
    """Tensor shapes are incompatible; the message names the offending axis."""


class NonDivisibleError(PipelineError):
    """A video extent is not divisible by the requested patch size."""

    def __init__(self, axis: str, extent: int, patch: int):
        self.axis = axis
        super().__init__(f"{axis} extent {extent} not divisible by patch size {patch}")


class EmptySequenceError(PipelineError):
    """An interleaved sequence with zero temporal units was requested."""


class ParseError(PipelineError):
    """A timestamp token group is malformed or out of order."""

    def __init__(self, message: str, token_index: int | None = None):
        self.token_index = token_index
        if token_index is not None:
            message = f"{message} (token index {token_index})"
        super().__init__(message)


class UntrainedGrounderError(PipelineError):
    """Learned grounding was requested without a trained unit scorer."""


class BudgetError(PipelineError):
    """A frame budget below the permitted minimum was supplied."""


class FeatureError(PipelineError):
    """Instructor features could not be built (e.g. empty question)."""


class EmptyInputError(PipelineError):
    """The answerer received an empty token sequence."""


class VocabError(PipelineError):
    """Text contains tokens outside the model vocabulary."""


class ConfigError(PipelineError):
    """A configuration value is missing, unknown, or invalid."""


class EmptyDatasetError(ConfigError):
    """Dataset generation was requested with zero instances."""


class ShapeError(PipelineError):
    """Episodes with heterogeneous frame shapes cannot be stitched."""


class LabelError(PipelineError):
    """A question type has no sampling-policy label."""


class MetricError(PipelineError):
    """A metric was invoked with invalid inputs (e.g. empty keyword set)."""


class NumericError(Exception):
    """A loss or gradient became non-finite; names the failing branch."""
