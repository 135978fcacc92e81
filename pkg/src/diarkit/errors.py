"""Exception hierarchy for the toolkit.

Every data-level failure derives from :class:`ToolkitError` so callers (and
the CLI) can distinguish bad inputs (exit code 2) from usage errors (exit
code 1).
"""


class ToolkitError(Exception):
    """Base class for all data/processing errors raised by this package."""


# --- archive / file formats ------------------------------------------------

class FormatError(ToolkitError):
    """A file does not conform to its declared format (bad magic, bad fields)."""


class TruncationError(FormatError):
    """A binary archive ended before a declared record was complete."""


class DuplicateIdError(ToolkitError):
    """An identifier that must be unique appeared more than once."""


class ParseError(ToolkitError):
    """A text line could not be parsed; carries a 1-based line number."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class StateError(ToolkitError):
    """An operation was applied to data in the wrong state."""


# --- numeric kernels ---------------------------------------------------------

class ShapeError(ToolkitError):
    """Array arguments have incompatible or invalid shapes."""


class WeightError(ToolkitError):
    """Attention weights violate their normalization contract."""


class BatchError(ToolkitError):
    """A contrastive batch is too small or otherwise unusable."""


# --- clustering --------------------------------------------------------------

class ScorerError(ToolkitError):
    """A pair scorer returned a malformed affinity row."""


class DegenerateRowError(ToolkitError):
    """An affinity row has no positive entry and cannot be normalized."""


class NumericalError(ToolkitError):
    """An eigensolve or similar numeric routine produced non-finite output."""


class KError(ToolkitError):
    """Requested cluster count is out of range for the data."""


# --- pseudo-labeling ---------------------------------------------------------

class ManifestError(ToolkitError):
    """A manifest is missing information required by the operation."""


class EmptyResultError(ToolkitError):
    """Purification removed every item."""


# --- trial scoring -----------------------------------------------------------

class DegenerateCohortError(ToolkitError):
    """Top-X cohort scores have zero standard deviation."""


class CohortSizeError(ToolkitError):
    """Fewer cohort scores than the configured top-X size."""


class AlignmentError(ToolkitError):
    """Score lists to fuse are misaligned."""


class LabelError(ToolkitError):
    """Scores contain only one class where both are required."""


class MapError(ToolkitError):
    """A speaker map does not cover the utterances it must cover."""


# --- metrics -----------------------------------------------------------------

class UndefinedError(ToolkitError):
    """A metric is undefined for the given inputs (e.g. empty scored reference)."""


# --- pipeline ----------------------------------------------------------------

class StageError(ToolkitError):
    """A pipeline stage failed; names the stage and wraps the cause."""

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}': {cause}")
        self.stage = stage
        self.cause = cause
