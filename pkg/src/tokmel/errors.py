"""Exception hierarchy shared across the toolkit.

Plain ``ValueError`` is used for bad in-memory arguments (shape/range
mismatches); the classes below cover file formats, data alignment and
training failures so the CLI can map them onto exit codes.
"""


class TokmelError(Exception):
    """Base class for all toolkit errors."""


class FormatError(TokmelError):
    """Malformed or unsupported file content (bad magic, encoding, header)."""


class CorruptionError(FormatError):
    """Structurally valid header but inconsistent/truncated payload."""


class AlignmentError(TokmelError):
    """Frame-rate / hop / frame-count mismatch between inputs."""


class InsufficientDataError(TokmelError):
    """Not enough data points for the requested operation (e.g. N < k)."""


class TrainingError(TokmelError):
    """Numeric failure during training (divergence, non-finite loss)."""

    def __init__(self, message: str, epoch: int | None = None):
        super().__init__(message)
        self.epoch = epoch


class ParseError(TokmelError):
    """Score text that violates the format; carries the 1-based line number."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line
