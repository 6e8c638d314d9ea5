"""Exception hierarchy for the genobin toolkit."""

from typing import Optional


class GenobinError(Exception):
    """Base class for every data, model or format error raised by the toolkit."""


class ParseError(GenobinError):
    """Malformed FASTA/FASTQ input."""

    def __init__(self, message: str, record_index: Optional[int] = None):
        if record_index is not None:
            message = f"record {record_index}: {message}"
        super().__init__(message)
        self.record_index = record_index


class AlphabetError(GenobinError):
    """Symbol outside its declared alphabet."""


class StatsError(GenobinError):
    """Empty statistics or an invalid probability distribution."""


class ModelError(GenobinError):
    """Model shape mismatch, zero probability or failed optimisation."""

    def __init__(self, message: str, position: Optional[int] = None):
        if position is not None:
            message = f"{message} (position {position})"
        super().__init__(message)
        self.position = position


class CodingError(GenobinError):
    """Truncated or corrupted entropy-coded payload."""


class FormatError(GenobinError):
    """Bad magic, version or stream layout in a serialized blob or archive."""
