"""FASTA/FASTQ parsing into symbol sequences over declared alphabets."""

import logging
import sys
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import BinaryIO, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import AlphabetError, ParseError

logger = logging.getLogger(__name__)

BASES = b"ACGT"
UNKNOWN = 255

_BASE_LUT = np.full(256, UNKNOWN, dtype=np.uint8)
for _code, _char in enumerate(BASES):
    _BASE_LUT[_char] = _code
    _BASE_LUT[ord(chr(_char).lower())] = _code


def decode_id(raw: bytes) -> str:
    """Read id text; undecodable bytes survive as surrogates so encode_id restores them."""
    return raw.decode("utf-8", errors="surrogateescape")


def encode_id(read_id: str) -> bytes:
    return read_id.encode("utf-8", errors="surrogateescape")


class AlphabetKind(Enum):
    """Kinds of symbol alphabets."""
    BASES4 = "bases4"
    QUALITY = "quality"
    PACKED_BASE_QUALITY = "packed"
    CUSTOM = "custom"


class SourceFormat(Enum):
    """Input file formats."""
    FASTQ = "fastq"
    FASTA = "fasta"


class Field(Enum):
    """Symbol fields a read can be viewed as."""
    BASES = "bases"
    QUALITIES = "qualities"
    PACKED = "packed"


@dataclass(frozen=True)
class Alphabet:
    """Symbol alphabet of size m."""
    kind: AlphabetKind
    size: int
    max_score: Optional[int] = None

    def __post_init__(self):
        if self.size < 2:
            raise ValueError(f"Alphabet size must be at least 2, got {self.size}")
        if self.kind == AlphabetKind.BASES4 and self.size != 4:
            raise ValueError("Bases alphabet has exactly 4 symbols")
        if self.kind == AlphabetKind.PACKED_BASE_QUALITY and self.size != 4 * (self.max_score + 1):
            raise ValueError("Packed alphabet size must be 4*(max_score+1)")

    @classmethod
    def bases(cls) -> "Alphabet":
        return cls(AlphabetKind.BASES4, 4)

    @classmethod
    def quality(cls, size: int = 64) -> "Alphabet":
        return cls(AlphabetKind.QUALITY, size, max_score=size - 1)

    @classmethod
    def packed(cls, max_score: int) -> "Alphabet":
        return cls(AlphabetKind.PACKED_BASE_QUALITY, 4 * (max_score + 1), max_score=max_score)

    @classmethod
    def custom(cls, size: int) -> "Alphabet":
        return cls(AlphabetKind.CUSTOM, size)

    def check(self, symbols: np.ndarray) -> None:
        """Raise AlphabetError if any symbol is outside the alphabet."""
        if len(symbols) and int(symbols.max()) >= self.size:
            raise AlphabetError(f"symbol {int(symbols.max())} outside alphabet of size {self.size}")


@dataclass(frozen=True)
class Read:
    """One sequencing record: bases, optional qualities and its id line."""
    bases: np.ndarray
    qualities: Optional[np.ndarray] = None
    id: str = ""

    def __post_init__(self):
        if self.qualities is not None and len(self.qualities) != len(self.bases):
            raise ValueError("qualities must have the same length as bases")
        self.bases.setflags(write=False)
        if self.qualities is not None:
            self.qualities.setflags(write=False)

    def __len__(self) -> int:
        return len(self.bases)


@dataclass(frozen=True)
class Dataset:
    """Immutable collection of reads with their alphabets."""
    reads: Tuple[Read, ...]
    alphabet: Alphabet = field(default_factory=Alphabet.bases)
    quality_alphabet: Optional[Alphabet] = None
    source_path: str = ""
    source_format: SourceFormat = SourceFormat.FASTQ
    substituted: int = 0

    @property
    def total_symbols(self) -> int:
        """N, the total number of symbols over all reads."""
        return sum(len(read) for read in self.reads)

    @property
    def has_qualities(self) -> bool:
        return bool(self.reads) and all(read.qualities is not None for read in self.reads)

    @property
    def lengths(self) -> np.ndarray:
        return np.fromiter((len(read) for read in self.reads), dtype=np.int64, count=len(self.reads))

    def __len__(self) -> int:
        return len(self.reads)

    def subset(self, indices: Sequence[int]) -> "Dataset":
        """Dataset restricted to the given read indices (order preserved)."""
        return Dataset(tuple(self.reads[i] for i in indices), self.alphabet,
                       self.quality_alphabet, self.source_path, self.source_format)


def _map_bases(line: bytes, record_index: int, n_policy: str, n_substitute: int) -> Tuple[np.ndarray, int]:
    codes = _BASE_LUT[np.frombuffer(line, dtype=np.uint8)]
    unknown = codes == UNKNOWN
    count = int(unknown.sum())
    if count:
        if n_policy == "reject":
            bad = chr(line[int(np.argmax(unknown))])
            raise ParseError(f"unknown base character {bad!r}", record_index)
        codes = codes.copy()
        codes[unknown] = n_substitute
    return codes, count


def _map_qualities(line: bytes, record_index: int, alphabet: Alphabet, offset: int) -> np.ndarray:
    raw = np.frombuffer(line, dtype=np.uint8).astype(np.int16) - offset
    if len(raw) and (raw.min() < 0 or raw.max() >= alphabet.size):
        raise ParseError(f"quality outside alphabet of size {alphabet.size}", record_index)
    return raw.astype(np.uint8)


def _split_lines(data: bytes) -> List[bytes]:
    lines = data.split(b"\n")
    lines = [line[:-1] if line.endswith(b"\r") else line for line in lines]
    # only the terminating newline; empty reads keep their empty lines
    if lines and not lines[-1]:
        lines.pop()
    return lines


def _as_bytes(source: Union[bytes, BinaryIO]) -> bytes:
    if isinstance(source, (bytes, bytearray, memoryview)):
        return bytes(source)
    return source.read()


def parse_fastq(source: Union[bytes, BinaryIO], quality_alphabet_size: int = 64,
                n_policy: str = "substitute", n_substitute: int = 0,
                quality_offset: int = 33, source_path: str = "") -> Dataset:
    """Parse 4-line FASTQ records into a Dataset.

    Args:
        source: FASTQ content or a binary stream
        quality_alphabet_size: Size of the quality alphabet (Phred+33 scores below it)
        n_policy: "substitute" maps unknown bases to n_substitute, "reject" raises
        n_substitute: Symbol used for unknown bases under the substitute policy
        quality_offset: ASCII offset of quality characters
        source_path: Recorded in the returned Dataset

    Returns:
        Dataset with one Read per record, in file order

    Raises:
        ParseError: On malformed records or rejected base characters
    """
    lines = _split_lines(_as_bytes(source))
    quality_alphabet = Alphabet.quality(quality_alphabet_size)
    if len(lines) % 4:
        raise ParseError("truncated record (line count not a multiple of 4)", len(lines) // 4)

    reads = []
    substituted = 0
    for index in range(len(lines) // 4):
        header, sequence, plus, quality = lines[4 * index: 4 * index + 4]
        if not header.startswith(b"@"):
            raise ParseError("missing '@' header", index)
        if not plus.startswith(b"+"):
            raise ParseError("missing '+' separator", index)
        if len(sequence) != len(quality):
            raise ParseError(f"sequence length {len(sequence)} != quality length {len(quality)}", index)
        bases, count = _map_bases(sequence, index, n_policy, n_substitute)
        substituted += count
        qualities = _map_qualities(quality, index, quality_alphabet, quality_offset)
        reads.append(Read(bases, qualities, decode_id(header[1:])))

    if substituted:
        logger.warning(f"Mapped {substituted} unknown base characters to symbol {n_substitute}")
    return Dataset(tuple(reads), Alphabet.bases(), quality_alphabet, source_path,
                   SourceFormat.FASTQ, substituted)


def parse_fasta(source: Union[bytes, BinaryIO], n_policy: str = "substitute",
                n_substitute: int = 0, source_path: str = "") -> Dataset:
    """Parse FASTA records (wrapped sequence lines) into a Dataset without qualities."""
    lines = _split_lines(_as_bytes(source))
    reads = []
    substituted = 0
    header: Optional[bytes] = None
    chunks: List[bytes] = []

    def flush() -> None:
        nonlocal substituted
        bases, count = _map_bases(b"".join(chunks), len(reads), n_policy, n_substitute)
        substituted += count
        reads.append(Read(bases, None, decode_id(header[1:])))

    for line in lines:
        if line.startswith(b">"):
            if header is not None:
                flush()
            header, chunks = line, []
        elif line.strip():
            if header is None:
                raise ParseError("sequence data before the first '>' header", 0)
            chunks.append(line.strip())
    if header is not None:
        flush()

    if substituted:
        logger.warning(f"Mapped {substituted} unknown base characters to symbol {n_substitute}")
    return Dataset(tuple(reads), Alphabet.bases(), None, source_path, SourceFormat.FASTA, substituted)


def read_dataset(path: Union[str, Path], **kwargs) -> Dataset:
    """Read a FASTQ or FASTA file (``-`` for standard input), detecting the format."""
    if str(path) == "-":
        data = sys.stdin.buffer.read()
    else:
        data = Path(path).read_bytes()
    first = data.lstrip()[:1]
    if first == b">":
        kwargs.pop("quality_alphabet_size", None)
        kwargs.pop("quality_offset", None)
        return parse_fasta(data, source_path=str(path), **kwargs)
    return parse_fastq(data, source_path=str(path), **kwargs)


def pack_symbols(read: Read, max_score: int) -> np.ndarray:
    """Pack (quality, base) pairs as quality*4 + base.

    Raises:
        AlphabetError: If the read has no qualities or a quality exceeds max_score
    """
    if read.qualities is None:
        raise AlphabetError("packing requires qualities")
    qualities = read.qualities.astype(np.uint16)
    if len(qualities) and int(qualities.max()) > max_score:
        raise AlphabetError(f"quality {int(qualities.max())} exceeds max score {max_score}")
    return (qualities << 2) | read.bases.astype(np.uint16)


def unpack_symbols(packed: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Inverse of pack_symbols: returns (qualities, bases)."""
    packed = np.asarray(packed, dtype=np.uint16)
    return (packed >> 2).astype(np.uint8), (packed & 3).astype(np.uint8)


def field_alphabet(dataset: Dataset, field: Field) -> Alphabet:
    """Alphabet of a field view of the dataset."""
    if field == Field.BASES:
        return dataset.alphabet
    quality = dataset.quality_alphabet or Alphabet.quality()
    if field == Field.QUALITIES:
        return quality
    return Alphabet.packed(quality.size - 1)


def field_symbols(dataset: Dataset, field: Field) -> List[np.ndarray]:
    """Per-read symbol sequences for a field."""
    if field == Field.BASES:
        return [read.bases for read in dataset.reads]
    if not dataset.has_qualities and dataset.reads:
        raise AlphabetError(f"field {field.value} requires qualities")
    if field == Field.QUALITIES:
        return [read.qualities for read in dataset.reads]
    max_score = field_alphabet(dataset, field).max_score
    return [pack_symbols(read, max_score) for read in dataset.reads]


def field_view(dataset: Dataset, field: Field) -> Dataset:
    """Dataset whose reads carry the field's symbols as ``bases``."""
    if field == Field.BASES:
        return dataset
    reads = tuple(Read(np.array(symbols), None, read.id)
                  for symbols, read in zip(field_symbols(dataset, field), dataset.reads))
    return Dataset(reads, field_alphabet(dataset, field), None,
                   dataset.source_path, dataset.source_format)


def dataset_from_sequences(sequences: Sequence[Sequence[int]], alphabet_size: int,
                           qualities: Optional[Sequence[Sequence[int]]] = None) -> Dataset:
    """Build a Dataset directly from integer sequences (synthetic data, decoders)."""
    alphabet = Alphabet.bases() if alphabet_size == 4 else Alphabet.custom(alphabet_size)
    reads = []
    for index, symbols in enumerate(sequences):
        array = np.array(symbols, dtype=np.uint8 if alphabet_size <= 256 else np.uint16)
        alphabet.check(array)
        quality = None if qualities is None else np.array(qualities[index], dtype=np.uint8)
        reads.append(Read(array, quality, f"r{index}"))
    return Dataset(tuple(reads), alphabet)


def to_fastq_bytes(dataset: Dataset, quality_offset: int = 33) -> bytes:
    """Serialize a dataset with qualities back to 4-line FASTQ."""
    out = bytearray()
    for read in dataset.reads:
        out += b"@" + encode_id(read.id) + b"\n"
        out += BASES_ARRAY[read.bases].tobytes() + b"\n+\n"
        out += (read.qualities.astype(np.uint8) + quality_offset).tobytes() + b"\n"
    return bytes(out)


def to_fasta_bytes(dataset: Dataset) -> bytes:
    """Serialize a dataset as FASTA with one sequence line per read."""
    out = bytearray()
    for read in dataset.reads:
        out += b">" + encode_id(read.id) + b"\n"
        out += BASES_ARRAY[read.bases].tobytes() + b"\n"
    return bytes(out)


BASES_ARRAY = np.frombuffer(BASES, dtype=np.uint8)
