"""Range-ANS entropy coder with 32-bit state and byte-wise renormalization.

Profile: state kept in [2^23, 2^31), 8-bit renormalization, frequency
precision 12. Payload layout: 4-byte little-endian final encoder state, then
the renormalization bytes in the order the decoder consumes them.
"""

import bisect
import logging
import struct
from dataclasses import dataclass
from typing import List, Protocol, Sequence, Tuple

import numpy as np

from .errors import CodingError

logger = logging.getLogger(__name__)

RANS_LOWER = 1 << 23
STATE_BYTES = 4
DEFAULT_PRECISION = 12


@dataclass(frozen=True)
class FreqTable:
    """Integer frequencies summing to 2^precision, every symbol at least 1."""
    freqs: Tuple[int, ...]
    cumulative: Tuple[int, ...]
    precision: int = DEFAULT_PRECISION

    @classmethod
    def from_freqs(cls, freqs: Sequence[int], precision: int = DEFAULT_PRECISION) -> "FreqTable":
        freqs = tuple(int(f) for f in freqs)
        if sum(freqs) != 1 << precision or min(freqs) < 1:
            raise ValueError(f"frequencies must be >= 1 and sum to 2^{precision}")
        cumulative = [0]
        for freq in freqs:
            cumulative.append(cumulative[-1] + freq)
        return cls(freqs, tuple(cumulative), precision)

    @classmethod
    def uniform(cls, alphabet_size: int, precision: int = DEFAULT_PRECISION) -> "FreqTable":
        return normalize_freqs(np.ones(alphabet_size), precision)

    def __len__(self) -> int:
        return len(self.freqs)

    def symbol_at(self, slot: int) -> int:
        """Symbol whose cumulative interval contains ``slot``."""
        return bisect.bisect_right(self.cumulative, slot) - 1

    def bits(self, symbol: int) -> float:
        """Ideal code length lg(2^precision / freq) of a symbol."""
        return self.precision - float(np.log2(self.freqs[symbol]))


def normalize_freqs(counts: Sequence[float], precision: int = DEFAULT_PRECISION) -> FreqTable:
    """Scale counts to integer frequencies summing exactly to 2^precision.

    Every symbol keeps frequency >= 1; the rounding residue is settled by
    largest remainder (or taken from the largest frequencies when the floor
    pushed the sum over the total).

    Raises:
        ValueError: If m > 2^precision or no count is positive
    """
    counts = np.asarray(counts, dtype=np.float64)
    total_freq = 1 << precision
    m = len(counts)
    if m > total_freq:
        raise ValueError(f"alphabet of {m} symbols does not fit precision {precision}")
    total = counts.sum()
    if not total > 0 or (counts < 0).any():
        raise ValueError("normalize_freqs needs non-negative counts with a positive sum")

    scaled = counts * (total_freq / total)
    freqs = np.maximum(np.floor(scaled).astype(np.int64), 1)
    remainder = scaled - np.floor(scaled)
    remainder[np.floor(scaled) < 1] = -1.0
    diff = total_freq - int(freqs.sum())
    if diff > 0:
        order = np.argsort(-remainder, kind="stable")
        index = 0
        while diff > 0:
            freqs[order[index % m]] += 1
            diff -= 1
            index += 1
    while diff < 0:
        for symbol in np.argsort(-freqs, kind="stable"):
            if diff == 0:
                break
            if freqs[symbol] > 1:
                freqs[symbol] -= 1
                diff += 1
    return FreqTable.from_freqs(freqs.tolist(), precision)


class FreqProvider(Protocol):
    """Per-position table source shared by encoder and decoder.

    ``freq_table`` returns the table for the next symbol; ``update`` is called
    with that symbol once it is coded. Decoder and encoder must see the same
    sequence of tables for the same symbols.
    """

    def freq_table(self) -> FreqTable: ...

    def update(self, symbol: int) -> None: ...


class StaticProvider:
    """Same table at every position."""

    def __init__(self, table: FreqTable):
        self.table = table

    def freq_table(self) -> FreqTable:
        return self.table

    def update(self, symbol: int) -> None:
        pass


def encode(symbols: Sequence[int], provider: FreqProvider) -> bytes:
    """Encode symbols; tables are taken from a forward pass over the provider.

    Returns:
        Payload: 4-byte final state (little-endian) followed by renormalization
        bytes in decode order
    """
    schedule: List[Tuple[int, int, int]] = []
    for symbol in symbols:
        table = provider.freq_table()
        symbol = int(symbol)
        schedule.append((table.cumulative[symbol], table.freqs[symbol], table.precision))
        provider.update(symbol)

    state = RANS_LOWER
    emitted = bytearray()
    for start, freq, precision in reversed(schedule):
        limit = ((RANS_LOWER >> precision) << 8) * freq
        while state >= limit:
            emitted.append(state & 0xFF)
            state >>= 8
        state = ((state // freq) << precision) + (state % freq) + start
    emitted.reverse()
    return struct.pack("<I", state) + bytes(emitted)


def decode(payload: bytes, count: int, provider: FreqProvider) -> List[int]:
    """Decode ``count`` symbols from a payload produced by encode.

    Raises:
        CodingError: On a truncated payload or an out-of-range state
    """
    if len(payload) < STATE_BYTES:
        raise CodingError("payload shorter than the rANS state header")
    state = struct.unpack_from("<I", payload, 0)[0]
    if not RANS_LOWER <= state < (1 << 31):
        raise CodingError(f"initial rANS state {state:#x} out of range")
    position = STATE_BYTES
    end = len(payload)
    out: List[int] = []
    for _ in range(count):
        table = provider.freq_table()
        mask = (1 << table.precision) - 1
        slot = state & mask
        symbol = table.symbol_at(slot)
        state = table.freqs[symbol] * (state >> table.precision) + slot - table.cumulative[symbol]
        while state < RANS_LOWER:
            if position >= end:
                raise CodingError("truncated rANS payload")
            state = (state << 8) | payload[position]
            position += 1
        out.append(symbol)
        provider.update(symbol)
    if state != RANS_LOWER or position != end:
        raise CodingError("rANS stream corrupted (final state check failed)")
    return out


def ideal_bits(symbols: Sequence[int], provider: FreqProvider) -> float:
    """Sum of lg(2^precision/freq) under the provider's quantized tables."""
    total = 0.0
    for symbol in symbols:
        table = provider.freq_table()
        total += table.bits(int(symbol))
        provider.update(int(symbol))
    return total
