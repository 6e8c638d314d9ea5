"""Context mappers and smoothed conditional models.

A mapper turns the symbols of one read into a causal context id per position.
Positions before the mapper's order use dedicated start contexts, so every
position of every read has a defined, decodable context. A ConditionalModel
pairs a mapper with a contexts x m count table and reads it through additive
smoothing.
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from .errors import ModelError
from .rans import FreqTable, normalize_freqs

logger = logging.getLogger(__name__)

MAX_START_CONTEXTS = 4096
MAX_CONTEXTS = 1 << 24


class StartContexts:
    """Dedicated contexts for the first ``order`` positions of a read.

    Position j < order is conditioned on its last min(j, h) symbols, h being the
    longest history whose m^h contexts fit in MAX_START_CONTEXTS.
    """

    def __init__(self, alphabet_size: int, order: int):
        self.alphabet_size = alphabet_size
        self.order = order
        longest = 0
        while longest + 1 < max(order, 1) and alphabet_size ** (longest + 1) <= MAX_START_CONTEXTS:
            longest += 1
        self.histories = [min(j, longest) for j in range(order)]
        self.offsets = []
        total = 0
        for history in self.histories:
            self.offsets.append(total)
            total += alphabet_size ** history
        self.count = total

    def context_id(self, symbols: Sequence[int], position: int) -> int:
        """Start context of ``position`` given the symbols before it."""
        history = self.histories[position]
        value = 0
        for back in range(history, 0, -1):
            value = value * self.alphabet_size + int(symbols[position - back])
        return self.offsets[position] + value


class ContextCursor:
    """Incremental context tracker used while decoding."""

    def __init__(self, mapper: "ContextMapper"):
        self.mapper = mapper
        self.history: List[int] = []

    @property
    def context(self) -> int:
        return self.mapper.context_at(self.history, len(self.history))

    def push(self, symbol: int) -> None:
        self.history.append(int(symbol))


class ContextMapper(ABC):
    """Maps a read's symbols to causal context ids."""

    kind = "abstract"

    def __init__(self, alphabet_size: int, order: int, n_main: int):
        if n_main > MAX_CONTEXTS:
            raise ModelError(f"{n_main} contexts exceeds the {MAX_CONTEXTS} context guard")
        self.alphabet_size = alphabet_size
        self.order = order
        self.n_main = n_main
        self.start = StartContexts(alphabet_size, order)

    @property
    def n_contexts(self) -> int:
        """Main contexts followed by start contexts."""
        return self.n_main + self.start.count

    @abstractmethod
    def main_ids(self, symbols: np.ndarray, first: Optional[int] = None) -> np.ndarray:
        """Main context ids for positions ``first`` (default: order) .. len-1."""

    def main_id_at(self, symbols: Sequence[int], position: int) -> int:
        """Main context id of a single position (position >= order)."""
        window = np.zeros(self.order + 1, dtype=np.int64)
        window[: self.order] = symbols[position - self.order: position]
        return int(self.main_ids(window)[0])

    def context_at(self, symbols: Sequence[int], position: int) -> int:
        """Context id of ``position`` given the symbols before it."""
        if position < self.order:
            return self.n_main + self.start.context_id(symbols, position)
        return self.main_id_at(symbols, position)

    def context_ids(self, symbols: np.ndarray) -> np.ndarray:
        """Context id of every position of a read."""
        symbols = np.asarray(symbols, dtype=np.int64)
        n = len(symbols)
        ids = np.empty(n, dtype=np.int64)
        head = min(self.order, n)
        for position in range(head):
            ids[position] = self.n_main + self.start.context_id(symbols, position)
        if n > self.order:
            ids[self.order:] = self.main_ids(symbols)
        return ids

    def cursor(self) -> ContextCursor:
        return ContextCursor(self)

    def descriptor(self) -> Dict[str, Any]:
        """JSON-serializable description sufficient to rebuild the mapper."""
        return {"kind": self.kind, "alphabet_size": self.alphabet_size, "order": self.order}


def order_ids(symbols: np.ndarray, order: int, alphabet_size: int, first: Optional[int] = None) -> np.ndarray:
    """Order-l context ids, most recent symbol in the lowest digit."""
    symbols = np.asarray(symbols, dtype=np.int64)
    first = order if first is None else max(first, order)
    n = len(symbols)
    if n <= first:
        return np.zeros(0, dtype=np.int64)
    ids = np.zeros(n - first, dtype=np.int64)
    weight = 1
    for back in range(1, order + 1):
        ids += symbols[first - back: n - back] * weight
        weight *= alphabet_size
    return ids


class OrderMapper(ContextMapper):
    """Order-l Markov contexts: m^l main contexts."""

    kind = "order"

    def __init__(self, alphabet_size: int, order: int):
        super().__init__(alphabet_size, order, alphabet_size ** order)

    def main_ids(self, symbols: np.ndarray, first: Optional[int] = None) -> np.ndarray:
        return order_ids(symbols, self.order, self.alphabet_size, first)

    def main_id_at(self, symbols: Sequence[int], position: int) -> int:
        value = 0
        for back in range(self.order, 0, -1):
            value = value * self.alphabet_size + int(symbols[position - back])
        return value


class PositionMapper(ContextMapper):
    """Position in read as context; positions past max_pos share the last context."""

    kind = "position"

    def __init__(self, alphabet_size: int, max_pos: int):
        super().__init__(alphabet_size, 0, max_pos)
        self.max_pos = max_pos

    def main_ids(self, symbols: np.ndarray, first: Optional[int] = None) -> np.ndarray:
        first = first or 0
        return np.minimum(np.arange(first, len(symbols), dtype=np.int64), self.max_pos - 1)

    def main_id_at(self, symbols: Sequence[int], position: int) -> int:
        return min(position, self.max_pos - 1)

    def descriptor(self) -> Dict[str, Any]:
        return {**super().descriptor(), "max_pos": self.max_pos}


class PositionPrevMapper(ContextMapper):
    """Position combined with the previous symbol: id = prev + m * position."""

    kind = "position_prev"

    def __init__(self, alphabet_size: int, max_pos: int):
        super().__init__(alphabet_size, 1, alphabet_size * max_pos)
        self.max_pos = max_pos

    def main_ids(self, symbols: np.ndarray, first: Optional[int] = None) -> np.ndarray:
        first = max(first or 1, 1)
        symbols = np.asarray(symbols, dtype=np.int64)
        positions = np.minimum(np.arange(first, len(symbols), dtype=np.int64), self.max_pos - 1)
        return symbols[first - 1: len(symbols) - 1] + self.alphabet_size * positions

    def main_id_at(self, symbols: Sequence[int], position: int) -> int:
        return int(symbols[position - 1]) + self.alphabet_size * min(position, self.max_pos - 1)

    def descriptor(self) -> Dict[str, Any]:
        return {**super().descriptor(), "max_pos": self.max_pos}


class BinnedMapper(ContextMapper):
    """Order-l contexts passed through a chain of binning tables."""

    kind = "binned"

    def __init__(self, alphabet_size: int, order: int, tables: Sequence[Any]):
        if not tables:
            raise ModelError("binned mapper needs at least one table")
        if len(tables[0].bins) != alphabet_size ** order:
            raise ModelError(f"first table covers {len(tables[0].bins)} contexts, expected {alphabet_size ** order}")
        super().__init__(alphabet_size, order, tables[-1].n_bins)
        self.tables = list(tables)
        lookup = np.arange(alphabet_size ** order, dtype=np.int64)
        for table in self.tables:
            lookup = np.asarray(table.bins, dtype=np.int64)[lookup]
        self.lookup = lookup

    def main_ids(self, symbols: np.ndarray, first: Optional[int] = None) -> np.ndarray:
        return self.lookup[order_ids(symbols, self.order, self.alphabet_size, first)]

    def main_id_at(self, symbols: Sequence[int], position: int) -> int:
        value = 0
        for back in range(self.order, 0, -1):
            value = value * self.alphabet_size + int(symbols[position - back])
        return int(self.lookup[value])

    def descriptor(self) -> Dict[str, Any]:
        return {**super().descriptor(), "tables": [table.to_bytes().hex() for table in self.tables]}


@dataclass
class ConditionalModel:
    """Mapper plus per-context symbol counts, read through additive smoothing.

    Each joint cell gets epsilon = 1/(W*m) added before normalization, W being the
    total count, so empty contexts read as uniform.
    """
    mapper: ContextMapper
    counts: np.ndarray
    fixed_probabilities: Optional[np.ndarray] = None
    _cache: Dict[str, Any] = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        expected = (self.mapper.n_contexts, self.mapper.alphabet_size)
        if self.counts.shape != expected:
            raise ModelError(f"count table shape {self.counts.shape} != {expected}")

    @classmethod
    def empty(cls, mapper: ContextMapper) -> "ConditionalModel":
        return cls(mapper, np.zeros((mapper.n_contexts, mapper.alphabet_size), dtype=np.float64))

    @classmethod
    def fit(cls, mapper: ContextMapper, reads: Sequence[np.ndarray]) -> "ConditionalModel":
        """Count (context, symbol) pairs over every position of every read."""
        return cls(mapper, count_table(mapper, reads))

    @classmethod
    def from_probabilities(cls, mapper: ContextMapper, table: np.ndarray) -> "ConditionalModel":
        """Model with explicit probability rows (no smoothing applied)."""
        table = np.asarray(table, dtype=np.float64)
        return cls(mapper, np.zeros_like(table), fixed_probabilities=table)

    @property
    def alphabet_size(self) -> int:
        return self.mapper.alphabet_size

    @property
    def epsilon(self) -> float:
        total = float(self.counts.sum())
        return 1.0 / (max(total, 1.0) * self.alphabet_size)

    @property
    def probabilities(self) -> np.ndarray:
        if "probs" not in self._cache:
            if self.fixed_probabilities is not None:
                probs = self.fixed_probabilities
            else:
                smoothed = self.counts + self.epsilon
                probs = smoothed / smoothed.sum(axis=1, keepdims=True)
            self._cache["probs"] = probs
        return self._cache["probs"]

    @property
    def log2_probabilities(self) -> np.ndarray:
        if "log2" not in self._cache:
            with np.errstate(divide="ignore"):
                self._cache["log2"] = np.log2(self.probabilities)
        return self._cache["log2"]

    def symbol_bits(self, symbols: np.ndarray) -> np.ndarray:
        """lg(1/Pr(x_i | context_i)) for every position of one read."""
        symbols = np.asarray(symbols, dtype=np.int64)
        contexts = self.mapper.context_ids(symbols)
        return -self.log2_probabilities[contexts, symbols]

    def bits(self, symbols: np.ndarray) -> float:
        return float(self.symbol_bits(symbols).sum()) if len(symbols) else 0.0

    def freq_tables(self, precision: int = 12) -> List[FreqTable]:
        """Quantized coding table per context."""
        key = f"freq{precision}"
        if key not in self._cache:
            self._cache[key] = [normalize_freqs(row, precision) for row in self.probabilities]
        return self._cache[key]


def count_table(mapper: ContextMapper, reads: Sequence[np.ndarray]) -> np.ndarray:
    """contexts x m table of (context, next symbol) counts over all positions."""
    m = mapper.alphabet_size
    flat = np.zeros(mapper.n_contexts * m, dtype=np.float64)
    for symbols in reads:
        if len(symbols) == 0:
            continue
        symbols = np.asarray(symbols, dtype=np.int64)
        cells = mapper.context_ids(symbols) * m + symbols
        flat += np.bincount(cells, minlength=flat.size)
    return flat.reshape(mapper.n_contexts, m)


_MAPPER_KINDS: Dict[str, Any] = {}


def register_mapper(kind: str, factory) -> None:
    """Register a descriptor -> mapper factory for a mapper kind."""
    _MAPPER_KINDS[kind] = factory


def mapper_from_descriptor(descriptor: Dict[str, Any]) -> ContextMapper:
    """Rebuild a mapper from its descriptor."""
    kind = descriptor["kind"]
    if kind not in _MAPPER_KINDS:
        raise ModelError(f"unknown mapper kind {kind!r}")
    return _MAPPER_KINDS[kind](descriptor)


def _binned_from_descriptor(descriptor: Dict[str, Any]) -> BinnedMapper:
    from .binner import BinningTable
    tables = [BinningTable.from_bytes(bytes.fromhex(blob)) for blob in descriptor["tables"]]
    return BinnedMapper(descriptor["alphabet_size"], descriptor["order"], tables)


register_mapper("order", lambda d: OrderMapper(d["alphabet_size"], d["order"]))
register_mapper("position", lambda d: PositionMapper(d["alphabet_size"], d["max_pos"]))
register_mapper("position_prev", lambda d: PositionPrevMapper(d["alphabet_size"], d["max_pos"]))
register_mapper("binned", _binned_from_descriptor)


class ReadProvider:
    """Frequency provider over the concatenated symbols of several reads.

    A fresh context cursor starts at every read boundary; subclasses choose the
    table for a context and may learn from each coded symbol.
    """

    def __init__(self, mapper: ContextMapper, lengths: Sequence[int]):
        self.mapper = mapper
        self.lengths = [int(n) for n in lengths]
        self.read_index = 0
        self.remaining = 0
        self.cursor = mapper.cursor()
        self._advance()

    def _advance(self) -> None:
        while self.remaining == 0 and self.read_index < len(self.lengths):
            self.remaining = self.lengths[self.read_index]
            self.read_index += 1
            self.cursor = self.mapper.cursor()

    def table_for(self, context: int) -> FreqTable:
        raise NotImplementedError

    def observe(self, context: int, symbol: int) -> None:
        pass

    def freq_table(self) -> FreqTable:
        return self.table_for(self.cursor.context)

    def update(self, symbol: int) -> None:
        self.observe(self.cursor.context, symbol)
        self.cursor.push(symbol)
        self.remaining -= 1
        self._advance()


class StaticReadProvider(ReadProvider):
    """Fixed per-context tables; each read may use a different table set."""

    def __init__(self, mapper: ContextMapper, lengths: Sequence[int],
                 tables: Sequence[Sequence[FreqTable]], selectors: Optional[Sequence[int]] = None):
        self.tables = tables
        self.selectors = list(selectors) if selectors is not None else [0] * len(lengths)
        super().__init__(mapper, lengths)

    def table_for(self, context: int) -> FreqTable:
        return self.tables[self.selectors[self.read_index - 1]][context]
