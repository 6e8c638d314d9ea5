"""Context window statistics: p_c, P_c, entropy and rate in bits/value."""

import csv
import io
import logging
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import entr

from .context_model import (
    BinnedMapper,
    ConditionalModel,
    ContextMapper,
    OrderMapper,
    PositionMapper,
    PositionPrevMapper,
)
from .errors import FormatError, ModelError, StatsError
from .seqio import Dataset

if TYPE_CHECKING:
    from .binner import BinningTable

logger = logging.getLogger(__name__)

LN2 = float(np.log(2.0))
STATS_MAGIC = b"CST1"


class ContextKind(Enum):
    """Kinds of context specifications."""
    ORDER = "order"
    POSITION = "position"
    POSITION_AND_PREV = "position_prev"
    BINNED = "binned"


@dataclass(frozen=True)
class ContextSpec:
    """Which context each window is conditioned on."""
    kind: ContextKind
    alphabet_size: int
    order: int = 0
    max_pos: int = 0
    tables: Tuple["BinningTable", ...] = ()

    @classmethod
    def order_l(cls, order: int, alphabet_size: int) -> "ContextSpec":
        return cls(ContextKind.ORDER, alphabet_size, order=order)

    @classmethod
    def position(cls, max_pos: int, alphabet_size: int) -> "ContextSpec":
        return cls(ContextKind.POSITION, alphabet_size, max_pos=max_pos)

    @classmethod
    def position_and_prev(cls, max_pos: int, alphabet_size: int) -> "ContextSpec":
        return cls(ContextKind.POSITION_AND_PREV, alphabet_size, order=1, max_pos=max_pos)

    @classmethod
    def binned(cls, order: int, alphabet_size: int, tables: Sequence["BinningTable"]) -> "ContextSpec":
        return cls(ContextKind.BINNED, alphabet_size, order=order, tables=tuple(tables))

    def mapper(self) -> ContextMapper:
        if self.kind == ContextKind.ORDER:
            return OrderMapper(self.alphabet_size, self.order)
        if self.kind == ContextKind.POSITION:
            return PositionMapper(self.alphabet_size, self.max_pos)
        if self.kind == ContextKind.POSITION_AND_PREV:
            return PositionPrevMapper(self.alphabet_size, self.max_pos)
        return BinnedMapper(self.alphabet_size, self.order, self.tables)

    @property
    def context_count(self) -> int:
        return self.mapper().n_main


@dataclass(frozen=True)
class ContextStats:
    """Counts over (context, next symbol) windows."""
    counts: np.ndarray

    def __post_init__(self):
        self.counts.setflags(write=False)

    @property
    def alphabet_size(self) -> int:
        return self.counts.shape[1]

    @property
    def context_count(self) -> int:
        return self.counts.shape[0]

    @property
    def window_total(self) -> int:
        return int(self.counts.sum())

    @property
    def empty(self) -> bool:
        return self.window_total == 0

    @property
    def epsilon(self) -> float:
        """Smoothing mass added to every joint count cell."""
        return 1.0 / (max(self.window_total, 1) * self.alphabet_size)

    @property
    def row_sums(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def context_probabilities(self) -> np.ndarray:
        """p_c = rowSum(c) / |W|."""
        if self.empty:
            raise StatsError("no windows collected")
        return self.row_sums / self.window_total

    @property
    def conditionals(self) -> np.ndarray:
        """Empirical P_c rows; empty contexts read as uniform."""
        sums = self.row_sums[:, None]
        uniform = np.full_like(self.counts, 1.0 / self.alphabet_size, dtype=np.float64)
        with np.errstate(invalid="ignore", divide="ignore"):
            rows = np.where(sums > 0, self.counts / np.where(sums > 0, sums, 1), uniform)
        return rows

    @property
    def smoothed_conditionals(self) -> np.ndarray:
        """P_c rows after adding epsilon to every joint cell."""
        smoothed = self.counts + self.epsilon
        return smoothed / smoothed.sum(axis=1, keepdims=True)

    def merge(self, other: "ContextStats") -> "ContextStats":
        """Sum of two tables over the same contexts."""
        if self.counts.shape != other.counts.shape:
            raise StatsError("cannot merge stats of different shapes")
        return ContextStats(self.counts + other.counts)

    def to_bytes(self) -> bytes:
        """Versioned blob: magic, alphabet size, |C|, row-major 64-bit counts."""
        header = STATS_MAGIC + struct.pack("<II", self.alphabet_size, self.context_count)
        return header + np.ascontiguousarray(self.counts, dtype="<u8").tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "ContextStats":
        if blob[:4] != STATS_MAGIC:
            raise FormatError("not a context stats blob")
        m, contexts = struct.unpack_from("<II", blob, 4)
        body = np.frombuffer(blob, dtype="<u8", offset=12)
        if body.size != m * contexts:
            raise FormatError("context stats blob has the wrong length")
        return cls(body.reshape(contexts, m).astype(np.int64))

    def to_csv(self) -> str:
        """One row per non-empty context: id, p_c, H(P_c), P_c(x) columns."""
        out = io.StringIO()
        writer = csv.writer(out)
        writer.writerow(["context", "p", "entropy"] + [f"P{x}" for x in range(self.alphabet_size)])
        p = self.context_probabilities
        rows = self.conditionals
        for context in np.flatnonzero(self.row_sums):
            writer.writerow([int(context), f"{p[context]:.9g}", f"{entropy(rows[context]):.9g}"]
                            + [f"{v:.9g}" for v in rows[context]])
        return out.getvalue()


@dataclass(frozen=True)
class RateReport:
    """bpv = sum_c p_c H(P_c) plus its per-context terms."""
    bpv: float
    per_context: Tuple[Tuple[int, float, float], ...]


def _count_reads(mapper: ContextMapper, reads: Iterable[np.ndarray], first: Optional[int]) -> np.ndarray:
    m = mapper.alphabet_size
    flat = np.zeros(mapper.n_main * m, dtype=np.int64)
    start = mapper.order if first is None else max(first, mapper.order)
    for symbols in reads:
        if len(symbols) <= start:
            continue
        symbols = np.asarray(symbols, dtype=np.int64)
        cells = mapper.main_ids(symbols, start) * m + symbols[start:]
        flat += np.bincount(cells, minlength=flat.size)
    return flat.reshape(mapper.n_main, m)


def collect_stats(data: Dataset, spec: Union[ContextSpec, ContextMapper], first: Optional[int] = None,
                  threads: int = 1) -> ContextStats:
    """Count windows per read; no window spans a read boundary.

    Args:
        data: Reads whose ``bases`` hold the symbols of the field being modelled
        spec: Context specification, or a mapper used as is
        first: First position taking a window (default: the mapper's order). Passing
            a larger value builds lower-order tables on the windows of a longer order.
        threads: Reads are sharded across this many workers, shard tables summed

    Returns:
        ContextStats over the mapper's main contexts
    """
    mapper = spec if isinstance(spec, ContextMapper) else spec.mapper()
    reads = [read.bases for read in data.reads]
    for symbols in reads:
        if len(symbols) and int(np.max(symbols)) >= mapper.alphabet_size:
            raise StatsError(f"symbol outside alphabet of size {mapper.alphabet_size}")
    if threads > 1 and len(reads) > threads:
        shards = [reads[i::threads] for i in range(threads)]
        with ThreadPoolExecutor(max_workers=threads) as executor:
            tables = list(executor.map(lambda shard: _count_reads(mapper, shard, first), shards))
        counts = np.sum(tables, axis=0)
    else:
        counts = _count_reads(mapper, reads, first)
    stats = ContextStats(counts)
    if stats.empty:
        logger.warning(f"No windows for {mapper.kind} context (order {mapper.order}); stats are empty")
    else:
        logger.info(f"Collected {stats.window_total} windows over {stats.context_count} contexts")
    return stats


def entropy(dist: Sequence[float]) -> float:
    """Shannon entropy in bits; 0 lg 0 = 0.

    Raises:
        StatsError: On negative entries or a sum away from 1
    """
    dist = np.asarray(dist, dtype=np.float64)
    if (dist < 0).any() or abs(dist.sum() - 1.0) > 1e-9:
        raise StatsError("entropy needs a probability row (non-negative, summing to 1)")
    return float(entr(dist).sum() / LN2)


def row_entropies(rows: np.ndarray) -> np.ndarray:
    """Entropy in bits of every row of a probability table."""
    return entr(rows).sum(axis=1) / LN2


def rate(stats: ContextStats) -> RateReport:
    """R = sum_c p_c H(P_c) over contexts with p_c > 0.

    Raises:
        StatsError: If no windows were collected
    """
    if stats.empty:
        raise StatsError("rate of empty stats")
    p = stats.context_probabilities
    entropies = row_entropies(stats.conditionals)
    seen = np.flatnonzero(stats.row_sums)
    per_context = tuple((int(c), float(p[c]), float(entropies[c])) for c in seen)
    bpv = float(np.dot(p[seen], entropies[seen]))
    return RateReport(max(bpv, 0.0), per_context)


def empirical_bpv(data: Dataset, model: ConditionalModel) -> float:
    """(1/N) sum_i lg(1/Pr(x_i | context_i)) over every symbol of every read.

    Raises:
        ModelError: If a symbol has zero probability (position is the global index)
    """
    total = 0.0
    offset = 0
    for read in data.reads:
        if len(read) == 0:
            continue
        bits = model.symbol_bits(read.bases)
        if not np.isfinite(bits).all():
            raise ModelError("zero-probability symbol", offset + int(np.argmin(np.isfinite(bits))))
        total += float(bits.sum())
        offset += len(read)
    if offset == 0:
        raise StatsError("empirical bpv of an empty dataset")
    return total / offset


def fit_model(data: Dataset, spec: ContextSpec) -> ConditionalModel:
    """Smoothed conditional model of the ContextSpec's contexts, start contexts included."""
    return ConditionalModel.fit(spec.mapper(), [read.bases for read in data.reads])


def model_rate_table(stats: ContextStats) -> List[Tuple[int, float, float]]:
    """(context, p_c, H(P_c)) rows, for reports."""
    return list(rate(stats).per_context)
