"""Adaptive estimation: exponential moving averages, half-life search and
the integer CDF-shift model used for adaptive coding."""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.signal import lfilter

from .context_model import ContextMapper, ReadProvider
from .errors import StatsError
from .rans import DEFAULT_PRECISION, FreqTable, normalize_freqs

logger = logging.getLogger(__name__)

MIN_BLOCK_LENGTH = 1000
FLAT_MARGIN_BPV = 0.01
PROBABILITY_FLOOR = 1e-300
DEFAULT_ETA_GRID = tuple(1.0 - 2.0 ** -r for r in range(1, 15))


def half_life(eta: float) -> float:
    """Distance mu at which a contribution weakens twice: eta^mu = 1/2."""
    if not 0.0 < eta < 1.0:
        raise ValueError(f"eta must lie in (0, 1), got {eta}")
    return -1.0 / float(np.log2(eta))


def eta_from_half_life(mu: float) -> float:
    return float(2.0 ** (-1.0 / mu))


def rate_to_eta(rate: int) -> float:
    """Forgetting rate of a ``>> rate`` shift update: eta = 1 - 2^-rate."""
    return 1.0 - 2.0 ** -rate


def eta_to_rate(eta: float) -> float:
    return float(-np.log2(1.0 - eta))


@dataclass(frozen=True)
class EmaEstimator:
    """v_{i+1} = eta v_i + (1 - eta) x_i."""
    eta: float
    value: float = 0.0

    @property
    def half_life(self) -> float:
        return half_life(self.eta)

    def update(self, x: float) -> "EmaEstimator":
        return EmaEstimator(self.eta, self.eta * self.value + (1.0 - self.eta) * x)


def ema_update(est: EmaEstimator, x: float) -> EmaEstimator:
    return est.update(x)


@dataclass(frozen=True)
class HalfLifeResult:
    """Best forgetting rate of one block."""
    eta_best: float
    half_life: float
    bpv_best: float
    bpv_by_eta: Tuple[float, ...]
    eta_grid: Tuple[float, ...]
    flat: bool


@dataclass(frozen=True)
class BlockScan:
    block_index: int
    start: int
    length: int
    result: HalfLifeResult


def _ema_bits(symbols: np.ndarray, alphabet_size: int, eta: float) -> float:
    """Bits of a causal order-0 EMA frequency estimate started uniform."""
    n = len(symbols)
    if n == 0:
        return 0.0
    decay = eta ** np.arange(n) / alphabet_size
    prob = np.empty(n)
    for value in np.unique(symbols):
        hits = (symbols == value).astype(np.float64)
        estimate = lfilter([0.0, 1.0 - eta], [1.0, -eta], hits) + decay
        prob[hits > 0] = estimate[hits > 0]
    return float(-np.log2(np.maximum(prob, PROBABILITY_FLOOR)).sum())


def _adaptive_bits(symbols: np.ndarray, alphabet_size: int, eta: float, order: int) -> float:
    if order == 0:
        return _ema_bits(symbols, alphabet_size, eta)
    total = float(np.log2(alphabet_size))
    previous = symbols[:-1]
    following = symbols[1:]
    for context in np.unique(previous):
        total += _ema_bits(following[previous == context], alphabet_size, eta)
    return total


def search_half_life(block: Sequence[int], eta_grid: Optional[Sequence[float]] = None,
                     alphabet_size: Optional[int] = None, order: int = 0,
                     min_length: int = MIN_BLOCK_LENGTH) -> HalfLifeResult:
    """Grid search for the forgetting rate giving the lowest adaptive bpv.

    Each symbol is coded with the current EMA estimate and only then counted.
    With ``order=1`` every previous-symbol context keeps its own estimate.

    Raises:
        StatsError: If the block is shorter than ``min_length``
    """
    symbols = np.asarray(block, dtype=np.int64)
    if len(symbols) < min_length:
        raise StatsError(f"block of {len(symbols)} symbols is shorter than {min_length}")
    if order not in (0, 1):
        raise ValueError("half-life search supports orders 0 and 1")
    grid = tuple(eta_grid or DEFAULT_ETA_GRID)
    m = alphabet_size or int(symbols.max()) + 1
    bpv = np.array([_adaptive_bits(symbols, m, eta, order) / len(symbols) for eta in grid])
    best = int(np.argmin(bpv))
    longest = int(np.argmax(grid))
    flat = bool(bpv[longest] - bpv[best] < FLAT_MARGIN_BPV)
    return HalfLifeResult(grid[best], half_life(grid[best]), float(bpv[best]),
                          tuple(float(v) for v in bpv), grid, flat)


def scan_blocks(symbols: Sequence[int], block_size: int, eta_grid: Optional[Sequence[float]] = None,
                alphabet_size: Optional[int] = None, order: int = 0) -> List[BlockScan]:
    """Independent half-life searches over consecutive blocks of a stream."""
    symbols = np.asarray(symbols, dtype=np.int64)
    m = alphabet_size or (int(symbols.max()) + 1 if len(symbols) else 1)
    rows = []
    for index, start in enumerate(range(0, len(symbols), block_size)):
        block = symbols[start: start + block_size]
        if len(block) < MIN_BLOCK_LENGTH:
            logger.warning(f"Skipping trailing block {index} of {len(block)} symbols")
            continue
        result = search_half_life(block, eta_grid, m, order)
        logger.info(f"Block {index}: eta={result.eta_best:.6f} (half-life {result.half_life:.1f}), "
                    f"{result.bpv_best:.4f} bpv")
        rows.append(BlockScan(index, start, len(block), result))
    return rows


def _repair(cdf: np.ndarray) -> np.ndarray:
    """Strictly increasing interior, ends untouched."""
    m = len(cdf) - 1
    steps = np.arange(m + 1)
    forward = np.maximum.accumulate(cdf - steps) + steps
    forward[m] = cdf[m]
    return np.minimum.accumulate((forward - steps)[::-1])[::-1] + steps


@dataclass
class AdaptiveCdf:
    """Per-context integer CDFs moved toward recent statistics by CDF += (mix - CDF) >> rate.

    With ``update_period`` 1 the mix is the step CDF of the observed symbol;
    otherwise counts accumulate per context and every ``update_period``
    symbols the mix is the normalised CDF of that block.
    """
    cdf: np.ndarray
    rate: int = 4
    precision: int = DEFAULT_PRECISION
    update_period: int = 1
    pending: np.ndarray = field(default=None, repr=False)
    _tables: Dict[int, FreqTable] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.pending is None:
            contexts, width = self.cdf.shape
            self.pending = np.zeros((contexts, width - 1), dtype=np.int64)

    @classmethod
    def uniform(cls, contexts: int, alphabet_size: int, rate: int = 4,
                precision: int = DEFAULT_PRECISION, update_period: int = 1) -> "AdaptiveCdf":
        table = normalize_freqs(np.ones(alphabet_size), precision)
        cdf = np.tile(np.asarray(table.cumulative, dtype=np.int64), (contexts, 1))
        return cls(cdf, rate, precision, update_period)

    @property
    def alphabet_size(self) -> int:
        return self.cdf.shape[1] - 1

    def freqs(self, context: int) -> np.ndarray:
        return np.diff(self.cdf[context])

    def freq_table(self, context: int) -> FreqTable:
        table = self._tables.get(context)
        if table is None:
            table = FreqTable(tuple(int(f) for f in self.freqs(context)),
                              tuple(int(c) for c in self.cdf[context]), self.precision)
            self._tables[context] = table
        return table

    def shift_toward(self, context: int, mix: np.ndarray) -> None:
        """One shift step toward ``mix`` followed by the monotonicity repair."""
        row = self.cdf[context]
        moved = row + ((np.asarray(mix, dtype=np.int64) - row) >> self.rate)
        self.cdf[context] = _repair(moved)
        self._tables.pop(context, None)

    def update(self, context: int, symbol: int) -> None:
        if self.update_period == 1:
            mix = np.where(np.arange(self.alphabet_size + 1) > symbol, 1 << self.precision, 0)
            self.shift_toward(context, mix)
            return
        self.pending[context, symbol] += 1
        if self.pending[context].sum() >= self.update_period:
            table = normalize_freqs(self.pending[context], self.precision)
            self.shift_toward(context, np.asarray(table.cumulative, dtype=np.int64))
            self.pending[context] = 0


def cdf_update(model: AdaptiveCdf, context: int, observed: int) -> AdaptiveCdf:
    """Apply one observation to a context's CDF; returns the same model."""
    model.update(context, observed)
    return model


class AdaptiveProvider(ReadProvider):
    """Per-context adaptive CDFs driven by a context mapper; learns as it codes."""

    def __init__(self, mapper: ContextMapper, lengths: Sequence[int], rate: int = 4,
                 precision: int = DEFAULT_PRECISION, update_period: int = 16):
        self.model = AdaptiveCdf.uniform(mapper.n_contexts, mapper.alphabet_size, rate,
                                         precision, update_period)
        super().__init__(mapper, lengths)

    def table_for(self, context: int) -> FreqTable:
        return self.model.freq_table(context)

    def observe(self, context: int, symbol: int) -> None:
        self.model.update(context, symbol)
