"""Nested context binning: long contexts approximated with a few table lookups.

Three schemes share the greedy binner:

  * symmetric: one table per level, each binning a pair of lower-level values
    (bin12 on pairs of symbols, bin24 on pairs of bin12 values, ...);
  * asymmetric: a near window binned finely and a far window binned coarsely
    by shifting the same table's ids;
  * hierarchical: a near tree, then a separate far tree per near bin.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .binner import (
    BinningTable,
    CutCriterion,
    build_merge_tree,
    compose,
    cut_tree,
    enumerate_for_shift,
)
from .context_model import ConditionalModel, ContextMapper, order_ids, register_mapper
from .ctxstats import ContextStats
from .errors import ModelError
from .seqio import Dataset

logger = logging.getLogger(__name__)

MIN_WINDOWS_PER_SYMBOL = 16
DEFAULT_MIN_GAIN = 1e-3


class NestingScheme(Enum):
    SYMMETRIC = "symmetric"
    ASYMMETRIC = "asymmetric"
    HIERARCHICAL = "hierarchical"


def _window_stats(contexts: Sequence[np.ndarray], symbols: Sequence[np.ndarray],
                  n_contexts: int, alphabet_size: int) -> ContextStats:
    flat = np.zeros(n_contexts * alphabet_size, dtype=np.int64)
    for ctx, sym in zip(contexts, symbols):
        if len(ctx):
            flat += np.bincount(ctx * alphabet_size + sym, minlength=flat.size)
    return ContextStats(flat.reshape(n_contexts, alphabet_size))


def _cut_to_budget(stats: ContextStats, budget: int, level: str) -> BinningTable:
    tree = build_merge_tree(stats)
    if budget > tree.leaf_count:
        logger.warning(f"Budget of {budget} bins for {level} exceeds {tree.leaf_count} "
                       f"distinct contexts; clamped")
        budget = tree.leaf_count
    return cut_tree(tree, CutCriterion.max_bins(budget))


def _power_of_two_at_least(value: int) -> int:
    size = 1
    while size < value:
        size <<= 1
    return size


class SymmetricMapper(ContextMapper):
    """Level j bins the pair (value j-1 positions 2^(j-1) back, value j-1 now).

    Level 0 is the previous symbol, so the final level summarises the last
    2^levels symbols with one lookup per level per position.
    """

    kind = "nested_symmetric"

    def __init__(self, alphabet_size: int, tables: Sequence[BinningTable]):
        self.tables = list(tables)
        sizes = [alphabet_size] + [table.n_bins for table in self.tables]
        for level, table in enumerate(self.tables):
            if table.context_count != sizes[level] ** 2:
                raise ModelError(f"level {level + 1} table covers {table.context_count} pairs, "
                                 f"expected {sizes[level] ** 2}")
        self.sizes = sizes
        super().__init__(alphabet_size, 1 << len(self.tables), sizes[-1])

    def level_values(self, symbols: np.ndarray, levels: Optional[int] = None) -> np.ndarray:
        """Value of the given level at every position (0 where undefined)."""
        symbols = np.asarray(symbols, dtype=np.int64)
        levels = len(self.tables) if levels is None else levels
        values = np.zeros(len(symbols), dtype=np.int64)
        values[1:] = symbols[:-1]
        for level in range(levels):
            span = 1 << level
            pair = values.copy()
            pair[span:] = values[span:] + self.sizes[level] * values[:-span]
            values = self.tables[level].bins[pair]
        return values

    def main_ids(self, symbols: np.ndarray, first: Optional[int] = None) -> np.ndarray:
        first = self.order if first is None else max(first, self.order)
        return self.level_values(symbols)[first:]

    def descriptor(self) -> Dict[str, Any]:
        return {"kind": self.kind, "alphabet_size": self.alphabet_size,
                "tables": [table.to_bytes().hex() for table in self.tables]}


class AsymmetricMapper(ContextMapper):
    """State = near bin + nNear * (far bin >> shift) over two adjacent windows."""

    kind = "nested_asymmetric"

    def __init__(self, alphabet_size: int, window: int, table: BinningTable, shift: int):
        if table.context_count != alphabet_size ** window:
            raise ModelError(f"table covers {table.context_count} contexts, expected {alphabet_size ** window}")
        if table.n_bins % (1 << shift):
            raise ModelError(f"{table.n_bins} bins are not a multiple of 2^{shift}")
        self.window = window
        self.table = table
        self.shift = shift
        self.far_bins = table.n_bins >> shift
        super().__init__(alphabet_size, 2 * window, table.n_bins * self.far_bins)

    def main_ids(self, symbols: np.ndarray, first: Optional[int] = None) -> np.ndarray:
        first = self.order if first is None else max(first, self.order)
        symbols = np.asarray(symbols, dtype=np.int64)
        near = self.table.bins[order_ids(symbols, self.window, self.alphabet_size, first)]
        far_ids = order_ids(symbols[: len(symbols) - self.window], self.window, self.alphabet_size,
                            first - self.window)
        far = self.table.bins[far_ids] >> self.shift
        return near + self.table.n_bins * far

    def descriptor(self) -> Dict[str, Any]:
        return {"kind": self.kind, "alphabet_size": self.alphabet_size, "window": self.window,
                "shift": self.shift, "table": self.table.to_bytes().hex()}


class HierarchicalMapper(ContextMapper):
    """Tree of per-segment tables; segment k covers symbols k*window+1 .. (k+1)*window back.

    ``links[node, segment id]`` is a child node (>= 0) or a final state encoded as
    -(state + 1).
    """

    kind = "nested_hierarchical"

    def __init__(self, alphabet_size: int, window: int, depth: int, links: np.ndarray, n_states: int):
        links = np.asarray(links, dtype=np.int64)
        if links.shape[1] != alphabet_size ** window:
            raise ModelError(f"link rows cover {links.shape[1]} ids, expected {alphabet_size ** window}")
        self.window = window
        self.depth = depth
        self.links = links
        super().__init__(alphabet_size, window * depth, n_states)

    def main_ids(self, symbols: np.ndarray, first: Optional[int] = None) -> np.ndarray:
        first = self.order if first is None else max(first, self.order)
        symbols = np.asarray(symbols, dtype=np.int64)
        n = len(symbols)
        if n <= first:
            return np.zeros(0, dtype=np.int64)
        node = np.zeros(n - first, dtype=np.int64)
        state = np.full(n - first, -1, dtype=np.int64)
        for segment in range(self.depth):
            shift = segment * self.window
            seg_ids = order_ids(symbols[: n - shift], self.window, self.alphabet_size, first - shift)
            active = state < 0
            link = self.links[node[active], seg_ids[active]]
            finished = link < 0
            active_idx = np.flatnonzero(active)
            state[active_idx[finished]] = -link[finished] - 1
            node[active_idx[~finished]] = link[~finished]
        if (state < 0).any():
            raise ModelError("hierarchical tree deeper than its declared depth")
        return state

    def descriptor(self) -> Dict[str, Any]:
        return {"kind": self.kind, "alphabet_size": self.alphabet_size, "window": self.window,
                "depth": self.depth, "n_states": self.n_main, "rows": self.links.shape[0],
                "links": self.links.astype("<i4").tobytes().hex()}


def _train_symmetric(data: Dataset, alphabet_size: int, target_order: int,
                     budgets: Sequence[int]) -> SymmetricMapper:
    levels = target_order.bit_length() - 1
    if target_order < 2 or 1 << levels != target_order:
        raise ValueError(f"symmetric nesting needs a power-of-two order >= 2, got {target_order}")
    if len(budgets) != levels:
        raise ValueError(f"expected {levels} budgets for order {target_order}, got {len(budgets)}")
    tables: List[BinningTable] = []
    reads = [np.asarray(read.bases, dtype=np.int64) for read in data.reads]
    for level in range(levels):
        partial = SymmetricMapper(alphabet_size, tables)
        size = partial.sizes[-1]
        span = 1 << level
        start = 2 * span
        contexts, symbols = [], []
        for read in reads:
            if len(read) <= start:
                continue
            values = partial.level_values(read)
            contexts.append(values[start:] + size * values[start - span: len(read) - span])
            symbols.append(read[start:])
        stats = _window_stats(contexts, symbols, size * size, alphabet_size)
        table = _cut_to_budget(stats, budgets[level], f"level {level + 1}")
        tables.append(table)
        logger.info(f"Symmetric level {level + 1}: {size * size} pairs -> {table.n_bins} bins")
    return SymmetricMapper(alphabet_size, tables)


def _near_far_stats(reads: List[np.ndarray], alphabet_size: int,
                    window: int) -> Tuple[ContextStats, List[np.ndarray], List[np.ndarray]]:
    """Near-window stats plus far-window ids and next symbols per read."""
    contexts, far, symbols = [], [], []
    first = 2 * window
    for read in reads:
        if len(read) <= first:
            continue
        contexts.append(order_ids(read, window, alphabet_size, first))
        far.append(order_ids(read[: len(read) - window], window, alphabet_size, first - window))
        symbols.append(read[first:])
    near = _window_stats(contexts, symbols, alphabet_size ** window, alphabet_size)
    return near, far, symbols


def _train_asymmetric(data: Dataset, alphabet_size: int, target_order: int,
                      budgets: Sequence[int]) -> AsymmetricMapper:
    if target_order < 2 or target_order % 2:
        raise ValueError(f"asymmetric nesting needs an even order, got {target_order}")
    if len(budgets) != 2:
        raise ValueError("asymmetric nesting takes a near and a far budget")
    window = target_order // 2
    reads = [np.asarray(read.bases, dtype=np.int64) for read in data.reads]
    near_stats, far, symbols = _near_far_stats(reads, alphabet_size, window)
    fine = _cut_to_budget(near_stats, budgets[0], "near window")

    far_bins = [fine.bins[ids] for ids in far]
    far_stats = _window_stats(far_bins, symbols, fine.n_bins, alphabet_size)
    if far_stats.empty:
        raise ModelError("no windows long enough for the far context")
    coarse_over_bins = _cut_to_budget(far_stats, budgets[1], "far window")
    coarse = compose(fine, coarse_over_bins)
    group = int(np.bincount(coarse_over_bins.bins, minlength=coarse_over_bins.n_bins).max())
    shift = _power_of_two_at_least(group).bit_length() - 1
    table = enumerate_for_shift(fine, coarse, 1 << shift)
    logger.info(f"Asymmetric: near {table.n_bins} ids, far {coarse.n_bins} bins (shift {shift})")
    return AsymmetricMapper(alphabet_size, window, table, shift)


def _train_hierarchical(data: Dataset, alphabet_size: int, target_order: int, budgets: Sequence[int],
                        min_gain: float, threads: int) -> HierarchicalMapper:
    depth = len(budgets)
    if depth < 1 or target_order % depth:
        raise ValueError(f"order {target_order} does not split into {depth} equal segments")
    window = target_order // depth
    width = alphabet_size ** window
    reads = [np.asarray(read.bases, dtype=np.int64) for read in data.reads]
    first = target_order
    segments, symbols = [], []
    for read in reads:
        if len(read) <= first:
            continue
        segments.append(np.stack([
            order_ids(read[: len(read) - k * window], window, alphabet_size, first - k * window)
            for k in range(depth)
        ]))
        symbols.append(read[first:])
    if not segments:
        raise ModelError(f"no read is longer than the target order {target_order}")
    seg = np.concatenate(segments, axis=1)
    sym = np.concatenate(symbols)

    def build(level: int, rows: np.ndarray) -> Tuple[BinningTable, bool]:
        stats = _window_stats([seg[level, rows]], [sym[rows]], width, alphabet_size)
        if len(rows) < MIN_WINDOWS_PER_SYMBOL * alphabet_size:
            return BinningTable(np.zeros(width, dtype=np.int64), 1), False
        tree = build_merge_tree(stats)
        if tree.total_cost < min_gain:
            return BinningTable(np.zeros(width, dtype=np.int64), 1), False
        budget = min(budgets[level], tree.leaf_count)
        return cut_tree(tree, CutCriterion.max_bins(budget)), True

    links: List[np.ndarray] = []
    n_states = 0
    links.append(np.zeros(width, dtype=np.int64))
    pending = [(0, 0, np.arange(len(sym)))]
    while pending:
        with ThreadPoolExecutor(max_workers=max(threads, 1)) as executor:
            built = list(executor.map(lambda item: build(item[1], item[2]), pending))
        next_pending = []
        for (node, level, rows), (table, split) in zip(pending, built):
            row_bins = table.bins[seg[level, rows]]
            for bin_id in range(table.n_bins):
                members = table.bins == bin_id
                bin_rows = rows[row_bins == bin_id]
                if split and level + 1 < depth and len(bin_rows) >= MIN_WINDOWS_PER_SYMBOL * alphabet_size:
                    child = len(links)
                    links.append(np.zeros(width, dtype=np.int64))
                    links[node][members] = child
                    next_pending.append((child, level + 1, bin_rows))
                else:
                    links[node][members] = -(n_states + 1)
                    n_states += 1
        pending = next_pending
    logger.info(f"Hierarchical: {len(links)} tables, {n_states} states")
    return HierarchicalMapper(alphabet_size, window, depth, np.stack(links), n_states)


def nested_binning(data: Dataset, scheme: NestingScheme, target_order: int, budgets: Sequence[int],
                   alphabet_size: Optional[int] = None, min_gain: float = DEFAULT_MIN_GAIN,
                   threads: int = 1) -> ConditionalModel:
    """Train a nested binning and fit its per-state symbol distributions.

    Args:
        data: Training reads (symbols in ``bases``)
        scheme: Symmetric, asymmetric or hierarchical
        target_order: Length of the context window approximated
        budgets: Bin count per level (symmetric: log2(order) levels; asymmetric:
            near and far; hierarchical: one per segment)
        alphabet_size: Defaults to the dataset alphabet size
        min_gain: Hierarchical sub-trees gaining less than this (bpv within
            their windows) collapse to a single bin
        threads: Workers for independent hierarchical sub-trees

    Returns:
        ConditionalModel whose mapper performs the declared table lookups
    """
    m = alphabet_size or data.alphabet.size
    if scheme == NestingScheme.SYMMETRIC:
        mapper = _train_symmetric(data, m, target_order, budgets)
    elif scheme == NestingScheme.ASYMMETRIC:
        mapper = _train_asymmetric(data, m, target_order, budgets)
    else:
        mapper = _train_hierarchical(data, m, target_order, budgets, min_gain, threads)
    return ConditionalModel.fit(mapper, [read.bases for read in data.reads])


def _tables(descriptor: Dict[str, Any]) -> List[BinningTable]:
    return [BinningTable.from_bytes(bytes.fromhex(blob)) for blob in descriptor["tables"]]


register_mapper(SymmetricMapper.kind, lambda d: SymmetricMapper(d["alphabet_size"], _tables(d)))
register_mapper(AsymmetricMapper.kind, lambda d: AsymmetricMapper(
    d["alphabet_size"], d["window"], BinningTable.from_bytes(bytes.fromhex(d["table"])), d["shift"]))
register_mapper(HierarchicalMapper.kind, lambda d: HierarchicalMapper(
    d["alphabet_size"], d["window"], d["depth"],
    np.frombuffer(bytes.fromhex(d["links"]), dtype="<i4").astype(np.int64).reshape(d["rows"], -1),
    d["n_states"]))
