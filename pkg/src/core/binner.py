"""Greedy context binning.

Contexts are merged pairwise in order of the rate increase each merge costs,

    delta(s, r) = (p_s + p_r) H(P_{s+r}) - p_s H(P_s) - p_r H(P_r),

which builds a binary merge tree. Cuts of the tree are binning tables.
"""

import csv
import heapq
import io
import json
import logging
import struct
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .ctxstats import ContextStats, row_entropies
from .errors import FormatError, ModelError, StatsError

logger = logging.getLogger(__name__)

TABLE_MAGIC = b"CBN1"
DELTA_FLOOR = 1e-15
MAX_TABLE_BINS = 1 << 16


def merge_delta(p_s: float, row_s: Sequence[float], p_r: float, row_r: Sequence[float]) -> float:
    """Rate increase in bits/value from pooling two contexts."""
    row_s = np.asarray(row_s, dtype=np.float64)
    row_r = np.asarray(row_r, dtype=np.float64)
    p_u = p_s + p_r
    if p_u <= 0:
        return 0.0
    pooled = (p_s * row_s + p_r * row_r) / p_u
    rows = np.vstack([pooled, row_s, row_r])
    h_u, h_s, h_r = row_entropies(rows)
    return max(float(p_u * h_u - p_s * h_s - p_r * h_r), 0.0)


@dataclass
class MergeNode:
    """A subset of contexts: a singleton leaf or the union of two children."""
    id: int
    counts: np.ndarray
    p: float
    entropy: float
    merge_cost: float = 0.0
    children: Optional[Tuple[int, int]] = None
    min_member: int = 0
    max_member: int = 0
    size: int = 1

    @property
    def is_leaf(self) -> bool:
        return self.children is None

    @property
    def distribution(self) -> np.ndarray:
        return self.counts / self.counts.sum()


@dataclass
class MergeTree:
    """Merge dendrogram over the non-empty contexts of a stats table.

    Empty contexts are kept aside in ``unseen``; any cut maps them to bin 0.
    """
    nodes: List[MergeNode]
    root: int
    context_count: int
    alphabet_size: int
    unseen: Tuple[int, ...] = ()

    @property
    def leaf_count(self) -> int:
        return sum(1 for node in self.nodes if node.is_leaf)

    @property
    def internal_nodes(self) -> List[MergeNode]:
        return [node for node in self.nodes if not node.is_leaf]

    @property
    def total_cost(self) -> float:
        return float(sum(node.merge_cost for node in self.nodes))

    def members(self, node_id: int) -> List[int]:
        """Context ids covered by a node, ascending."""
        out: List[int] = []
        stack = [node_id]
        while stack:
            node = self.nodes[stack.pop()]
            if node.is_leaf:
                out.append(node.min_member)
            else:
                stack.extend(node.children)
        return sorted(out)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "context_count": self.context_count,
            "alphabet_size": self.alphabet_size,
            "root": self.root,
            "unseen": list(self.unseen),
            "nodes": [
                {
                    "id": node.id,
                    "members": self.members(node.id),
                    "p": node.p,
                    "merge_cost": node.merge_cost,
                    "children": list(node.children) if node.children else None,
                }
                for node in self.nodes
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_csv(self) -> str:
        """One row per node in creation order."""
        out = io.StringIO()
        writer = csv.writer(out)
        writer.writerow(["node", "left", "right", "size", "min_member", "p", "entropy", "merge_cost"])
        for node in self.nodes:
            left, right = node.children if node.children else ("", "")
            writer.writerow([node.id, left, right, node.size, node.min_member,
                             f"{node.p:.9g}", f"{node.entropy:.9g}", f"{node.merge_cost:.9g}"])
        return out.getvalue()


@dataclass(frozen=True)
class BinningTable:
    """Context id -> bin id lookup.

    Tables produced by enumerate_for_shift may carry unreachable padding bins,
    so ``n_bins`` can exceed the number of distinct ids in ``bins``.
    """
    bins: np.ndarray
    n_bins: int
    penalty_bpv: float = 0.0

    def __post_init__(self):
        bins = np.asarray(self.bins, dtype=np.int64)
        if self.n_bins < 1:
            raise ValueError("a binning table needs at least one bin")
        if len(bins) and (bins.min() < 0 or bins.max() >= self.n_bins):
            raise ValueError(f"bin ids must lie in [0, {self.n_bins})")
        bins.setflags(write=False)
        object.__setattr__(self, "bins", bins)

    @classmethod
    def identity(cls, size: int) -> "BinningTable":
        return cls(np.arange(size, dtype=np.int64), size)

    @property
    def context_count(self) -> int:
        return len(self.bins)

    @property
    def is_surjective(self) -> bool:
        return len(np.unique(self.bins)) == self.n_bins

    def __getitem__(self, context: int) -> int:
        return int(self.bins[context])

    def to_bytes(self) -> bytes:
        """magic, |C|, nBins (u32 LE), |C| u16 bin ids, then the f64 penalty."""
        if self.n_bins > MAX_TABLE_BINS:
            raise ValueError(f"{self.n_bins} bins do not fit 16-bit ids")
        header = TABLE_MAGIC + struct.pack("<II", self.context_count, self.n_bins)
        return header + self.bins.astype("<u2").tobytes() + struct.pack("<d", self.penalty_bpv)

    @classmethod
    def from_bytes(cls, blob: bytes) -> "BinningTable":
        if blob[:4] != TABLE_MAGIC:
            raise FormatError("not a binning table blob")
        contexts, n_bins = struct.unpack_from("<II", blob, 4)
        end = 12 + 2 * contexts
        if len(blob) < end:
            raise FormatError("binning table blob is truncated")
        bins = np.frombuffer(blob[12:end], dtype="<u2").astype(np.int64)
        penalty = struct.unpack_from("<d", blob, end)[0] if len(blob) >= end + 8 else 0.0
        return cls(bins, n_bins, penalty)


class CutKind(Enum):
    MAX_BINS = "max_bins"
    MAX_PENALTY = "max_penalty"
    MAX_STEP_COST = "max_step_cost"


@dataclass(frozen=True)
class CutCriterion:
    """When to stop splitting the tree from the root downwards."""
    kind: CutKind
    value: float

    @classmethod
    def max_bins(cls, bins: int) -> "CutCriterion":
        if bins < 1:
            raise ValueError("max_bins needs at least one bin")
        return cls(CutKind.MAX_BINS, bins)

    @classmethod
    def max_penalty(cls, bpv: float) -> "CutCriterion":
        return cls(CutKind.MAX_PENALTY, bpv)

    @classmethod
    def max_step_cost(cls, bpv: float) -> "CutCriterion":
        return cls(CutKind.MAX_STEP_COST, bpv)


def _candidate_deltas(node: MergeNode, others: List[MergeNode], total: float) -> np.ndarray:
    counts = np.vstack([other.counts for other in others])
    union = counts + node.counts
    sums = union.sum(axis=1)
    h_union = row_entropies(union / sums[:, None])
    p_others = np.array([other.p for other in others])
    h_others = np.array([other.entropy for other in others])
    deltas = (sums / total) * h_union - node.p * node.entropy - p_others * h_others
    deltas[deltas < DELTA_FLOOR] = 0.0
    return deltas


def _push_candidates(heap: list, node: MergeNode, others: List[MergeNode], total: float) -> None:
    if not others:
        return
    for other, delta in zip(others, _candidate_deltas(node, others, total)):
        low = min(node.min_member, other.min_member)
        high = max(node.max_member, other.max_member)
        left, right = sorted((node.id, other.id))
        heapq.heappush(heap, (float(delta), low, high, left, right))


def build_merge_tree(stats: ContextStats) -> MergeTree:
    """Greedy pairwise merging of contexts until one node remains.

    Every step pops the cheapest pair whose endpoints are both still available
    (stale heap entries are skipped) and pairs the new node with every
    available node. Equal costs prefer the pair with the smaller minimum member
    id, then the smaller maximum member id.

    Raises:
        StatsError: If every context is empty
    """
    if stats.empty:
        raise StatsError("cannot build a merge tree from empty stats")
    counts = np.asarray(stats.counts, dtype=np.float64)
    sums = counts.sum(axis=1)
    total = float(sums.sum())
    seen = np.flatnonzero(sums > 0)
    unseen = tuple(int(c) for c in np.flatnonzero(sums == 0))
    entropies = row_entropies(counts[seen] / sums[seen, None])

    nodes: List[MergeNode] = []
    for index, context in enumerate(seen):
        nodes.append(MergeNode(id=index, counts=counts[context], p=sums[context] / total,
                               entropy=float(entropies[index]), min_member=int(context),
                               max_member=int(context)))
    available = [True] * len(nodes)

    heap: list = []
    for index in range(len(nodes) - 1):
        _push_candidates(heap, nodes[index], nodes[index + 1:], total)

    live = len(nodes)
    while live > 1:
        delta, _, _, left, right = heapq.heappop(heap)
        if not (available[left] and available[right]):
            continue
        a, b = nodes[left], nodes[right]
        merged_counts = a.counts + b.counts
        merged = MergeNode(
            id=len(nodes),
            counts=merged_counts,
            p=a.p + b.p,
            entropy=float(row_entropies((merged_counts / merged_counts.sum())[None, :])[0]),
            merge_cost=delta,
            children=(left, right),
            min_member=min(a.min_member, b.min_member),
            max_member=max(a.max_member, b.max_member),
            size=a.size + b.size,
        )
        available[left] = available[right] = False
        others = [node for node in nodes if available[node.id]]
        nodes.append(merged)
        available.append(True)
        _push_candidates(heap, merged, others, total)
        live -= 1

    tree = MergeTree(nodes, len(nodes) - 1, stats.context_count, stats.alphabet_size, unseen)
    logger.info(f"Merge tree built: {len(seen)} leaves, {len(unseen)} unseen contexts, "
                f"total merge cost {tree.total_cost:.6f} bpv")
    return tree


def _frontier_sequence(tree: MergeTree):
    """Yield (frontier, penalty) from the root down, splitting the costliest node each step."""
    penalty = tree.total_cost
    frontier = {tree.root}
    heap = [] if tree.nodes[tree.root].is_leaf else [(-tree.nodes[tree.root].merge_cost, tree.root)]
    yield frontier, penalty, (-heap[0][0] if heap else None)
    while heap:
        cost, node_id = heapq.heappop(heap)
        node = tree.nodes[node_id]
        frontier = (frontier - {node_id}) | set(node.children)
        penalty = max(penalty - node.merge_cost, 0.0)
        for child in node.children:
            if not tree.nodes[child].is_leaf:
                heapq.heappush(heap, (-tree.nodes[child].merge_cost, child))
        yield frontier, penalty, (-heap[0][0] if heap else None)


def _table_from_frontier(tree: MergeTree, frontier, penalty: float) -> BinningTable:
    ordered = sorted(frontier, key=lambda node_id: tree.nodes[node_id].min_member)
    bins = np.zeros(tree.context_count, dtype=np.int64)
    for bin_id, node_id in enumerate(ordered):
        bins[tree.members(node_id)] = bin_id
    return BinningTable(bins, len(ordered), penalty)


def cut_tree(tree: MergeTree, criterion: CutCriterion) -> BinningTable:
    """Frontier grown from the root by splitting the node with the largest merge cost.

    The penalty of a frontier is the summed cost of the merges it keeps.
    MaxBins(k) stops at min(k, leaves) bins; MaxPenalty(b) at the first frontier
    with penalty <= b; MaxStepCost(b) once no frontier node costs more than b.
    """
    for frontier, penalty, next_cost in _frontier_sequence(tree):
        if criterion.kind == CutKind.MAX_BINS and len(frontier) >= criterion.value:
            break
        if criterion.kind == CutKind.MAX_PENALTY and penalty <= criterion.value + 1e-12:
            break
        if criterion.kind == CutKind.MAX_STEP_COST and (next_cost is None or next_cost <= criterion.value):
            break
    table = _table_from_frontier(tree, frontier, penalty)
    logger.info(f"Cut {criterion.kind.value}={criterion.value}: {table.n_bins} bins, "
                f"penalty {table.penalty_bpv:.6f} bpv")
    return table


def penalty_curve(tree: MergeTree) -> List[Tuple[int, float]]:
    """(nBins, penaltyBpv) for every cut in the greedy family, 1 bin upwards."""
    return [(len(frontier), penalty) for frontier, penalty, _ in _frontier_sequence(tree)]


def bin_contexts(stats: ContextStats, criterion: CutCriterion) -> BinningTable:
    """Tree build followed by a cut."""
    return cut_tree(build_merge_tree(stats), criterion)


def bin_stats(stats: ContextStats, table: BinningTable) -> ContextStats:
    """Pool the rows of a stats table through a binning."""
    if table.context_count != stats.context_count:
        raise ModelError(f"table covers {table.context_count} contexts, stats have {stats.context_count}")
    pooled = np.zeros((table.n_bins, stats.alphabet_size), dtype=stats.counts.dtype)
    np.add.at(pooled, table.bins, stats.counts)
    return ContextStats(pooled)


def compose(fine: BinningTable, coarse: BinningTable) -> BinningTable:
    """Chain a table over contexts with a table over its bins."""
    if coarse.context_count != fine.n_bins:
        raise ModelError(f"coarse table covers {coarse.context_count} ids, fine table has {fine.n_bins} bins")
    return BinningTable(coarse.bins[fine.bins], coarse.n_bins, coarse.penalty_bpv)


def enumerate_for_shift(fine: BinningTable, coarse: BinningTable, group_size: int) -> BinningTable:
    """Renumber fine bins so that ``fine_bin // group_size`` is the coarse bin.

    Fine bins of coarse bin g take ids g*group_size + rank (rank by old fine id);
    the table is padded to coarse.n_bins * group_size bins.

    Raises:
        ValueError: If group_size is not a power of two
        ModelError: If a fine bin straddles two coarse bins or a group overflows
    """
    if group_size < 1 or group_size & (group_size - 1):
        raise ValueError(f"group size {group_size} is not a power of two")
    if fine.context_count != coarse.context_count:
        raise ModelError("fine and coarse tables cover different context sets")
    parent = np.full(fine.n_bins, -1, dtype=np.int64)
    for fine_bin, coarse_bin in zip(fine.bins, coarse.bins):
        if parent[fine_bin] == -1:
            parent[fine_bin] = coarse_bin
        elif parent[fine_bin] != coarse_bin:
            raise ModelError(f"fine bin {fine_bin} maps to coarse bins {parent[fine_bin]} and {coarse_bin}")

    renumber = np.zeros(fine.n_bins, dtype=np.int64)
    fill = np.zeros(coarse.n_bins, dtype=np.int64)
    for fine_bin in range(fine.n_bins):
        group = parent[fine_bin]
        if group == -1:
            continue
        if fill[group] >= group_size:
            raise ModelError(f"coarse bin {group} holds more than {group_size} fine bins")
        renumber[fine_bin] = group * group_size + fill[group]
        fill[group] += 1
    return BinningTable(renumber[fine.bins], coarse.n_bins * group_size, fine.penalty_bpv)
