"""k-means clustering of reads in model space.

Distance is the coding cost of a read under a centroid model; centroids are
refit from the pooled counts of their member reads.
"""

import csv
import io
import json
import logging
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import entr

from .context_model import ConditionalModel, ContextMapper, mapper_from_descriptor
from .ctxstats import ContextSpec, ContextStats
from .errors import FormatError, ModelError
from .seqio import Dataset, Read

logger = logging.getLogger(__name__)

MODEL_SET_MAGIC = b"CMS1"
RELATIVE_TOLERANCE = 1e-6


@dataclass
class ModelSet:
    """k centroid models over a shared mapper and the per-read assignment."""
    mapper: ContextMapper
    centroids: List[ConditionalModel]
    assignment: np.ndarray
    total_bits: float
    read_bits: np.ndarray = field(default_factory=lambda: np.zeros(0))
    history: List[float] = field(default_factory=list)

    @property
    def k(self) -> int:
        return len(self.centroids)

    @property
    def cluster_sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.k)

    def to_bytes(self) -> bytes:
        """magic, k, descriptor length, JSON mapper descriptor, then per centroid a
        u32 length-prefixed stats blob."""
        descriptor = json.dumps(self.mapper.descriptor()).encode("utf-8")
        out = bytearray(MODEL_SET_MAGIC + struct.pack("<II", self.k, len(descriptor)) + descriptor)
        for centroid in self.centroids:
            blob = ContextStats(np.rint(centroid.counts).astype(np.int64)).to_bytes()
            out += struct.pack("<I", len(blob)) + blob
        return bytes(out)

    @classmethod
    def from_bytes(cls, blob: bytes) -> "ModelSet":
        """Rebuild the centroids; assignment and bit totals are not stored."""
        if blob[:4] != MODEL_SET_MAGIC:
            raise FormatError("not a model set blob")
        k, length = struct.unpack_from("<II", blob, 4)
        offset = 12 + length
        mapper = mapper_from_descriptor(json.loads(blob[12:offset].decode("utf-8")))
        centroids = []
        for _ in range(k):
            (size,) = struct.unpack_from("<I", blob, offset)
            stats = ContextStats.from_bytes(blob[offset + 4: offset + 4 + size])
            centroids.append(ConditionalModel(mapper, stats.counts.astype(np.float64)))
            offset += 4 + size
        if offset != len(blob):
            raise FormatError("trailing bytes after the last centroid")
        return cls(mapper, centroids, np.zeros(0, dtype=np.int64), 0.0)

    def summary_csv(self, data: Dataset) -> str:
        """Per cluster: read count, symbols, bits and bpv."""
        out = io.StringIO()
        writer = csv.writer(out)
        writer.writerow(["cluster", "reads", "symbols", "bits", "bpv"])
        lengths = data.lengths
        for cluster in range(self.k):
            members = self.assignment == cluster
            symbols = int(lengths[members].sum())
            bits = float(self.read_bits[members].sum())
            writer.writerow([cluster, int(members.sum()), symbols, f"{bits:.3f}",
                             f"{bits / symbols:.6f}" if symbols else ""])
        return out.getvalue()


@dataclass(frozen=True)
class HeaderCost:
    """Cost of storing each read's centroid index, in bits/value."""
    flat_bpv: float
    entropy_bpv: float


def read_model_cost(read: Union[Read, np.ndarray], model: ConditionalModel) -> float:
    """Bits to code one read under a model, start contexts included."""
    symbols = read.bases if isinstance(read, Read) else np.asarray(read)
    return model.bits(symbols)


class _ReadCells:
    """Flat (context * m + symbol) cell ids of every read, for bincount refits."""

    def __init__(self, mapper: ContextMapper, data: Dataset):
        m = mapper.alphabet_size
        cells = []
        for read in data.reads:
            symbols = np.asarray(read.bases, dtype=np.int64)
            cells.append(mapper.context_ids(symbols) * m + symbols if len(symbols) else symbols)
        self.cells = cells
        self.owner = np.repeat(np.arange(len(cells)), [len(c) for c in cells])
        self.flat = np.concatenate(cells) if cells else np.zeros(0, dtype=np.int64)
        self.size = mapper.n_contexts * m
        self.shape = (mapper.n_contexts, m)
        self.lengths = np.array([len(c) for c in cells], dtype=np.int64)

    def counts(self, members: Sequence[int]) -> np.ndarray:
        if len(members) == 0:
            return np.zeros(self.shape)
        pooled = np.concatenate([self.cells[i] for i in members])
        return np.bincount(pooled, minlength=self.size).astype(np.float64).reshape(self.shape)

    def costs(self, model: ConditionalModel) -> np.ndarray:
        bits = -model.log2_probabilities.ravel()[self.flat]
        return np.bincount(self.owner, weights=bits, minlength=len(self.cells))


def _assign(cells: _ReadCells, centroids: List[ConditionalModel], threads: int) -> Tuple[np.ndarray, np.ndarray]:
    if threads > 1 and len(centroids) > 1:
        with ThreadPoolExecutor(max_workers=threads) as executor:
            columns = list(executor.map(cells.costs, centroids))
    else:
        columns = [cells.costs(centroid) for centroid in centroids]
    costs = np.stack(columns, axis=1)
    assignment = np.argmin(costs, axis=1)
    return assignment, costs


def kmeans_cluster(data: Dataset, spec: Union[ContextSpec, ContextMapper], k: int, max_iter: int = 50,
                   seed: int = 0, threads: int = 1,
                   init: Optional[Sequence[np.ndarray]] = None) -> ModelSet:
    """Lloyd iterations with coding cost as distance.

    Args:
        data: Reads to cluster (symbols in ``bases``)
        spec: Context specification shared by every centroid
        k: Number of centroids
        max_iter: Upper bound on (refit, assign) iterations
        seed: Seed for picking the k initial reads
        threads: Workers for the assignment phase (one centroid per task)
        init: Explicit initial centroid count tables (overrides the seeded pick)

    Returns:
        ModelSet whose total is the sum of per-read minimum costs under its centroids

    Raises:
        ModelError: If k exceeds the number of reads
    """
    n_reads = len(data.reads)
    if k < 1 or k > n_reads:
        raise ModelError(f"cannot form {k} clusters from {n_reads} reads")
    mapper = spec if isinstance(spec, ContextMapper) else spec.mapper()
    cells = _ReadCells(mapper, data)

    if init is None:
        rng = np.random.default_rng(seed)
        seeds = sorted(rng.choice(n_reads, size=k, replace=False).tolist())
        tables = [cells.counts([i]) for i in seeds]
    else:
        tables = [np.asarray(table, dtype=np.float64) for table in init]
        if len(tables) != k:
            raise ModelError(f"{len(tables)} initial centroids for k={k}")
    centroids = [ConditionalModel(mapper, table) for table in tables]
    assignment, costs = _assign(cells, centroids, threads)
    read_bits = costs[np.arange(n_reads), assignment]
    total = float(read_bits.sum())
    history = [total]
    logger.info(f"k-means k={k}: initial total {total:.1f} bits")

    for iteration in range(max_iter):
        tables = []
        reseeded = set()
        for cluster in range(k):
            members = np.flatnonzero(assignment == cluster)
            if len(members) == 0:
                per_value = read_bits / np.maximum(cells.lengths, 1)
                for worst in np.argsort(-per_value, kind="stable"):
                    if int(worst) not in reseeded:
                        break
                reseeded.add(int(worst))
                logger.warning(f"Cluster {cluster} emptied; re-seeded from read {int(worst)}")
                members = [int(worst)]
            tables.append(cells.counts(members))
        new_centroids = [ConditionalModel(mapper, table) for table in tables]
        new_assignment, costs = _assign(cells, new_centroids, threads)
        new_bits = costs[np.arange(n_reads), new_assignment]
        new_total = float(new_bits.sum())
        logger.info(f"k-means iteration {iteration + 1}: {new_total:.1f} bits")
        if new_total > total:
            logger.info("k-means total rose; keeping the previous centroids")
            break
        history.append(new_total)
        unchanged = np.array_equal(new_assignment, assignment)
        small_gain = total - new_total < RELATIVE_TOLERANCE * total
        centroids, assignment, read_bits, total = new_centroids, new_assignment, new_bits, new_total
        if unchanged or small_gain:
            break

    return ModelSet(mapper, centroids, assignment, total, read_bits, history)


def extend_centroids(model_set: ModelSet, data: Dataset) -> List[np.ndarray]:
    """Initial tables for a (k+1)-run: the k centroids plus the worst-fit read."""
    cells = _ReadCells(model_set.mapper, data)
    per_value = model_set.read_bits / np.maximum(cells.lengths, 1)
    worst = int(np.argmax(per_value))
    return [centroid.counts.copy() for centroid in model_set.centroids] + [cells.counts([worst])]


def header_cost(k: int, assignment: Sequence[int], n_symbols: int) -> HeaderCost:
    """Flat lg(k) and entropy-coded costs of the per-read centroid index."""
    if k < 1:
        raise ValueError("k must be at least 1")
    assignment = np.asarray(assignment, dtype=np.int64)
    reads = len(assignment)
    if reads == 0 or n_symbols == 0:
        return HeaderCost(0.0, 0.0)
    freqs = np.bincount(assignment, minlength=k) / reads
    entropy_bits = float(entr(freqs).sum() / np.log(2))
    return HeaderCost(float(np.log2(k)) * reads / n_symbols, max(entropy_bits, 0.0) * reads / n_symbols)


def bpv_histogram(model_set: ModelSet, data: Dataset, bins: int = 40,
                  value_range: Optional[Tuple[float, float]] = None) -> List[Tuple[int, float, float, int]]:
    """Per-cluster histogram of read bpv: (cluster, low, high, count) rows."""
    lengths = data.lengths
    valid = lengths > 0
    per_read = np.zeros(len(lengths))
    per_read[valid] = model_set.read_bits[valid] / lengths[valid]
    if value_range is None:
        value_range = (0.0, float(per_read[valid].max()) if valid.any() else 1.0)
    edges = np.histogram_bin_edges(per_read[valid], bins=bins, range=value_range)
    rows = []
    for cluster in range(model_set.k):
        members = valid & (model_set.assignment == cluster)
        hist, _ = np.histogram(per_read[members], bins=edges)
        rows.extend((cluster, float(lo), float(hi), int(c)) for lo, hi, c in zip(edges[:-1], edges[1:], hist))
    return rows
