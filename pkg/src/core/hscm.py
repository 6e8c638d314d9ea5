"""Hidden-state context models.

A hidden state evolves as ``state = next[state, symbol]`` and selects the
coding distribution of the following symbol. Two ways to get the table:

  * HCB: the state packs a window of hierarchically binned previous values
    in mixed radix, so one lookup per symbol replaces the whole chain;
  * soft models: transitions and emissions are softmax-parametrised, the
    log-likelihood F is maximised by gradient ascent through the belief
    recurrence P_{i+1} = P_i T_{x_i}, then transitions are fixed one row at
    a time (determinize).
"""

import logging
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import log_softmax, softmax

from .binner import BinningTable, CutCriterion, build_merge_tree, cut_tree
from .context_model import ConditionalModel, ContextCursor, ContextMapper, register_mapper
from .ctxstats import ContextStats
from .errors import FormatError, ModelError
from .rans import normalize_freqs
from .seqio import Dataset

logger = logging.getLogger(__name__)

TRANSITION_MAGIC = b"HSC1"
EMISSION_PRECISION = 12
MAX_SOFT_STATES = 64
MAX_HALVINGS = 30
STEP_GROWTH = 2.0
WARM_START_BLUR = 1e-3


@dataclass(frozen=True)
class RadixLayout:
    """state = c1 + nc1 * (c2 + nc2 * (c3 + ...))."""
    level_bin_counts: Tuple[int, ...]

    def __post_init__(self):
        counts = tuple(int(c) for c in self.level_bin_counts)
        if not counts or min(counts) < 1:
            raise ValueError("radix layout needs at least one level with a positive bin count")
        object.__setattr__(self, "level_bin_counts", counts)

    @property
    def state_count(self) -> int:
        return int(np.prod(self.level_bin_counts))

    def encode(self, digits: Sequence[int]) -> int:
        state = 0
        for digit, radix in zip(reversed(digits), reversed(self.level_bin_counts)):
            if not 0 <= digit < radix:
                raise ValueError(f"digit {digit} outside radix {radix}")
            state = state * radix + int(digit)
        return state

    def decode(self, state: int) -> Tuple[int, ...]:
        digits = []
        for radix in self.level_bin_counts:
            digits.append(state % radix)
            state //= radix
        return tuple(digits)

    def encode_array(self, digits: Sequence[np.ndarray]) -> np.ndarray:
        state = np.zeros_like(np.asarray(digits[0], dtype=np.int64))
        for digit, radix in zip(reversed(digits), reversed(self.level_bin_counts)):
            state = state * radix + digit
        return state

    def decode_array(self, states: np.ndarray) -> List[np.ndarray]:
        states = np.asarray(states, dtype=np.int64)
        digits = []
        for radix in self.level_bin_counts:
            digits.append(states % radix)
            states = states // radix
        return digits


@dataclass(frozen=True)
class TransitionTable:
    """Deterministic state machine with one emission row per state."""
    next: np.ndarray
    emit: np.ndarray
    layout: Optional[RadixLayout] = None

    def __post_init__(self):
        nxt = np.asarray(self.next, dtype=np.int64)
        emit = np.asarray(self.emit, dtype=np.float64)
        if nxt.shape != emit.shape:
            raise ModelError(f"next table {nxt.shape} and emission table {emit.shape} disagree")
        if nxt.size and (nxt.min() < 0 or nxt.max() >= nxt.shape[0]):
            raise ModelError("transition target outside the state range")
        if not np.allclose(emit.sum(axis=1), 1.0, atol=1e-9):
            raise ModelError("emission rows must sum to 1")
        if self.layout is not None and self.layout.state_count != nxt.shape[0]:
            raise ModelError(f"layout has {self.layout.state_count} states, table {nxt.shape[0]}")
        object.__setattr__(self, "next", nxt)
        object.__setattr__(self, "emit", emit)

    @property
    def state_count(self) -> int:
        return self.next.shape[0]

    @property
    def alphabet_size(self) -> int:
        return self.next.shape[1]

    def states(self, symbols: Sequence[int]) -> np.ndarray:
        """State before each symbol, starting from state 0."""
        out = np.empty(len(symbols), dtype=np.int64)
        nxt = self.next.tolist()
        state = 0
        for i, symbol in enumerate(np.asarray(symbols, dtype=np.int64).tolist()):
            out[i] = state
            state = nxt[state][symbol]
        return out

    def mapper(self) -> "HscmMapper":
        return HscmMapper(self)

    def model(self) -> ConditionalModel:
        """Coding model reading the table's own emission rows."""
        return ConditionalModel.from_probabilities(self.mapper(), self.emit)

    def to_bytes(self) -> bytes:
        """magic, S, m (u32 LE), next ids as u32, emission rows as u16 frequencies."""
        header = TRANSITION_MAGIC + struct.pack("<II", self.state_count, self.alphabet_size)
        freqs = np.array([normalize_freqs(row, EMISSION_PRECISION).freqs for row in self.emit],
                         dtype="<u2")
        return header + self.next.astype("<u4").tobytes() + freqs.tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "TransitionTable":
        if blob[:4] != TRANSITION_MAGIC:
            raise FormatError("not a transition table blob")
        states, m = struct.unpack_from("<II", blob, 4)
        cells = states * m
        if len(blob) != 12 + 6 * cells:
            raise FormatError("transition table blob has the wrong length")
        nxt = np.frombuffer(blob, dtype="<u4", count=cells, offset=12).astype(np.int64)
        freqs = np.frombuffer(blob, dtype="<u2", count=cells, offset=12 + 4 * cells)
        emit = freqs.astype(np.float64).reshape(states, m) / (1 << EMISSION_PRECISION)
        return cls(nxt.reshape(states, m), emit)


class HscmCursor(ContextCursor):
    """Carries the hidden state instead of the symbol history."""

    def __init__(self, mapper: "HscmMapper"):
        super().__init__(mapper)
        self.state = 0

    @property
    def context(self) -> int:
        return self.state

    def push(self, symbol: int) -> None:
        self.state = int(self.mapper.table.next[self.state, int(symbol)])


class HscmMapper(ContextMapper):
    """Context = hidden state of a transition table."""

    kind = "hscm"

    def __init__(self, table: TransitionTable):
        super().__init__(table.alphabet_size, 0, table.state_count)
        self.table = table

    def main_ids(self, symbols: np.ndarray, first: Optional[int] = None) -> np.ndarray:
        return self.table.states(symbols)[first or 0:]

    def context_at(self, symbols: Sequence[int], position: int) -> int:
        states = self.table.states(list(symbols[:position]) + [0])
        return int(states[position])

    def cursor(self) -> HscmCursor:
        return HscmCursor(self)

    def descriptor(self) -> Dict[str, Any]:
        return {"kind": self.kind, "alphabet_size": self.alphabet_size,
                "table": self.table.to_bytes().hex()}


register_mapper(HscmMapper.kind,
                lambda d: HscmMapper(TransitionTable.from_bytes(bytes.fromhex(d["table"]))))


def _check_chain(binnings: Sequence[BinningTable], layout: RadixLayout, alphabet_size: int) -> None:
    if len(binnings) != len(layout.level_bin_counts):
        raise ModelError(f"{len(binnings)} binnings for a {len(layout.level_bin_counts)}-level layout")
    expected_inputs = alphabet_size
    for level, (table, radix) in enumerate(zip(binnings, layout.level_bin_counts)):
        if table.context_count != expected_inputs:
            raise ModelError(f"level {level + 1} binning covers {table.context_count} ids, "
                             f"expected {expected_inputs}")
        if table.n_bins != radix:
            raise ModelError(f"level {level + 1} binning has {table.n_bins} bins, layout says {radix}")
        expected_inputs = table.n_bins


def build_hcb_transition(binnings: Sequence[BinningTable], layout: RadixLayout,
                         data: Optional[Dataset] = None,
                         alphabet_size: Optional[int] = None) -> TransitionTable:
    """Mixed-radix transition table for a hierarchical chain of binnings.

    Digits shift as (c1, c2, ..., cL) -> (bin[v], bin12[c1], ..., binL[c_{L-1}]).
    Emission rows are the smoothed next-symbol frequencies per state over
    ``data``; uniform without data.

    Raises:
        ModelError: If the binnings do not match the layout
    """
    m = alphabet_size or binnings[0].context_count
    _check_chain(binnings, layout, m)
    states = np.arange(layout.state_count, dtype=np.int64)
    digits = layout.decode_array(states)
    nxt = np.empty((layout.state_count, m), dtype=np.int64)
    shifted = [binnings[level].bins[digits[level - 1]] for level in range(1, len(binnings))]
    for value in range(m):
        new_digits = [np.full_like(states, binnings[0].bins[value])] + shifted
        nxt[:, value] = layout.encode_array(new_digits)
    emit = np.full((layout.state_count, m), 1.0 / m)
    table = TransitionTable(nxt, emit, layout)
    if data is not None:
        fitted = ConditionalModel.fit(table.mapper(), [read.bases for read in data.reads])
        table = TransitionTable(nxt, fitted.probabilities, layout)
    logger.info(f"HCB transition table: {layout.state_count} states over {m} symbols")
    return table


def explicit_hcb_states(binnings: Sequence[BinningTable], layout: RadixLayout,
                        symbols: Sequence[int]) -> np.ndarray:
    """States of a read computed by direct per-level lookups.

    Digit k at position i is binnings[k] applied to digit k-1 at position i-1
    (the symbol itself for k = 0); every digit is 0 at position 0.
    """
    symbols = np.asarray(symbols, dtype=np.int64)
    n = len(symbols)
    digits = []
    previous = np.zeros(n, dtype=np.int64)
    if n:
        previous[1:] = binnings[0].bins[symbols[:-1]]
    digits.append(previous)
    for table in binnings[1:]:
        level = np.zeros(n, dtype=np.int64)
        if n:
            level[1:] = table.bins[previous[:-1]]
        digits.append(level)
        previous = level
    return layout.encode_array(digits)


def train_hcb_binnings(data: Dataset, level_bins: Sequence[int],
                       alphabet_size: Optional[int] = None) -> List[BinningTable]:
    """Chain of binnings for HCB: level 1 bins the previous symbol, level k+1
    bins the level-k digit one position earlier, each cut from a merge tree."""
    m = alphabet_size or data.alphabet.size
    reads = [np.asarray(read.bases, dtype=np.int64) for read in data.reads]
    binnings: List[BinningTable] = []
    previous_digits = [np.concatenate([[0], read[:-1]]) if len(read) else read for read in reads]
    inputs = m
    for level, budget in enumerate(level_bins):
        start = level + 1
        flat = np.zeros(inputs * m, dtype=np.int64)
        for read, digits in zip(reads, previous_digits):
            if len(read) > start:
                flat += np.bincount(digits[start:] * m + read[start:], minlength=flat.size)
        stats = ContextStats(flat.reshape(inputs, m))
        if stats.empty:
            raise ModelError(f"no reads longer than {start} symbols for HCB level {level + 1}")
        tree = build_merge_tree(stats)
        if budget > tree.leaf_count:
            logger.warning(f"HCB level {level + 1}: budget {budget} clamped to {tree.leaf_count}")
        table = cut_tree(tree, CutCriterion.max_bins(min(budget, tree.leaf_count)))
        binnings.append(table)
        shifted = []
        for digits in previous_digits:
            level_digits = table.bins[digits]
            moved = np.zeros_like(level_digits)
            moved[1:] = level_digits[:-1]
            shifted.append(moved)
        previous_digits = shifted
        inputs = table.n_bins
    return binnings


@dataclass
class SoftHscm:
    """Softmax-parametrised hidden-state model.

    ``t[s, r, x]`` are transition logits normalised over the target state s,
    ``d[x, s]`` emission logits normalised over x. Rows ``fixed[r, x]`` are
    one-hot and excluded from optimisation.
    """
    t: np.ndarray
    d: np.ndarray
    fixed: np.ndarray = field(default=None)

    def __post_init__(self):
        states, sources, m = self.t.shape
        if states != sources or self.d.shape != (m, states):
            raise ModelError(f"inconsistent soft model shapes t={self.t.shape} d={self.d.shape}")
        if states > MAX_SOFT_STATES:
            raise ModelError(f"soft models are limited to {MAX_SOFT_STATES} states")
        if self.fixed is None:
            self.fixed = np.zeros((states, m), dtype=bool)

    @classmethod
    def uniform(cls, state_count: int, alphabet_size: int) -> "SoftHscm":
        return cls(np.zeros((state_count, state_count, alphabet_size)),
                   np.zeros((alphabet_size, state_count)))

    @classmethod
    def random(cls, state_count: int, alphabet_size: int, seed: int = 0, scale: float = 0.5) -> "SoftHscm":
        rng = np.random.default_rng(seed)
        return cls(rng.normal(scale=scale, size=(state_count, state_count, alphabet_size)),
                   rng.normal(scale=scale, size=(alphabet_size, state_count)))

    @classmethod
    def from_transition(cls, table: TransitionTable, sharpness: Optional[float] = None) -> "SoftHscm":
        """Soft model centred on a deterministic table.

        With ``sharpness`` None every row is fixed one-hot; otherwise the target
        logit is raised by ``sharpness`` and rows stay free.
        """
        states, m = table.next.shape
        r, x = np.meshgrid(np.arange(states), np.arange(m), indexing="ij")
        if sharpness is None:
            t = np.full((states, states, m), -np.inf)
            t[table.next, r, x] = 0.0
            fixed = np.ones((states, m), dtype=bool)
        else:
            t = np.zeros((states, states, m))
            t[table.next, r, x] = sharpness
            fixed = np.zeros((states, m), dtype=bool)
        with np.errstate(divide="ignore"):
            d = np.log(np.maximum(table.emit.T, 1e-300))
        return cls(t, d, fixed)

    @property
    def state_count(self) -> int:
        return self.t.shape[0]

    @property
    def alphabet_size(self) -> int:
        return self.t.shape[2]

    @property
    def transitions(self) -> np.ndarray:
        """T[x, r, s] = Pr(next state s | state r, symbol x)."""
        return np.transpose(softmax(self.t, axis=0), (2, 1, 0))

    @property
    def emissions(self) -> np.ndarray:
        """E[s, x] = Pr(x | s)."""
        return softmax(self.d, axis=0).T

    @property
    def log_emissions(self) -> np.ndarray:
        return log_softmax(self.d, axis=0).T

    @property
    def one_hot_rows(self) -> int:
        return int((self.transitions.max(axis=2) >= 1.0 - 1e-12).sum())

    def copy(self) -> "SoftHscm":
        return SoftHscm(self.t.copy(), self.d.copy(), self.fixed.copy())


@dataclass
class StateBelief:
    """Per-read rows P_i = Pr(state before symbol i)."""
    rows: List[np.ndarray]


@dataclass
class _Batch:
    symbols: np.ndarray
    mask: np.ndarray
    lengths: np.ndarray


def _as_reads(data: Union[Dataset, Sequence[int], np.ndarray]) -> List[np.ndarray]:
    if isinstance(data, Dataset):
        return [np.asarray(read.bases, dtype=np.int64) for read in data.reads if len(read)]
    return [np.asarray(data, dtype=np.int64)]


def _batches(reads: List[np.ndarray], chunks: int) -> List[_Batch]:
    out = []
    for part in np.array_split(np.arange(len(reads)), max(min(chunks, len(reads)), 1)):
        if not len(part):
            continue
        lengths = np.array([len(reads[i]) for i in part])
        width = int(lengths.max())
        symbols = np.zeros((len(part), width), dtype=np.int64)
        mask = np.zeros((len(part), width), dtype=bool)
        for row, index in enumerate(part):
            symbols[row, : lengths[row]] = reads[index]
            mask[row, : lengths[row]] = True
        out.append(_Batch(symbols, mask, lengths))
    return out


def _forward(batch: _Batch, transitions: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Beliefs (L+1, R, S) and soft counts A[s, x] of one batch."""
    reads, width = batch.symbols.shape
    states = transitions.shape[1]
    m = transitions.shape[0]
    beliefs = np.zeros((width + 1, reads, states))
    beliefs[0, :, 0] = 1.0
    for i in range(width):
        beliefs[i + 1] = np.einsum("rs,rst->rt", beliefs[i], transitions[batch.symbols[:, i]])
    weights = beliefs[:width] * batch.mask.T[:, :, None]
    counts = np.zeros((m, states))
    np.add.at(counts, batch.symbols.T, weights)
    return beliefs, counts.T


def _backward(batch: _Batch, transitions: np.ndarray, beliefs: np.ndarray,
              local: np.ndarray) -> np.ndarray:
    """dF/dT[x, r, s] given dF/dP_i = local[:, x_i] + T_{x_i} dF/dP_{i+1}."""
    reads, width = batch.symbols.shape
    m, states, _ = transitions.shape
    grad = np.zeros((m, states, states))
    adjoint = np.zeros((reads, states))
    for i in range(width - 1, -1, -1):
        x = batch.symbols[:, i]
        np.add.at(grad, x, np.einsum("rs,rt->rst", beliefs[i], adjoint))
        adjoint = local[:, x].T * batch.mask[:, i, None] + np.einsum("rst,rt->rs", transitions[x], adjoint)
    return grad


class _Evaluator:
    """Reusable batches plus the thread pool for one dataset."""

    def __init__(self, data: Union[Dataset, Sequence[int]], alphabet_size: int, threads: int = 1):
        reads = _as_reads(data)
        if not reads:
            raise ModelError("soft model needs at least one non-empty read")
        self.threads = max(threads, 1)
        self.batches = _batches(reads, self.threads)
        self.total = int(sum(len(read) for read in reads))
        self.epsilon = 1.0 / (self.total * alphabet_size)

    def map(self, fn, items):
        if self.threads == 1 or len(items) == 1:
            return [fn(item) for item in items]
        with ThreadPoolExecutor(max_workers=self.threads) as executor:
            return list(executor.map(fn, items))

    def forward(self, transitions: np.ndarray):
        results = self.map(lambda batch: _forward(batch, transitions), self.batches)
        counts = np.sum([counts for _, counts in results], axis=0)
        return [beliefs for beliefs, _ in results], counts

    def bayes_log_emissions(self, counts: np.ndarray) -> np.ndarray:
        m = counts.shape[1]
        smoothed = counts + self.epsilon
        return np.log(smoothed / (counts.sum(axis=1, keepdims=True) + m * self.epsilon))

    def objective(self, model: SoftHscm, bayes: bool) -> float:
        _, counts = self.forward(model.transitions)
        log_emit = self.bayes_log_emissions(counts) if bayes else model.log_emissions
        return float((counts * log_emit).sum())

    def gradient(self, model: SoftHscm, bayes: bool) -> Tuple[float, np.ndarray, np.ndarray]:
        transitions = model.transitions
        beliefs, counts = self.forward(transitions)
        if bayes:
            log_emit = self.bayes_log_emissions(counts)
            sums = counts.sum(axis=1, keepdims=True)
            m = counts.shape[1]
            local = log_emit + counts / (counts + self.epsilon) - sums / (sums + m * self.epsilon)
        else:
            log_emit = model.log_emissions
            local = log_emit
        value = float((counts * log_emit).sum())
        grads = self.map(lambda item: _backward(item[0], transitions, item[1], local),
                         list(zip(self.batches, beliefs)))
        grad_t_matrix = np.sum(grads, axis=0)
        inner = (transitions * grad_t_matrix).sum(axis=2, keepdims=True)
        grad_logits = transitions * (grad_t_matrix - inner)
        grad_t = np.transpose(grad_logits, (2, 1, 0)).copy()
        grad_t[:, model.fixed] = 0.0
        if bayes:
            grad_d = np.zeros_like(model.d)
        else:
            emit = np.exp(log_emit)
            grad_d = (counts - emit * counts.sum(axis=1, keepdims=True)).T
        return value, grad_t, grad_d


def forward_evaluate(model: SoftHscm, data: Union[Dataset, Sequence[int]]) -> Tuple[StateBelief, float]:
    """Belief rows and F = sum_i P_i . ln emission(x_i) in nits, summed over reads."""
    reads = _as_reads(data)
    if not reads or not sum(len(read) for read in reads):
        raise ModelError("forward evaluation needs a non-empty sequence")
    transitions = model.transitions
    log_emit = model.log_emissions
    rows = []
    total = 0.0
    for batch in _batches(reads, 1):
        beliefs, counts = _forward(batch, transitions)
        total += float((counts * log_emit).sum())
        for index, length in enumerate(batch.lengths):
            rows.append(beliefs[:length, index, :])
    return StateBelief(rows), total


def log_likelihood(model: SoftHscm, data: Union[Dataset, Sequence[int]], bayes: bool = True) -> float:
    """F in nits; with ``bayes`` the emissions are re-estimated from the beliefs."""
    return _Evaluator(data, model.alphabet_size).objective(model, bayes)


def gradient(model: SoftHscm, data: Union[Dataset, Sequence[int]],
             bayes: bool = True) -> Tuple[float, np.ndarray, np.ndarray]:
    """(F, dF/dt, dF/dd) by backward accumulation through the belief recurrence."""
    return _Evaluator(data, model.alphabet_size).gradient(model, bayes)


def _with_bayes_emissions(model: SoftHscm, evaluator: _Evaluator) -> SoftHscm:
    _, counts = evaluator.forward(model.transitions)
    return SoftHscm(model.t, evaluator.bayes_log_emissions(counts).T.copy(), model.fixed)


def _ascend(model: SoftHscm, evaluator: _Evaluator, steps: int, step_size: float, bayes: bool) -> SoftHscm:
    current = model.copy()
    value, grad_t, grad_d = evaluator.gradient(current, bayes)
    scale = 1.0 / evaluator.total
    step = step_size
    for iteration in range(steps):
        for _ in range(MAX_HALVINGS):
            candidate = SoftHscm(current.t + step * scale * grad_t,
                                 current.d + step * scale * grad_d, current.fixed)
            candidate_value = evaluator.objective(candidate, bayes)
            if np.isfinite(candidate_value) and candidate_value >= value:
                break
            step /= 2
        else:
            if not np.isfinite(candidate_value):
                raise ModelError("soft model optimisation produced a non-finite likelihood")
            logger.info(f"Soft model converged after {iteration} steps")
            break
        current = candidate
        value, grad_t, grad_d = evaluator.gradient(current, bayes)
        logger.debug(f"step {iteration}: F={value:.6f} nits, step size {step:.3g}")
        step *= STEP_GROWTH
    return current


def warm_start(data: Dataset, state_count: int) -> SoftHscm:
    """Soft copy of a one-level HCB table (state = bin of the previous symbol).

    Every free row keeps WARM_START_BLUR of its mass off the HCB target.
    States beyond the table's bins move like the others and emit uniformly.

    Raises:
        ModelError: If no read is long enough to train the binning
    """
    m = data.alphabet.size
    binnings = train_hcb_binnings(data, [min(state_count, m)], m)
    table = build_hcb_transition(binnings, RadixLayout((binnings[0].n_bins,)), data, m)
    sharpness = np.log((state_count - 1) * (1.0 - WARM_START_BLUR) / WARM_START_BLUR) if state_count > 1 else 0.0
    r, x = np.meshgrid(np.arange(state_count), np.arange(m), indexing="ij")
    t = np.zeros((state_count, state_count, m))
    t[table.next[0][x], r, x] = sharpness
    d = np.zeros((m, state_count))
    d[:, : table.state_count] = np.log(table.emit.T)
    return SoftHscm(t, d)


def _initial_model(data: Dataset, state_count: int, seed: int, evaluator: _Evaluator,
                   bayes: bool) -> SoftHscm:
    candidates = [SoftHscm.random(state_count, data.alphabet.size, seed)]
    try:
        candidates.append(warm_start(data, state_count))
    except ModelError as e:
        logger.debug(f"No HCB warm start: {e}")
    scores = [evaluator.objective(candidate, bayes) for candidate in candidates]
    best = int(np.argmax(scores))
    logger.debug(f"Initial F {scores[best]:.4f} nits ({'HCB' if best else 'random'} start)")
    return candidates[best]


def optimize_soft(data: Dataset, state_count: int, steps: int, step_size: float,
                  bayes: bool = True, init: Optional[SoftHscm] = None, seed: int = 0,
                  threads: int = 1) -> SoftHscm:
    """Gradient ascent on F over the free transition (and emission) logits.

    Args:
        data: Training reads
        state_count: Number of hidden states (at most 64)
        steps: Accepted ascent steps; 0 returns the initialisation unchanged
        step_size: Initial step on the per-symbol gradient, halved whenever F
            would drop or become non-finite and doubled after every accepted step
        bayes: Eliminate emissions by the Bayes estimate each step
        init: Starting point (default: the better of seeded random logits and
            the HCB warm start)
        seed: Seed of the random initialisation
        threads: Workers over read batches

    Returns:
        The optimised model; with ``bayes`` its emission logits hold the
        final Bayes estimate

    Raises:
        ModelError: If the likelihood stays non-finite after repeated halving
    """
    if state_count < 1:
        raise ValueError("state_count must be at least 1")
    if init is not None and steps == 0:
        return init
    evaluator = _Evaluator(data, data.alphabet.size, threads)
    model = init if init is not None else _initial_model(data, state_count, seed, evaluator, bayes)
    if steps == 0:
        return model
    start = evaluator.objective(model, bayes)
    result = _ascend(model, evaluator, steps, step_size, bayes)
    if bayes:
        result = _with_bayes_emissions(result, evaluator)
    final = evaluator.objective(result, bayes)
    logger.info(f"Soft model: F {start:.4f} -> {final:.4f} nits "
                f"({-final / (evaluator.total * np.log(2)):.4f} bpv)")
    return result


def determinize(model: SoftHscm, data: Dataset, steps: int = 10, step_size: float = 1.0,
                threads: int = 1,
                callback: Optional[Callable[[SoftHscm], None]] = None) -> TransitionTable:
    """Fix transitions one row at a time, re-optimising the free rows in between.

    Each round fixes the free (state, symbol) row whose most likely target has
    the highest probability (ties: smallest row, then smallest target). The
    emission table of the result is the smoothed Bayes estimate under the
    final deterministic transitions.
    """
    current = model.copy()
    evaluator = _Evaluator(data, current.alphabet_size, threads)
    states, m = current.fixed.shape
    while not current.fixed.all():
        transitions = current.transitions
        best = transitions.max(axis=2).T.copy()
        best[current.fixed] = -1.0
        row, symbol = np.unravel_index(int(np.argmax(best)), best.shape)
        target = int(np.argmax(transitions[symbol, row]))
        current.t[:, row, symbol] = -np.inf
        current.t[target, row, symbol] = 0.0
        current.fixed[row, symbol] = True
        if steps and not current.fixed.all():
            current = _ascend(current, evaluator, steps, step_size, bayes=True)
        if callback is not None:
            callback(current)
    nxt = np.argmax(current.transitions, axis=2).T
    _, counts = evaluator.forward(current.transitions)
    emit = np.exp(evaluator.bayes_log_emissions(counts))
    emit /= emit.sum(axis=1, keepdims=True)
    logger.info(f"Determinized soft model: {states} states x {m} symbols")
    return TransitionTable(nxt, emit)
