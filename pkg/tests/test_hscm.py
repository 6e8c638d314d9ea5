import json

import numpy as np
import pytest

from conftest import markov_sequence, stationary
from src.core.binner import BinningTable
from src.core.context_model import ConditionalModel, mapper_from_descriptor
from src.core.ctxstats import ContextSpec, empirical_bpv, entropy, fit_model
from src.core.errors import FormatError, ModelError
from src.core.hscm import (
    RadixLayout, SoftHscm, TransitionTable, build_hcb_transition, determinize,
    explicit_hcb_states, forward_evaluate, gradient, log_likelihood, optimize_soft,
    train_hcb_binnings, warm_start
)
from src.core.nesting import SymmetricMapper
from src.core.seqio import dataset_from_sequences


def run_length_reads(rng, count, length, stop=0.1):
    """Runs of one of the values 0..2, each closed by the marker 3."""
    reads = []
    for _ in range(count):
        out = []
        while len(out) < length:
            out.extend([int(rng.integers(0, 3))] * int(rng.geometric(stop)))
            out.append(3)
        reads.append(np.array(out[:length]))
    return dataset_from_sequences(reads, 4)


@pytest.fixture
def hcb(markov_dataset):
    binnings = train_hcb_binnings(markov_dataset, [4, 2])
    layout = RadixLayout(tuple(table.n_bins for table in binnings))
    return binnings, layout, build_hcb_transition(binnings, layout, markov_dataset)


def test_radix_layout():
    layout = RadixLayout((4, 3, 2))

    assert layout.state_count == 24
    assert layout.encode((1, 2, 1)) == 1 + 4 * (2 + 3 * 1)
    assert layout.decode(21) == (1, 2, 1)
    with pytest.raises(ValueError):
        layout.encode((4, 0, 0))
    with pytest.raises(ValueError):
        RadixLayout(())


def test_hcb_states_match_explicit_lookups(markov_dataset, hcb):
    binnings, layout, table = hcb

    assert table.state_count == layout.state_count
    for read in markov_dataset.reads[:20]:
        assert np.array_equal(table.states(read.bases), explicit_hcb_states(binnings, layout, read.bases))


def test_hcb_bits_match_explicit_lookups(markov_dataset, hcb):
    binnings, layout, table = hcb
    log_emit = np.log2(table.emit)
    model = table.model()
    for read in markov_dataset.reads[:20]:
        explicit = -log_emit[explicit_hcb_states(binnings, layout, read.bases), read.bases].sum()
        assert model.bits(read.bases) == pytest.approx(explicit, rel=1e-9)


def test_hcb_matches_two_lookup_nested_model(markov_dataset, hcb):
    binnings, layout, table = hcb
    near, far = binnings[0].bins, binnings[1].bins
    pairs = np.arange(16)
    # pair id = previous symbol + 4 * the one before it
    pair_table = BinningTable(near[pairs % 4] + layout.level_bin_counts[0] * far[near[pairs // 4]],
                              layout.state_count)
    nested = SymmetricMapper(4, [pair_table])
    nested_model = ConditionalModel.from_probabilities(
        nested, np.vstack([table.emit, np.full((nested.start.count, 4), 0.25)]))
    hcb_model = table.model()

    for read in markov_dataset.reads[:20]:
        assert np.array_equal(nested.main_ids(read.bases), table.states(read.bases)[2:])
        assert np.allclose(nested_model.symbol_bits(read.bases)[2:], hcb_model.symbol_bits(read.bases)[2:],
                           rtol=0, atol=1e-9)


def test_hcb_mapper_cursor_and_descriptor(markov_dataset, hcb):
    _, _, table = hcb
    mapper = table.mapper()
    restored = mapper_from_descriptor(json.loads(json.dumps(mapper.descriptor())))
    read = markov_dataset.reads[0].bases

    cursor = mapper.cursor()
    contexts = []
    for symbol in read:
        contexts.append(cursor.context)
        cursor.push(symbol)
    assert contexts == mapper.context_ids(read).tolist()
    assert np.array_equal(restored.context_ids(read), mapper.context_ids(read))
    assert mapper.context_at(read, 5) == contexts[5]


def test_train_hcb_needs_data():
    with pytest.raises(ModelError):
        train_hcb_binnings(dataset_from_sequences([[1]], 4), [4, 2])


def test_layout_mismatch(hcb):
    binnings, _, _ = hcb
    with pytest.raises(ModelError):
        build_hcb_transition(binnings, RadixLayout((4,)))


def test_transition_table_blob(hcb):
    _, _, table = hcb
    restored = TransitionTable.from_bytes(table.to_bytes())

    assert np.array_equal(restored.next, table.next)
    assert np.allclose(restored.emit, table.emit, atol=2e-3)
    with pytest.raises(FormatError):
        TransitionTable.from_bytes(table.to_bytes()[:-2])


def test_transition_table_validation():
    with pytest.raises(ModelError):
        TransitionTable(np.array([[0, 2], [1, 0]]), np.full((2, 2), 0.5))
    with pytest.raises(ModelError):
        TransitionTable(np.array([[0, 1], [1, 0]]), np.full((2, 2), 0.4))


def test_deterministic_soft_model_matches_table(markov_dataset, hcb):
    _, _, table = hcb
    soft = SoftHscm.from_transition(table)
    data = markov_dataset.subset(range(10))

    _, nits = forward_evaluate(soft, data)
    bits = sum(table.model().bits(read.bases) for read in data.reads)
    assert -nits / np.log(2) == pytest.approx(bits, rel=1e-9)
    assert soft.one_hot_rows == table.state_count * table.alphabet_size


def test_forward_beliefs_are_distributions(rng):
    model = SoftHscm.random(3, 3, seed=1)
    symbols = rng.integers(0, 3, 25)
    belief, _ = forward_evaluate(model, symbols)

    rows = belief.rows[0]
    assert rows.shape == (25, 3)
    assert np.allclose(rows.sum(axis=1), 1.0)
    assert rows[0].tolist() == [1.0, 0.0, 0.0]


def test_uniform_model_costs_log_alphabet(rng):
    symbols = rng.integers(0, 4, 30)
    belief, nits = forward_evaluate(SoftHscm.uniform(3, 4), symbols)

    assert nits == pytest.approx(30 * np.log(1 / 4), rel=1e-12)
    assert np.allclose(belief.rows[0][1:], 1 / 3)


@pytest.mark.parametrize("bayes", [False, True])
@pytest.mark.parametrize("seed", range(20))
def test_gradient_matches_finite_differences(seed, bayes):
    model = SoftHscm.random(3, 2, seed=seed)
    symbols = np.random.default_rng(seed).integers(0, 2, 20)
    _, grad_t, grad_d = gradient(model, symbols, bayes=bayes)
    h = 1e-5

    for index in np.ndindex(model.t.shape):
        plus, minus = model.copy(), model.copy()
        plus.t[index] += h
        minus.t[index] -= h
        numeric = (log_likelihood(plus, symbols, bayes) - log_likelihood(minus, symbols, bayes)) / (2 * h)
        assert grad_t[index] == pytest.approx(numeric, rel=1e-4, abs=1e-6)
    if not bayes:
        for index in np.ndindex(model.d.shape):
            plus, minus = model.copy(), model.copy()
            plus.d[index] += h
            minus.d[index] -= h
            numeric = (log_likelihood(plus, symbols, False) - log_likelihood(minus, symbols, False)) / (2 * h)
            assert grad_d[index] == pytest.approx(numeric, rel=1e-4, abs=1e-6)


def test_fixed_rows_get_no_gradient(rng):
    model = SoftHscm.random(2, 2, seed=3)
    model.fixed[1, 0] = True
    _, grad_t, _ = gradient(model, rng.integers(0, 2, 30), bayes=True)

    assert (grad_t[:, 1, 0] == 0).all()


def test_optimize_does_not_decrease_likelihood(markov_dataset):
    data = markov_dataset.subset(range(20))
    init = SoftHscm.random(4, 4, seed=2)
    result = optimize_soft(data, 4, steps=5, step_size=1.0, init=init)

    assert log_likelihood(result, data) >= log_likelihood(init, data) - 1e-9
    assert optimize_soft(data, 4, steps=0, step_size=1.0, init=init) is init


def test_optimize_reaches_source_entropy(sticky_transitions):
    rng = np.random.default_rng(11)
    data = dataset_from_sequences([markov_sequence(rng, sticky_transitions, 300) for _ in range(20)], 4)
    pi = stationary(sticky_transitions)
    source = sum(pi[s] * entropy(sticky_transitions[s]) for s in range(4))
    result = optimize_soft(data, 4, steps=20, step_size=1.0, seed=0)

    assert -log_likelihood(result, data) / (6000 * np.log(2)) <= source + 0.05


def test_warm_start_follows_previous_symbol(markov_dataset):
    model = warm_start(markov_dataset, 6)
    targets = model.transitions.argmax(axis=2)

    assert model.t.shape == (6, 6, 4)
    assert (targets == targets[:, :1]).all()
    assert sorted(targets[:, 0].tolist()) == [0, 1, 2, 3]
    assert np.allclose(model.transitions.max(axis=2), 1 - 1e-3)


def test_determinize_fixed_model_keeps_table(markov_dataset, hcb):
    _, _, table = hcb
    data = markov_dataset.subset(range(10))
    result = determinize(SoftHscm.from_transition(table), data)

    assert np.array_equal(result.next, table.next)
    assert np.allclose(result.emit.sum(axis=1), 1.0)


def test_determinize_fixes_every_row(markov_dataset):
    data = markov_dataset.subset(range(10))
    rounds = []
    result = determinize(SoftHscm.random(3, 4, seed=5), data, steps=2, callback=rounds.append)

    assert len(rounds) == 12
    assert rounds[-1].fixed.all()
    assert result.next.shape == (3, 4)
    assert result.state_count == 3
    assert np.isfinite(result.model().bits(data.reads[0].bases))


def test_determinize_run_lengths_against_order1():
    rng = np.random.default_rng(5)
    train, heldout = run_length_reads(rng, 8, 500), run_length_reads(rng, 8, 500)
    soft = optimize_soft(train, 4, steps=10, step_size=1.0, seed=0)
    table = determinize(soft, train, steps=3)
    baseline = empirical_bpv(heldout, fit_model(train, ContextSpec.order_l(1, 4)))

    assert table.state_count == 4
    assert empirical_bpv(heldout, table.model()) <= baseline + 0.01


def test_state_limit():
    with pytest.raises(ModelError):
        SoftHscm.uniform(65, 2)
