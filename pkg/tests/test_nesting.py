import json

import numpy as np
import pytest

from src.core.context_model import mapper_from_descriptor
from src.core.ctxstats import ContextSpec, collect_stats, empirical_bpv, fit_model, rate
from src.core.errors import ModelError
from src.core.nesting import NestingScheme, SymmetricMapper, nested_binning
from src.core.seqio import dataset_from_sequences


def cursor_contexts(mapper, symbols):
    cursor = mapper.cursor()
    out = []
    for symbol in symbols:
        out.append(cursor.context)
        cursor.push(symbol)
    return out


def check_mapper(mapper, data):
    restored = mapper_from_descriptor(json.loads(json.dumps(mapper.descriptor())))
    for read in data.reads[:5]:
        ids = mapper.context_ids(read.bases)
        assert ids.min() >= 0 and ids.max() < mapper.n_contexts
        assert cursor_contexts(mapper, read.bases) == ids.tolist()
        assert np.array_equal(restored.context_ids(read.bases), ids)


@pytest.fixture
def order0_bpv(markov_dataset):
    return empirical_bpv(markov_dataset, fit_model(markov_dataset, ContextSpec.order_l(0, 4)))


def test_symmetric_nesting(markov_dataset, order0_bpv):
    model = nested_binning(markov_dataset, NestingScheme.SYMMETRIC, 4, [8, 16])
    mapper = model.mapper

    assert isinstance(mapper, SymmetricMapper)
    assert mapper.order == 4
    assert mapper.tables[0].n_bins <= 8
    assert mapper.tables[1].context_count == mapper.tables[0].n_bins ** 2
    check_mapper(mapper, markov_dataset)
    assert empirical_bpv(markov_dataset, model) < order0_bpv - 0.1


def test_asymmetric_nesting(markov_dataset, order0_bpv):
    model = nested_binning(markov_dataset, NestingScheme.ASYMMETRIC, 4, [8, 4])
    mapper = model.mapper

    assert mapper.order == 4
    assert mapper.table.n_bins % (1 << mapper.shift) == 0
    check_mapper(mapper, markov_dataset)
    assert empirical_bpv(markov_dataset, model) < order0_bpv - 0.1


def test_hierarchical_nesting(markov_dataset, order0_bpv):
    model = nested_binning(markov_dataset, NestingScheme.HIERARCHICAL, 4, [4, 4])
    mapper = model.mapper

    assert mapper.order == 4
    assert 1 < mapper.n_main <= 16
    check_mapper(mapper, markov_dataset)
    assert empirical_bpv(markov_dataset, model) < order0_bpv - 0.1


def test_hierarchical_collapses_without_gain(markov_dataset):
    model = nested_binning(markov_dataset, NestingScheme.HIERARCHICAL, 4, [4, 4], min_gain=1e9)
    assert model.mapper.n_main == 1


def test_hierarchical_threads_match(markov_dataset):
    single = nested_binning(markov_dataset, NestingScheme.HIERARCHICAL, 4, [4, 4]).mapper
    threaded = nested_binning(markov_dataset, NestingScheme.HIERARCHICAL, 4, [4, 4], threads=4).mapper
    assert np.array_equal(single.links, threaded.links)


@pytest.mark.parametrize("scheme,order,budgets", [
    (NestingScheme.SYMMETRIC, 3, [4, 4]),
    (NestingScheme.SYMMETRIC, 4, [4]),
    (NestingScheme.ASYMMETRIC, 3, [4, 4]),
    (NestingScheme.ASYMMETRIC, 4, [4]),
    (NestingScheme.HIERARCHICAL, 5, [4, 4]),
])
def test_budget_validation(markov_dataset, scheme, order, budgets):
    with pytest.raises(ValueError):
        nested_binning(markov_dataset, scheme, order, budgets)


def test_hierarchical_needs_long_reads():
    data = dataset_from_sequences([[0, 1, 2], [3, 3]], 4)
    with pytest.raises(ModelError):
        nested_binning(data, NestingScheme.HIERARCHICAL, 4, [4, 4])


def test_short_reads_use_start_contexts(markov_dataset):
    mapper = nested_binning(markov_dataset, NestingScheme.SYMMETRIC, 4, [8, 16]).mapper
    short = np.array([1, 2, 3])
    ids = mapper.context_ids(short)

    assert (ids >= mapper.n_main).all()
    assert cursor_contexts(mapper, short) == ids.tolist()


def order2_dataset(rng, reads=200, length=200):
    conditionals = rng.dirichlet(np.full(4, 0.5), size=16)
    out = []
    for _ in range(reads):
        symbols = list(rng.integers(0, 4, 2))
        for _ in range(length - 2):
            symbols.append(int(rng.choice(4, p=conditionals[symbols[-2] * 4 + symbols[-1]])))
        out.append(np.array(symbols))
    return dataset_from_sequences(out, 4)


def test_symmetric_full_budget_is_order2(markov_dataset):
    model = nested_binning(markov_dataset, NestingScheme.SYMMETRIC, 2, [16])
    order2 = rate(collect_stats(markov_dataset, ContextSpec.order_l(2, 4))).bpv

    assert rate(collect_stats(markov_dataset, model.mapper)).bpv == pytest.approx(order2, abs=1e-9)
    assert empirical_bpv(markov_dataset, model) == pytest.approx(
        empirical_bpv(markov_dataset, fit_model(markov_dataset, ContextSpec.order_l(2, 4))), abs=1e-9)


def test_symmetric_order4_keeps_order2_source_rate(rng):
    data = order2_dataset(rng)
    model = nested_binning(data, NestingScheme.SYMMETRIC, 4, [16, 64])
    order2 = rate(collect_stats(data, ContextSpec.order_l(2, 4), first=4)).bpv

    assert rate(collect_stats(data, model.mapper)).bpv <= order2 + 0.02
