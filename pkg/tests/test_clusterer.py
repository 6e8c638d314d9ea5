import numpy as np
import pytest

from src.core.clusterer import (
    ModelSet, bpv_histogram, extend_centroids, header_cost, kmeans_cluster, read_model_cost
)
from src.core.context_model import ConditionalModel
from src.core.ctxstats import ContextSpec
from src.core.errors import FormatError, ModelError
from src.core.seqio import dataset_from_sequences


def purity(assignment, labels):
    agree = np.mean(assignment == labels)
    return max(agree, 1.0 - agree)


def test_two_populations_are_separated(two_population_dataset):
    data, labels = two_population_dataset
    model_set = kmeans_cluster(data, ContextSpec.order_l(0, 4), 2, seed=0)

    assert model_set.k == 2
    assert purity(model_set.assignment, labels) >= 0.99
    assert sorted(model_set.cluster_sizes.tolist()) == [60, 60]


@pytest.mark.parametrize("seed", range(50))
def test_total_cost_never_increases(markov_dataset, seed):
    model_set = kmeans_cluster(markov_dataset, ContextSpec.order_l(1, 4), 3, seed=seed)
    history = model_set.history

    assert all(b <= a for a, b in zip(history, history[1:]))
    assert history[-1] == min(history)
    assert model_set.total_bits == pytest.approx(history[-1])
    assert model_set.read_bits.sum() == pytest.approx(model_set.total_bits)


def test_single_cluster_matches_fitted_model(markov_dataset):
    spec = ContextSpec.order_l(1, 4)
    model_set = kmeans_cluster(markov_dataset, spec, 1)
    fitted = ConditionalModel.fit(spec.mapper(), [read.bases for read in markov_dataset.reads])
    expected = sum(read_model_cost(read, fitted) for read in markov_dataset.reads)

    assert model_set.total_bits == pytest.approx(expected, rel=1e-9)


def test_threads_match_single_worker(two_population_dataset):
    data, _ = two_population_dataset
    spec = ContextSpec.order_l(0, 4)
    single = kmeans_cluster(data, spec, 3, seed=4)
    threaded = kmeans_cluster(data, spec, 3, seed=4, threads=3)

    assert np.array_equal(single.assignment, threaded.assignment)
    assert single.total_bits == pytest.approx(threaded.total_bits)


def test_too_many_clusters():
    data = dataset_from_sequences([[0, 1], [1, 2]], 4)
    with pytest.raises(ModelError):
        kmeans_cluster(data, ContextSpec.order_l(0, 4), 3)


def test_explicit_initial_centroids(two_population_dataset):
    data, labels = two_population_dataset
    init = [np.array([[70.0, 10.0, 10.0, 10.0]]), np.array([[10.0, 10.0, 10.0, 70.0]])]
    model_set = kmeans_cluster(data, ContextSpec.order_l(0, 4), 2, init=init)

    assert np.array_equal(model_set.assignment, labels)
    with pytest.raises(ModelError):
        kmeans_cluster(data, ContextSpec.order_l(0, 4), 3, init=init)


def test_extend_centroids_adds_worst_read(two_population_dataset):
    data, _ = two_population_dataset
    model_set = kmeans_cluster(data, ContextSpec.order_l(0, 4), 2, seed=0)
    tables = extend_centroids(model_set, data)

    assert len(tables) == 3
    assert tables[2].sum() == 100
    grown = kmeans_cluster(data, ContextSpec.order_l(0, 4), 3, init=tables)
    assert grown.total_bits <= model_set.total_bits * (1 + 1e-6)


def test_header_cost():
    assignment = [0, 1, 2, 3] * 25
    cost = header_cost(4, assignment, 100 * 101)

    assert cost.flat_bpv == pytest.approx(2 / 101)
    assert cost.entropy_bpv == pytest.approx(2 / 101)
    skewed = header_cost(4, [0] * 100, 100 * 101)
    assert skewed.entropy_bpv == 0.0
    assert header_cost(4, [], 0).flat_bpv == 0.0


def test_model_set_blob(markov_dataset):
    model_set = kmeans_cluster(markov_dataset, ContextSpec.order_l(1, 4), 2, seed=1)
    restored = ModelSet.from_bytes(model_set.to_bytes())

    assert restored.k == 2
    for a, b in zip(restored.centroids, model_set.centroids):
        assert np.array_equal(a.counts, b.counts)
    with pytest.raises(FormatError):
        ModelSet.from_bytes(b"XXXX" + model_set.to_bytes()[4:])
    with pytest.raises(FormatError):
        ModelSet.from_bytes(model_set.to_bytes() + b"\x00")


def test_reports(two_population_dataset):
    data, _ = two_population_dataset
    model_set = kmeans_cluster(data, ContextSpec.order_l(0, 4), 2, seed=0)

    rows = bpv_histogram(model_set, data, bins=10)
    assert len(rows) == 20
    assert sum(count for _, _, _, count in rows) == len(data)
    summary = model_set.summary_csv(data).splitlines()
    assert summary[0] == "cluster,reads,symbols,bits,bpv"
    assert len(summary) == 3
