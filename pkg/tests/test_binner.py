import itertools

import numpy as np
import pytest

from src.core.binner import (
    BinningTable, CutCriterion, bin_contexts, bin_stats, build_merge_tree, compose, cut_tree,
    enumerate_for_shift, merge_delta, penalty_curve
)
from src.core.ctxstats import ContextStats, rate
from src.core.errors import FormatError, ModelError, StatsError


def set_partitions(items, blocks):
    """Every partition of ``items`` into exactly ``blocks`` non-empty groups."""
    if not items:
        if blocks == 0:
            yield []
        return
    head, rest = items[0], items[1:]
    for partition in set_partitions(rest, blocks - 1):
        yield [[head]] + partition
    for partition in set_partitions(rest, blocks):
        for index in range(len(partition)):
            yield partition[:index] + [[head] + partition[index]] + partition[index + 1:]


def partition_table(partition, size):
    bins = np.zeros(size, dtype=np.int64)
    for bin_id, group in enumerate(partition):
        bins[group] = bin_id
    return BinningTable(bins, len(partition))


def test_merge_delta_is_non_negative(rng):
    for _ in range(10_000):
        row_s = rng.dirichlet(np.ones(4))
        row_r = rng.dirichlet(np.ones(4))
        assert merge_delta(rng.random(), row_s, rng.random(), row_r) >= 0.0


def test_merge_delta_of_identical_rows():
    row = [0.2, 0.3, 0.5]
    assert merge_delta(0.3, row, 0.1, row) == pytest.approx(0.0, abs=1e-12)


def test_penalty_telescopes(rng):
    for _ in range(100):
        stats = ContextStats(rng.integers(0, 30, size=(8, 3)))
        tree = build_merge_tree(stats)
        base = rate(stats).bpv
        for bins in range(1, tree.leaf_count + 1):
            table = cut_tree(tree, CutCriterion.max_bins(bins))
            assert table.n_bins == bins
            assert rate(bin_stats(stats, table)).bpv == pytest.approx(base + table.penalty_bpv, abs=1e-9)


def test_greedy_never_beats_exhaustive_optimum(rng):
    cases = matches = 0
    for index in range(100):
        size, m = 3 + index % 4, 2 + index % 2
        stats = ContextStats(rng.integers(1, 21, size=(size, m)))
        tree = build_merge_tree(stats)
        base = rate(stats).bpv
        for bins in range(1, size + 1):
            best = min(rate(bin_stats(stats, partition_table(p, size))).bpv - base
                       for p in set_partitions(list(range(size)), bins))
            greedy = cut_tree(tree, CutCriterion.max_bins(bins)).penalty_bpv
            assert greedy >= best - 1e-12
            if bins in (1, size - 1, size):
                assert greedy == pytest.approx(best, abs=1e-9)
            cases += 1
            matches += abs(greedy - best) <= 1e-9

    assert matches >= 0.6 * cases


def test_penalty_curve_is_monotone(rng):
    stats = ContextStats(rng.integers(0, 50, size=(16, 4)))
    tree = build_merge_tree(stats)
    curve = penalty_curve(tree)

    assert [bins for bins, _ in curve] == list(range(1, tree.leaf_count + 1))
    assert curve[0][1] == pytest.approx(tree.total_cost)
    assert curve[-1][1] == pytest.approx(0.0, abs=1e-12)
    penalties = [penalty for _, penalty in curve]
    assert all(b <= a + 1e-12 for a, b in zip(penalties, penalties[1:]))


def test_identical_rows_merge_in_id_order():
    stats = ContextStats(np.array([[2, 2]] * 4))
    tree = build_merge_tree(stats)

    assert tree.total_cost == pytest.approx(0.0, abs=1e-12)
    assert cut_tree(tree, CutCriterion.max_bins(2)).bins.tolist() == [0, 0, 0, 1]
    assert cut_tree(tree, CutCriterion.max_penalty(0.0)).n_bins == 1


def test_penalty_cut_separates_distinct_rows():
    stats = ContextStats(np.array([[9, 1], [1, 9], [18, 2], [2, 18]]))
    table = bin_contexts(stats, CutCriterion.max_penalty(1e-9))

    assert table.bins.tolist() == [0, 1, 0, 1]
    assert table.penalty_bpv == pytest.approx(0.0, abs=1e-9)


def test_step_cost_cut():
    stats = ContextStats(np.array([[9, 1], [1, 9], [18, 2], [2, 18]]))
    assert bin_contexts(stats, CutCriterion.max_step_cost(1e-9)).n_bins == 2
    assert bin_contexts(stats, CutCriterion.max_step_cost(10.0)).n_bins == 1


def test_unseen_contexts_go_to_bin_zero():
    stats = ContextStats(np.array([[0, 0], [5, 1], [1, 5], [0, 0]]))
    tree = build_merge_tree(stats)

    assert tree.unseen == (0, 3)
    assert tree.leaf_count == 2
    assert cut_tree(tree, CutCriterion.max_bins(2)).bins.tolist() == [0, 0, 1, 0]


def test_empty_stats_raise():
    with pytest.raises(StatsError):
        build_merge_tree(ContextStats(np.zeros((3, 2), dtype=np.int64)))


def test_cut_criterion_validation():
    with pytest.raises(ValueError):
        CutCriterion.max_bins(0)


def test_tree_members_and_exports(rng):
    stats = ContextStats(rng.integers(1, 10, size=(5, 2)))
    tree = build_merge_tree(stats)

    assert tree.members(tree.root) == [0, 1, 2, 3, 4]
    assert len(tree.internal_nodes) == 4
    assert '"root"' in tree.to_json()
    assert tree.to_csv().splitlines()[0].startswith("node,left,right")


def test_table_validation():
    with pytest.raises(ValueError):
        BinningTable(np.array([0, 2]), 2)
    with pytest.raises(ValueError):
        BinningTable(np.array([0]), 0)
    assert BinningTable.identity(3).is_surjective
    assert not BinningTable(np.array([0, 0]), 2).is_surjective


def test_table_blob_roundtrip():
    table = BinningTable(np.array([2, 0, 1, 1, 0]), 3, 0.125)
    restored = BinningTable.from_bytes(table.to_bytes())

    assert restored.bins.tolist() == table.bins.tolist()
    assert restored.n_bins == 3
    assert restored.penalty_bpv == 0.125
    with pytest.raises(FormatError):
        BinningTable.from_bytes(b"NOPE" + table.to_bytes()[4:])
    with pytest.raises(FormatError):
        BinningTable.from_bytes(table.to_bytes()[:13])


def test_compose_chains_tables():
    fine = BinningTable(np.array([0, 1, 2, 2]), 3)
    coarse = BinningTable(np.array([1, 0, 0]), 2, 0.5)
    composed = compose(fine, coarse)

    assert composed.bins.tolist() == [1, 0, 0, 0]
    assert composed.penalty_bpv == 0.5
    with pytest.raises(ModelError):
        compose(coarse, fine)


def test_enumerate_for_shift_groups_fine_bins():
    fine = BinningTable.identity(4)

    shifted = enumerate_for_shift(fine, BinningTable(np.array([1, 1, 0, 0]), 2), 2)
    assert shifted.bins.tolist() == [2, 3, 0, 1]
    assert shifted.n_bins == 4
    assert (shifted.bins >> 1).tolist() == [1, 1, 0, 0]


def test_enumerate_for_shift_pads_small_groups():
    fine = BinningTable(np.array([0, 1, 2]), 3)
    shifted = enumerate_for_shift(fine, BinningTable(np.array([0, 1, 1]), 2), 2)

    assert shifted.bins.tolist() == [0, 2, 3]
    assert shifted.n_bins == 4
    assert not shifted.is_surjective


def test_enumerate_for_shift_errors():
    fine = BinningTable.identity(4)
    with pytest.raises(ValueError):
        enumerate_for_shift(fine, BinningTable(np.array([0, 0, 1, 1]), 2), 3)
    with pytest.raises(ModelError):
        enumerate_for_shift(fine, BinningTable(np.array([0, 0, 0, 1]), 2), 2)
    straddling = BinningTable(np.array([0, 0, 1, 1]), 2)
    with pytest.raises(ModelError):
        enumerate_for_shift(straddling, BinningTable(np.array([0, 1, 1, 1]), 2), 2)


def test_exhaustive_helper_counts():
    # Stirling numbers of the second kind S(5, k)
    counts = [sum(1 for _ in set_partitions(list(range(5)), k)) for k in range(1, 6)]
    assert counts == [1, 15, 25, 10, 1]
    assert list(itertools.chain.from_iterable(next(set_partitions([0, 1, 2], 1)))) == [0, 1, 2]
