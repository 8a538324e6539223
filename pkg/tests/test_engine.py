"""Operation-level checks of the counting machinery on the worked fixture."""

import numpy as np
import pytest

from cpknn import CandidateSet, IncompleteDataset, brute_force, q1_mm, q1_via_q2, q2, q2_ss
from cpknn.engine import (BinaryLabelsRequired, BruteForceLimitExceeded, Q2Answer,
                          boundary_count, initial_tally, label_support_dp, scan_order,
                          similarity_table, support, tally_advance)
from cpknn.knn import knn_predict


def walk_to_pivot(table, pivot):
    alpha = initial_tally(len(table.scores))
    for p in scan_order(table):
        tally_advance(alpha, p)
        if p == pivot:
            return alpha
    raise AssertionError(f"pivot {pivot} not found")


def test_scan_order_matches_fixture(worked_example):
    dataset, t = worked_example
    table = similarity_table(dataset, t)
    assert scan_order(table) == [(1, 0), (0, 0), (1, 1), (2, 0), (0, 1), (2, 1)]


def test_scan_order_reversed_scores(worked_example):
    dataset, t = worked_example
    table = similarity_table(dataset, t)
    flipped = similarity_table(
        IncompleteDataset([CandidateSet(-row.candidates, row.label) for row in dataset.rows],
                          2, 1), t)
    # negating 1-D coordinates preserves distances to t=0, hence the order
    assert scan_order(flipped) == scan_order(table)


def test_similarity_table_pointwise_permutation(worked_example):
    dataset, t = worked_example
    base = similarity_table(dataset, t)
    swapped_rows = [CandidateSet(dataset.rows[0].candidates[::-1], 1),
                    dataset.rows[1], dataset.rows[2]]
    swapped = similarity_table(IncompleteDataset(swapped_rows, 2, 1), t)
    assert np.array_equal(swapped.scores[0], base.scores[0][::-1])


def test_tally_advance_reaches_known_counts(worked_example):
    dataset, t = worked_example
    table = similarity_table(dataset, t)
    # at pivot x_{2,2} (0-based (1,1)) the counts are [1, 2, 0]
    assert walk_to_pivot(table, (1, 1)) == [1, 2, 0]
    # the advance from (0,0) to (1,1) incremented exactly the pivot's row
    assert walk_to_pivot(table, (0, 0)) == [1, 1, 0]


def test_tally_after_final_pivot_counts_everything(worked_example):
    dataset, t = worked_example
    table = similarity_table(dataset, t)
    alpha = initial_tally(3)
    for p in scan_order(table):
        tally_advance(alpha, p)
    assert alpha == table.sizes


def test_boundary_counts_from_fixture(worked_example):
    dataset, t = worked_example
    table = similarity_table(dataset, t)
    sizes = table.sizes
    assert boundary_count(2, walk_to_pivot(table, (2, 0)), sizes, k=1) == 2
    assert boundary_count(1, walk_to_pivot(table, (1, 1)), sizes, k=1) == 0


def test_boundary_zero_factor():
    # a row with alpha 0 forced below kills every product at k=1
    assert boundary_count(0, [1, 0, 2], [2, 2, 2], k=1) == 0


def test_label_support_dp_fixture_values(worked_example):
    dataset, t = worked_example
    table = similarity_table(dataset, t)
    alpha = walk_to_pivot(table, (2, 0))
    labels = dataset.labels()
    c0 = label_support_dp(2, alpha, table.sizes, labels, 0, k=1)
    c1 = label_support_dp(2, alpha, table.sizes, labels, 1, k=1)
    assert c0[1] == 1
    assert c1[0] == 2
    assert support(2, (1, 0), [c0, c1], labels) == 2


def test_label_support_skips_foreign_labels():
    # every row has label 1, so the label-0 DP leaves the base row untouched
    dp = label_support_dp(0, [1, 1], [2, 2], [1, 1], 0, k=2)
    assert dp[0] == 1 and dp[1] == 0 and dp[2] == 0


def test_support_zero_when_pivot_label_unused(worked_example):
    dataset, t = worked_example
    table = similarity_table(dataset, t)
    alpha = walk_to_pivot(table, (2, 0))
    labels = dataset.labels()
    dps = [label_support_dp(2, alpha, table.sizes, labels, l, 1) for l in (0, 1)]
    assert support(2, (0, 1), dps, labels) == 0


def test_q2_fixture_counts_all_engines(worked_example):
    dataset, t = worked_example
    for engine in ("ss", "ss-dc", "ss-dc-mc", "brute"):
        answer = q2(dataset, t, k=1, engine=engine)
        assert answer.per_label == [6, 2]
        assert answer.total_worlds == 8


def test_q2_singleton_rows_collapse_to_knn(worked_example):
    rng = np.random.default_rng(5)
    X = rng.normal(size=(6, 2))
    y = rng.integers(0, 3, size=6)
    dataset = IncompleteDataset(
        [CandidateSet(x[None, :], int(lab)) for x, lab in zip(X, y)], 3, 2)
    t = rng.normal(size=2)
    answer = q2_ss(dataset, t, k=3)
    predicted = knn_predict((X, y), t, k=3)
    assert answer.per_label[predicted] == 1
    assert sum(answer.per_label) == 1


def test_q1_via_q2_exact_and_normalized():
    assert q1_via_q2(Q2Answer([8, 0], 8, "exact")) == [True, False]
    assert q1_via_q2(Q2Answer([6, 2], 8, "exact")) == [False, False]
    assert q1_via_q2(Q2Answer([0, 0, 5], 5, "exact")) == [False, False, True]
    with pytest.raises(ValueError):
        q1_via_q2(Q2Answer([1.0, 0.0], 1.0, "normalized"))
    assert q1_via_q2(Q2Answer([1.0, 0.0], 1.0, "normalized"), tolerance=1e-9) == [True, False]


def test_q1_mm_requires_binary(worked_example):
    rows = [CandidateSet(np.array([[float(i)]]), i) for i in range(3)]
    with pytest.raises(BinaryLabelsRequired):
        q1_mm(IncompleteDataset(rows, 3, 1), np.array([0.0]), k=1)


def test_q1_mm_clean_dataset_matches_knn():
    rng = np.random.default_rng(11)
    X = rng.normal(size=(5, 2))
    y = rng.integers(0, 2, size=5)
    dataset = IncompleteDataset(
        [CandidateSet(x[None, :], int(lab)) for x, lab in zip(X, y)], 2, 2)
    t = rng.normal(size=2)
    flags = q1_mm(dataset, t, k=3)
    assert flags[knn_predict((X, y), t, k=3)] is True
    assert sum(flags) == 1


def test_extreme_worlds_agree_on_constructed_instance():
    # N=6, M=4, K=3: built so both extreme worlds predict label 1
    rng = np.random.default_rng(2)
    rows = []
    for i in range(6):
        label = 1 if i < 4 else 0
        base = 1.0 if label == 1 else 6.0
        cands = base + rng.uniform(0, 2.0, size=(4, 1))
        rows.append(CandidateSet(cands, label))
    dataset = IncompleteDataset(rows, 2, 1)
    t = np.array([0.0])
    flags = q1_mm(dataset, t, k=3)
    assert flags == [False, True]
    assert brute_force(dataset, t, k=3)[0] == flags


def test_brute_force_world_count(worked_example):
    dataset, t = worked_example
    flags, counts = brute_force(dataset, t, k=1)
    assert sum(counts) == 8 == dataset.world_count()
    assert flags == [False, False]


def test_brute_force_limit_refusal(worked_example):
    dataset, t = worked_example
    with pytest.raises(BruteForceLimitExceeded):
        brute_force(dataset, t, k=1, limit=7)


def test_k_equal_n_unanimous(worked_example):
    dataset, t = worked_example
    for engine in ("ss", "ss-dc", "ss-dc-mc"):
        answer = q2(dataset, t, k=3, engine=engine)
        assert answer.per_label == [0, 8]


def test_k_out_of_range_rejected(worked_example):
    dataset, t = worked_example
    with pytest.raises(ValueError):
        q2_ss(dataset, t, k=4)


def test_boundary_count_is_sum_of_supports():
    # dual route: the enumeration oracle equals the summed DP supports
    import random as _random
    from cpknn.engine import compositions
    rng = _random.Random(55)
    for _ in range(30):
        dataset, t = random_instance_local(rng)
        table = similarity_table(dataset, t)
        sizes = table.sizes
        labels = dataset.labels()
        k = min(3, len(dataset.rows))
        alpha = initial_tally(len(sizes))
        order = scan_order(table)
        probe = {order[0], order[len(order) // 2], order[-1]}
        for pivot in order:
            tally_advance(alpha, pivot)
            if pivot not in probe:
                continue
            i = pivot[0]
            dps = [label_support_dp(i, alpha, sizes, labels, l, k)
                   for l in range(dataset.num_labels)]
            total = sum(support(i, g, dps, labels)
                        for g in compositions(k, dataset.num_labels) if g[labels[i]] >= 1)
            assert total == boundary_count(i, alpha, sizes, k)


def random_instance_local(rng):
    from conftest import random_instance
    dataset, t = random_instance(rng, max_rows=6, max_cands=3, max_labels=3)
    while len(dataset.rows) < 3:
        dataset, t = random_instance(rng, max_rows=6, max_cands=3, max_labels=3)
    return dataset, t


def test_mc_engine_handles_many_labels():
    import random as _random
    from cpknn.engine import q2_ss_dc_mc
    rng = _random.Random(91)
    checked = 0
    while checked < 40:
        dataset, t = random_instance_local_big(rng)
        if dataset.num_labels < 4:
            continue
        checked += 1
        k = min(3, len(dataset.rows))
        flags, counts = brute_force(dataset, t, k=k)
        assert q2_ss_dc_mc(dataset, t, k=k).per_label == counts


def random_instance_local_big(rng):
    from conftest import random_instance
    return random_instance(rng, max_rows=6, max_cands=3, max_labels=6,
                           grid=[0.0, 0.5, 1.0, 1.5, 2.0, 2.5])
