from __future__ import annotations

import random

import numpy as np
import pytest

from changedeps.deps import DEPENDS_ON, DependencyEdge
from changedeps.pipeline import (
    build_testing_pairs,
    build_training_pairs,
    correlation_pass,
    prune_across_folds,
    prune_features,
    r_squared,
    time_ordered_folds,
)
from conftest import at, make_change


def edge(s, t, hours=0.0):
    return DependencyEdge(s, t, DEPENDS_ON, t, 1, at(hours))


# --- folds ----------------------------------------------------------------

def test_hundred_changes_ten_folds():
    changes = [make_change(i, i * 0.5) for i in range(1, 101)]
    split = time_ordered_folds(changes, 10)
    assert [len(f) for f in split.folds] == [10] * 10
    for a, b in zip(split.boundaries, split.boundaries[1:]):
        assert a[1] <= b[0]


def test_uneven_sizes_differ_by_one():
    split = time_ordered_folds([make_change(i, i) for i in range(1, 102)], 10)
    sizes = [len(f) for f in split.folds]
    assert sum(sizes) == 101 and max(sizes) - min(sizes) == 1


def test_shuffled_input_gives_identical_folds():
    changes = [make_change(i, (i * 37) % 50) for i in range(1, 60)]
    oracle = sorted(changes, key=lambda c: (c.created_at, c.change_number))
    shuffled = list(changes)
    random.Random(3).shuffle(shuffled)
    a = time_ordered_folds(shuffled, 7)
    b = time_ordered_folds(oracle, 7)
    assert a == b
    flat = [n for f in a.folds for n in f]
    assert flat == [c.change_number for c in oracle]


def test_rounds_train_before_test():
    split = time_ordered_folds([make_change(i, i) for i in range(1, 41)], 4)
    rounds = list(split.rounds())
    assert [r for r, _, _ in rounds] == [1, 2, 3]
    for _, train, test in rounds:
        assert max(train) < min(test)


@pytest.mark.parametrize("k, n", [(1, 10), (11, 10), (2, 0)])
def test_fold_errors(k, n):
    with pytest.raises(ValueError):
        time_ordered_folds([make_change(i, i) for i in range(1, n + 1)], k)


# --- training pairs ---------------------------------------------------------

def dependent_fixture():
    days = 24.0
    changes = [make_change(i, i * 2 * days) for i in range(1, 12)]
    changes.append(make_change(12, 60 * days))
    # gaps in days: 2, 2, 4, 2, 6 -> inside 30; 7 -> 12 is 46 days, outside
    edges = [edge(1, 2), edge(2, 3), edge(3, 5), edge(5, 6), edge(6, 9), edge(7, 12)]
    return changes, edges


def test_training_pairs_balanced_and_windowed():
    changes, edges = dependent_fixture()
    ds = build_training_pairs(changes, edges, window_days=30, seed=1)
    pos = [p for p, y in zip(ds.pairs, ds.labels) if y]
    neg = [p for p, y in zip(ds.pairs, ds.labels) if not y]
    assert sorted(pos) == [(1, 2), (2, 3), (3, 5), (5, 6), (6, 9)]
    assert len(neg) == 5
    created = {c.change_number: c.created_at for c in changes}
    truth = {(e.source_change, e.target_change) for e in edges}
    for s, t in neg:
        assert (s, t) not in truth
        assert 0 < (created[t] - created[s]).days <= 30
    assert ds.provenance == "train" and ds.window_days == 30


def test_training_pairs_deterministic():
    changes, edges = dependent_fixture()
    a = build_training_pairs(changes, edges, seed=7)
    b = build_training_pairs(changes, edges, seed=7)
    assert a.pairs == b.pairs and np.array_equal(a.labels, b.labels)


def test_training_pairs_without_positives_warns():
    changes = [make_change(1, 0), make_change(2, 24 * 45)]
    with pytest.warns(UserWarning, match="empty"):
        ds = build_training_pairs(changes, [edge(1, 2)], window_days=30)
    assert len(ds) == 0


# --- testing pairs ----------------------------------------------------------

def stratified_fixture(n_targets=10, per_target=130, positives_per_target=30):
    """Each target sees ``per_target`` candidates, the first few of them true sources."""
    pool, targets, edges = [], [], []
    number = 1
    for t in range(n_targets):
        base = t * 24 * 40
        sources = []
        for j in range(per_target):
            pool.append(make_change(number, base + j * 0.01))
            sources.append(number)
            number += 1
        target = make_change(number, base + 10)
        targets.append(target)
        edges.extend(edge(s, number) for s in sources[:positives_per_target])
        number += 1
    return targets, pool, edges


def test_paper_sampling_arithmetic_fifteen_and_fifty():
    targets, pool, edges = stratified_fixture()
    for pct, want in ((0.05, (15, 50)), (0.10, (30, 100))):
        ds = build_testing_pairs(targets, pool, edges, sample_pct=pct, seed=0)
        assert (ds.n_positive, len(ds) - ds.n_positive) == want
    full = build_testing_pairs(targets, pool, edges, sample_pct=1.0)
    assert (full.n_positive, len(full)) == (300, 1300)


def test_testing_pairs_have_unique_in_window_sources():
    targets, pool, edges = stratified_fixture(3, 40, 5)
    ds = build_testing_pairs(targets, pool, edges, sample_pct=0.5, seed=2)
    assert len(set(ds.pairs)) == len(ds.pairs)
    created = {c.change_number: c.created_at for c in pool + targets}
    for s, t in ds.pairs:
        assert created[s] < created[t]
        assert (created[t] - created[s]).days <= 30


def test_empty_and_tiny_strata_warn():
    targets, pool, _ = stratified_fixture(2, 20, 0)
    with pytest.warns(UserWarning, match="empty dependent stratum"):
        ds = build_testing_pairs(targets, pool, [], sample_pct=0.1)
    assert ds.n_positive == 0 and len(ds) == 4
    targets, pool, edges = stratified_fixture(1, 30, 4)
    with pytest.warns(UserWarning, match="taking all"):
        ds = build_testing_pairs(targets, pool, edges, sample_pct=0.1)
    assert ds.n_positive == 4


# --- pruning --------------------------------------------------------------

def test_perfect_collinearity_keeps_one():
    rng = np.random.default_rng(0)
    ins, dels = rng.poisson(20, 300).astype(float), rng.poisson(5, 300).astype(float)
    other = rng.normal(size=300)
    X = np.column_stack([ins, dels, ins + dels, ins + dels, other])
    res = prune_features(X, ["insertions", "deletions", "code_churn", "churn_copy", "other"])
    assert len({"code_churn", "churn_copy"} & set(res.kept)) <= 1
    assert "other" in res.kept


def test_independent_features_untouched():
    X = np.random.default_rng(1).normal(size=(400, 6))
    names = [f"f{i}" for i in range(6)]
    assert prune_features(X, names).kept == names


def test_redundancy_pass_removes_linear_combination():
    # every pairwise |rho| stays near 0.58, under the 0.7 cut, so only the
    # regression on the kept set can catch c
    rng = np.random.default_rng(2)
    a, b, d = (rng.normal(size=500) for _ in range(3))
    c = 0.95 * (a + b + d) + rng.normal(scale=0.1, size=500)
    X = np.column_stack([a, b, d, c])
    assert r_squared(c, np.column_stack([a, b, d])) > 0.9
    res = prune_features(X, ["a", "b", "d", "c"])
    assert res.kept == ["a", "b", "d"]
    assert res.removed["c"].startswith("redundant")


def test_constant_column_excluded_with_warning():
    X = np.column_stack([np.arange(10.0), np.ones(10)])
    with pytest.warns(UserWarning, match="constant"):
        res = correlation_pass(X, ["x", "flat"])
    assert res.kept == ["x"] and res.removed["flat"] == "constant"


def test_prune_needs_two_rows():
    with pytest.raises(ValueError):
        prune_features(np.zeros((1, 3)), ["a", "b", "c"])


def test_representative_tie_goes_to_earlier_name():
    rng = np.random.default_rng(5)
    x = rng.normal(size=200)
    res = correlation_pass(np.column_stack([x, x]), ["first", "second"])
    assert res.kept == ["first"]


def test_across_folds_one_kept_list():
    rng = np.random.default_rng(4)
    mats = []
    for _ in range(4):
        a = rng.normal(size=150)
        mats.append(np.column_stack([a, a + rng.normal(scale=0.3, size=150),
                                     rng.normal(size=150)]))
    kept, removed, per_fold = prune_across_folds(mats, ["a", "a2", "z"])
    assert len({"a", "a2"} & set(kept)) == 1 and "z" in kept
    assert all(set(kept) <= set(r.kept) for r in per_fold)
