from __future__ import annotations

import json
import math

import numpy as np
import pytest

from changedeps.explain import (
    feature_stats,
    importance_table,
    native_importances,
    permutation_importance,
    perturbation_impact,
    scott_knott_rank,
    write_importance_table,
)
from changedeps.models import ClassifierSpec, TrainedModel, train


class Logistic:
    """Fixed-weight stand-in for a fitted estimator."""

    def __init__(self, weights, bias=0.0):
        self.w = np.asarray(weights, dtype=np.float64)
        self.b = bias

    def predict_proba(self, X):
        with np.errstate(over="ignore"):
            p = 1.0 / (1.0 + np.exp(-(X @ self.w + self.b)))
        return np.column_stack([1 - p, p])


def stub(weights, names, bias=0.0):
    return TrainedModel(ClassifierSpec("random_forest"), Logistic(weights, bias), names)


# --- permutation importance ------------------------------------------------

@pytest.fixture(scope="module")
def leaky():
    rng = np.random.default_rng(0)
    y = rng.integers(0, 2, 600)
    X = np.column_stack([y + 0.05 * rng.normal(size=600),
                         rng.normal(size=600), rng.normal(size=600)])
    return X, y


def test_label_feature_ranks_first(leaky):
    X, y = leaky
    model = train(ClassifierSpec("random_forest", seed=0), X[:400], y[:400], ["label", "n1", "n2"])
    scores = permutation_importance(model, X[400:], y[400:], seed=1)
    assert max(scores, key=scores.get) == "label"
    assert scores["label"] > 0.3
    assert scores["n1"] < 0.05 and scores["n2"] < 0.05


def test_importance_seeded_and_clamped(leaky):
    X, y = leaky
    model = stub([0.0, 1.0, 0.0], ["label", "n1", "n2"])
    a = permutation_importance(model, X, y, seed=4)
    assert a == permutation_importance(model, X, y, seed=4)
    assert a["label"] == 0.0 and a["n2"] == 0.0
    assert min(a.values()) >= 0.0
    raw = permutation_importance(model, X, y, seed=4, clamp=False)
    assert raw["n1"] == pytest.approx(raw["n1"])


def test_constant_column_scores_zero():
    X = np.column_stack([np.arange(20.0), np.ones(20)])
    y = (np.arange(20) > 9).astype(int)
    scores = permutation_importance(stub([1.0, 3.0], ["x", "c"], -10), X, y)
    assert scores["c"] == 0.0 and scores["x"] > 0.0


def test_duplicated_columns_split_credit(leaky):
    X, y = leaky
    single = train(ClassifierSpec("random_forest", seed=0), X[:400], y[:400], ["label", "n1", "n2"])
    s_single = permutation_importance(single, X[400:], y[400:], seed=2)["label"]
    Xd = np.column_stack([X[:, 0], X[:, 0], X[:, 1]])
    double = train(ClassifierSpec("random_forest", seed=0), Xd[:400], y[:400], ["l1", "l2", "n1"])
    s_double = permutation_importance(double, Xd[400:], y[400:], seed=2)
    assert s_double["l1"] < s_single and s_double["l2"] < s_single


def test_permutation_errors():
    model = stub([1.0], ["x"])
    with pytest.raises(ValueError):
        permutation_importance(model, np.zeros((0, 1)), np.zeros(0))
    with pytest.raises(ValueError):
        permutation_importance(model, np.ones((3, 1)), [0, 1, 0], repeats=0)


# --- Scott-Knott -----------------------------------------------------------

def two_clusters(rng):
    # members of a cluster share one noise vector in shuffled order, so their
    # means are equal and only the cluster gap is real
    hi, lo = 0.9 + 0.01 * rng.normal(size=10), 0.1 + 0.01 * rng.normal(size=10)
    scores = {f"hi{i}": list(rng.permutation(hi)) for i in range(3)}
    scores.update({f"lo{i}": list(rng.permutation(lo)) for i in range(4)})
    return scores


def test_two_separated_clusters_give_two_groups():
    ranking = scott_knott_rank(two_clusters(np.random.default_rng(0)))
    assert ranking.n_groups == 2
    assert ranking.group(1) == ["hi0", "hi1", "hi2"]
    assert ranking.group(2) == ["lo0", "lo1", "lo2", "lo3"]
    assert ranking.ordered()[:3] == sorted(ranking.group(1), key=lambda f: -ranking.mean_score(f))


def test_identical_distributions_one_group():
    rng = np.random.default_rng(1)
    base = list(0.5 + 0.05 * rng.normal(size=10))
    ranking = scott_knott_rank({f"f{i}": list(base) for i in range(6)})
    assert ranking.n_groups == 1


def test_overlapping_noise_one_group():
    rng = np.random.default_rng(2)
    ranking = scott_knott_rank({f"f{i}": list(0.5 + 0.1 * rng.normal(size=10)) for i in range(6)})
    assert ranking.n_groups == 1


def test_relabel_and_shift_invariance():
    rng = np.random.default_rng(3)
    scores = two_clusters(rng)
    scores["mid"] = list(0.5 + 0.01 * rng.normal(size=10))
    base = scott_knott_rank(scores)
    rename = {f: f"z_{f[::-1]}" for f in scores}
    relabeled = scott_knott_rank({rename[f]: v for f, v in reversed(list(scores.items()))})
    assert {rename[f]: r for f, r in base.final_rank.items()} == relabeled.final_rank
    shifted = scott_knott_rank({f: [x + 7.5 for x in v] for f, v in scores.items()})
    assert shifted.final_rank == base.final_rank
    assert base.n_groups == 3


def test_classic_splits_small_real_differences_esd_merges_them():
    rng = np.random.default_rng(8)
    noise = 0.05 * rng.normal(size=40)
    scores = {"a": list(0.50 + noise), "b": list(0.54 + rng.permutation(noise)),
              "c": list(0.10 + rng.permutation(noise))}
    classic = scott_knott_rank(scores)
    assert classic.n_groups == 3
    esd = scott_knott_rank(scores, variant="esd", negligible=1.0)
    assert esd.group(1) == ["a", "b"] and esd.n_groups == 2
    with pytest.raises(ValueError):
        scott_knott_rank(scores, variant="bayes")


def test_scott_knott_needs_two_rounds():
    with pytest.raises(ValueError):
        scott_knott_rank({"a": [0.1], "b": [0.2]})
    assert scott_knott_rank({}).n_groups == 0


# --- perturbation impact ---------------------------------------------------

def test_monotone_model_positive_impact_and_ignored_feature_zero():
    rng = np.random.default_rng(5)
    models, stats = [], []
    for _ in range(3):
        X = rng.normal(loc=[2.0, 0.0], size=(200, 2))
        models.append(stub([1.5, 0.0], ["up", "ignored"], -2.0))
        stats.append(feature_stats(X, ["up", "ignored"]))
    up, ignored = perturbation_impact(models, stats)
    assert all(v > 0 for v in up.relative_impact)
    assert ignored.relative_impact == [0.0, 0.0, 0.0]
    med, sd = stats[0]["up"]
    p_i = 1 / (1 + math.exp(-(1.5 * med - 2.0)))
    p_t = 1 / (1 + math.exp(-(1.5 * (med + sd) - 2.0)))
    assert up.relative_impact[0] == pytest.approx((p_t - p_i) / p_i)


def test_boolean_flags_move_to_one():
    X = np.column_stack([np.zeros(10), np.arange(10.0)])
    stats = [feature_stats(X, ["is_corrective", "x"])]
    rec = perturbation_impact([stub([2.0, 0.0], ["is_corrective", "x"])], stats)[0]
    assert rec.perturbed_probability[0] == pytest.approx(1 / (1 + math.exp(-2.0)))


def test_zero_baseline_is_excluded_with_warning():
    X = np.zeros((5, 1))
    model = TrainedModel(ClassifierSpec("random_forest"), Logistic([0.0], -800.0), ["x"])
    with pytest.warns(UserWarning, match="undefined"):
        rec = perturbation_impact([model], [feature_stats(X, ["x"])])[0]
    assert rec.relative_impact == [None] and rec.excluded_rounds == [1]
    assert math.isnan(rec.summary["median"])


def test_impact_needs_matching_stats():
    with pytest.raises(ValueError):
        perturbation_impact([stub([1.0], ["x"])], [])


# --- tables ------------------------------------------------------------------

def test_importance_table_roundtrip(tmp_path):
    ranking = scott_knott_rank(two_clusters(np.random.default_rng(6)))
    models = [stub([1.0] * 7, sorted(ranking.final_rank)) for _ in range(2)]
    X = np.random.default_rng(7).normal(size=(50, 7))
    impacts = perturbation_impact(models, [feature_stats(X, models[0].feature_names)] * 2)
    rows = importance_table(ranking, impacts)
    assert [r["feature"] for r in rows] == ranking.ordered()
    write_importance_table(rows, tmp_path / "imp.csv", tmp_path / "imp.json")
    lines = (tmp_path / "imp.csv").read_text().splitlines()
    assert lines[0].startswith("feature,rank") and len(lines) == 8
    data = json.loads((tmp_path / "imp.json").read_text())
    assert data[0]["rank"] == 1 and data[-1]["rank"] == 2


def test_native_importances_collects_rounds(leaky):
    X, y = leaky
    models = [train(ClassifierSpec("extremely_randomized_trees", seed=s), X, y, ["label", "n1", "n2"])
              for s in range(2)]
    native = native_importances(models)
    assert set(native) == {"label", "n1", "n2"} and len(native["label"]) == 2
