"""Classifier families behind one interface, plus ranking/probability metrics."""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.stats import rankdata
from sklearn.ensemble import (
    AdaBoostClassifier,
    ExtraTreesClassifier,
    GradientBoostingClassifier,
    RandomForestClassifier,
)
from sklearn.exceptions import ConvergenceWarning
from sklearn.neural_network import MLPClassifier
from sklearn.pipeline import make_pipeline
from sklearn.preprocessing import StandardScaler

from .features.catalog import STAGE_DIMENSIONS, base_name, dimension_of

ALGORITHMS = (
    "random_forest",
    "gradient_boosted_trees",
    "adaptive_boosting",
    "extremely_randomized_trees",
    "multilayer_perceptron",
)
TREE_ENSEMBLES = ("random_forest", "gradient_boosted_trees", "extremely_randomized_trees")
TOP_K = (3, 5, 7, 10)
GROUPINGS = ("all", "same_developer", "different_developer")

# Shallow, shrunken boosting: early folds hold a few hundred rows, and the
# unregularised default fits jagged response surfaces there.
DEFAULT_HYPERPARAMETERS = {
    "gradient_boosted_trees": {"learning_rate": 0.05, "min_samples_leaf": 20, "subsample": 0.8},
}


@dataclass(frozen=True)
class ClassifierSpec:
    algorithm: str
    hyperparameters: Mapping = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}; expected one of {ALGORITHMS}")

    def to_dict(self) -> dict:
        return {"algorithm": self.algorithm, "hyperparameters": dict(self.hyperparameters),
                "seed": self.seed}


def _estimator(spec: ClassifierSpec):
    hp = {**DEFAULT_HYPERPARAMETERS.get(spec.algorithm, {}), **spec.hyperparameters}
    seed = spec.seed
    if spec.algorithm == "random_forest":
        return RandomForestClassifier(random_state=seed, n_jobs=1, **hp)
    if spec.algorithm == "gradient_boosted_trees":
        return GradientBoostingClassifier(random_state=seed, **hp)
    if spec.algorithm == "adaptive_boosting":
        return AdaBoostClassifier(random_state=seed, **hp)
    if spec.algorithm == "extremely_randomized_trees":
        return ExtraTreesClassifier(random_state=seed, n_jobs=1, **hp)
    return make_pipeline(StandardScaler(), MLPClassifier(random_state=seed, **hp))


class TrainedModel:
    """A fitted classifier; read-only after construction."""

    def __init__(self, spec: ClassifierSpec, estimator, feature_names: Sequence[str]):
        self.spec = spec
        self.estimator = estimator
        self.feature_names = tuple(feature_names)

    def predict_probability(self, X) -> np.ndarray | float:
        """P(y=1) for a matrix, or a float for a single row."""
        X = np.asarray(X, dtype=np.float64)
        single = X.ndim == 1
        proba = self.estimator.predict_proba(np.atleast_2d(X))[:, 1]
        proba = np.clip(proba, 0.0, 1.0)
        return float(proba[0]) if single else proba

    def feature_importance(self) -> dict[str, float]:
        est = self.estimator
        if self.spec.algorithm == "multilayer_perceptron":
            weights = np.abs(est[-1].coefs_[0]).sum(axis=1)
            total = weights.sum()
            scores = weights / total if total > 0 else weights
        else:
            scores = np.asarray(est.feature_importances_, dtype=np.float64)
        return {name: max(0.0, float(v)) for name, v in zip(self.feature_names, scores)}


def train(spec: ClassifierSpec, X, y, feature_names: Sequence[str] | None = None) -> TrainedModel:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).astype(np.int64)
    if X.ndim != 2 or X.shape[0] != len(y):
        raise ValueError("X must be 2-D with one row per label")
    if len(y) < 2:
        raise ValueError("need at least two training rows")
    if len(np.unique(y)) < 2:
        raise ValueError("training labels contain a single class")
    names = list(feature_names) if feature_names is not None else [f"f{i}" for i in range(X.shape[1])]
    if len(names) != X.shape[1]:
        raise ValueError("feature_names does not match the column count")
    est = _estimator(spec)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        est.fit(X, y)
    return TrainedModel(spec, est, names)


# --- metrics -------------------------------------------------------------


def _binary(labels) -> np.ndarray:
    y = np.asarray(labels).astype(np.int64)
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0/1")
    return y


def auc(scores, labels) -> float:
    """Rank-based ROC AUC with ties counted one half."""
    s = np.asarray(scores, dtype=np.float64)
    y = _binary(labels)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both classes")
    ranks = rankdata(s)
    u = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def brier(probabilities, labels) -> float:
    p = np.asarray(probabilities, dtype=np.float64)
    y = _binary(labels)
    if len(p) != len(y):
        raise ValueError("length mismatch")
    if len(p) == 0:
        raise ValueError("no predictions")
    if ((p < 0) | (p > 1)).any():
        raise ValueError("probabilities must lie in [0, 1]")
    return float(np.mean((p - y) ** 2))


def pr_curve(scores, labels) -> list[tuple[float, float]]:
    """(recall, precision) at each distinct threshold, from the highest score down."""
    s = np.asarray(scores, dtype=np.float64)
    y = _binary(labels)
    n_pos = int(y.sum())
    if n_pos == 0 or n_pos == len(y):
        raise ValueError("PR curve needs both classes")
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    tp = np.cumsum(y)
    last = np.r_[np.nonzero(np.diff(s))[0], len(s) - 1]
    return [(float(tp[i] / n_pos), float(tp[i] / (i + 1))) for i in last]


def average_precision(scores, labels) -> float:
    """Step-wise area under the PR curve: sum of (ΔR)·P."""
    area, prev = 0.0, 0.0
    for r, p in pr_curve(scores, labels):
        area += (r - prev) * p
        prev = r
    return area


def rank_candidates(candidates: Sequence[tuple[int, float]]) -> list[tuple[int, float]]:
    """Descending probability, ties by ascending change number."""
    return sorted(candidates, key=lambda c: (-c[1], c[0]))


def _in_group(grouping: str, owner_a, owner_b) -> bool:
    if grouping == "all":
        return True
    if grouping == "same_developer":
        return owner_a == owner_b
    if grouping == "different_developer":
        return owner_a != owner_b
    raise ValueError(f"unknown grouping {grouping!r}")


def top_k_metrics(ranked: Mapping[int, Sequence[tuple[int, float]]], truth, k: int,
                  grouping: str = "all", owners: Mapping[int, str] | None = None,
                  ) -> tuple[float, float]:
    """Mean per-target (precision@k, recall@k).

    ``truth`` holds ``(source, target)`` pairs (edges are accepted too). With
    a developer grouping, only candidate pairs whose owners match (or differ)
    are ranked, and targets without a true source in the group are skipped.
    Returns ``(nan, nan)`` when no target qualifies.
    """
    if k < 1:
        raise ValueError("k must be positive")
    if grouping != "all" and owners is None:
        raise ValueError("owners are required for developer groupings")
    true_sources: dict[int, set[int]] = {}
    for item in truth:
        s, t = (item.source_change, item.target_change) if hasattr(item, "source_change") else item
        true_sources.setdefault(t, set()).add(s)
    precisions, recalls = [], []
    for target, cands in ranked.items():
        if grouping == "all":
            keep = list(cands)
            truth_t = true_sources.get(target, set())
        else:
            keep = [c for c in cands if _in_group(grouping, owners[c[0]], owners[target])]
            truth_t = {s for s in true_sources.get(target, set())
                       if _in_group(grouping, owners[s], owners[target])}
        if not truth_t:
            continue
        top = [c for c, _ in rank_candidates(keep)[:k]]
        hits = len(truth_t.intersection(top))
        precisions.append(hits / k)
        recalls.append(hits / len(truth_t))
    if not precisions:
        return math.nan, math.nan
    # fsum makes the mean independent of target order
    return math.fsum(precisions) / len(precisions), math.fsum(recalls) / len(recalls)


def group_by_target(pairs: Sequence[tuple[int, int]], scores) -> dict[int, list[tuple[int, float]]]:
    out: dict[int, list[tuple[int, float]]] = {}
    for (s, t), p in zip(pairs, np.asarray(scores, dtype=np.float64).tolist()):
        out.setdefault(t, []).append((s, p))
    return out


# --- reports -------------------------------------------------------------


@dataclass
class RoundResult:
    round_id: int
    auc: float
    brier: float
    pr_curve: list[tuple[float, float]]
    average_precision: float
    n_test: int
    n_positive: int

    def to_dict(self) -> dict:
        return {"round": self.round_id, "auc": self.auc, "brier": self.brier,
                "average_precision": self.average_precision, "n_test": self.n_test,
                "n_positive": self.n_positive}


def evaluate_round(round_id: int, probabilities, labels) -> RoundResult:
    p = np.asarray(probabilities, dtype=np.float64)
    y = _binary(labels)
    return RoundResult(round_id, auc(p, y), brier(p, y), pr_curve(p, y),
                       average_precision(p, y), len(y), int(y.sum()))


@dataclass
class EvaluationReport:
    stage: int
    algorithm: str
    per_round: list[RoundResult]
    top_k: dict[tuple[int, str], tuple[float, float]] = field(default_factory=dict)

    @property
    def mean_auc(self) -> float:
        return float(np.mean([r.auc for r in self.per_round])) if self.per_round else math.nan

    @property
    def mean_brier(self) -> float:
        return float(np.mean([r.brier for r in self.per_round])) if self.per_round else math.nan

    def to_dict(self) -> dict:
        return {
            "stage": self.stage,
            "algorithm": self.algorithm,
            "aggregate": {"mean_auc": self.mean_auc, "mean_brier": self.mean_brier},
            "per_round": [r.to_dict() for r in self.per_round],
            "top_k": [{"k": k, "grouping": g, "precision": p, "recall": r}
                      for (k, g), (p, r) in sorted(self.top_k.items())],
        }

    def write(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        stem = f"stage{self.stage}_{self.algorithm}"
        (out / f"{stem}_report.json").write_text(
            json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        for r in self.per_round:
            with open(out / f"{stem}_pr_round{r.round_id}.csv", "w", newline="",
                      encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["recall", "precision"])
                w.writerows((repr(a), repr(b)) for a, b in r.pr_curve)


def write_metric_table(reports: Sequence[EvaluationReport], path) -> None:
    """One row per (stage, algorithm): mean AUC, mean Brier and top-k cells."""
    header = ["stage", "algorithm", "auc", "brier"]
    header += [f"{g}_top{k}_{m}" for g in GROUPINGS for k in TOP_K for m in ("precision", "recall")]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for rep in reports:
            row = [rep.stage, rep.algorithm, f"{rep.mean_auc:.6f}", f"{rep.mean_brier:.6f}"]
            for g in GROUPINGS:
                for k in TOP_K:
                    cell = rep.top_k.get((k, g))
                    row += ["" if cell is None else f"{v:.6f}" for v in (cell or (None, None))]
            w.writerow(row)


# --- ablation ------------------------------------------------------------


def ablation_features(kept: Sequence[str], dimension: str, mode: str, stage: int) -> list[str]:
    """Kept features restricted to (``only``) or excluding (``without``) a dimension."""
    if dimension not in STAGE_DIMENSIONS[stage]:
        raise ValueError(f"dimension {dimension!r} is not valid for stage {stage}")
    if mode not in ("only", "without"):
        raise ValueError(f"unknown ablation mode {mode!r}")
    chosen = [f for f in kept if (dimension_of(base_name(f)) == dimension) == (mode == "only")]
    if not chosen:
        raise ValueError(f"no {dimension} features left after pruning")
    return chosen


def dimension_ablation(dimension: str, mode: str, stage: int, kept: Sequence[str],
                       evaluate: Callable[[list[str]], float]) -> float:
    """Mean AUC of a retrain restricted to ``ablation_features``.

    ``evaluate`` reruns the rounds (same folds and seeds) on the given columns.
    """
    return evaluate(ablation_features(kept, dimension, mode, stage))
