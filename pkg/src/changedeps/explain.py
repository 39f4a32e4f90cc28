"""Permutation importance, Scott-Knott rank groups and perturbation impact."""

from __future__ import annotations

import csv
import json
import math
import statistics
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.stats import chi2

from .features.catalog import base_name, is_boolean
from .models import TrainedModel, auc


def permutation_importance(model: TrainedModel, X_test, y_test,
                           metric: Callable = auc, repeats: int = 5, seed: int = 0,
                           clamp: bool = True) -> dict[str, float]:
    """Drop in ``metric`` when each column is shuffled, averaged over ``repeats``.

    Every column gets its own generator derived from ``seed`` and the column
    index, so a score does not depend on which other columns were evaluated.
    """
    X = np.asarray(X_test, dtype=np.float64)
    y = np.asarray(y_test)
    if X.shape[0] == 0 or len(y) != X.shape[0]:
        raise ValueError("test data must be non-empty and aligned")
    if repeats < 1:
        raise ValueError("repeats must be at least 1")
    baseline = metric(model.predict_probability(X), y)
    scores = {}
    for j, name in enumerate(model.feature_names):
        col = X[:, j]
        if np.all(col == col[0]):
            scores[name] = 0.0
            continue
        rng = np.random.default_rng([seed, j])
        drops = []
        shuffled = X.copy()
        for _ in range(repeats):
            shuffled[:, j] = rng.permutation(col)
            drops.append(baseline - metric(model.predict_probability(shuffled), y))
        score = float(np.mean(drops))
        scores[name] = max(0.0, score) if clamp else score
    return scores


@dataclass
class ImportanceRanking:
    per_round_scores: dict[str, list[float]]
    final_rank: dict[str, int]

    def mean_score(self, feature: str) -> float:
        return float(np.mean(self.per_round_scores[feature]))

    @property
    def n_groups(self) -> int:
        return max(self.final_rank.values()) if self.final_rank else 0

    def group(self, rank: int) -> list[str]:
        return sorted(f for f, r in self.final_rank.items() if r == rank)

    def ordered(self) -> list[str]:
        return sorted(self.final_rank, key=lambda f: (self.final_rank[f], -self.mean_score(f), f))


def _best_split(means: np.ndarray) -> tuple[int, float]:
    """Split index and between-group sum of squares for sorted ``means``."""
    k = len(means)
    total = means.sum()
    best_i, best_b = 0, -1.0
    left = 0.0
    for i in range(1, k):
        left += means[i - 1]
        right = total - left
        b = left ** 2 / i + right ** 2 / (k - i) - total ** 2 / k
        if b > best_b + 1e-15:
            best_i, best_b = i, b
    return best_i, max(best_b, 0.0)


def _cohens_d(a: np.ndarray, b: np.ndarray) -> float:
    pooled = ((len(a) - 1) * a.var(ddof=1) + (len(b) - 1) * b.var(ddof=1)) / (len(a) + len(b) - 2)
    diff = abs(a.mean() - b.mean())
    if pooled <= 0.0:
        return math.inf if diff > 0 else 0.0
    return float(diff / math.sqrt(pooled))


def scott_knott_rank(per_round_scores: Mapping[str, Sequence[float]],
                     alpha: float = 0.05, variant: str = "classic",
                     negligible: float = 0.2) -> ImportanceRanking:
    """Scott-Knott clustering of features by their mean score.

    Features are sorted by descending mean; a group is split at the cut
    maximising the between-group sum of squares when the likelihood-ratio
    statistic exceeds the chi-squared quantile with k/(π-2) degrees of
    freedom. The error variance of a mean is pooled across all features.

    ``variant="esd"`` additionally refuses a split whose two halves differ by
    a Cohen's d below ``negligible``.
    """
    if variant not in ("classic", "esd"):
        raise ValueError(f"unknown Scott-Knott variant {variant!r}")
    names = list(per_round_scores)
    data = {f: np.asarray(per_round_scores[f], dtype=np.float64) for f in names}
    if not names:
        return ImportanceRanking({}, {})
    reps = {len(v) for v in data.values()}
    if min(reps) < 2:
        raise ValueError("every feature needs at least two round scores")
    means = {f: float(v.mean()) for f, v in data.items()}
    ss_within = sum(float(((v - v.mean()) ** 2).sum()) for v in data.values())
    dof = sum(len(v) - 1 for v in data.values())
    n_rep = statistics.harmonic_mean([len(v) for v in data.values()])
    var_mean = (ss_within / dof) / n_rep if dof else 0.0

    order = sorted(names, key=lambda f: (-means[f], f))
    ranks: dict[str, int] = {}

    def split(group: list[str]) -> list[list[str]]:
        k = len(group)
        if k < 2:
            return [group]
        m = np.array([means[f] for f in group])
        i, b0 = _best_split(m)
        if b0 <= 0.0:
            return [group]
        sigma2 = (float(((m - m.mean()) ** 2).sum()) + dof * var_mean) / (k + dof)
        lam = math.pi / (2.0 * (math.pi - 2.0)) * b0 / sigma2
        if lam <= chi2.ppf(1.0 - alpha, k / (math.pi - 2.0)):
            return [group]
        if variant == "esd":
            left = np.concatenate([data[f] for f in group[:i]])
            right = np.concatenate([data[f] for f in group[i:]])
            if _cohens_d(left, right) < negligible:
                return [group]
        return split(group[:i]) + split(group[i:])

    for rank, group in enumerate(split(order), start=1):
        for f in group:
            ranks[f] = rank
    return ImportanceRanking({f: list(map(float, data[f])) for f in names}, ranks)


@dataclass
class ImpactRecord:
    feature: str
    baseline_probability: list[float]
    perturbed_probability: list[float]
    relative_impact: list[float | None]
    excluded_rounds: list[int] = field(default_factory=list)

    def _valid(self) -> list[float]:
        return [v for v in self.relative_impact if v is not None]

    @property
    def summary(self) -> dict[str, float]:
        vals = self._valid()
        if not vals:
            return {"min": math.nan, "median": math.nan, "max": math.nan}
        return {"min": min(vals), "median": float(statistics.median(vals)), "max": max(vals)}


def feature_stats(X_train, feature_names: Sequence[str]) -> dict[str, tuple[float, float]]:
    """Per-feature (median, standard deviation) of a training matrix."""
    X = np.asarray(X_train, dtype=np.float64)
    med = np.median(X, axis=0)
    sd = X.std(axis=0, ddof=1) if X.shape[0] > 1 else np.zeros(X.shape[1])
    return {f: (float(a), float(b)) for f, a, b in zip(feature_names, med, sd)}


def perturbation_impact(models: Sequence[TrainedModel],
                        stats: Sequence[Mapping[str, tuple[float, float]]],
                        features: Sequence[str] | None = None) -> list[ImpactRecord]:
    """Relative probability change when one feature moves from median to median + 1σ.

    ``stats[r]`` holds the training-fold (median, σ) of each feature used by
    ``models[r]``. Boolean flags move to 1 instead.
    """
    if len(models) != len(stats):
        raise ValueError("one stats mapping per model is required")
    names = list(features) if features is not None else list(models[0].feature_names)
    records = {f: ImpactRecord(f, [], [], []) for f in names}
    for r, (model, st) in enumerate(zip(models, stats), start=1):
        cols = list(model.feature_names)
        base = np.array([st[f][0] for f in cols])
        p_i = model.predict_probability(base)
        for f in names:
            row = base.copy()
            j = cols.index(f)
            row[j] = 1.0 if is_boolean(base_name(f)) else st[f][0] + st[f][1]
            p_t = p_i if row[j] == base[j] else model.predict_probability(row)
            rec = records[f]
            rec.baseline_probability.append(p_i)
            rec.perturbed_probability.append(p_t)
            if p_i == 0.0:
                rec.relative_impact.append(None)
                rec.excluded_rounds.append(r)
                warnings.warn(f"baseline probability is 0 in round {r}; impact of {f} undefined")
            else:
                rec.relative_impact.append((p_t - p_i) / p_i)
    return [records[f] for f in names]


def native_importances(models: Sequence[TrainedModel]) -> dict[str, list[float]]:
    out: dict[str, list[float]] = {}
    for m in models:
        for f, v in m.feature_importance().items():
            out.setdefault(f, []).append(v)
    return out


def importance_table(ranking: ImportanceRanking, impacts: Sequence[ImpactRecord]) -> list[dict]:
    by_feature = {r.feature: r.summary for r in impacts}
    rows = []
    for f in ranking.ordered():
        s = by_feature.get(f, {"min": math.nan, "median": math.nan, "max": math.nan})
        rows.append({"feature": f, "rank": ranking.final_rank[f],
                     "mean_importance": ranking.mean_score(f),
                     "median_impact": s["median"], "min_impact": s["min"],
                     "max_impact": s["max"]})
    return rows


def _fmt(v: float) -> str:
    return "" if v is None or (isinstance(v, float) and math.isnan(v)) else f"{v:.6f}"


def write_importance_table(rows: Sequence[dict], csv_path, json_path=None) -> None:
    cols = ["feature", "rank", "mean_importance", "median_impact", "min_impact", "max_impact"]
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([r["feature"], r["rank"]] + [_fmt(r[c]) for c in cols[2:]])
    if json_path is not None:
        clean = [{k: (None if isinstance(v, float) and math.isnan(v) else
                      (round(v, 12) if isinstance(v, float) else v)) for k, v in r.items()}
                 for r in rows]
        Path(json_path).write_text(json.dumps(clean, indent=2) + "\n", encoding="utf-8")
