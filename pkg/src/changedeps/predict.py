"""Two-stage prediction for a new change: dependency gate, then ranked sources."""

from __future__ import annotations

import pickle
import threading
import warnings
from collections import ChainMap
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .corpus import ChangeRecord, Corpus
from .deps import DependencyEdge, dependent_changes
from .features import (
    CHANGE_FEATURES,
    PAIR_FEATURES,
    PAIR_VECTOR_FEATURES,
    EmbeddingModel,
    PairFeaturizer,
    Timeline,
    change_feature_matrix,
    train_embedding,
    training_texts,
)
from .models import ClassifierSpec, TrainedModel, rank_candidates, train
from .pipeline import build_training_pairs, prune_features


@dataclass(frozen=True)
class PredictionResult:
    change_number: int
    stage1_probability: float
    gated: bool
    candidates: tuple[tuple[int, float], ...] = ()
    notes: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "change_number": self.change_number,
            "stage1_probability": self.stage1_probability,
            "gated": self.gated,
            "candidates": [{"change_number": n, "stage2_probability": p}
                           for n, p in self.candidates],
            "notes": list(self.notes),
        }


@dataclass
class ModelBundle:
    stage1: TrainedModel
    stage2: TrainedModel
    embedding: EmbeddingModel
    window_days: int = 30
    threshold: float = 0.5
    k: int = 10
    trained_until: datetime | None = None
    version: str = __version__
    meta: dict = field(default_factory=dict)

    def save(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(path.suffix + ".tmp")
        with open(tmp, "wb") as fh:
            pickle.dump(self, fh, protocol=pickle.HIGHEST_PROTOCOL)
        tmp.replace(path)

    @staticmethod
    def load(path) -> "ModelBundle":
        """Load a bundle written by :meth:`save`. Only open files you trust."""
        with open(path, "rb") as fh:
            bundle = pickle.load(fh)
        if not isinstance(bundle, ModelBundle):
            raise TypeError(f"{path} does not hold a model bundle")
        return bundle


def _select(names: Sequence[str], X: np.ndarray, kept: Sequence[str]) -> np.ndarray:
    index = {n: i for i, n in enumerate(names)}
    return X[..., [index[f] for f in kept]]


def train_bundle(corpus: Corpus, edges: list[DependencyEdge], algorithm: str = "random_forest",
                 seed: int = 0, window_days: int = 30, threshold: float = 0.5, k: int = 10,
                 corr_threshold: float = 0.7, redundancy_threshold: float = 0.9,
                 hyperparameters: dict | None = None, embedding: dict | None = None) -> ModelBundle:
    """Fit both stages on the whole corpus, for serving predictions on newer changes."""
    spec = ClassifierSpec(algorithm, hyperparameters or {}, seed)
    timeline = Timeline(corpus, edges)
    numbers, X = change_feature_matrix(corpus, edges, timeline)
    dependent = dependent_changes(edges)
    y = np.array([int(n in dependent) for n in numbers])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        kept1 = prune_features(X, CHANGE_FEATURES, corr_threshold, redundancy_threshold).kept
    stage1 = train(spec, _select(CHANGE_FEATURES, X, kept1), y, kept1)

    emb = train_embedding(training_texts(corpus.by_time), seed=seed, window_id="full",
                          **(embedding or {}))
    rows = dict(zip(numbers, X))
    pairs = build_training_pairs([corpus[n] for n in sorted(dependent)], edges, window_days, seed)
    feat = PairFeaturizer(timeline, emb, rows)
    P = feat.matrix([(corpus[s], corpus[t]) for s, t in pairs.pairs])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        kept2 = prune_features(P, PAIR_VECTOR_FEATURES, corr_threshold, redundancy_threshold).kept
    stage2 = train(spec, _select(PAIR_VECTOR_FEATURES, P, kept2), pairs.labels, kept2)
    last = max(c.created_at for c in corpus)
    return ModelBundle(stage1, stage2, emb, window_days, threshold, k, last,
                       meta={"algorithm": algorithm, "seed": seed,
                             "n_changes": len(corpus), "n_edges": len(edges)})


class Predictor:
    """Scores new changes against a historical corpus; safe to share across threads."""

    def __init__(self, bundle: ModelBundle, corpus: Corpus, edges: list[DependencyEdge]):
        self.bundle = bundle
        self.corpus = corpus
        self.edges = edges
        self.timeline = Timeline(corpus, edges)
        self._rows: dict[int, np.ndarray] = {}
        self._info: dict[int, dict] = {}
        self._lock = threading.Lock()
        self._known = sorted((t, n) for n, t in self.timeline.dep_known.items())

    def _row(self, change: ChangeRecord) -> np.ndarray:
        n = change.change_number
        stored = n in self.corpus and self.corpus[n] == change
        row = self._rows.get(n) if stored else None
        if row is None:
            feats = self.timeline.change_features(change)
            row = np.array([feats[f] for f in CHANGE_FEATURES])
            if stored:
                with self._lock:
                    self._rows[n] = row
        return row

    def candidates(self, change: ChangeRecord, window_days: int) -> list[ChangeRecord]:
        """Changes known to be dependent before ``change`` and created in its window."""
        t = change.created_at
        start = t - timedelta(days=window_days)
        out = []
        for known, n in self._known:
            if known >= t:
                break
            c = self.corpus[n]
            if start <= c.created_at < t and n != change.change_number:
                out.append(c)
        return sorted(out, key=lambda c: c.change_number)

    def predict(self, change: ChangeRecord, threshold: float | None = None,
                k: int | None = None, window_days: int | None = None) -> PredictionResult:
        b = self.bundle
        threshold = b.threshold if threshold is None else threshold
        k = b.k if k is None else k
        window_days = b.window_days if window_days is None else window_days
        if k < 1:
            raise ValueError("k must be positive")
        if b.trained_until is not None and b.trained_until >= change.created_at:
            warnings.warn(f"models were trained on data up to {b.trained_until}, "
                          f"not strictly before change {change.change_number}")
        row = self._row(change)
        p1 = float(b.stage1.predict_probability(_select(CHANGE_FEATURES, row, b.stage1.feature_names)))
        if p1 < threshold:
            return PredictionResult(change.change_number, p1, False)
        cands = self.candidates(change, window_days)
        if not cands:
            return PredictionResult(change.change_number, p1, True, (), ("no candidates",))
        # corpus changes share one embedding cache; the request's own change
        # lands in a private layer so a resubmitted number never reads stale text
        feat = PairFeaturizer(self.timeline, b.embedding, {})
        feat._cache = ChainMap({}, self._info)
        P = np.array([np.concatenate([self._row(c), row,
                                      [feat.pair_features(c, change)[n] for n in PAIR_FEATURES]])
                      for c in cands])
        fresh = {n: v for n, v in feat._cache.maps[0].items() if n != change.change_number}
        with self._lock:
            self._info.update(fresh)
        p2 = b.stage2.predict_probability(_select(PAIR_VECTOR_FEATURES, P, b.stage2.feature_names))
        ranked = rank_candidates([(c.change_number, float(p)) for c, p in zip(cands, p2)])[:k]
        return PredictionResult(change.change_number, p1, True, tuple(ranked))


def predict(new_change: ChangeRecord, corpus: Corpus, models: ModelBundle,
            threshold: float = 0.5, k: int = 10, window_days: int = 30,
            edges: list[DependencyEdge] | None = None) -> PredictionResult:
    """One-shot prediction; build a :class:`Predictor` to score many changes."""
    from .deps import build_edges

    edges = build_edges(corpus) if edges is None else edges
    return Predictor(models, corpus, edges).predict(new_change, threshold, k, window_days)
