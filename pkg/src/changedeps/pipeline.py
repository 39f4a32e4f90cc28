"""Time-aware folds, pair datasets and correlation/redundancy pruning."""

from __future__ import annotations

import logging
import math
import warnings
from bisect import bisect_left
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse.csgraph import connected_components
from scipy.stats import spearmanr

from .corpus import ChangeRecord, Corpus
from .deps import DependencyEdge

log = logging.getLogger(__name__)


# --- folds ---------------------------------------------------------------


def _key(c: ChangeRecord):
    return (c.created_at, c.change_number)


@dataclass(frozen=True)
class FoldSplit:
    fold_count: int
    folds: tuple[tuple[int, ...], ...]
    boundaries: tuple[tuple[datetime, datetime], ...]

    def rounds(self):
        """``(round, train_numbers, test_numbers)`` for rounds 1..k-1."""
        for r in range(1, self.fold_count):
            train = [n for fold in self.folds[:r] for n in fold]
            yield r, train, list(self.folds[r])

    def to_dict(self) -> dict:
        return {
            "fold_count": self.fold_count,
            "sizes": [len(f) for f in self.folds],
            "boundaries": [[a.isoformat(), b.isoformat()] for a, b in self.boundaries],
        }


def time_ordered_folds(changes: Iterable[ChangeRecord], k: int = 10) -> FoldSplit:
    """Contiguous, equal-size (±1) folds in creation order."""
    ordered = sorted(changes, key=_key)
    if k < 2:
        raise ValueError("k must be at least 2")
    if not ordered:
        raise ValueError("no changes to split")
    if k > len(ordered):
        raise ValueError(f"k={k} exceeds the number of changes ({len(ordered)})")
    base, extra = divmod(len(ordered), k)
    folds, bounds, start = [], [], 0
    for i in range(k):
        size = base + (1 if i < extra else 0)
        chunk = ordered[start:start + size]
        start += size
        folds.append(tuple(c.change_number for c in chunk))
        bounds.append((chunk[0].created_at, chunk[-1].created_at))
    return FoldSplit(k, tuple(folds), tuple(bounds))


# --- pairs ---------------------------------------------------------------


@dataclass
class PairDataset:
    pairs: list[tuple[int, int]]  # (source, target), source created first
    labels: np.ndarray
    provenance: str
    window_days: int
    rows: np.ndarray | None = None
    notes: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.pairs)

    @property
    def n_positive(self) -> int:
        return int(self.labels.sum()) if len(self.labels) else 0


def orient(a: ChangeRecord, b: ChangeRecord) -> tuple[int, int]:
    """(earlier, later) change numbers of a pair."""
    return (a.change_number, b.change_number) if _key(a) < _key(b) else (b.change_number, a.change_number)


def true_pairs(edges: Iterable[DependencyEdge], corpus: Corpus) -> set[tuple[int, int]]:
    out = set()
    for e in edges:
        s, t = corpus.get(e.source_change), corpus.get(e.target_change)
        if s is not None and t is not None:
            out.add(orient(s, t))
    return out


def known_edges(edges: Iterable[DependencyEdge], corpus: Corpus, members: set[int],
                cutoff: datetime) -> list[DependencyEdge]:
    """Edges among ``members`` whose declaration is visible at ``cutoff``."""
    return [e for e in edges
            if e.source_change in members and e.target_change in members
            and e.declared_at <= cutoff and e.source_change in corpus
            and e.target_change in corpus]


class _Window:
    """Candidate sources per target: pool changes in the trailing window."""

    def __init__(self, pool: Sequence[ChangeRecord], window_days: int):
        self.pool = sorted(pool, key=_key)
        self.keys = [_key(c) for c in self.pool]
        self.window = timedelta(days=window_days)

    def candidates(self, target: ChangeRecord) -> tuple[int, int]:
        """Index range [lo, hi) into ``pool``."""
        hi = bisect_left(self.keys, _key(target))
        lo = bisect_left(self.keys, (target.created_at - self.window, -1))
        return lo, hi


def _decode(global_idx: np.ndarray, starts: np.ndarray, los: np.ndarray):
    t = np.searchsorted(starts, global_idx, side="right") - 1
    return t, los[t] + (global_idx - starts[t])


def build_training_pairs(dependent: Sequence[ChangeRecord], edges: Iterable[DependencyEdge],
                         window_days: int = 30, seed: int = 0) -> PairDataset:
    """All true pairs within the window plus as many sampled non-dependent pairs.

    Both sides of every pair come from ``dependent``.
    """
    corpus = Corpus(dependent)
    win = _Window(corpus.by_time, window_days)
    positives = sorted(
        (s, t) for s, t in true_pairs(edges, corpus)
        if corpus[t].created_at - corpus[s].created_at <= win.window
    )
    ds = PairDataset([], np.zeros(0, dtype=np.int64), "train", window_days)
    if not positives:
        msg = "no dependent pairs inside the window; training pair set is empty"
        warnings.warn(msg)
        ds.notes.append(msg)
        return ds
    pos_set = set(positives)
    targets = win.pool
    ranges = np.array([win.candidates(t) for t in targets], dtype=np.int64).reshape(-1, 2)
    counts = ranges[:, 1] - ranges[:, 0]
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    total = int(counts.sum())
    rng = np.random.default_rng(seed)
    want = len(positives)
    draw = rng.choice(total, size=min(total, want + len(pos_set)), replace=False)
    t_idx, s_idx = _decode(draw, starts, ranges[:, 0])
    negatives = []
    for ti, si in zip(t_idx.tolist(), s_idx.tolist()):
        pair = (win.pool[si].change_number, targets[ti].change_number)
        if pair in pos_set:
            continue
        negatives.append(pair)
        if len(negatives) == want:
            break
    if len(negatives) < want:
        msg = f"only {len(negatives)} negative pairs available for {want} positives"
        warnings.warn(msg)
        ds.notes.append(msg)
    ds.pairs = positives + negatives
    ds.labels = np.array([1] * len(positives) + [0] * len(negatives), dtype=np.int64)
    return ds


def _sample_size(n: int, pct: float) -> int:
    return min(n, int(math.floor(n * pct + 0.5)))


def build_testing_pairs(targets: Sequence[ChangeRecord], candidate_pool: Sequence[ChangeRecord],
                        edges: Iterable[DependencyEdge], window_days: int = 30,
                        sample_pct: float = 0.10, seed: int = 0) -> PairDataset:
    """Stratified sample of candidate pairs for the test targets.

    Every target is linked to the pool changes created in its trailing window;
    ``sample_pct`` of the dependent and of the independent pairs are kept
    (without replacement). A stratum with fewer than 10 pairs is kept whole.
    """
    pool_corpus = Corpus({c.change_number: c for c in list(candidate_pool) + list(targets)}.values())
    win = _Window(candidate_pool, window_days)
    truth = true_pairs(edges, pool_corpus)
    targets = sorted(targets, key=_key)
    pos, neg = [], []
    for tgt in targets:
        lo, hi = win.candidates(tgt)
        for src in win.pool[lo:hi]:
            pair = (src.change_number, tgt.change_number)
            (pos if pair in truth else neg).append(pair)
    ds = PairDataset([], np.zeros(0, dtype=np.int64), "test", window_days)
    rng = np.random.default_rng(seed)
    chosen = []
    for label, stratum in ((1, pos), (0, neg)):
        if not stratum:
            msg = f"empty {'dependent' if label else 'independent'} stratum"
            warnings.warn(msg)
            ds.notes.append(msg)
            continue
        if len(stratum) < 10:
            msg = f"only {len(stratum)} pairs in stratum {label}; taking all"
            warnings.warn(msg)
            ds.notes.append(msg)
            picked = stratum
        else:
            k = _sample_size(len(stratum), sample_pct)
            idx = np.sort(rng.choice(len(stratum), size=k, replace=False))
            picked = [stratum[i] for i in idx]
        chosen.extend((p, label) for p in picked)
    ds.pairs = [p for p, _ in chosen]
    ds.labels = np.array([lab for _, lab in chosen], dtype=np.int64)
    return ds


# --- pruning -------------------------------------------------------------


@dataclass
class PruneResult:
    kept: list[str]
    removed: dict[str, str]  # feature -> reason


def _spearman_abs(X: np.ndarray) -> np.ndarray:
    rho = np.atleast_2d(spearmanr(X).statistic)
    if rho.shape == (1, 1):
        r = float(rho[0, 0])
        rho = np.array([[1.0, r], [r, 1.0]])
    return np.abs(np.nan_to_num(rho, nan=0.0))


def r_squared(y: np.ndarray, X: np.ndarray) -> float:
    """Coefficient of determination of an OLS fit of ``y`` on ``X`` plus intercept."""
    if X.shape[1] == 0:
        return 0.0
    ss_tot = float(((y - y.mean()) ** 2).sum())
    if ss_tot == 0.0:
        return 1.0
    A = np.column_stack([np.ones(len(y)), X])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    return max(0.0, 1.0 - float(resid @ resid) / ss_tot)


def mean_abs_correlation(X: np.ndarray, names: Sequence[str]) -> dict[str, float]:
    """Mean |Spearman| of each non-constant feature to all other non-constant ones."""
    live = [j for j in range(X.shape[1]) if not np.all(X[:, j] == X[0, j])]
    if len(live) < 2:
        return {names[j]: 0.0 for j in live}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        rho = _spearman_abs(X[:, live])
    mean = (rho.sum(axis=1) - np.diag(rho)) / (len(live) - 1)
    return {names[j]: float(v) for j, v in zip(live, mean)}


def correlation_pass(X: np.ndarray, names: Sequence[str], threshold: float = 0.7,
                     preference: dict[str, float] | None = None) -> PruneResult:
    """Cluster features whose |Spearman| exceeds ``threshold``; keep one per cluster.

    Clusters are connected components (single linkage cut at the threshold).
    The representative has the lowest mean |correlation| to every other
    feature, ties going to the earlier name in ``names``. ``preference`` may
    supply those means precomputed on other data.
    """
    names = list(names)
    removed: dict[str, str] = {}
    live = []
    for j, name in enumerate(names):
        col = X[:, j]
        if np.all(col == col[0]):
            removed[name] = "constant"
            warnings.warn(f"feature {name} is constant; excluded from the model")
        else:
            live.append(j)
    if len(live) <= 1:
        return PruneResult([names[j] for j in live], removed)
    rho = _spearman_abs(X[:, live])
    adj = (rho > threshold).astype(np.int8)
    np.fill_diagonal(adj, 0)
    n_comp, labels = connected_components(adj, directed=False)
    m = len(live)
    if preference is None:
        mean_corr = (rho.sum(axis=1) - np.diag(rho)) / (m - 1)
    else:
        mean_corr = np.array([preference.get(names[j], np.inf) for j in live])
    keep_local = set()
    for comp in range(n_comp):
        members = [i for i in range(m) if labels[i] == comp]
        rep = min(members, key=lambda i: (mean_corr[i], i))
        keep_local.add(rep)
        for i in members:
            if i != rep:
                removed[names[live[i]]] = f"correlated with {names[live[rep]]}"
    kept = [names[live[i]] for i in range(m) if i in keep_local]
    return PruneResult(kept, removed)


def redundancy_pass(X: np.ndarray, names: Sequence[str], candidates: Sequence[str],
                    threshold: float = 0.9) -> PruneResult:
    """Drop, in order, any candidate whose R² on the already-kept set exceeds ``threshold``."""
    col = {n: j for j, n in enumerate(names)}
    kept: list[str] = []
    removed: dict[str, str] = {}
    for name in candidates:
        y = X[:, col[name]]
        if kept:
            r2 = r_squared(y, X[:, [col[k] for k in kept]])
            if r2 > threshold:
                removed[name] = f"redundant (R2={r2:.3f})"
                continue
        kept.append(name)
    return PruneResult(kept, removed)


def prune_features(X: np.ndarray, names: Sequence[str], corr_threshold: float = 0.7,
                   redundancy_threshold: float = 0.9,
                   preference: dict[str, float] | None = None) -> PruneResult:
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] < 2:
        raise ValueError("need at least two rows to prune")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        corr = correlation_pass(X, names, corr_threshold, preference)
    red = redundancy_pass(X, names, corr.kept, redundancy_threshold)
    removed = dict(corr.removed)
    removed.update(red.removed)
    return PruneResult(red.kept, removed)


def prune_across_folds(matrices: Sequence[np.ndarray], names: Sequence[str],
                       corr_threshold: float = 0.7, redundancy_threshold: float = 0.9):
    """Union of per-fold removals, applied to every fold.

    Cluster representatives are chosen in every fold by one shared order, the
    mean |correlation| over all folds' rows stacked. Otherwise two folds could
    keep different members of one cluster and the union would drop both.

    Returns ``(kept, removed, per_fold)`` where ``removed`` maps each feature
    to the first reason it was dropped.
    """
    names = list(names)
    preference = mean_abs_correlation(np.vstack(matrices), names)
    per_fold = [prune_features(X, names, corr_threshold, redundancy_threshold, preference)
                for X in matrices]
    removed: dict[str, str] = {}
    for res in per_fold:
        for name, why in res.removed.items():
            removed.setdefault(name, why)
    kept = [n for n in names if n not in removed]
    return kept, removed, per_fold
