"""Nonparametric tests and agreement statistics."""

from __future__ import annotations

import math
from collections import Counter
from typing import Hashable, Sequence

import numpy as np
from scipy.stats import rankdata

from . import _kernels

EXACT_MAX_N = 20


def _as_sample(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64).ravel()
    if arr.size == 0:
        raise ValueError(f"{name} must be non-empty")
    return arr


def cliffs_delta(sample_a, sample_b) -> float:
    """Cliff's delta: (#{a > b} - #{a < b}) / (|A| |B|) over all cross pairs."""
    a = _as_sample(sample_a, "sample_a")
    b = _as_sample(sample_b, "sample_b")
    greater, less = _kernels.dominance_counts(np.ascontiguousarray(a), np.sort(b))
    return (greater - less) / (a.size * b.size)


def cliffs_magnitude(delta: float) -> str:
    """Romano et al. thresholds."""
    d = abs(delta)
    if d < 0.147:
        return "negligible"
    if d < 0.33:
        return "small"
    if d < 0.474:
        return "medium"
    return "large"


def _exact_p(ranks: np.ndarray, n_a: int, r_a: float) -> float:
    doubled = np.rint(ranks * 2).astype(np.int64)
    counts = _kernels.rank_sum_counts(np.ascontiguousarray(doubled), n_a)
    total = counts.sum()
    observed = int(round(r_a * 2))
    lower = counts[: observed + 1].sum() / total
    upper = counts[observed:].sum() / total
    return float(min(1.0, 2.0 * min(lower, upper)))


def mann_whitney_u(sample_a, sample_b, method: str = "auto") -> tuple[float, float]:
    """Two-sided Mann-Whitney U test.

    Returns ``(U_a, p)`` where ``U_a`` counts pairs with a > b plus half the
    ties. ``method`` is ``"exact"`` (permutation distribution of the midrank
    sums, correct under ties), ``"normal"`` (tie-corrected variance and
    continuity correction) or ``"auto"`` (exact when both samples have at
    most 20 observations).
    """
    a = _as_sample(sample_a, "sample_a")
    b = _as_sample(sample_b, "sample_b")
    n_a, n_b = a.size, b.size
    ranks = rankdata(np.concatenate([a, b]))
    r_a = float(ranks[:n_a].sum())
    u_a = r_a - n_a * (n_a + 1) / 2.0
    if method == "auto":
        method = "exact" if max(n_a, n_b) <= EXACT_MAX_N else "normal"
    if method == "exact":
        return u_a, _exact_p(ranks, n_a, r_a)
    if method != "normal":
        raise ValueError(f"unknown method {method!r}")
    n = n_a + n_b
    _, tie_counts = np.unique(ranks, return_counts=True)
    tie_term = float(((tie_counts ** 3) - tie_counts).sum())
    var = n_a * n_b / 12.0 * ((n + 1) - tie_term / (n * (n - 1)))
    if var <= 0:
        return u_a, 1.0
    mu = n_a * n_b / 2.0
    z = max(abs(u_a - mu) - 0.5, 0.0) / math.sqrt(var)
    return u_a, float(min(1.0, math.erfc(z / math.sqrt(2.0))))


class DegenerateAgreement(ValueError):
    """Chance agreement is 1 so kappa is undefined."""


def cohens_kappa(labels_a: Sequence[Hashable], labels_b: Sequence[Hashable]) -> float:
    if len(labels_a) != len(labels_b):
        raise ValueError(f"label lists differ in length ({len(labels_a)} vs {len(labels_b)})")
    n = len(labels_a)
    if n == 0:
        raise ValueError("no labels")
    p_o = sum(x == y for x, y in zip(labels_a, labels_b)) / n
    ca, cb = Counter(labels_a), Counter(labels_b)
    p_e = sum(ca[k] * cb[k] for k in ca.keys() | cb.keys()) / (n * n)
    if p_e == 1.0:
        raise DegenerateAgreement("expected agreement is 1; kappa undefined")
    return (p_o - p_e) / (1.0 - p_e)
