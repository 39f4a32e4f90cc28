from __future__ import annotations

import os
import subprocess
import sys

import numpy as np
import pytest

from changedeps import _kernels
from changedeps.features import train_embedding
from changedeps.stats import cliffs_delta, mann_whitney_u

pure = _kernels.get_backend("python")
try:
    compiled = _kernels.get_backend("cython")
except ImportError:  # extension not built in this environment
    compiled = None

needs_compiled = pytest.mark.skipif(compiled is None, reason="compiled kernels not built")


def test_unknown_backend():
    with pytest.raises(ValueError):
        _kernels.get_backend("fortran")


@needs_compiled
def test_default_backend_is_compiled_when_built():
    assert _kernels.BACKEND == "cython"


@needs_compiled
def test_dominance_counts_agree():
    rng = np.random.default_rng(0)
    for _ in range(200):
        a = rng.integers(0, 20, size=rng.integers(1, 40)).astype(np.float64)
        b = np.sort(rng.integers(0, 20, size=rng.integers(1, 40)).astype(np.float64))
        assert tuple(compiled.dominance_counts(a, b)) == tuple(pure.dominance_counts(a, b))


@needs_compiled
def test_rank_sum_counts_agree():
    rng = np.random.default_rng(1)
    for _ in range(50):
        n = int(rng.integers(2, 16))
        doubled = rng.integers(2, 2 * n + 1, size=n).astype(np.int64)
        pick = int(rng.integers(1, n))
        assert np.array_equal(compiled.rank_sum_counts(doubled, pick),
                              pure.rank_sum_counts(doubled, pick))


@needs_compiled
def test_sgns_bit_identical():
    texts = [f"alpha beta gamma delta {w} epsilon" for w in ("one", "two", "three")] * 8
    a = train_embedding(texts, dim=12, epochs=2, seed=9, kernels=pure)
    b = train_embedding(texts, dim=12, epochs=2, seed=9, kernels=compiled)
    assert a.vocabulary == b.vocabulary
    assert a.vectors.tobytes() == b.vectors.tobytes()


def test_rank_sum_counts_total_is_binomial():
    from math import comb

    counts = pure.rank_sum_counts(np.arange(2, 14, 2, dtype=np.int64), 3)
    assert counts.sum() == comb(6, 3)


def test_pure_backend_forced_by_environment():
    code = ("from changedeps import _kernels, stats;"
            "print(_kernels.BACKEND, stats.cliffs_delta([1, 2], [2, 3]),"
            " stats.mann_whitney_u([1, 2, 3], [10, 11, 12]))")
    env = dict(os.environ, CHANGEDEPS_PURE="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True,
                         text=True, check=True).stdout.split(maxsplit=1)
    assert out[0] == "python"
    expected = f"{cliffs_delta([1, 2], [2, 3])} {mann_whitney_u([1, 2, 3], [10, 11, 12])}"
    assert out[1].strip() == expected
