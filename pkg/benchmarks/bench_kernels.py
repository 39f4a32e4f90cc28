"""Time the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat 3] [--quick]

Prints one line per kernel with the best wall time of each backend and the
speed-up. Outputs of the two backends are compared before timing.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from changedeps._kernels import get_backend
from changedeps.features.embedding import embedding_tokens, train_embedding
from changedeps.synthetic import generate_corpus


def _best(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def _doubled_ranks(n: int, rng) -> np.ndarray:
    from scipy.stats import rankdata

    return (2 * rankdata(rng.integers(0, n // 2, size=n))).astype(np.int64)


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--quick", action="store_true", help="smaller inputs")
    args = ap.parse_args(argv)
    pure, fast = get_backend("python"), get_backend("cython")
    rng = np.random.default_rng(0)

    n = 20_000 if args.quick else 200_000
    a, b = rng.normal(size=n), np.sort(rng.normal(size=n))
    ranks = _doubled_ranks(40 if args.quick else 60, rng)
    n_changes = 300 if args.quick else 1500
    texts = []
    for c in generate_corpus(n_changes=n_changes, seed=0).corpus.by_time:
        texts += [c.subject, c.description]
    n_tokens = sum(len(embedding_tokens(t)) for t in texts)

    cases = [
        (f"dominance_counts n={n}",
         lambda k: k.dominance_counts(a, b)),
        (f"rank_sum_counts n={len(ranks)}",
         lambda k: k.rank_sum_counts(ranks, len(ranks) // 2)),
        (f"sgns {n_tokens} tokens dim=50 epochs=1",
         lambda k: train_embedding(texts, dim=50, epochs=1, seed=0, kernels=k).vectors),
    ]
    print(f"{'kernel':42s} {'python s':>10s} {'cython s':>10s} {'speed-up':>9s}")
    for name, run in cases:
        ref, got = run(pure), run(fast)
        if not np.allclose(np.asarray(ref), np.asarray(got), rtol=1e-9, atol=1e-12):
            raise SystemExit(f"{name}: backends disagree")
        t_pure = _best(lambda: run(pure), args.repeat)
        t_fast = _best(lambda: run(fast), args.repeat)
        print(f"{name:42s} {t_pure:10.4f} {t_fast:10.4f} {t_pure / t_fast:8.1f}x")


if __name__ == "__main__":
    main()
