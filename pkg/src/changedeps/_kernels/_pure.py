"""Pure-Python versions of the compiled kernels.

Same algorithms, same random stream; used when the extension is not built
or when ``CHANGEDEPS_PURE=1`` is set.
"""

from __future__ import annotations

import math
from bisect import bisect_left, bisect_right

import numpy as np

_MASK = 0xFFFFFFFFFFFFFFFF
_LCG_MUL = 25214903917
_LCG_ADD = 11


def _next(r: int) -> int:
    return (r * _LCG_MUL + _LCG_ADD) & _MASK


def dominance_counts(a, b_sorted):
    b = list(b_sorted)
    n_b = len(b)
    greater = less = 0
    for x in a:
        greater += bisect_left(b, x)
        less += n_b - bisect_right(b, x)
    return greater, less


def rank_sum_counts(doubled_ranks, n_pick):
    ranks = [int(w) for w in doubled_ranks]
    total = sum(ranks)
    dp = np.zeros((n_pick + 1, total + 1), dtype=np.float64)
    dp[0, 0] = 1.0
    reach = 0
    for i, w in enumerate(ranks):
        reach += w
        for j in range(min(i + 1, n_pick), 0, -1):
            # descending in-place update, vectorised over sums
            dp[j, w:reach + 1] += dp[j - 1, 0:reach + 1 - w]
    return dp[n_pick].copy()


def sgns_epoch(tokens, offsets, keep_prob, syn0, syn1, table, window, negative,
               alpha0, min_alpha, total_words, words_done, seed):
    r = int(seed)
    table_size = len(table)
    for si in range(len(offsets) - 1):
        buf = []
        for k in range(offsets[si], offsets[si + 1]):
            w = int(tokens[k])
            if keep_prob[w] < 1.0:
                r = _next(r)
                if ((r & 0xFFFF) / 65536.0) > keep_prob[w]:
                    continue
            buf.append(w)
        words_done += int(offsets[si + 1] - offsets[si])
        alpha = alpha0 * (1.0 - words_done / (total_words + 1.0))
        if alpha < min_alpha:
            alpha = min_alpha
        n_buf = len(buf)
        for pos in range(n_buf):
            center = buf[pos]
            r = _next(r)
            b = r % window
            start = max(pos - window + b, 0)
            stop = min(pos + window - b + 1, n_buf)
            for c in range(start, stop):
                if c == pos:
                    continue
                context = buf[c]
                l1 = syn0[context]
                neu1e = np.zeros_like(l1)
                for d in range(negative + 1):
                    if d == 0:
                        target = center
                        label = 1.0
                    else:
                        r = _next(r)
                        target = int(table[(r >> 16) % table_size])
                        if target == center:
                            continue
                        label = 0.0
                    f = float(np.dot(l1, syn1[target]))
                    if f > 30.0:
                        sig = 1.0
                    elif f < -30.0:
                        sig = 0.0
                    else:
                        sig = 1.0 / (1.0 + math.exp(-f))
                    g = (label - sig) * alpha
                    neu1e += g * syn1[target]
                    syn1[target] += g * l1
                syn0[context] += neu1e
    return r, words_done
