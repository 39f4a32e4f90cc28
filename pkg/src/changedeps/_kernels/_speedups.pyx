# cython: language_level=3
"""Compiled inner loops. Semantics mirror ``_pure`` exactly."""

from libc.math cimport exp
from libc.stdint cimport uint64_t, int64_t, int32_t

import numpy as np

cdef uint64_t LCG_MUL = 25214903917ULL
cdef uint64_t LCG_ADD = 11ULL


cdef inline uint64_t _next(uint64_t r) nogil:
    return r * LCG_MUL + LCG_ADD


def dominance_counts(double[::1] a, double[::1] b_sorted):
    """Return ``(#{a > b}, #{a < b})`` over all cross pairs; ``b_sorted`` ascending."""
    cdef Py_ssize_t n_a = a.shape[0], n_b = b_sorted.shape[0]
    cdef Py_ssize_t i, lo, hi, mid, left, right
    cdef int64_t greater = 0, less = 0
    cdef double x
    with nogil:
        for i in range(n_a):
            x = a[i]
            # left = count of b < x
            lo = 0
            hi = n_b
            while lo < hi:
                mid = (lo + hi) >> 1
                if b_sorted[mid] < x:
                    lo = mid + 1
                else:
                    hi = mid
            left = lo
            # right = count of b <= x
            hi = n_b
            while lo < hi:
                mid = (lo + hi) >> 1
                if b_sorted[mid] <= x:
                    lo = mid + 1
                else:
                    hi = mid
            right = lo
            greater += left
            less += n_b - right
    return int(greater), int(less)


def rank_sum_counts(int64_t[::1] doubled_ranks, Py_ssize_t n_pick):
    """Number of size-``n_pick`` subsets per doubled-rank sum.

    Entry ``s`` of the result counts subsets whose doubled ranks add up to ``s``.
    """
    cdef Py_ssize_t n = doubled_ranks.shape[0]
    cdef int64_t total = 0
    cdef Py_ssize_t i, j, s, w
    for i in range(n):
        total += doubled_ranks[i]
    cdef double[:, ::1] dp = np.zeros((n_pick + 1, total + 1), dtype=np.float64)
    dp[0, 0] = 1.0
    cdef int64_t reach = 0
    with nogil:
        for i in range(n):
            w = doubled_ranks[i]
            reach += w
            for j in range(min(i + 1, n_pick), 0, -1):
                for s in range(reach, w - 1, -1):
                    dp[j, s] += dp[j - 1, s - w]
    return np.asarray(dp[n_pick]).copy()


def sgns_epoch(
    int32_t[::1] tokens,
    int64_t[::1] offsets,
    double[::1] keep_prob,
    double[:, ::1] syn0,
    double[:, ::1] syn1,
    int32_t[::1] table,
    int window,
    int negative,
    double alpha0,
    double min_alpha,
    int64_t total_words,
    int64_t words_done,
    uint64_t seed,
):
    """One skip-gram negative-sampling pass over all sentences.

    Returns ``(seed, words_done)`` so epochs chain deterministically.
    """
    cdef Py_ssize_t n_sent = offsets.shape[0] - 1
    cdef Py_ssize_t dim = syn0.shape[1]
    cdef Py_ssize_t table_size = table.shape[0]
    cdef Py_ssize_t max_len = 0
    cdef Py_ssize_t si, k
    for si in range(n_sent):
        if offsets[si + 1] - offsets[si] > max_len:
            max_len = offsets[si + 1] - offsets[si]
    cdef int32_t[::1] buf = np.empty(max(max_len, 1), dtype=np.int32)
    cdef double[::1] neu1e = np.empty(dim, dtype=np.float64)
    cdef uint64_t r = seed
    cdef Py_ssize_t n_buf, pos, c, d, t, b, start, stop
    cdef int32_t w, center, context, target
    cdef double alpha, f, g, label, sig
    cdef double* v0
    cdef double* v1
    cdef double* e = &neu1e[0]
    with nogil:
        for si in range(n_sent):
            n_buf = 0
            for k in range(offsets[si], offsets[si + 1]):
                w = tokens[k]
                if keep_prob[w] < 1.0:
                    r = _next(r)
                    if ((r & 0xFFFF) / 65536.0) > keep_prob[w]:
                        continue
                buf[n_buf] = w
                n_buf += 1
            words_done += offsets[si + 1] - offsets[si]
            alpha = alpha0 * (1.0 - words_done / (total_words + 1.0))
            if alpha < min_alpha:
                alpha = min_alpha
            for pos in range(n_buf):
                center = buf[pos]
                r = _next(r)
                b = <Py_ssize_t>(r % <uint64_t>window)
                start = pos - window + b
                stop = pos + window - b + 1
                if start < 0:
                    start = 0
                if stop > n_buf:
                    stop = n_buf
                for c in range(start, stop):
                    if c == pos:
                        continue
                    context = buf[c]
                    v0 = &syn0[context, 0]
                    for t in range(dim):
                        e[t] = 0.0
                    for d in range(negative + 1):
                        if d == 0:
                            target = center
                            label = 1.0
                        else:
                            r = _next(r)
                            target = table[(r >> 16) % <uint64_t>table_size]
                            if target == center:
                                continue
                            label = 0.0
                        v1 = &syn1[target, 0]
                        f = 0.0
                        for t in range(dim):
                            f += v0[t] * v1[t]
                        if f > 30.0:
                            sig = 1.0
                        elif f < -30.0:
                            sig = 0.0
                        else:
                            sig = 1.0 / (1.0 + exp(-f))
                        g = (label - sig) * alpha
                        for t in range(dim):
                            e[t] += g * v1[t]
                        for t in range(dim):
                            v1[t] += g * v0[t]
                    for t in range(dim):
                        v0[t] += e[t]
    return r, words_done
