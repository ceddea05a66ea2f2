"""Span-decoding kernels: best-span argmax and top-k span enumeration.

These inner loops run once per window per instance during prediction,
confidence scoring and data filtering, which makes them the hottest
non-BLAS code in the package. Each kernel ships in two equivalent
implementations:

* a numba ``@njit`` version, used by default when numba imports, and
* a vectorized pure-numpy fallback.

Set ``SPANSPOT_NUMBA=0`` to force the numpy path. Both orderings are
canonical and identical: score descending, then start ascending, then end
ascending. Invalid positions are marked by -inf logits.

``benchmarks/bench_decode.py`` compares the two backends.
"""

from __future__ import annotations

import os

import numpy as np


def _env_wants_numba() -> bool:
    return os.environ.get("SPANSPOT_NUMBA", "1").strip().lower() not in ("0", "false", "no")


try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    njit = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and _env_wants_numba()


def _banded_scores(start_logits: np.ndarray, end_logits: np.ndarray, max_len: int):
    """(L, L) pair-score matrix with invalid pairs at -inf, plus its mask."""
    n = start_logits.shape[0]
    scores = start_logits[:, None] + end_logits[None, :]
    ii, jj = np.indices((n, n))
    ok = (jj >= ii) & (jj - ii < max_len) & np.isfinite(scores)
    scores[~ok] = -np.inf
    return scores, ok


def best_span_numpy(start_logits: np.ndarray, end_logits: np.ndarray, max_len: int):
    scores, ok = _banded_scores(start_logits, end_logits, max_len)
    if not ok.any():
        return -1, -1
    flat = int(np.argmax(scores))  # first maximum = smallest (i, j) on ties
    n = start_logits.shape[0]
    return flat // n, flat % n


def top_k_spans_numpy(start_logits: np.ndarray, end_logits: np.ndarray, max_len: int, k: int):
    scores, ok = _banded_scores(start_logits, end_logits, max_len)
    ii, jj = np.nonzero(ok)
    vals = scores[ii, jj]
    order = np.lexsort((jj, ii, -vals))[:k]
    return ii[order], jj[order], vals[order]


def _best_span_py(start_logits, end_logits, max_len):
    n = start_logits.shape[0]
    best_i = -1
    best_j = -1
    best = -np.inf
    for i in range(n):
        si = start_logits[i]
        if si == -np.inf:
            continue
        j_hi = min(n, i + max_len)
        for j in range(i, j_hi):
            ej = end_logits[j]
            if ej == -np.inf:
                continue
            s = si + ej
            if s > best:
                best = s
                best_i = i
                best_j = j
    return best_i, best_j


def _top_k_spans_py(start_logits, end_logits, max_len, k):
    n = start_logits.shape[0]
    top_i = np.full(k, -1, dtype=np.int64)
    top_j = np.full(k, -1, dtype=np.int64)
    top_s = np.full(k, -np.inf, dtype=np.float64)
    count = 0
    for i in range(n):
        si = start_logits[i]
        if si == -np.inf:
            continue
        j_hi = min(n, i + max_len)
        for j in range(i, j_hi):
            ej = end_logits[j]
            if ej == -np.inf:
                continue
            s = si + ej
            # insertion point under (score desc, i asc, j asc)
            pos = count
            while pos > 0:
                ps = top_s[pos - 1]
                if s > ps or (s == ps and (i < top_i[pos - 1] or (i == top_i[pos - 1] and j < top_j[pos - 1]))):
                    pos -= 1
                else:
                    break
            if pos >= k:
                continue
            hi = min(count, k - 1)
            for m in range(hi, pos, -1):
                top_s[m] = top_s[m - 1]
                top_i[m] = top_i[m - 1]
                top_j[m] = top_j[m - 1]
            top_s[pos] = s
            top_i[pos] = i
            top_j[pos] = j
            if count < k:
                count += 1
    return top_i[:count], top_j[:count], top_s[:count]


if HAVE_NUMBA:
    best_span_numba = njit(cache=True)(_best_span_py)
    top_k_spans_numba = njit(cache=True)(_top_k_spans_py)
else:  # pragma: no cover
    best_span_numba = None
    top_k_spans_numba = None


def best_span(start_logits: np.ndarray, end_logits: np.ndarray, max_len: int) -> tuple[int, int]:
    """Highest-scoring valid (start, end) pair, or (-1, -1) when none exists."""
    sl = np.ascontiguousarray(start_logits, dtype=np.float64)
    el = np.ascontiguousarray(end_logits, dtype=np.float64)
    if USE_NUMBA:
        i, j = best_span_numba(sl, el, max_len)
        return int(i), int(j)
    return best_span_numpy(sl, el, max_len)


def top_k_spans_arrays(
    start_logits: np.ndarray, end_logits: np.ndarray, max_len: int, k: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Up to k best valid pairs as (starts, ends, scores), canonically ordered."""
    sl = np.ascontiguousarray(start_logits, dtype=np.float64)
    el = np.ascontiguousarray(end_logits, dtype=np.float64)
    if USE_NUMBA:
        return top_k_spans_numba(sl, el, max_len, k)
    return top_k_spans_numpy(sl, el, max_len, k)
