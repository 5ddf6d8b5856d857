"""Exact top-k inner-product kernels.

Two interchangeable implementations share one contract: given a row-major
float32 matrix of unit rows and a query vector, return the indices and
float64 scores of the k best rows ordered by (score desc, row index asc).
Rows are stored sorted by chunk id, so row order is the chunk-id tie-break.

The numba path is used when numba imports and ``CORAL_DISABLE_NUMBA`` is
unset; set ``CORAL_DISABLE_NUMBA=1`` to force the pure numpy path.
"""

from __future__ import annotations

import os

import numpy as np

_DISABLED = os.environ.get("CORAL_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes", "on")

try:
    if _DISABLED:
        raise ImportError("numba disabled by CORAL_DISABLE_NUMBA")
    from numba import njit

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False


def topk_numpy(matrix: np.ndarray, query: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    n = matrix.shape[0]
    k = min(k, n)
    if k <= 0:
        return np.empty(0, np.int64), np.empty(0, np.float64)
    scores = np.einsum("ij,j->i", matrix.astype(np.float64), query.astype(np.float64))
    if k < n:
        # everything tied with the k-th best must be a candidate, argpartition alone picks arbitrarily
        kth = np.partition(scores, n - k)[n - k]
        cand = np.flatnonzero(scores >= kth)
    else:
        cand = np.arange(n)
    order = np.lexsort((cand, -scores[cand]))[:k]
    idx = cand[order].astype(np.int64)
    return idx, scores[idx]


if HAVE_NUMBA:

    @njit(cache=True, nogil=True)
    def _topk_jit(matrix, query, k):
        n, d = matrix.shape
        k = min(k, n)
        idx = np.empty(k, np.int64)
        best = np.empty(k, np.float64)
        filled = 0
        for i in range(n):
            s = 0.0
            for j in range(d):
                s += np.float64(matrix[i, j]) * query[j]
            if filled < k:
                pos = filled
                filled += 1
            elif s > best[k - 1]:
                pos = k - 1
            else:
                continue
            # strict < keeps the earlier row ahead on equal scores
            while pos > 0 and best[pos - 1] < s:
                best[pos] = best[pos - 1]
                idx[pos] = idx[pos - 1]
                pos -= 1
            best[pos] = s
            idx[pos] = i
        return idx, best

    def topk_numba(matrix: np.ndarray, query: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
        if k <= 0 or matrix.shape[0] == 0:
            return np.empty(0, np.int64), np.empty(0, np.float64)
        m = np.ascontiguousarray(matrix, dtype=np.float32)
        q = np.ascontiguousarray(query, dtype=np.float64)
        return _topk_jit(m, q, int(k))

    topk = topk_numba
    BACKEND = "numba"
else:
    topk_numba = None
    topk = topk_numpy
    BACKEND = "numpy"
