"""Hot numeric kernels for rank computation.

Two interchangeable implementations: numba ``@njit`` loops (default) and
pure numpy.  Set ``PROBE_PURE_NUMPY=1`` to force the numpy path; it is
also used automatically when numba is unavailable.  Both paths are exact
and must agree bit-for-bit (see tests and benchmarks/bench_rank.py).

Semantics shared by both paths, given a score vector aligned with the
canonical vocabulary order, the gold's index, and a boolean mask of
filtered-out candidates (the gold itself must not be masked):

* rank = 1 + #(unmasked candidates scoring above the gold)
           + #(unmasked candidates tied with the gold at a smaller index)
* top-k = indices of the k best unmasked candidates, score descending,
  ties broken by ascending index.
"""

from __future__ import annotations

import os

import numpy as np


def _rank_numpy(scores: np.ndarray, filter_mask: np.ndarray, gold_idx: int) -> int:
    g = scores[gold_idx]
    valid = ~filter_mask
    valid = valid.copy()
    valid[gold_idx] = False
    better = int(np.count_nonzero(valid & (scores > g)))
    tied_before = int(np.count_nonzero(valid[:gold_idx] & (scores[:gold_idx] == g)))
    return 1 + better + tied_before


def _topk_numpy(scores: np.ndarray, filter_mask: np.ndarray, k: int) -> np.ndarray:
    # Masked entries map to +inf under the negated sort key, so they land
    # strictly after every finite (unmasked) score.
    neg = np.where(filter_mask, np.inf, -scores)
    order = np.lexsort((np.arange(scores.shape[0]), neg))
    n_valid = scores.shape[0] - int(np.count_nonzero(filter_mask))
    return order[: min(k, n_valid)].astype(np.int64)


def _make_numba_kernels():
    from numba import njit

    @njit(cache=True)
    def rank_kernel(scores, filter_mask, gold_idx):
        g = scores[gold_idx]
        rank = 1
        for i in range(scores.shape[0]):
            if i == gold_idx or filter_mask[i]:
                continue
            s = scores[i]
            if s > g or (s == g and i < gold_idx):
                rank += 1
        return rank

    @njit(cache=True)
    def topk_kernel(scores, filter_mask, k):
        n = scores.shape[0]
        out = np.empty(k, dtype=np.int64)
        taken = np.zeros(n, dtype=np.bool_)
        m = 0
        for _ in range(k):
            best = -1
            best_score = 0.0
            for i in range(n):
                if filter_mask[i] or taken[i]:
                    continue
                # strict > keeps the smallest index among tied scores
                if best == -1 or scores[i] > best_score:
                    best = i
                    best_score = scores[i]
            if best == -1:
                break
            taken[best] = True
            out[m] = best
            m += 1
        return out[:m]

    return rank_kernel, topk_kernel


def _pure_numpy_requested() -> bool:
    return os.environ.get("PROBE_PURE_NUMPY", "").lower() in ("1", "true", "yes")


if not _pure_numpy_requested():
    try:
        _rank_numba, _topk_numba = _make_numba_kernels()
        IMPL = "numba"
    except ImportError:
        _rank_numba = _topk_numba = None
        IMPL = "numpy"
else:
    _rank_numba = _topk_numba = None
    IMPL = "numpy"


def rank_of_gold(scores: np.ndarray, filter_mask: np.ndarray, gold_idx: int) -> int:
    """1-based filtered rank of the candidate at ``gold_idx``."""
    if IMPL == "numba":
        return int(_rank_numba(scores, filter_mask, gold_idx))
    return _rank_numpy(scores, filter_mask, gold_idx)


def topk_indices(scores: np.ndarray, filter_mask: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k best unmasked candidates, best first."""
    if IMPL == "numba":
        return _topk_numba(scores, filter_mask, k)
    return _topk_numpy(scores, filter_mask, k)
