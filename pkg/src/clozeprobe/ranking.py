"""Filtered rank of the gold token and per-query precision-at-k.

The rank counts, among candidates not removed by the filter set, how many
score strictly above the gold plus how many tie with it but precede it in
canonical vocabulary order.  Rank 1 therefore means the gold wins its
tie-broken comparison against every surviving candidate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from . import _kernels
from .adapter.native import ScoreVector
from .vocab import CandidateVocabulary

DEFAULT_TOPK = 10


@dataclass(frozen=True)
class RankResult:
    """Per-query outcome; the atom every metric aggregates over."""

    fact_id: str
    relation_id: str
    rank: int
    gold_score: float
    top1_token: str
    top1_log_prob: Optional[float]
    topk_tokens: tuple[str, ...]
    filtered_out: int


def filtered_rank(scores: ScoreVector, gold: str, filter_set: Iterable[str],
                  vocab: CandidateVocabulary, *, fact_id: str = "",
                  relation_id: str = "", topk: int = DEFAULT_TOPK) -> RankResult:
    """Rank the gold against all candidates outside ``filter_set``.

    The caller must have removed the gold itself from the filter set
    (other valid objects are filtered; the one under test never is).
    Filter tokens outside the vocabulary are ignored.
    """
    gold_idx = vocab.index.get(gold)
    if gold_idx is None:
        raise ValueError(f"gold {gold!r} is not in the candidate vocabulary")
    values = scores.scores
    mask = np.zeros(len(vocab), dtype=np.bool_)
    for token in filter_set:
        idx = vocab.index.get(token)
        if idx is not None:
            mask[idx] = True
    if mask[gold_idx]:
        raise ValueError(f"gold {gold!r} must not be in the filter set")

    rank = _kernels.rank_of_gold(values, mask, gold_idx)
    top_idx = _kernels.topk_indices(values, mask, topk)
    top_tokens = tuple(vocab.tokens[i] for i in top_idx)
    top1 = top_tokens[0] if top_tokens else ""
    top1_log_prob = float(values[top_idx[0]]) if scores.is_log_prob and len(top_idx) else None
    return RankResult(
        fact_id=fact_id,
        relation_id=relation_id,
        rank=int(rank),
        gold_score=float(values[gold_idx]),
        top1_token=top1,
        top1_log_prob=top1_log_prob,
        topk_tokens=top_tokens,
        filtered_out=int(np.count_nonzero(mask)),
    )


def precision_at_k(result: RankResult, k: int) -> int:
    """1 when the gold's filtered rank is within the top k, else 0."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return 1 if result.rank <= k else 0
