"""Aggregation of rank results into reports, curves, distributions, and
feature correlations.

Corpus-level numbers are macro averages: mean per relation first, then an
unweighted mean across relations.  Fact-weighted micro averages are also
emitted, clearly labeled, since the two differ whenever relation sizes
differ.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .corpus import Fact, RelationTemplate
from .errors import DegenerateVariance, EmptyReport
from .ranking import RankResult, precision_at_k


@dataclass
class RelationReport:
    relation_id: str
    n_facts: int
    p_at: dict[int, float]
    mean_rank: float


@dataclass
class CorpusReport:
    per_relation: list[RelationReport]
    macro_p_at: dict[int, float]   # unweighted mean over relations
    micro_p_at: dict[int, float]   # fact-weighted mean, for comparison
    by_cardinality: dict[str, dict[int, float]] = field(default_factory=dict)
    exclusions: dict[str, int] = field(default_factory=dict)


def build_reports(results: list[RankResult], ks: list[int],
                  exclusions: Optional[dict[str, int]] = None) -> CorpusReport:
    """Per-relation means of P@k and rank, then the macro average."""
    if not results:
        raise EmptyReport("no rank results to aggregate")
    if not ks:
        raise ValueError("ks must be non-empty")
    by_relation: dict[str, list[RankResult]] = {}
    for result in results:
        by_relation.setdefault(result.relation_id, []).append(result)

    per_relation = []
    for relation_id in sorted(by_relation):
        group = by_relation[relation_id]
        p_at = {
            k: sum(precision_at_k(r, k) for r in group) / len(group)
            for k in ks
        }
        mean_rank = sum(r.rank for r in group) / len(group)
        per_relation.append(RelationReport(relation_id, len(group), p_at, mean_rank))

    macro = {
        k: sum(rep.p_at[k] for rep in per_relation) / len(per_relation)
        for k in ks
    }
    micro = {
        k: sum(precision_at_k(r, k) for r in results) / len(results)
        for k in ks
    }
    return CorpusReport(per_relation, macro, micro,
                        exclusions=dict(exclusions or {}))


def cardinality_rollup(report: CorpusReport,
                       templates: dict[str, RelationTemplate]) -> dict[str, dict[int, float]]:
    """Unweighted macro mean of P@k within each cardinality class.

    Relations without a template entry fall into the "?" class.
    """
    groups: dict[str, list[RelationReport]] = {}
    for rel_report in report.per_relation:
        template = templates.get(rel_report.relation_id)
        label = template.cardinality.value if template is not None else "?"
        groups.setdefault(label, []).append(rel_report)
    ks = list(report.macro_p_at)
    return {
        label: {k: sum(r.p_at[k] for r in members) / len(members) for k in ks}
        for label, members in sorted(groups.items())
    }


def pk_curve(results: list[RankResult], ks: list[int]) -> list[tuple[int, float]]:
    """Macro P@k over an ascending grid of k values."""
    if ks != sorted(ks):
        raise ValueError("ks grid must be sorted ascending")
    report = build_reports(results, ks)
    return [(k, report.macro_p_at[k]) for k in ks]


@dataclass
class RankDistribution:
    """Gold ranks across several evidence-sentence phrasings per fact."""

    per_fact: dict[str, list[int]]
    summary: dict[str, float]

    @property
    def pooled(self) -> list[int]:
        return [rank for ranks in self.per_fact.values() for rank in ranks]


def rank_distribution(mention_ranks: dict[str, list[int]]) -> RankDistribution:
    """Summarize pooled mention ranks; every fact must contribute the same
    number of mentions."""
    if not mention_ranks:
        raise EmptyReport("no mention groups")
    sizes = {len(ranks) for ranks in mention_ranks.values()}
    if len(sizes) != 1:
        raise ValueError(f"uneven mention group sizes: {sorted(sizes)}")
    pooled = np.array(
        [rank for ranks in mention_ranks.values() for rank in ranks], dtype=np.float64
    )
    q1, median, q3 = np.percentile(pooled, [25, 50, 75])  # linear interpolation
    summary = {
        "mean": float(pooled.mean()),
        "median": float(median),
        "q1": float(q1),
        "q3": float(q3),
        "min": float(pooled.min()),
        "max": float(pooled.max()),
    }
    return RankDistribution({k: list(v) for k, v in mention_ranks.items()}, summary)


def pearson(x, y) -> float:
    """Sample Pearson correlation; exact ±1.0 on (anti)identical inputs."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-d and the same length")
    if len(x) < 2:
        raise ValueError("need at least two observations")
    xm = x - x.mean()
    ym = y - y.mean()
    sxx = float(xm @ xm)
    syy = float(ym @ ym)
    if sxx == 0.0 or syy == 0.0:
        raise DegenerateVariance("zero variance input to pearson")
    r = float(xm @ ym) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


@dataclass
class FeatureProviders:
    """Optional feature sources; features without a provider stay absent."""

    mention_count: Optional[Callable[[str], int]] = None
    embedding: Optional[Callable[[str], np.ndarray]] = None
    wordpiece_len: Optional[Callable[[str], int]] = None


@dataclass
class FeatureVector:
    """Fact-level features correlated against per-fact P@1."""

    subject_mentions: Optional[int] = None
    object_mentions: Optional[int] = None
    top1_log_prob: Optional[float] = None
    subject_object_cosine: Optional[float] = None
    subject_tokens: Optional[int] = None
    subject_wordpieces: Optional[int] = None

    FIELDS = (
        "subject_mentions",
        "object_mentions",
        "top1_log_prob",
        "subject_object_cosine",
        "subject_tokens",
        "subject_wordpieces",
    )


def feature_extract(fact: Fact, result: RankResult,
                    providers: FeatureProviders = FeatureProviders()) -> FeatureVector:
    """Compute whichever features the providers support."""
    features = FeatureVector(subject_tokens=len(fact.subject.split()))
    if providers.mention_count is not None:
        features.subject_mentions = providers.mention_count(fact.subject)
        features.object_mentions = providers.mention_count(fact.object)
    if providers.embedding is not None:
        sv = np.asarray(providers.embedding(fact.subject), dtype=np.float64)
        ov = np.asarray(providers.embedding(fact.object), dtype=np.float64)
        ns, no = np.linalg.norm(sv), np.linalg.norm(ov)
        if ns > 0 and no > 0:
            cos = float(sv @ ov / (ns * no))
            features.subject_object_cosine = max(-1.0, min(1.0, cos))
    if providers.wordpiece_len is not None:
        features.subject_wordpieces = providers.wordpiece_len(fact.subject)
    features.top1_log_prob = result.top1_log_prob
    return features


def feature_correlations(features: list[FeatureVector],
                         p_at_1: list[int]) -> dict[str, dict]:
    """Pearson r between each available feature and the per-fact P@1
    indicator.  Degenerate or absent features are reported as such rather
    than silently dropped."""
    if len(features) != len(p_at_1):
        raise ValueError("features and p_at_1 must align")
    out: dict[str, dict] = {}
    for name in FeatureVector.FIELDS:
        pairs = [
            (getattr(fv, name), p)
            for fv, p in zip(features, p_at_1)
            if getattr(fv, name) is not None
        ]
        if len(pairs) < 2:
            out[name] = {"status": "absent", "n": len(pairs)}
            continue
        xs = [float(v) for v, _ in pairs]
        ys = [float(p) for _, p in pairs]
        try:
            out[name] = {"status": "ok", "n": len(pairs), "r": pearson(xs, ys)}
        except DegenerateVariance:
            out[name] = {"status": "degenerate_variance", "n": len(pairs)}
    return out
