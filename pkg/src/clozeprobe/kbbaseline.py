"""Knowledge-graph query baseline over pre-extracted relation triples.

Two entity-linking regimes share one store: naive exact string matching
on the subject, and an oracle that credits the gold whenever ANY triple
of the right relation was extracted from the sentence aligned with the
test fact, regardless of the extracted subject or object.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .corpus import Fact
from .errors import ParseError
from .ranking import RankResult

# Rank assigned when the gold is absent from the retrieved list: misses
# every practical k, so it contributes 0 to every P@k.
MISS_RANK = 1 << 30


@dataclass(frozen=True)
class ExtractedTriple:
    sentence_id: str
    subject: str
    relation_id: str
    object: str
    confidence: float


@dataclass
class TripleStore:
    by_subject_relation: dict[tuple[str, str], list[tuple[str, float]]] = field(
        default_factory=dict
    )
    by_sentence_relation: set[tuple[str, str]] = field(default_factory=set)

    def add(self, triple: ExtractedTriple) -> None:
        key = (triple.subject, triple.relation_id)
        objects = self.by_subject_relation.setdefault(key, [])
        for i, (obj, conf) in enumerate(objects):
            if obj == triple.object:
                if triple.confidence > conf:
                    objects[i] = (obj, triple.confidence)
                break
        else:
            objects.append((triple.object, triple.confidence))
        self.by_sentence_relation.add((triple.sentence_id, triple.relation_id))


def load_triples(path) -> TripleStore:
    """Read extractor output: TSV rows of sentence_id, subject, relation,
    object, confidence.  Duplicate (s, r, o) rows keep the max confidence."""
    store = TripleStore()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 5:
                raise ParseError("expected 5 tab-separated fields", path, lineno)
            sentence_id, subject, relation_id, obj, conf_raw = parts
            try:
                confidence = float(conf_raw)
            except ValueError as exc:
                raise ParseError(
                    f"non-numeric confidence {conf_raw!r}", path, lineno
                ) from exc
            store.add(ExtractedTriple(sentence_id, subject, relation_id, obj, confidence))
    return store


def query_naive(store: TripleStore, subject: str, relation_id: str) -> list[str]:
    """Objects extracted for the exact (subject, relation) key, confidence
    descending, confidence ties broken by code point order."""
    objects = store.by_subject_relation.get((subject, relation_id), [])
    return [obj for obj, _ in sorted(objects, key=lambda oc: (-oc[1], oc[0]))]


def query_oracle(store: TripleStore, fact: Fact,
                 alignment: Optional[str]) -> list[str]:
    """Naive retrieval plus entity-linking oracle credit: when a triple of
    the fact's relation was extracted from the aligned sentence, the gold
    object is placed first."""
    naive = query_naive(store, fact.subject, fact.relation_id)
    if alignment is not None and (alignment, fact.relation_id) in store.by_sentence_relation:
        return [fact.object] + [obj for obj in naive if obj != fact.object]
    return naive


def baseline_rank_result(fact: Fact, ranked_objects: list[str],
                         topk: int = 10) -> RankResult:
    """Wrap a retrieved ranking as a RankResult so analysis treats KB and
    LM backends uniformly."""
    try:
        rank = ranked_objects.index(fact.object) + 1
    except ValueError:
        rank = MISS_RANK
    return RankResult(
        fact_id=fact.id,
        relation_id=fact.relation_id,
        rank=rank,
        gold_score=0.0,
        top1_token=ranked_objects[0] if ranked_objects else "",
        top1_log_prob=None,
        topk_tokens=tuple(ranked_objects[:topk]),
        filtered_out=0,
    )
