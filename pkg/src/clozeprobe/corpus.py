"""Knowledge-source ingestion and cloze-query compilation.

Four on-disk source flavors are normalized into :class:`FactSet`:

* relation triples with per-relation templates (``load_google_re``),
* capped, subsampled relation triples (``load_trex``),
* commonsense triples whose query is a masked evidence sentence
  (``load_conceptnet``),
* pre-rewritten cloze statements with single-token answers
  (``load_squad_cloze``).

Facts then become :class:`ClozeQuery` objects either by rendering a
relation template (``render_cloze``) or by masking the object inside an
evidence sentence.  All randomness is keyed on ``(seed, stable id)`` so
ingestion is reproducible and independent of dict/file iteration order.
"""

from __future__ import annotations

import json
import random
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Optional

from .errors import ConfigError, ParseError, SingleTokenViolation

MASK = "[MASK]"

SUBJECT_SLOT = "[S]"
OBJECT_SLOT = "[O]"


def tokenize(text: str) -> list[str]:
    """Whitespace tokenization with punctuation left attached.

    The one exception is the mask placeholder: a whitespace token that
    CONTAINS the placeholder (e.g. ``"[MASK]."`` from masking ``"fly."``)
    is split so the placeholder stands alone, which every ClozeQuery
    requires.
    """
    out: list[str] = []
    for tok in text.split():
        if MASK in tok and tok != MASK:
            pre, _, post = tok.partition(MASK)
            if pre:
                out.append(pre)
            out.append(MASK)
            if post:
                out.append(post)
        else:
            out.append(tok)
    return out


def is_single_token(surface: str) -> bool:
    return len(surface.split()) == 1


class Cardinality(Enum):
    ONE_TO_ONE = "1-1"
    N_TO_ONE = "N-1"
    N_TO_M = "N-M"
    UNCLASSIFIED = "?"


class QuerySource(Enum):
    TEMPLATE = "template"
    EVIDENCE_MENTION = "evidence_mention"


@dataclass(frozen=True)
class EvidenceSentence:
    text: str
    provenance: str = ""
    masked_text: Optional[str] = None

    def __post_init__(self):
        if self.masked_text is not None and self.masked_text.count(MASK) != 1:
            raise ValueError(
                f"masked_text must contain exactly one {MASK}: {self.masked_text!r}"
            )


@dataclass(frozen=True)
class Fact:
    """One subject-relation-object triple plus aligned evidence sentences."""

    id: str
    subject: str
    object: str
    relation_id: str
    evidences: tuple[EvidenceSentence, ...] = ()

    def __post_init__(self):
        if not self.subject.strip() or not self.object.strip():
            raise ValueError(f"fact {self.id!r}: empty subject or object")


@dataclass(frozen=True)
class RelationTemplate:
    """Cloze template with one subject slot and one object slot."""

    relation_id: str
    template: str
    cardinality: Cardinality = Cardinality.UNCLASSIFIED

    def __post_init__(self):
        if self.template.count(SUBJECT_SLOT) != 1 or self.template.count(OBJECT_SLOT) != 1:
            raise ValueError(
                f"template for {self.relation_id!r} must contain {SUBJECT_SLOT} "
                f"and {OBJECT_SLOT} exactly once: {self.template!r}"
            )


@dataclass(frozen=True)
class ClozeQuery:
    """A tokenized statement with exactly one masked position."""

    tokens: tuple[str, ...]
    mask_index: int
    gold: str
    fact_id: str
    source: QuerySource

    def __post_init__(self):
        if not (0 <= self.mask_index < len(self.tokens)):
            raise ValueError(f"mask_index {self.mask_index} out of range")
        if self.tokens[self.mask_index] != MASK:
            raise ValueError(f"token at mask_index is not {MASK}")
        if self.tokens.count(MASK) != 1:
            raise ValueError("query must contain exactly one mask token")
        if not is_single_token(self.gold):
            raise ValueError(f"gold {self.gold!r} is not a single token")

    def text(self) -> str:
        return " ".join(self.tokens)


@dataclass
class FactSet:
    """Facts from one knowledge source plus its template table.

    ``exclusions`` counts records removed during ingestion, by reason;
    ``len(input records) == len(facts) + sum(exclusions.values())``.
    """

    facts: list[Fact]
    templates: dict[str, RelationTemplate]
    source_name: str
    exclusions: Counter = field(default_factory=Counter)

    def fact_by_id(self) -> dict[str, Fact]:
        return {f.id: f for f in self.facts}

    def relations(self) -> list[str]:
        return sorted({f.relation_id for f in self.facts})


def load_templates(path) -> dict[str, RelationTemplate]:
    """Read the template TSV: relation_id \\t template \\t cardinality."""
    by_value = {c.value: c for c in Cardinality}
    table: dict[str, RelationTemplate] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ParseError("expected 3 tab-separated fields", path, lineno)
            rel, template, card = parts
            if card not in by_value:
                raise ParseError(f"unknown cardinality class {card!r}", path, lineno)
            if rel in table:
                raise ParseError(f"duplicate template for relation {rel!r}", path, lineno)
            try:
                table[rel] = RelationTemplate(rel, template, by_value[card])
            except ValueError as exc:
                raise ParseError(str(exc), path, lineno) from exc
    return table


def _iter_fact_records(path) -> Iterable[tuple[int, dict]]:
    """Yield (lineno, record) from a fact JSONL file, validating shape."""
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc.msg}", path, lineno) from exc
            if not isinstance(rec, dict):
                raise ParseError("record is not a JSON object", path, lineno)
            for key in ("id", "sub_label", "obj_label", "relation"):
                if not isinstance(rec.get(key), str):
                    raise ParseError(f"missing or non-string field {key!r}", path, lineno)
            yield lineno, rec


def _record_evidences(rec: dict, path, lineno) -> tuple[EvidenceSentence, ...]:
    evidences = []
    for ev in rec.get("evidences", []):
        if not isinstance(ev, dict) or not isinstance(ev.get("text"), str):
            raise ParseError("evidence entry lacks a text field", path, lineno)
        try:
            evidences.append(
                EvidenceSentence(
                    text=ev["text"],
                    provenance=ev.get("provenance", ""),
                    masked_text=ev.get("masked_text"),
                )
            )
        except ValueError as exc:
            raise ParseError(str(exc), path, lineno) from exc
    return tuple(evidences)


def _ingest_triples(path, templates: dict[str, RelationTemplate],
                    source_name: str) -> FactSet:
    """Shared triple ingestion: dedupe, single-token objects, known relations."""
    facts: list[Fact] = []
    exclusions: Counter = Counter()
    seen_ids: set[str] = set()
    seen_triples: set[tuple[str, str, str]] = set()
    for lineno, rec in _iter_fact_records(path):
        rel = rec["relation"]
        if rel not in templates:
            raise ConfigError(
                f"{path}:{lineno}: relation {rel!r} has no template entry"
            )
        if rec["id"] in seen_ids:
            raise ParseError(f"duplicate fact id {rec['id']!r}", path, lineno)
        seen_ids.add(rec["id"])
        sub, obj = rec["sub_label"].strip(), rec["obj_label"].strip()
        if not sub or not obj:
            raise ParseError("empty subject or object", path, lineno)
        if not is_single_token(obj):
            exclusions["multi_token_object"] += 1
            continue
        triple = (sub, rel, obj)
        if triple in seen_triples:
            exclusions["duplicate"] += 1
            continue
        seen_triples.add(triple)
        facts.append(
            Fact(
                id=rec["id"],
                subject=sub,
                object=obj,
                relation_id=rel,
                evidences=_record_evidences(rec, path, lineno),
            )
        )
    return FactSet(facts, dict(templates), source_name, exclusions)


def load_google_re(path, templates: dict[str, RelationTemplate]) -> FactSet:
    """Load a manually aligned triple source (template-queried)."""
    return _ingest_triples(path, templates, source_name="google_re")


def load_trex(path, templates: dict[str, RelationTemplate],
              per_relation_cap: int = 1000, seed: int = 0) -> FactSet:
    """Load a large triple source, keeping at most ``per_relation_cap``
    facts per relation via seeded uniform subsampling.

    Selection is keyed on ``(seed, relation_id)``, so adding facts of one
    relation never perturbs the sample drawn for another.
    """
    if per_relation_cap < 1:
        raise ValueError("per_relation_cap must be >= 1")
    full = _ingest_triples(path, templates, source_name="trex")
    by_rel: dict[str, list[int]] = {}
    for i, fact in enumerate(full.facts):
        by_rel.setdefault(fact.relation_id, []).append(i)
    keep: set[int] = set()
    for rel, indices in by_rel.items():
        if len(indices) <= per_relation_cap:
            keep.update(indices)
        else:
            rng = random.Random(f"{seed}:{rel}")
            keep.update(rng.sample(indices, per_relation_cap))
    facts = [f for i, f in enumerate(full.facts) if i in keep]
    exclusions = full.exclusions
    if len(facts) < len(full.facts):
        exclusions["subsampled_out"] += len(full.facts) - len(facts)
    return FactSet(facts, full.templates, "trex", exclusions)


def mask_object_in_sentence(sentence: str, obj: str) -> Optional[str]:
    """Replace the first exact case-sensitive occurrence of ``obj``.

    Returns None when the sentence does not contain the object.
    """
    if obj not in sentence:
        return None
    return sentence.replace(obj, MASK, 1)


def load_conceptnet(path, seed: int = 0) -> FactSet:
    """Load commonsense triples; the query template is the evidence
    sentence itself with the object masked.

    When a record carries several sentences containing the object, one is
    chosen by a uniform draw keyed on ``(seed, fact id)``.
    """
    facts: list[Fact] = []
    exclusions: Counter = Counter()
    seen_ids: set[str] = set()
    seen_triples: set[tuple[str, str, str]] = set()
    for lineno, rec in _iter_fact_records(path):
        if rec["id"] in seen_ids:
            raise ParseError(f"duplicate fact id {rec['id']!r}", path, lineno)
        seen_ids.add(rec["id"])
        sub, obj, rel = rec["sub_label"].strip(), rec["obj_label"].strip(), rec["relation"]
        if not sub or not obj:
            raise ParseError("empty subject or object", path, lineno)
        if not is_single_token(obj):
            exclusions["multi_token_object"] += 1
            continue
        triple = (sub, rel, obj)
        if triple in seen_triples:
            exclusions["duplicate"] += 1
            continue
        evidences = _record_evidences(rec, path, lineno)
        candidates = [ev for ev in evidences if obj in ev.text]
        if not candidates:
            exclusions["object_not_in_sentence"] += 1
            continue
        seen_triples.add(triple)
        if len(candidates) > 1:
            rng = random.Random(f"{seed}:{rec['id']}")
            chosen = candidates[rng.randrange(len(candidates))]
        else:
            chosen = candidates[0]
        masked = EvidenceSentence(
            text=chosen.text,
            provenance=chosen.provenance,
            masked_text=mask_object_in_sentence(chosen.text, obj),
        )
        facts.append(Fact(rec["id"], sub, obj, rel, evidences=(masked,)))
    return FactSet(facts, {}, "conceptnet", exclusions)


def load_squad_cloze(path) -> FactSet:
    """Load pre-rewritten cloze statements with single-token answers."""
    facts: list[Fact] = []
    exclusions: Counter = Counter()
    seen_ids: set[str] = set()
    for lineno, rec in _iter_fact_records(path):
        if rec["id"] in seen_ids:
            raise ParseError(f"duplicate fact id {rec['id']!r}", path, lineno)
        seen_ids.add(rec["id"])
        sub, obj = rec["sub_label"].strip(), rec["obj_label"].strip()
        if not sub or not obj:
            raise ParseError("empty subject or object", path, lineno)
        evidences = rec.get("evidences", [])
        if len(evidences) != 1 or not isinstance(evidences[0], dict):
            raise ParseError("expected exactly one evidence entry", path, lineno)
        masked = evidences[0].get("masked_text")
        if not isinstance(masked, str) or masked.count(MASK) != 1:
            raise ParseError(
                f"cloze statement must contain exactly one {MASK}", path, lineno
            )
        if not is_single_token(obj):
            exclusions["multi_token_object"] += 1
            continue
        facts.append(
            Fact(
                id=rec["id"],
                subject=sub,
                object=obj,
                relation_id=rec["relation"],
                evidences=(
                    EvidenceSentence(
                        text=evidences[0].get("text", masked),
                        provenance=evidences[0].get("provenance", ""),
                        masked_text=masked,
                    ),
                ),
            )
        )
    return FactSet(facts, {}, "squad", exclusions)


Tokenizer = Callable[[str], list[str]]


def render_cloze(fact: Fact, template: RelationTemplate,
                 tokenizer: Tokenizer = tokenize) -> ClozeQuery:
    """Instantiate a relation template for a fact, masking the object slot.

    Subjects may span several tokens; a multi-token object raises
    :class:`SingleTokenViolation`.
    """
    if not is_single_token(fact.object):
        raise SingleTokenViolation(
            f"fact {fact.id!r}: object {fact.object!r} spans multiple tokens"
        )
    if MASK in fact.subject or MASK in fact.object:
        raise ValueError(f"fact {fact.id!r}: surface form contains the mask placeholder")
    rendered = template.template.replace(OBJECT_SLOT, MASK).replace(SUBJECT_SLOT, fact.subject)
    tokens = tuple(tokenizer(rendered))
    return ClozeQuery(
        tokens=tokens,
        mask_index=tokens.index(MASK),
        gold=fact.object,
        fact_id=fact.id,
        source=QuerySource.TEMPLATE,
    )


def evidence_query(fact: Fact, evidence: EvidenceSentence,
                   tokenizer: Tokenizer = tokenize) -> ClozeQuery:
    """Build a query from a masked evidence sentence."""
    masked = evidence.masked_text
    if masked is None:
        masked = mask_object_in_sentence(evidence.text, fact.object)
        if masked is None:
            raise ValueError(
                f"fact {fact.id!r}: evidence does not contain the object"
            )
    tokens = tuple(tokenizer(masked))
    return ClozeQuery(
        tokens=tokens,
        mask_index=tokens.index(MASK),
        gold=fact.object,
        fact_id=fact.id,
        source=QuerySource.EVIDENCE_MENTION,
    )


def compile_queries(factset: FactSet, tokenizer: Tokenizer = tokenize) -> list[ClozeQuery]:
    """One query per fact: template-rendered when the relation has a
    template, otherwise the fact's masked evidence sentence."""
    queries = []
    for fact in factset.facts:
        template = factset.templates.get(fact.relation_id)
        if template is not None:
            queries.append(render_cloze(fact, template, tokenizer))
        else:
            ev = next((e for e in fact.evidences if e.masked_text is not None), None)
            if ev is None:
                raise ConfigError(
                    f"fact {fact.id!r}: no template and no masked evidence"
                )
            queries.append(evidence_query(fact, ev, tokenizer))
    return queries


def valid_object_index(factset: FactSet) -> dict[tuple[str, str], set[str]]:
    """All objects observed for each (subject, relation) pair."""
    index: dict[tuple[str, str], set[str]] = {}
    for fact in factset.facts:
        index.setdefault((fact.subject, fact.relation_id), set()).add(fact.object)
    return index


def _maskable_evidences(fact: Fact) -> list[EvidenceSentence]:
    return [
        ev for ev in fact.evidences
        if ev.masked_text is not None or fact.object in ev.text
    ]


def sample_mention_queries(factset: FactSet, per_relation: int,
                           mentions_per_fact: int, seed: int = 0,
                           tokenizer: Tokenizer = tokenize) -> list[ClozeQuery]:
    """Sample facts and evidence mentions for query-phrasing variability.

    Facts with fewer than ``mentions_per_fact`` maskable evidence
    sentences are skipped; at most ``per_relation`` eligible facts are
    drawn per relation, each contributing exactly ``mentions_per_fact``
    masked-mention queries.
    """
    if mentions_per_fact < 1:
        raise ValueError("mentions_per_fact must be >= 1")
    eligible: dict[str, list[Fact]] = {}
    for fact in factset.facts:
        if len(_maskable_evidences(fact)) >= mentions_per_fact:
            eligible.setdefault(fact.relation_id, []).append(fact)
    queries: list[ClozeQuery] = []
    for rel in sorted(eligible):
        facts = eligible[rel]
        if len(facts) > per_relation:
            rng = random.Random(f"{seed}:facts:{rel}")
            chosen_idx = sorted(rng.sample(range(len(facts)), per_relation))
            facts = [facts[i] for i in chosen_idx]
        for fact in facts:
            evs = _maskable_evidences(fact)
            if len(evs) > mentions_per_fact:
                rng = random.Random(f"{seed}:mentions:{fact.id}")
                idx = sorted(rng.sample(range(len(evs)), mentions_per_fact))
                evs = [evs[i] for i in idx]
            queries.extend(evidence_query(fact, ev, tokenizer) for ev in evs)
    return queries
