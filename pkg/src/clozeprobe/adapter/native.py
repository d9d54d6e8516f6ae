"""Scoring contract plus the native (in-process) backends.

Three native backends let the whole pipeline run with no external model:

* ``UniformBackend`` — every candidate scores 0.0; ranks collapse to the
  canonical tie-break order.
* ``FreqBackend`` — per-relation object-frequency counts over the test
  facts; the ceiling for a model that always answers the most common
  object of a relation.
* ``NgramBackend`` — count-based add-k smoothed n-gram language model
  scoring the token after the left context of the masked position,
  backing off to shorter contexts (down to unigrams) when the context
  was never observed.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from ..corpus import ClozeQuery, FactSet
from ..errors import ProtocolViolation
from ..vocab import CandidateVocabulary


class ScoringKind(Enum):
    """How a backend derives the masked-position distribution."""

    UNIDIRECTIONAL = "uni"            # left context only
    BIDIRECTIONAL_MASKED = "masked"   # full context, mask at the query slot
    BIDIRECTIONAL_AVERAGED = "avg"    # forward/backward probabilities averaged


@dataclass(frozen=True)
class ScoringMode:
    kind: ScoringKind
    description: str = ""

    @classmethod
    def from_wire(cls, wire: str) -> "ScoringMode":
        return cls(ScoringKind(wire))


class Transport(Enum):
    IN_PROCESS = "in_process"
    SUBPROCESS_STDIO = "subprocess_stdio"
    TCP = "tcp"


@dataclass(frozen=True)
class ScoreVector:
    """Per-candidate scores aligned with the vocabulary order; higher is
    more likely.  Downstream ranks depend only on the ordering."""

    scores: np.ndarray
    is_log_prob: bool = False

    def __post_init__(self):
        object.__setattr__(self, "scores", np.asarray(self.scores, dtype=np.float64))


class Backend(ABC):
    """A scoring backend: a name, a declared mode, and a score function."""

    name: str
    mode: ScoringMode
    transport: Transport = Transport.IN_PROCESS
    # True when scoring needs the fact identity (not carried on the wire),
    # making the backend unusable behind the remote protocol.
    requires_fact_context: bool = False

    @abstractmethod
    def score(self, query: ClozeQuery, vocab: CandidateVocabulary) -> ScoreVector:
        ...

    def close(self):
        pass


def score(backend: Backend, query: ClozeQuery,
          vocab: CandidateVocabulary) -> ScoreVector:
    """Score a query and enforce the ScoreVector invariants."""
    vec = backend.score(query, vocab)
    if vec.scores.shape != (len(vocab),):
        raise ProtocolViolation(
            f"backend {backend.name!r} returned {vec.scores.shape[0]} scores "
            f"for a vocabulary of {len(vocab)}"
        )
    if not np.all(np.isfinite(vec.scores)):
        raise ProtocolViolation(f"backend {backend.name!r} returned non-finite scores")
    return vec


class UniformBackend(Backend):
    def __init__(self, name: str = "uniform"):
        self.name = name
        self.mode = ScoringMode(
            ScoringKind.BIDIRECTIONAL_MASKED, "all candidates score 0.0"
        )

    def score(self, query, vocab):
        return ScoreVector(np.zeros(len(vocab)), is_log_prob=False)


class EchoBackend(Backend):
    """Protocol test fixture: candidate i scores its own vocabulary index."""

    def __init__(self, name: str = "echo"):
        self.name = name
        self.mode = ScoringMode(ScoringKind.BIDIRECTIONAL_MASKED, "index-as-score")

    def score(self, query, vocab):
        return ScoreVector(np.arange(len(vocab), dtype=np.float64), is_log_prob=False)


class FreqBackend(Backend):
    """Scores a candidate by how often it appears as an object of the
    query's relation in the test facts; unseen candidates score 0."""

    requires_fact_context = True

    def __init__(self, relation_counts: dict[str, Counter],
                 fact_relations: dict[str, str], name: str = "freq"):
        self.name = name
        self.mode = ScoringMode(
            ScoringKind.BIDIRECTIONAL_MASKED, "per-relation object-frequency profile"
        )
        self._relation_counts = relation_counts
        self._fact_relations = fact_relations

    def score(self, query, vocab):
        relation = self._fact_relations.get(query.fact_id)
        counts = self._relation_counts.get(relation, Counter())
        scores = np.zeros(len(vocab))
        for token, count in counts.items():
            idx = vocab.index.get(token)
            if idx is not None:
                scores[idx] = float(count)
        return ScoreVector(scores, is_log_prob=False)


def freq_fit(test_facts: FactSet | list, name: str = "freq") -> FreqBackend:
    """Fit the frequency baseline on the facts it will be tested on."""
    facts = test_facts.facts if isinstance(test_facts, FactSet) else list(test_facts)
    relation_counts: dict[str, Counter] = {}
    fact_relations: dict[str, str] = {}
    for fact in facts:
        relation_counts.setdefault(fact.relation_id, Counter())[fact.object] += 1
        fact_relations[fact.id] = fact.relation_id
    return FreqBackend(relation_counts, fact_relations, name=name)


@dataclass
class _ContextTable:
    """Continuation counts for one context; total is the continuation sum,
    which keeps every per-context distribution normalized exactly."""

    counts: Counter = field(default_factory=Counter)
    total: int = 0


class NgramBackend(Backend):
    """Add-k smoothed count n-gram model over whitespace tokens.

    The probability of token ``t`` after context ``c`` is
    ``(count(c, t) + k) / (total(c) + k * |V|)`` where ``V`` is the model
    vocabulary (unique corpus tokens).  A context that was never observed
    falls back to its longest observed suffix, ending at the unigram
    (empty) context, which is always observed for a non-empty corpus.
    """

    def __init__(self, corpus_tokens: list[str], order: int, add_k: float,
                 name: str = "ngram"):
        if order < 1:
            raise ValueError("order must be >= 1")
        if add_k <= 0:
            raise ValueError("add_k must be > 0")
        if not corpus_tokens:
            raise ValueError("corpus is empty")
        self.name = name
        self.mode = ScoringMode(
            ScoringKind.UNIDIRECTIONAL,
            f"add-{add_k} smoothed {order}-gram counts over the left context",
        )
        self.order = order
        self.add_k = float(add_k)
        self.model_vocab = tuple(sorted(set(corpus_tokens)))
        self._tables: dict[tuple[str, ...], _ContextTable] = {}
        for t, token in enumerate(corpus_tokens):
            for length in range(min(order - 1, t) + 1):
                ctx = tuple(corpus_tokens[t - length:t])
                table = self._tables.setdefault(ctx, _ContextTable())
                table.counts[token] += 1
                table.total += 1

    def effective_context(self, context: tuple[str, ...]) -> tuple[str, ...]:
        """Longest observed suffix of the context, capped at order-1."""
        ctx = tuple(context[-(self.order - 1):]) if self.order > 1 else ()
        while ctx and ctx not in self._tables:
            ctx = ctx[1:]
        return ctx

    def prob(self, token: str, context: tuple[str, ...]) -> float:
        ctx = self.effective_context(context)
        table = self._tables[ctx]
        denom = table.total + self.add_k * len(self.model_vocab)
        return (table.counts.get(token, 0) + self.add_k) / denom

    def logprob(self, token: str, context: tuple[str, ...]) -> float:
        return math.log(self.prob(token, context))

    def context_distribution(self, context: tuple[str, ...]) -> dict[str, float]:
        """The full-model-vocabulary distribution actually used for this
        context (after backoff); sums to 1 up to rounding."""
        return {t: self.prob(t, context) for t in self.model_vocab}

    def score(self, query, vocab):
        context = tuple(query.tokens[: query.mask_index])
        ctx = self.effective_context(context)
        table = self._tables[ctx]
        denom = table.total + self.add_k * len(self.model_vocab)
        scores = np.empty(len(vocab))
        for i, token in enumerate(vocab.tokens):
            scores[i] = math.log((table.counts.get(token, 0) + self.add_k) / denom)
        return ScoreVector(scores, is_log_prob=True)


def ngram_fit(corpus_tokens: list[str], order: int, add_k: float,
              name: str = "ngram") -> NgramBackend:
    return NgramBackend(corpus_tokens, order, add_k, name=name)
