"""Unified candidate vocabulary and probe compilation.

Every backend ranks over the same case-sensitive token list: the
intersection of the per-model vocabularies, sorted by code point.  That
sort order doubles as the tie-break key everywhere ranks are computed.
"""

from __future__ import annotations

import hashlib
from collections import Counter
from dataclasses import dataclass, field

from .corpus import ClozeQuery
from .errors import EmptyVocabulary, ParseError


@dataclass(frozen=True)
class CandidateVocabulary:
    """Ordered, duplicate-free token list with its inverse index.

    ``tokens[i]`` is the i-th token in canonical (code point) order, and
    ``index[tokens[i]] == i``; the dense id is the canonical rank used to
    break score ties.
    """

    tokens: tuple[str, ...]
    index: dict[str, int] = field(compare=False)

    @classmethod
    def from_tokens(cls, tokens) -> "CandidateVocabulary":
        ordered = tuple(sorted(set(tokens)))
        return cls(ordered, {t: i for i, t in enumerate(ordered)})

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    def sha256(self) -> str:
        """Hash of the canonical serialization (one token per line)."""
        payload = "\n".join(self.tokens) + "\n"
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def load_vocab_file(path) -> list[str]:
    """Read a one-token-per-line vocabulary file.

    Blank lines and duplicate lines are rejected.
    """
    tokens: list[str] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            token = line.rstrip("\n")
            if not token:
                raise ParseError("blank line in vocabulary file", path, lineno)
            if token in seen:
                raise ParseError(f"duplicate token {token!r}", path, lineno)
            seen.add(token)
            tokens.append(token)
    return tokens


def intersect(vocab_lists: list[list[str]]) -> CandidateVocabulary:
    """Case-sensitive intersection of per-model token lists."""
    if not vocab_lists:
        raise ValueError("need at least one vocabulary list")
    common = set(vocab_lists[0])
    for tokens in vocab_lists[1:]:
        common &= set(tokens)
    if not common:
        raise EmptyVocabulary("vocabulary intersection is empty")
    return CandidateVocabulary.from_tokens(common)


@dataclass
class ProbeSet:
    """Queries ready to score: every gold is in the vocabulary, and the
    per-(subject, relation) filter sets are restricted to it."""

    queries: list[ClozeQuery]
    vocab: CandidateVocabulary
    filter_index: dict[tuple[str, str], frozenset[str]]
    exclusion_counts: Counter


def compile_probe(queries: list[ClozeQuery],
                  index: dict[tuple[str, str], set[str]],
                  vocab: CandidateVocabulary) -> ProbeSet:
    """Drop queries whose gold falls outside the vocabulary (counted under
    ``oov_gold``) and restrict filter sets to in-vocabulary tokens."""
    kept = []
    exclusions: Counter = Counter()
    for query in queries:
        if query.gold in vocab:
            kept.append(query)
        else:
            exclusions["oov_gold"] += 1
    filter_index = {
        key: frozenset(t for t in objects if t in vocab)
        for key, objects in index.items()
    }
    return ProbeSet(kept, vocab, filter_index, exclusions)
