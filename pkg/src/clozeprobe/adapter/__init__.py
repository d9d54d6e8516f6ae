"""Model-scoring contract: scoring modes, score vectors, native backends,
and the newline-delimited JSON wire protocol."""

from .native import (
    Backend,
    EchoBackend,
    FreqBackend,
    NgramBackend,
    ScoreVector,
    ScoringKind,
    ScoringMode,
    Transport,
    UniformBackend,
    freq_fit,
    ngram_fit,
    score,
)
from .protocol import (
    ProtocolSession,
    SubprocessBackend,
    TcpBackend,
    serve_loop,
    serve_stdio,
    serve_tcp,
)

__all__ = [
    "Backend",
    "EchoBackend",
    "FreqBackend",
    "NgramBackend",
    "ProtocolSession",
    "ScoreVector",
    "ScoringKind",
    "ScoringMode",
    "SubprocessBackend",
    "TcpBackend",
    "Transport",
    "UniformBackend",
    "freq_fit",
    "ngram_fit",
    "score",
    "serve_loop",
    "serve_stdio",
    "serve_tcp",
]
