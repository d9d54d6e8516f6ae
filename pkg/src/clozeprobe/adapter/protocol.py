"""Newline-delimited JSON scoring protocol over stdio or TCP.

Session shape: the backend announces itself first with a ``hello`` line
carrying its name, scoring mode, and the sha256 of its candidate
vocabulary; the harness verifies the hash against its own vocabulary and
aborts with :class:`VocabMismatch` when they differ.  Score requests and
responses are matched by integer id, so any number of requests may be in
flight and responses may arrive in any order.

Wire messages (one JSON object per line, UTF-8, LF):

* ``{"type":"hello","name":str,"mode":"uni"|"masked"|"avg","vocab_sha256":hex}``
* ``{"type":"score","id":int,"tokens":[str],"mask_index":int}``
* ``{"type":"scores","id":int,"scores":[float],"is_log_prob":bool}``
* ``{"type":"error","id":int|null,"code":str,"message":str}``
"""

from __future__ import annotations

import json
import math
import os
import select
import shlex
import socket
import subprocess
import sys
import logging

import numpy as np

from ..corpus import MASK, ClozeQuery, QuerySource
from ..errors import BackendUnavailable, ConfigError, ProtocolViolation, VocabMismatch
from ..vocab import CandidateVocabulary
from .native import Backend, ScoreVector, ScoringMode, Transport

log = logging.getLogger("clozeprobe.protocol")

DEFAULT_TIMEOUT = 60.0


def _dump(message: dict) -> bytes:
    # json round-trips doubles via repr, so full precision survives
    return (json.dumps(message, ensure_ascii=False) + "\n").encode("utf-8")


class _LineReader:
    """Reads LF-delimited lines from a raw fd with a select() timeout,
    tracking the byte offset of every line for error reporting."""

    def __init__(self, fileobj, timeout: float | None):
        self._fd = fileobj.fileno()
        self._timeout = timeout
        self._buf = bytearray()
        self._offset = 0

    def readline(self) -> tuple[int, bytes] | None:
        """Return (start_offset, line_without_newline), or None at EOF."""
        while b"\n" not in self._buf:
            ready, _, _ = select.select([self._fd], [], [], self._timeout)
            if not ready:
                raise BackendUnavailable(
                    f"no data from backend within {self._timeout}s"
                )
            chunk = os.read(self._fd, 1 << 16)
            if not chunk:
                if self._buf:
                    raise ProtocolViolation(
                        "stream ended mid-line", offset=self._offset
                    )
                return None
            self._buf += chunk
        line, _, rest = bytes(self._buf).partition(b"\n")
        start = self._offset
        self._offset += len(line) + 1
        self._buf = bytearray(rest)
        return start, line


def _parse_line(offset: int, raw: bytes) -> dict:
    try:
        message = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolViolation(f"malformed JSON line: {exc}", offset=offset) from exc
    if not isinstance(message, dict) or not isinstance(message.get("type"), str):
        raise ProtocolViolation("message is not an object with a type", offset=offset)
    return message


# ---------------------------------------------------------------------------
# server side


def serve_loop(backend: Backend, vocab: CandidateVocabulary, rfile, wfile) -> None:
    """Serve one session: announce the backend, then answer score requests
    until EOF.  ``rfile``/``wfile`` are binary file-like objects."""
    if backend.requires_fact_context:
        raise ConfigError(
            f"backend {backend.name!r} needs fact identity and cannot be served remotely"
        )

    def send(message: dict):
        wfile.write(_dump(message))
        wfile.flush()

    send({
        "type": "hello",
        "name": backend.name,
        "mode": backend.mode.kind.value,
        "vocab_sha256": vocab.sha256(),
    })
    offset = 0
    for raw in rfile:
        start = offset
        offset += len(raw)
        raw = raw.rstrip(b"\n")
        if not raw:
            continue
        try:
            message = _parse_line(start, raw)
        except ProtocolViolation as exc:
            send({"type": "error", "id": None, "code": "ProtocolViolation",
                  "message": str(exc)})
            continue
        if message["type"] != "score":
            send({"type": "error", "id": message.get("id"),
                  "code": "ProtocolViolation",
                  "message": f"unexpected message type {message['type']!r}"})
            continue
        rid = message.get("id")
        if not isinstance(rid, int):
            send({"type": "error", "id": None, "code": "ProtocolViolation",
                  "message": "score request lacks an integer id"})
            continue
        try:
            query = _query_from_request(message)
            vec = backend.score(query, vocab)
            if vec.scores.shape != (len(vocab),):
                raise ValueError("backend produced a wrong-length score vector")
        except (ValueError, TypeError) as exc:
            send({"type": "error", "id": rid, "code": "InvalidRequest",
                  "message": str(exc)})
            continue
        send({
            "type": "scores",
            "id": rid,
            "scores": [float(s) for s in vec.scores],
            "is_log_prob": bool(vec.is_log_prob),
        })


def _query_from_request(message: dict) -> ClozeQuery:
    tokens = message.get("tokens")
    mask_index = message.get("mask_index")
    if (not isinstance(tokens, list)
            or not all(isinstance(t, str) for t in tokens)
            or not isinstance(mask_index, int)):
        raise ValueError("score request needs tokens: [str] and mask_index: int")
    # the gold never crosses the wire; scoring does not need it
    return ClozeQuery(tuple(tokens), mask_index, gold="?", fact_id="",
                      source=QuerySource.EVIDENCE_MENTION)


def serve_stdio(backend: Backend, vocab: CandidateVocabulary) -> None:
    serve_loop(backend, vocab, sys.stdin.buffer, sys.stdout.buffer)


def serve_tcp(backend: Backend, vocab: CandidateVocabulary, host: str,
              port: int, max_sessions: int | None = None,
              ready_callback=None) -> None:
    """Serve sessions one connection at a time; mainly for tests and
    single-consumer runs."""
    with socket.create_server((host, port)) as server:
        if ready_callback is not None:
            ready_callback(server.getsockname()[1])
        served = 0
        while max_sessions is None or served < max_sessions:
            conn, _ = server.accept()
            with conn:
                rfile = conn.makefile("rb")
                wfile = conn.makefile("wb")
                try:
                    serve_loop(backend, vocab, rfile, wfile)
                except (BrokenPipeError, ConnectionResetError):
                    log.warning("client dropped the connection")
            served += 1


# ---------------------------------------------------------------------------
# client side


class ProtocolSession:
    """Client end of one scoring session.

    ``readable`` must expose ``fileno()``; ``writable`` must expose
    ``write(bytes)`` and ``flush()``.  Responses are matched to requests
    by id; out-of-order arrival is buffered.
    """

    def __init__(self, readable, writable, vocab: CandidateVocabulary,
                 timeout: float | None = DEFAULT_TIMEOUT):
        self._reader = _LineReader(readable, timeout)
        self._writable = writable
        self._vocab = vocab
        self._next_id = 0
        self._pending: set[int] = set()
        self._arrived: dict[int, ScoreVector] = {}
        self.backend_name, self.mode = self._handshake()

    def _handshake(self) -> tuple[str, ScoringMode]:
        item = self._reader.readline()
        if item is None:
            raise BackendUnavailable("backend closed the stream before handshake")
        offset, raw = item
        message = _parse_line(offset, raw)
        if message["type"] != "hello":
            raise ProtocolViolation(
                f"expected hello, got {message['type']!r}", offset=offset
            )
        name, mode, sha = message.get("name"), message.get("mode"), message.get("vocab_sha256")
        if not isinstance(name, str) or not isinstance(mode, str) or not isinstance(sha, str):
            raise ProtocolViolation("hello lacks name/mode/vocab_sha256", offset=offset)
        try:
            scoring_mode = ScoringMode.from_wire(mode)
        except ValueError as exc:
            raise ProtocolViolation(f"unknown scoring mode {mode!r}", offset=offset) from exc
        if sha != self._vocab.sha256():
            raise VocabMismatch(
                f"backend {name!r} scored over a different vocabulary "
                f"({sha[:12]}... != {self._vocab.sha256()[:12]}...)"
            )
        return name, scoring_mode

    def submit(self, tokens, mask_index: int) -> int:
        rid = self._next_id
        self._next_id += 1
        self._pending.add(rid)
        self._writable.write(_dump({
            "type": "score",
            "id": rid,
            "tokens": list(tokens),
            "mask_index": mask_index,
        }))
        self._writable.flush()
        return rid

    def _read_one(self) -> int:
        item = self._reader.readline()
        if item is None:
            raise BackendUnavailable("backend closed the stream mid-session")
        offset, raw = item
        message = _parse_line(offset, raw)
        if message["type"] == "error":
            code = message.get("code", "")
            detail = f"{code}: {message.get('message', '')}"
            if code == "VocabMismatch":
                raise VocabMismatch(detail)
            raise BackendUnavailable(f"backend reported an error ({detail})")
        if message["type"] != "scores":
            raise ProtocolViolation(
                f"unexpected message type {message['type']!r}", offset=offset
            )
        rid = message.get("id")
        if not isinstance(rid, int) or rid not in self._pending:
            raise ProtocolViolation(
                f"response id {rid!r} does not match any in-flight request",
                offset=offset,
            )
        scores = message.get("scores")
        if not isinstance(scores, list) or len(scores) != len(self._vocab):
            got = len(scores) if isinstance(scores, list) else "non-list"
            raise ProtocolViolation(
                f"score vector length {got} != vocabulary size {len(self._vocab)}",
                offset=offset,
            )
        values = np.empty(len(scores))
        for i, s in enumerate(scores):
            if not isinstance(s, (int, float)) or isinstance(s, bool) or not math.isfinite(s):
                raise ProtocolViolation(f"non-finite or non-numeric score at {i}",
                                        offset=offset)
            values[i] = float(s)
        self._pending.discard(rid)
        self._arrived[rid] = ScoreVector(values, bool(message.get("is_log_prob", False)))
        return rid

    def collect(self, rid: int) -> ScoreVector:
        while rid not in self._arrived:
            self._read_one()
        return self._arrived.pop(rid)

    def score(self, query: ClozeQuery) -> ScoreVector:
        return self.collect(self.submit(query.tokens, query.mask_index))

    def score_many(self, queries: list[ClozeQuery], window: int = 64) -> list[ScoreVector]:
        """Pipelined scoring: up to ``window`` requests in flight."""
        ids = []
        results: dict[int, ScoreVector] = {}
        queue = list(queries)
        while queue or self._pending:
            while queue and len(self._pending) < window:
                q = queue.pop(0)
                ids.append(self.submit(q.tokens, q.mask_index))
            rid = self._read_one()
            results[rid] = self._arrived.pop(rid)
        return [results[rid] for rid in ids]


class SubprocessBackend(Backend):
    """A scoring backend spoken to over stdio of a child process."""

    transport = Transport.SUBPROCESS_STDIO

    def __init__(self, cmd: str | list[str], vocab: CandidateVocabulary,
                 timeout: float | None = DEFAULT_TIMEOUT):
        argv = shlex.split(cmd) if isinstance(cmd, str) else list(cmd)
        try:
            self._proc = subprocess.Popen(
                argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE, bufsize=0
            )
        except OSError as exc:
            raise BackendUnavailable(f"cannot start backend {argv[0]!r}: {exc}") from exc
        self.session = ProtocolSession(self._proc.stdout, self._proc.stdin, vocab, timeout)
        self.name = self.session.backend_name
        self.mode = self.session.mode

    def score(self, query, vocab):
        return self.session.score(query)

    def score_many(self, queries, window: int = 64):
        return self.session.score_many(queries, window=window)

    def close(self):
        try:
            self._proc.stdin.close()
        except OSError:
            pass
        try:
            self._proc.wait(timeout=10)
        except subprocess.TimeoutExpired:
            self._proc.kill()
            self._proc.wait()


class TcpBackend(Backend):
    """A scoring backend reached over a TCP socket."""

    transport = Transport.TCP

    def __init__(self, host: str, port: int, vocab: CandidateVocabulary,
                 timeout: float | None = DEFAULT_TIMEOUT):
        try:
            self._sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as exc:
            raise BackendUnavailable(f"cannot connect to {host}:{port}: {exc}") from exc
        self._sock.settimeout(None)  # timeouts handled by the line reader
        self._rfile = self._sock.makefile("rb", buffering=0)
        self._wfile = self._sock.makefile("wb")
        self.session = ProtocolSession(self._rfile, self._wfile, vocab, timeout)
        self.name = self.session.backend_name
        self.mode = self.session.mode

    def score(self, query, vocab):
        return self.session.score(query)

    def score_many(self, queries, window: int = 64):
        return self.session.score_many(queries, window=window)

    def close(self):
        for closer in (self._rfile.close, self._wfile.close, self._sock.close):
            try:
                closer()
            except OSError:
                pass
