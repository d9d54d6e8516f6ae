"""Serve the pretrained masked LM over the NDJSON scoring protocol.

    python -m mlm_adapter --checkpoint checkpoints/tiny_mlm.pt \
        --vocab common_vocab.txt [--tcp HOST:PORT]

Protocol (one JSON object per line, UTF-8, LF): the server opens with

    {"type":"hello","name":...,"mode":"masked","vocab_sha256":...}

where the hash covers the canonical serialization of the candidate
vocabulary (tokens sorted by code point, one per line, trailing newline).
Each ``{"type":"score","id":...,"tokens":[...],"mask_index":...}`` request
is answered by ``{"type":"scores","id":...,"scores":[...],
"is_log_prob":true}`` with one log-probability per candidate, aligned
with the sorted vocabulary order.  Responses carry the request id, so
requests may be pipelined.

Candidates that are not single tokens of the model's vocabulary cannot be
scored by the softmax; they receive the minimum supported score minus 1,
which keeps every emitted vector finite while ranking them last.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import socket
import sys

import torch

from .model import MASK_TOKEN, load_checkpoint

MODE = "masked"


def load_candidate_vocab(path) -> list[str]:
    tokens = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            token = line.rstrip("\n")
            if not token:
                raise ValueError(f"{path}:{lineno}: blank line in vocabulary")
            if token in seen:
                raise ValueError(f"{path}:{lineno}: duplicate token {token!r}")
            seen.add(token)
            tokens.append(token)
    return sorted(tokens)


def vocab_sha256(sorted_tokens: list[str]) -> str:
    payload = "\n".join(sorted_tokens) + "\n"
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class ScoringService:
    """Loads the checkpoint once and answers score requests."""

    def __init__(self, checkpoint_path, vocab_path, name="tiny-mlm"):
        torch.set_num_threads(1)  # keep repeated inference bit-identical
        self.name = name
        self.model, self.model_vocab = load_checkpoint(checkpoint_path)
        self.candidates = load_candidate_vocab(vocab_path)
        self.sha256 = vocab_sha256(self.candidates)
        # map each candidate to its model token id; None marks tokens the
        # softmax cannot score as a single piece
        self.candidate_ids = [
            self.model_vocab.index.get(token) for token in self.candidates
        ]

    def hello(self) -> dict:
        return {"type": "hello", "name": self.name, "mode": MODE,
                "vocab_sha256": self.sha256}

    def handle(self, message: dict) -> dict:
        if message.get("type") != "score":
            return {"type": "error", "id": message.get("id"),
                    "code": "ProtocolViolation",
                    "message": f"unexpected message type {message.get('type')!r}"}
        rid = message.get("id")
        if not isinstance(rid, int):
            return {"type": "error", "id": None, "code": "ProtocolViolation",
                    "message": "score request lacks an integer id"}
        tokens = message.get("tokens")
        mask_index = message.get("mask_index")
        if (not isinstance(tokens, list)
                or not all(isinstance(t, str) for t in tokens)
                or not isinstance(mask_index, int)
                or not (0 <= mask_index < len(tokens))
                or tokens[mask_index] != MASK_TOKEN):
            return {"type": "error", "id": rid, "code": "InvalidRequest",
                    "message": "need tokens:[str] with the mask at mask_index"}
        log_probs = self.model.masked_log_probs(self.model_vocab, tokens, mask_index)
        supported = [log_probs[i].item() for i in self.candidate_ids if i is not None]
        sentinel = (min(supported) - 1.0) if supported else -1.0
        scores = [
            log_probs[i].item() if i is not None else sentinel
            for i in self.candidate_ids
        ]
        return {"type": "scores", "id": rid, "scores": scores,
                "is_log_prob": True}


def serve(service: ScoringService, rfile, wfile) -> None:
    def send(message: dict):
        wfile.write((json.dumps(message, ensure_ascii=False) + "\n").encode("utf-8"))
        wfile.flush()

    send(service.hello())
    for raw in rfile:
        raw = raw.strip()
        if not raw:
            continue
        try:
            message = json.loads(raw.decode("utf-8"))
            if not isinstance(message, dict):
                raise ValueError("not an object")
        except (ValueError, UnicodeDecodeError) as exc:
            send({"type": "error", "id": None, "code": "ProtocolViolation",
                  "message": f"malformed JSON line: {exc}"})
            continue
        send(service.handle(message))


def serve_forever(checkpoint_path, vocab_path, transport="stdio",
                  host="127.0.0.1", port=0, name="tiny-mlm",
                  ready_callback=None) -> None:
    """Run until EOF (stdio) or forever (tcp).  A model-load failure is
    reported as a protocol error line before exiting."""
    try:
        service = ScoringService(checkpoint_path, vocab_path, name=name)
    except Exception as exc:  # report on the wire, then die
        line = json.dumps({"type": "error", "id": None, "code": "ModelLoadFailure",
                           "message": str(exc)}) + "\n"
        sys.stdout.write(line)
        sys.stdout.flush()
        raise SystemExit(1)

    if transport == "stdio":
        serve(service, sys.stdin.buffer, sys.stdout.buffer)
    elif transport == "tcp":
        with socket.create_server((host, port)) as server:
            if ready_callback is not None:
                ready_callback(server.getsockname()[1])
            while True:
                conn, _ = server.accept()
                with conn:
                    try:
                        serve(service, conn.makefile("rb"), conn.makefile("wb"))
                    except (BrokenPipeError, ConnectionResetError):
                        pass
    else:
        raise ValueError(f"unknown transport {transport!r}")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="mlm-adapter",
        description="Serve a pretrained masked LM over the scoring protocol.",
    )
    parser.add_argument("--checkpoint", required=True)
    parser.add_argument("--vocab", required=True,
                        help="candidate vocabulary file, one token per line")
    parser.add_argument("--name", default="tiny-mlm")
    parser.add_argument("--tcp", default=None, metavar="HOST:PORT",
                        help="serve over TCP instead of stdio")
    args = parser.parse_args(argv)
    if args.tcp:
        host, _, port = args.tcp.rpartition(":")
        serve_forever(args.checkpoint, args.vocab, transport="tcp",
                      host=host or "127.0.0.1", port=int(port), name=args.name)
    else:
        serve_forever(args.checkpoint, args.vocab, name=args.name)
    return 0


if __name__ == "__main__":
    sys.exit(main())
