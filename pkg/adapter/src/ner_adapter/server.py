"""Request loop for the JSON-lines tagging protocol.

One request object per line, one response per line, UTF-8, LF-terminated.
A malformed request produces an error response ``{"id": <id-or-null>,
"error": <message>}`` and the loop continues; only end-of-stream stops it.
"""

from __future__ import annotations

import json
import socketserver
import sys
from dataclasses import dataclass
from typing import Callable, Sequence, TextIO

from .pipelines import PipelineUnavailable, load_spacy_tagger
from .rules import RULE_LABELS, rule_based_tags


@dataclass(frozen=True)
class AdapterSession:
    tagger: Callable[[Sequence[str]], list[str]]
    labels: tuple[str, ...]
    has_confidence: bool = False


def build_session(pipeline: str) -> AdapterSession:
    """``rulebased`` or a spaCy model as ``spacy:<model-name>``."""
    if pipeline == "rulebased":
        return AdapterSession(tagger=rule_based_tags, labels=RULE_LABELS)
    if pipeline.startswith("spacy:"):
        tagger, labels = load_spacy_tagger(pipeline.partition(":")[2])
        return AdapterSession(tagger=tagger, labels=labels)
    raise PipelineUnavailable(
        f"unknown pipeline {pipeline!r}; expected 'rulebased' or 'spacy:<model>'"
    )


def _handle_line(session: AdapterSession, line: str) -> str | None:
    line = line.strip()
    if not line:
        return None
    try:
        request = json.loads(line)
    except json.JSONDecodeError:
        return json.dumps({"id": None, "error": "malformed JSON request"})
    if not isinstance(request, dict):
        return json.dumps({"id": None, "error": "request must be a JSON object"})
    if request.get("op") == "capabilities":
        return json.dumps(
            {"has_confidence": session.has_confidence, "labels": list(session.labels)}
        )
    request_id = request.get("id")
    if not isinstance(request_id, int):
        return json.dumps({"id": None, "error": "missing integer id"})
    tokens = request.get("tokens")
    if not isinstance(tokens, list) or not tokens or not all(isinstance(t, str) for t in tokens):
        return json.dumps({"id": request_id, "error": "tokens must be a nonempty string list"})
    try:
        tags = session.tagger(tokens)
    except Exception as exc:  # a wrapped pipeline may fail on odd input
        return json.dumps({"id": request_id, "error": f"tagger failed: {exc}"})
    if len(tags) != len(tokens):
        return json.dumps({"id": request_id, "error": "tagger returned a wrong-length tagging"})
    return json.dumps({"id": request_id, "tags": tags}, ensure_ascii=False)


def serve_stdio(session: AdapterSession, stdin: TextIO | None = None, stdout: TextIO | None = None) -> None:
    """Serve until end-of-stream; exactly one response line per request line."""
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    for line in stdin:
        response = _handle_line(session, line)
        if response is not None:
            stdout.write(response + "\n")
            stdout.flush()


def serve_tcp(session: AdapterSession, port: int, host: str = "127.0.0.1") -> None:
    """Serve the same protocol on a TCP socket, one request loop per connection."""

    class Handler(socketserver.StreamRequestHandler):
        def handle(self) -> None:
            for raw in self.rfile:
                response = _handle_line(session, raw.decode("utf-8"))
                if response is not None:
                    self.wfile.write((response + "\n").encode("utf-8"))
                    self.wfile.flush()

    with socketserver.ThreadingTCPServer((host, port), Handler) as server:
        server.serve_forever()
