"""Uniform tagging interface over the built-in CRF and external NER backends.

External backends speak line-delimited JSON over a child process's standard
streams or a TCP socket: one request object per line, one response per line,
UTF-8, LF-terminated. Requests carry monotonically increasing ids unique to
the session; responses are matched to requests solely by id, so out-of-order
replies are tolerated and reordered. External label vocabularies are folded
onto {PER, LOC, ORG, MISC, OTHER} through a configurable alias table.
"""

from __future__ import annotations

import itertools
import json
import os
import random
import select
import shlex
import socket
import subprocess
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

from .conll import normalize_iob2, spans_from_tags, tag_parts, valid_iob2
from .crf import CrfModel, entity_confidence, load_model, viterbi
from .embeddings import EmbeddingStore
from .errors import BackendError, ProtocolError, ValidationError


class BackendKind(Enum):
    BUILTIN_CRF = "builtin"
    EXTERNAL_PROCESS = "proc"
    EXTERNAL_TCP = "tcp"


@dataclass(frozen=True)
class BackendDescriptor:
    kind: BackendKind
    locator: str
    batch_size: int = 32
    timeout: float = 30.0

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ValidationError("batch_size must be >= 1")
        if self.timeout <= 0:
            raise ValidationError("timeout must be positive")

    def __str__(self) -> str:
        return f"{self.kind.value}:{self.locator}"


def parse_backend(spec: str, *, batch_size: int = 32, timeout: float = 30.0) -> BackendDescriptor:
    """Parse ``builtin:<model>``, ``proc:<command>``, or ``tcp:<host:port>``."""
    prefix, sep, rest = spec.partition(":")
    kinds = {k.value: k for k in BackendKind}
    if not sep or prefix not in kinds or not rest:
        raise ValidationError(
            f"backend spec {spec!r} must be builtin:<model>|proc:<cmd>|tcp:<host:port>"
        )
    return BackendDescriptor(kinds[prefix], rest, batch_size=batch_size, timeout=timeout)


@dataclass(frozen=True)
class TagRequest:
    id: int
    tokens: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.tokens:
            raise ValidationError("empty token list")


@dataclass(frozen=True)
class TagResponse:
    id: int
    tags: tuple[str, ...]
    confidences: tuple[float, ...] | None = None


@dataclass(frozen=True)
class Capabilities:
    has_confidence: bool
    labels: tuple[str, ...]


DEFAULT_LABEL_ALIASES: dict[str, str] = {
    "PER": "PER",
    "PERSON": "PER",
    "LOC": "LOC",
    "LOCATION": "LOC",
    "GPE": "LOC",
    "ORG": "ORG",
    "ORGANIZATION": "ORG",
    "MISC": "MISC",
}


def normalize_external_tags(tags: Sequence[str], aliases: dict[str, str]) -> list[str]:
    """Repair mention-initial I-X to B-X, then alias-map entity types
    (unknown ones become OTHER).

    IOB2 repair runs on the original types: aliasing first could merge two
    adjacent mentions whose distinct source types collapse onto one alias.
    """
    out = []
    for tag in normalize_iob2(tags):
        prefix, typ = tag_parts(tag)
        out.append("O" if prefix == "O" else f"{prefix}-{aliases.get(typ.upper(), 'OTHER')}")
    return out


class _Timeout(Exception):
    pass


class Backend:
    """Session base: id allocation, capability caching, response validation."""

    def __init__(
        self,
        descriptor: BackendDescriptor,
        *,
        aliases: dict[str, str] | None = None,
        normalize_responses: bool = True,
    ) -> None:
        self.descriptor = descriptor
        self.aliases = DEFAULT_LABEL_ALIASES if aliases is None else aliases
        self.normalize_responses = normalize_responses
        self._ids = itertools.count()
        self._capabilities: Capabilities | None = None

    def handshake(self) -> Capabilities:
        if self._capabilities is None:
            self._capabilities = self._query_capabilities()
        return self._capabilities

    def tag_batch(self, sentences: Sequence[Sequence[str]]) -> list[TagResponse]:
        if not sentences:
            raise ValidationError("tag_batch needs at least one sentence")
        out: list[TagResponse] = []
        size = self.descriptor.batch_size
        for start in range(0, len(sentences), size):
            chunk = sentences[start : start + size]
            requests = [TagRequest(next(self._ids), tuple(s)) for s in chunk]
            out.extend(self._exchange(requests))
        return out

    def close(self) -> None:  # pragma: no cover - trivial default
        pass

    def __enter__(self) -> "Backend":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    # -- hooks ---------------------------------------------------------

    def _query_capabilities(self) -> Capabilities:
        raise NotImplementedError

    def _exchange(self, requests: list[TagRequest]) -> list[TagResponse]:
        raise NotImplementedError

    # -- shared validation ----------------------------------------------

    def _validated(self, request: TagRequest, payload: dict) -> TagResponse:
        rid = request.id
        raw_tags = payload.get("tags")
        if not isinstance(raw_tags, list):
            raise ProtocolError(f"response {rid}: missing tags field")
        if len(raw_tags) != len(request.tokens):
            raise ProtocolError(
                f"response {rid}: {len(raw_tags)} tags for {len(request.tokens)} tokens"
            )
        tags = [str(t) for t in raw_tags]
        raw_conf = payload.get("confidences")
        confidences: tuple[float, ...] | None = None
        if raw_conf is not None:
            if not isinstance(raw_conf, list):
                raise ProtocolError(f"response {rid}: confidences must be a list")
            confidences = tuple(float(c) for c in raw_conf)
        if self.normalize_responses:
            try:
                tags = normalize_external_tags(tags, self.aliases)
            except ValidationError as exc:
                raise ProtocolError(f"response {rid}: {exc}") from None
            if confidences is not None:
                for c in confidences:
                    if not (0.0 <= c <= 1.0):
                        raise ProtocolError(f"response {rid}: confidence {c} outside [0,1]")
                n_spans = len(spans_from_tags(tags))
                if len(confidences) != n_spans:
                    raise ProtocolError(
                        f"response {rid}: {len(confidences)} confidences for {n_spans} entities"
                    )
        return TagResponse(rid, tuple(tags), confidences)


class BuiltinBackend(Backend):
    """In-process CRF backend; always reports confidences."""

    def __init__(self, model: CrfModel, descriptor: BackendDescriptor | None = None) -> None:
        super().__init__(
            descriptor or BackendDescriptor(BackendKind.BUILTIN_CRF, "<in-memory>")
        )
        self.model = model

    def _query_capabilities(self) -> Capabilities:
        return Capabilities(has_confidence=True, labels=self.model.label_set.labels)

    def _exchange(self, requests: list[TagRequest]) -> list[TagResponse]:
        out = []
        for request in requests:
            tags = viterbi(self.model, request.tokens)
            spans = spans_from_tags(tags)
            confidences = tuple(
                entity_confidence(self.model, request.tokens, span) for span in spans
            )
            out.append(TagResponse(request.id, tuple(tags), confidences))
        return out


class CallableBackend(Backend):
    """In-process stub wrapping a plain ``tokens -> tags`` function; used for
    protocol tests and as the harness's built-in stand-in for external models."""

    def __init__(
        self,
        tagger: Callable[[Sequence[str]], Sequence[str]],
        *,
        has_confidence: bool = False,
        labels: tuple[str, ...] = ("PER",),
        confidencer: Callable[[Sequence[str], Sequence[str]], Sequence[float]] | None = None,
        **kwargs,
    ) -> None:
        super().__init__(
            BackendDescriptor(BackendKind.EXTERNAL_PROCESS, "<callable>"), **kwargs
        )
        self.tagger = tagger
        self.confidencer = confidencer
        self._caps = Capabilities(has_confidence=has_confidence, labels=labels)

    def _query_capabilities(self) -> Capabilities:
        return self._caps

    def _exchange(self, requests: list[TagRequest]) -> list[TagResponse]:
        out = []
        for request in requests:
            tags = list(self.tagger(list(request.tokens)))
            payload: dict = {"tags": tags}
            if self.confidencer is not None:
                payload["confidences"] = list(self.confidencer(list(request.tokens), tags))
            out.append(self._validated(request, payload))
        return out


class _LineProtocolBackend(Backend):
    """JSON-lines request/response cycle shared by process and TCP transports."""

    def _send_line(self, line: str) -> None:
        raise NotImplementedError

    def _recv_line(self, timeout: float) -> str:
        raise NotImplementedError

    def _query_capabilities(self) -> Capabilities:
        try:
            self._send_line('{"op":"capabilities"}')
            line = self._recv_line(self.descriptor.timeout)
        except _Timeout:
            raise BackendError(
                f"backend {self.descriptor} did not answer the capabilities handshake"
            ) from None
        try:
            payload = json.loads(line)
        except json.JSONDecodeError:
            raise ProtocolError(f"malformed handshake line: {line!r}") from None
        return Capabilities(
            has_confidence=bool(payload.get("has_confidence", False)),
            labels=tuple(str(x) for x in payload.get("labels", ())),
        )

    def _exchange(
        self, requests: list[TagRequest], *, retried: bool = False
    ) -> list[TagResponse]:
        for request in requests:
            self._send_line(
                json.dumps(
                    {"id": request.id, "tokens": list(request.tokens)},
                    ensure_ascii=False,
                    separators=(",", ":"),
                )
            )
        by_id = {r.id: r for r in requests}
        got: dict[int, TagResponse] = {}
        try:
            while len(got) < len(requests):
                line = self._recv_line(self.descriptor.timeout)
                try:
                    payload = json.loads(line)
                except json.JSONDecodeError:
                    raise ProtocolError(f"malformed JSON line: {line!r}") from None
                rid = payload.get("id")
                if "error" in payload:
                    raise ProtocolError(f"backend error for id {rid}: {payload['error']}")
                if rid not in by_id:
                    raise ProtocolError(f"unexpected response id {rid!r}")
                if rid in got:
                    if retried:
                        continue  # duplicate from the timed-out first attempt
                    raise ProtocolError(f"duplicate response id {rid}")
                got[rid] = self._validated(by_id[rid], payload)
        except _Timeout:
            if retried:
                raise BackendError(
                    f"backend {self.descriptor} timed out after retry "
                    f"({self.descriptor.timeout}s)"
                ) from None
            return self._exchange(requests, retried=True)
        return [got[r.id] for r in requests]


class ProcessBackend(_LineProtocolBackend):
    """Child process speaking the protocol on stdin/stdout."""

    def __init__(self, descriptor: BackendDescriptor, **kwargs) -> None:
        super().__init__(descriptor, **kwargs)
        try:
            self.proc = subprocess.Popen(
                shlex.split(descriptor.locator),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                bufsize=0,
            )
        except OSError as exc:
            raise BackendError(f"cannot start backend process: {exc}") from None
        self._buf = b""

    def _send_line(self, line: str) -> None:
        if self.proc.poll() is not None:
            raise BackendError(f"backend process exited with {self.proc.returncode}")
        try:
            self.proc.stdin.write(line.encode("utf-8") + b"\n")
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise BackendError(f"backend process closed stdin: {exc}") from None

    def _recv_line(self, timeout: float) -> str:
        deadline = time.monotonic() + timeout
        fd = self.proc.stdout.fileno()
        while b"\n" not in self._buf:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise _Timeout
            ready, _, _ = select.select([fd], [], [], remaining)
            if not ready:
                raise _Timeout
            chunk = os.read(fd, 65536)
            if not chunk:
                raise BackendError("backend process closed its output stream")
            self._buf += chunk
        line, _, self._buf = self._buf.partition(b"\n")
        return line.decode("utf-8")

    def close(self) -> None:
        if self.proc.poll() is None:
            try:
                self.proc.stdin.close()
            except OSError:
                pass
            try:
                self.proc.wait(timeout=2)
            except subprocess.TimeoutExpired:
                self.proc.kill()
                self.proc.wait()


class TcpBackend(_LineProtocolBackend):
    """Remote process speaking the protocol on a TCP socket."""

    def __init__(self, descriptor: BackendDescriptor, **kwargs) -> None:
        super().__init__(descriptor, **kwargs)
        host, sep, port = descriptor.locator.rpartition(":")
        if not sep:
            raise ValidationError(f"tcp locator {descriptor.locator!r} needs host:port")
        try:
            self.sock = socket.create_connection((host, int(port)), timeout=descriptor.timeout)
        except OSError as exc:
            raise BackendError(f"cannot connect to {descriptor.locator}: {exc}") from None
        self._buf = b""

    def _send_line(self, line: str) -> None:
        try:
            self.sock.sendall(line.encode("utf-8") + b"\n")
        except OSError as exc:
            raise BackendError(f"connection lost: {exc}") from None

    def _recv_line(self, timeout: float) -> str:
        deadline = time.monotonic() + timeout
        while b"\n" not in self._buf:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise _Timeout
            self.sock.settimeout(remaining)
            try:
                chunk = self.sock.recv(65536)
            except socket.timeout:
                raise _Timeout from None
            except OSError as exc:
                raise BackendError(f"connection lost: {exc}") from None
            if not chunk:
                raise BackendError("backend closed the connection")
            self._buf += chunk
        line, _, self._buf = self._buf.partition(b"\n")
        return line.decode("utf-8")

    def close(self) -> None:
        try:
            self.sock.close()
        except OSError:
            pass


def open_backend(
    spec: str | BackendDescriptor,
    *,
    embeddings: EmbeddingStore | None = None,
    batch_size: int = 32,
    timeout: float = 30.0,
    aliases: dict[str, str] | None = None,
    normalize_responses: bool = True,
) -> Backend:
    descriptor = (
        spec
        if isinstance(spec, BackendDescriptor)
        else parse_backend(spec, batch_size=batch_size, timeout=timeout)
    )
    if descriptor.kind is BackendKind.BUILTIN_CRF:
        model = load_model(descriptor.locator, embeddings=embeddings)
        return BuiltinBackend(model, descriptor)
    cls = ProcessBackend if descriptor.kind is BackendKind.EXTERNAL_PROCESS else TcpBackend
    return cls(descriptor, aliases=aliases, normalize_responses=normalize_responses)


# ---------------------------------------------------------------------------
# Protocol conformance probe

_PROBE_WORDS = (
    "the", "a", "said", "in", "on", "yesterday", "office", "match", "report",
    "quickly", "against", "city", "bank", "game", "minister", "percent",
)
_PROBE_NAMES = (
    "Aaliyah", "Jose", "Alya", "Paul", "Syed", "Ebony", "Stephanie", "Tyree",
    "Boston", "Reuters", "U.N.", "Friday",
)


@dataclass
class ProbeReport:
    """Outcome of a randomized protocol conformance run."""

    n_requests: int
    n_responses: int
    n_entities: int
    has_confidence: bool
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations and self.n_responses == self.n_requests


def probe_backend(
    backend: Backend,
    n_requests: int = 1000,
    seed: int = 0,
    max_len: int = 12,
    lowercase: bool = False,
) -> ProbeReport:
    """Drive a backend with randomized requests and check the protocol
    contract: one response per request, matching lengths, valid IOB2 tags,
    confidences (when claimed) counted per entity and within [0, 1].

    Run against a backend opened with ``normalize_responses=False`` so the
    peer's own tags are inspected rather than repaired copies.
    """
    rng = random.Random(seed)
    caps = backend.handshake()
    vocab = _PROBE_WORDS + _PROBE_NAMES
    sentences = []
    for _ in range(n_requests):
        length = rng.randint(1, max_len)
        tokens = [rng.choice(vocab) for _ in range(length)]
        if lowercase:
            tokens = [t.lower() for t in tokens]
        sentences.append(tokens)

    report = ProbeReport(
        n_requests=n_requests, n_responses=0, n_entities=0, has_confidence=caps.has_confidence
    )
    try:
        responses = backend.tag_batch(sentences)
    except (ProtocolError, BackendError) as exc:
        report.violations.append(str(exc))
        return report
    report.n_responses = len(responses)
    for i, (tokens, response) in enumerate(zip(sentences, responses)):
        if len(response.tags) != len(tokens):
            report.violations.append(f"request {i}: tag count mismatch")
            continue
        if not valid_iob2(response.tags):
            report.violations.append(f"request {i}: invalid IOB2 tags {response.tags}")
            continue
        spans = spans_from_tags(response.tags)
        report.n_entities += len(spans)
        if response.confidences is not None:
            if len(response.confidences) != len(spans):
                report.violations.append(f"request {i}: confidence count mismatch")
            elif any(not (0.0 <= c <= 1.0) for c in response.confidences):
                report.violations.append(f"request {i}: confidence out of range")
        elif caps.has_confidence:
            report.violations.append(f"request {i}: confidences promised but missing")
    return report
