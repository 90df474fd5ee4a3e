"""CoNLL-2003-format parsing, emission, span extraction, and name-frequency
counts over training corpora.

Tags are held internally in IOB2 (`B-X` opens every mention); IOB1 input is
converted at parse time so span extraction is unambiguous. Columns between
the token text and the NER tag (POS, chunk, ...) are preserved opaquely so
substituted corpora can be re-emitted as valid files.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import ValidationError
from .names import NameRegistry

_TAG_RE = re.compile(r"^(O|[BI]-\S+)$")


@dataclass(frozen=True)
class Token:
    text: str
    ner_tag: str
    annotations: tuple[str, ...] = ()


@dataclass(frozen=True)
class ConllSentence:
    tokens: tuple[Token, ...]
    doc_id: int | None = None

    def __post_init__(self) -> None:
        if not self.tokens:
            raise ValidationError("empty sentence")

    @property
    def texts(self) -> list[str]:
        return [t.text for t in self.tokens]

    @property
    def tags(self) -> list[str]:
        return [t.ner_tag for t in self.tokens]


@dataclass(frozen=True, order=True)
class EntitySpan:
    """Half-open token span [start, end) carrying an entity type."""

    start: int
    end: int
    label: str

    def __post_init__(self) -> None:
        if not (0 <= self.start < self.end):
            raise ValidationError(f"invalid span [{self.start}, {self.end})")

    @property
    def width(self) -> int:
        return self.end - self.start


def tag_parts(tag: str) -> tuple[str, str | None]:
    """Split an IOB tag into (prefix, type); ("O", None) for outside."""
    if tag == "O":
        return "O", None
    if not _TAG_RE.match(tag):
        raise ValidationError(f"malformed tag {tag!r}")
    return tag[0], tag[2:]


def normalize_iob2(tags: Sequence[str]) -> list[str]:
    """Convert IOB1 to IOB2: mention-initial I-X becomes B-X.

    An I-X keeps its prefix only when directly preceded by B-X or I-X of
    the same type. Idempotent on IOB2 input.
    """
    out: list[str] = []
    prev_type: str | None = None
    for tag in tags:
        prefix, typ = tag_parts(tag)
        if prefix == "I" and typ != prev_type:
            out.append(f"B-{typ}")
        else:
            out.append(tag)
        prev_type = typ
    return out


def valid_iob2(tags: Sequence[str]) -> bool:
    """True iff every tag is well-formed and no I-X lacks a same-type predecessor."""
    prev_type: str | None = None
    for tag in tags:
        if not _TAG_RE.match(tag):
            return False
        prefix, typ = tag_parts(tag)
        if prefix == "I" and typ != prev_type:
            return False
        prev_type = typ
    return True


def parse_conll(stream: Iterable[str] | str) -> list[ConllSentence]:
    """Parse CoNLL text: whitespace columns, last column the NER tag.

    Blank lines separate sentences; `-DOCSTART-` lines mark document
    boundaries and are excluded from sentences. Raises on inconsistent
    column counts within a sentence, with the line number.
    """
    if isinstance(stream, str):
        stream = stream.splitlines()
    sentences: list[ConllSentence] = []
    rows: list[tuple[str, ...]] = []
    first_line = 0
    doc_id: int | None = None
    doc_count = 0

    def flush() -> None:
        nonlocal rows
        if not rows:
            return
        width = len(rows[0])
        for offset, row in enumerate(rows):
            if len(row) != width:
                raise ValidationError(
                    f"line {first_line + offset}: {len(row)} columns, expected {width}"
                )
        tags = normalize_iob2([row[-1] for row in rows])
        tokens = tuple(
            Token(text=row[0], ner_tag=tag, annotations=tuple(row[1:-1]))
            for row, tag in zip(rows, tags)
        )
        sentences.append(ConllSentence(tokens=tokens, doc_id=doc_id))
        rows = []

    for lineno, raw in enumerate(stream, start=1):
        line = raw.rstrip("\r\n")
        if not line.strip():
            flush()
            continue
        if line.startswith("-DOCSTART-"):
            flush()
            doc_id = doc_count
            doc_count += 1
            continue
        cols = tuple(line.split())
        if not rows:
            first_line = lineno
        rows.append(cols)
    flush()
    return sentences


def write_conll(sentences: Iterable[ConllSentence]) -> str:
    """Emit sentences in CoNLL format, LF line endings, blank line after each.

    parse_conll(write_conll(xs)) reproduces token texts and IOB2 tags exactly.
    """
    out: list[str] = []
    for sentence in sentences:
        for tok in sentence.tokens:
            out.append(" ".join((tok.text, *tok.annotations, tok.ner_tag)))
        out.append("")
    if not out:
        return ""
    return "\n".join(out) + "\n"


def spans_from_tags(tags: Sequence[str]) -> list[EntitySpan]:
    """Maximal entity spans from IOB2-normalized tags, in token order."""
    spans: list[EntitySpan] = []
    start: int | None = None
    cur_type: str | None = None
    for i, tag in enumerate(tags):
        prefix, typ = tag_parts(tag)
        if start is not None and (prefix != "I" or typ != cur_type):
            spans.append(EntitySpan(start, i, cur_type))
            start, cur_type = None, None
        if prefix == "B":
            start, cur_type = i, typ
    if start is not None:
        spans.append(EntitySpan(start, len(tags), cur_type))
    return spans


def tags_from_spans(spans: Iterable[EntitySpan], length: int) -> list[str]:
    """Inverse of spans_from_tags for non-overlapping span sets."""
    tags = ["O"] * length
    for span in spans:
        if span.end > length:
            raise ValidationError(f"span {span} exceeds length {length}")
        for i in range(span.start, span.end):
            if tags[i] != "O":
                raise ValidationError(f"overlapping span at token {i}")
            tags[i] = f"{'B' if i == span.start else 'I'}-{span.label}"
    return tags


def extract_entities(sentence: ConllSentence) -> list[EntitySpan]:
    return spans_from_tags(sentence.tags)


@dataclass
class NameFrequencyReport:
    """Counts of registry surfaces appearing as unigram PER entities."""

    per_name: dict[str, int] = field(default_factory=dict)
    per_category: dict[str, int] = field(default_factory=dict)
    most_common: dict[str, tuple[str, int] | None] = field(default_factory=dict)


def name_frequency(
    corpus: Iterable[ConllSentence], registry: NameRegistry
) -> NameFrequencyReport:
    """Count how often each registry surface occurs as a unigram PER entity.

    Matching is case-sensitive on the canonical capitalized surface.
    Aggregates totals per category and the most common name per category
    (ties broken by registry order).
    """
    per_name = {e.surface: 0 for e in registry.entries}
    for sentence in corpus:
        for span in extract_entities(sentence):
            if span.label != "PER" or span.width != 1:
                continue
            text = sentence.tokens[span.start].text
            if text in per_name:
                per_name[text] += 1
    report = NameFrequencyReport(per_name=per_name)
    for category in sorted({e.category for e in registry.entries}, key=lambda c: c.value):
        members = registry.by_category(category)
        total = sum(per_name[e.surface] for e in members)
        report.per_category[category.value] = total
        best: tuple[str, int] | None = None
        for e in members:
            if per_name[e.surface] > 0 and (best is None or per_name[e.surface] > best[1]):
                best = (e.surface, per_name[e.surface])
        report.most_common[category.value] = best
    return report
