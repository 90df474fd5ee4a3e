"""Synthetic corpus generation: slot-template expansion over name lists,
in-situ substitution into real CoNLL sentences, and lower-cased variants.

Expansion enumerates ordered, repetition-free fill tuples in a fixed order
(template-major, then lexicographic by name index), so exhaustive runs are
reproducible streams and sampled runs can pick ranks without materializing
the full corpus. Every generated sentence carries provenance describing
exactly which names went into which slots.
"""

from __future__ import annotations

import itertools
import json
import random
import re
from dataclasses import dataclass, replace
from enum import Enum
from typing import Iterable, Iterator, Sequence, TextIO

from .conll import ConllSentence, EntitySpan, Token, extract_entities
from .errors import ValidationError
from .names import DemographicCategory, NameEntry

_SLOT_RE = re.compile(r"^\{(\d+)\}$")
_FINAL_PUNCT = ".!?"


class Dataset(Enum):
    WINOGENDER = "WINOGENDER"
    INSITU = "INSITU"


class CaseVariant(Enum):
    ORIGINAL = "ORIGINAL"
    LOWER = "LOWER"


@dataclass(frozen=True)
class Template:
    """Tokenized sentence template; parts are literal tokens or slot indices."""

    id: str
    parts: tuple[str | int, ...]
    slot_count: int

    def slot_positions(self) -> dict[int, int]:
        """Map slot index -> token position."""
        return {part: i for i, part in enumerate(self.parts) if isinstance(part, int)}


@dataclass(frozen=True)
class Provenance:
    dataset: Dataset
    source_id: str
    fills: tuple[tuple[int, NameEntry], ...]
    case_variant: CaseVariant = CaseVariant.ORIGINAL


@dataclass(frozen=True)
class GeneratedSentence:
    """A synthetic sentence with gold unigram PER spans at the fill positions.

    gold_spans[i] is the span of provenance.fills[i]. ner_tags covers every
    token (in-situ sentences keep their source entity tags); annotations
    preserves opaque source columns for re-emission, when available.
    """

    tokens: tuple[str, ...]
    gold_spans: tuple[EntitySpan, ...]
    provenance: Provenance
    ner_tags: tuple[str, ...]
    annotations: tuple[tuple[str, ...], ...] | None = None


def _tokenize_template_line(line: str) -> list[str]:
    tokens = line.split()
    if tokens:
        last = tokens[-1]
        if len(last) > 1 and last[-1] in _FINAL_PUNCT:
            tokens[-1:] = [last[:-1], last[-1]]
    return tokens


def load_templates(
    source: TextIO | Iterable[str] | str,
    *,
    builtin_rules: bool = True,
) -> list[Template]:
    """Parse one template per line; slots are written ``{0} {1} ...``.

    Lines starting with ``#`` and blank lines are skipped. Slot indices must
    be 0..k-1, each used exactly once. With ``builtin_rules`` (the curated
    template set's constraints) templates need at least 3 slots and no slot
    may directly follow the literal token "the".
    """
    if isinstance(source, str):
        source = source.splitlines()
    templates: list[Template] = []
    for lineno, raw in enumerate(source, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts: list[str | int] = []
        slots: list[int] = []
        for token in _tokenize_template_line(line):
            m = _SLOT_RE.match(token)
            if m:
                slots.append(int(m.group(1)))
                parts.append(int(m.group(1)))
            elif "{" in token or "}" in token:
                raise ValidationError(f"line {lineno}: malformed slot syntax {token!r}")
            else:
                parts.append(token)
        if sorted(slots) != list(range(len(slots))):
            raise ValidationError(
                f"line {lineno}: slot indices must be 0..k-1 each used once, got {sorted(slots)}"
            )
        if builtin_rules:
            if len(slots) < 3:
                raise ValidationError(
                    f"line {lineno}: template has {len(slots)} slots, builtin set requires >= 3"
                )
            for prev, part in zip(parts, parts[1:]):
                if isinstance(part, int) and isinstance(prev, str) and prev.lower() == "the":
                    raise ValidationError(
                        f"line {lineno}: slot {{{part}}} directly follows 'the'"
                    )
        templates.append(
            Template(id=str(len(templates)), parts=tuple(parts), slot_count=len(slots))
        )
    return templates


def _falling_factorial(n: int, k: int) -> int:
    out = 1
    for i in range(k):
        out *= n - i
    return out


def expansion_count(n_names: int, templates: Sequence[Template]) -> int:
    """Number of sentences an exhaustive expansion yields: sum over templates
    of the ordered repetition-free fill count n*(n-1)*...*(n-k+1)."""
    for t in templates:
        if n_names < t.slot_count:
            raise ValidationError(
                f"template {t.id}: {t.slot_count} slots but only {n_names} names"
            )
    return sum(_falling_factorial(n_names, t.slot_count) for t in templates)


def _instantiate(template: Template, names: Sequence[NameEntry], perm: tuple[int, ...]) -> GeneratedSentence:
    by_slot = {slot: names[perm[slot]] for slot in range(template.slot_count)}
    tokens = tuple(
        by_slot[part].surface if isinstance(part, int) else part for part in template.parts
    )
    positions = template.slot_positions()
    gold = tuple(
        EntitySpan(positions[slot], positions[slot] + 1, "PER")
        for slot in range(template.slot_count)
    )
    tags = ["O"] * len(tokens)
    for span in gold:
        tags[span.start] = "B-PER"
    fills = tuple((slot, by_slot[slot]) for slot in range(template.slot_count))
    return GeneratedSentence(
        tokens=tokens,
        gold_spans=gold,
        provenance=Provenance(Dataset.WINOGENDER, template.id, fills),
        ner_tags=tuple(tags),
    )


def _unrank_permutation(rank: int, n: int, k: int) -> tuple[int, ...]:
    # Lexicographic unranking, matching itertools.permutations(range(n), k) order.
    available = list(range(n))
    block = _falling_factorial(n, k)
    out: list[int] = []
    for j in range(k):
        block //= n - j
        idx, rank = divmod(rank, block)
        out.append(available.pop(idx))
    return tuple(out)


def expand(
    templates: Sequence[Template],
    names: Sequence[NameEntry],
    *,
    sample_size: int | None = None,
    seed: int | None = None,
) -> Iterator[GeneratedSentence]:
    """Fill templates with every ordered tuple of distinct names.

    Exhaustive mode streams exactly expansion_count(len(names), templates)
    sentences, duplicate-free, in deterministic order. With ``sample_size``
    a duplicate-free subset of that enumeration is drawn by rank with the
    seeded generator and yielded in enumeration order; ``seed`` is required.
    """
    surfaces = [n.surface for n in names]
    if len(set(surfaces)) != len(surfaces):
        raise ValidationError("names must be pairwise distinct")
    total = expansion_count(len(names), templates)
    if sample_size is None:
        for template in templates:
            for perm in itertools.permutations(range(len(names)), template.slot_count):
                yield _instantiate(template, names, perm)
        return
    if seed is None:
        raise ValidationError("sampling requires a seed")
    if sample_size > total:
        raise ValidationError(f"sample size {sample_size} exceeds corpus size {total}")
    ranks = sorted(random.Random(seed).sample(range(total), sample_size))
    offsets = list(itertools.accumulate(
        _falling_factorial(len(names), t.slot_count) for t in templates
    ))
    t_idx = 0
    for rank in ranks:
        while rank >= offsets[t_idx]:
            t_idx += 1
        template = templates[t_idx]
        local = rank - (offsets[t_idx - 1] if t_idx else 0)
        perm = _unrank_permutation(local, len(names), template.slot_count)
        yield _instantiate(template, names, perm)


def insitu_candidates(
    corpus: Sequence[ConllSentence],
) -> list[tuple[int, ConllSentence, int]]:
    """Sentences eligible for in-situ substitution, with the PER token position.

    Eligible: strictly more than 5 tokens, exactly one PER entity in total,
    and that entity is a unigram. Non-PER entities of any length may occur.
    """
    out: list[tuple[int, ConllSentence, int]] = []
    for idx, sentence in enumerate(corpus):
        if len(sentence.tokens) <= 5:
            continue
        per_spans = [s for s in extract_entities(sentence) if s.label == "PER"]
        if len(per_spans) == 1 and per_spans[0].width == 1:
            out.append((idx, sentence, per_spans[0].start))
    return out


def synthesize_insitu(
    corpus: Sequence[ConllSentence], names: Sequence[NameEntry]
) -> Iterator[GeneratedSentence]:
    """For each eligible sentence and each name, emit a copy with the unigram
    PER token replaced by the name; all tags stay as in the source."""
    for idx, sentence, pos in insitu_candidates(corpus):
        base_tokens = sentence.texts
        tags = tuple(sentence.tags)
        annotations = tuple(t.annotations for t in sentence.tokens)
        for name in names:
            tokens = list(base_tokens)
            tokens[pos] = name.surface
            yield GeneratedSentence(
                tokens=tuple(tokens),
                gold_spans=(EntitySpan(pos, pos + 1, "PER"),),
                provenance=Provenance(Dataset.INSITU, str(idx), ((0, name),)),
                ner_tags=tags,
                annotations=annotations,
            )


def lowercase_variant(
    sentences: Iterable[GeneratedSentence],
) -> Iterator[GeneratedSentence]:
    """Lower-case every token (names included); spans and tags are untouched."""
    for s in sentences:
        yield replace(
            s,
            tokens=tuple(t.lower() for t in s.tokens),
            provenance=replace(s.provenance, case_variant=CaseVariant.LOWER),
        )


def to_conll_sentence(sentence: GeneratedSentence) -> ConllSentence:
    annotations = sentence.annotations or ((),) * len(sentence.tokens)
    return ConllSentence(
        tokens=tuple(
            Token(text=text, ner_tag=tag, annotations=ann)
            for text, tag, ann in zip(sentence.tokens, sentence.ner_tags, annotations)
        )
    )


def provenance_record(sentence: GeneratedSentence) -> dict:
    p = sentence.provenance
    return {
        "dataset": p.dataset.value,
        "source_id": p.source_id,
        "fills": [
            {"slot": slot, "surface": e.surface, "category": e.category.value}
            for slot, e in p.fills
        ],
        "case_variant": p.case_variant.value,
    }


def write_generated_corpus(
    sentences: Iterable[GeneratedSentence],
    conll_stream: TextIO,
    provenance_stream: TextIO,
) -> int:
    """Stream a generated corpus to a CoNLL file plus a JSONL provenance
    sidecar (one object per sentence, same order). Returns the count."""
    count = 0
    for s in sentences:
        conll = to_conll_sentence(s)
        for tok in conll.tokens:
            conll_stream.write(" ".join((tok.text, *tok.annotations, tok.ner_tag)) + "\n")
        conll_stream.write("\n")
        provenance_stream.write(
            json.dumps(provenance_record(s), ensure_ascii=False, separators=(",", ":")) + "\n"
        )
        count += 1
    return count


def read_generated_corpus(
    conll_text: Iterable[str] | str,
    provenance_lines: Iterable[str],
) -> list[GeneratedSentence]:
    """Rebuild generated sentences from a CoNLL file and its sidecar.

    Gold spans are recovered by matching each fill's surface against the
    unigram PER spans in the gold tags (lower-cased surfaces under the
    LOWER variant).
    """
    from .conll import parse_conll, spans_from_tags  # local to avoid cycle noise

    parsed = parse_conll(conll_text)
    records = [json.loads(line) for line in provenance_lines if line.strip()]
    if len(parsed) != len(records):
        raise ValidationError(
            f"corpus/provenance mismatch: {len(parsed)} sentences, {len(records)} records"
        )
    out: list[GeneratedSentence] = []
    for sent, rec in zip(parsed, records):
        variant = CaseVariant(rec["case_variant"])
        fills = tuple(
            (f["slot"], NameEntry(f["surface"], DemographicCategory(f["category"])))
            for f in rec["fills"]
        )
        tags = sent.tags
        unigram_per = {
            span.start: sent.tokens[span.start].text
            for span in spans_from_tags(tags)
            if span.label == "PER" and span.width == 1
        }
        gold: list[EntitySpan] = []
        for _, entry in fills:
            want = entry.surface if variant is CaseVariant.ORIGINAL else entry.surface.lower()
            matches = [pos for pos, text in unigram_per.items() if text == want]
            if len(matches) != 1:
                raise ValidationError(
                    f"cannot locate fill {entry.surface!r} in sentence (found {len(matches)})"
                )
            gold.append(EntitySpan(matches[0], matches[0] + 1, "PER"))
        out.append(
            GeneratedSentence(
                tokens=tuple(sent.texts),
                gold_spans=tuple(gold),
                provenance=Provenance(
                    Dataset(rec["dataset"]), str(rec["source_id"]), fills, variant
                ),
                ner_tags=tuple(tags),
                annotations=tuple(t.annotations for t in sent.tokens),
            )
        )
    return out
