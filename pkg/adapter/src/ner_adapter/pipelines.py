"""Wrappers that expose third-party NER pipelines over pre-tokenized input.

The shim never re-tokenizes: wrapped pipelines are fed the given token
boundaries and must return one tag per input token. External label
inventories are folded onto {PER, LOC, ORG, MISC, OTHER}.
"""

from __future__ import annotations

from typing import Callable, Sequence

LABEL_ALIASES = {
    "PER": "PER",
    "PERSON": "PER",
    "LOC": "LOC",
    "LOCATION": "LOC",
    "GPE": "LOC",
    "ORG": "ORG",
    "ORGANIZATION": "ORG",
    "MISC": "MISC",
    "NORP": "MISC",
}


class PipelineUnavailable(Exception):
    """The requested third-party pipeline cannot be loaded."""


def normalize_label(label: str) -> str:
    return LABEL_ALIASES.get(label.upper(), "OTHER")


def load_spacy_tagger(model_name: str) -> tuple[Callable[[Sequence[str]], list[str]], tuple[str, ...]]:
    """Tagger over a spaCy model, run on a pre-built Doc so token boundaries
    are preserved exactly."""
    try:
        import spacy
        from spacy.tokens import Doc
    except ImportError as exc:
        raise PipelineUnavailable(f"spacy is not importable: {exc}") from None
    try:
        nlp = spacy.load(model_name)
    except OSError as exc:
        raise PipelineUnavailable(f"cannot load spaCy model {model_name!r}: {exc}") from None

    def tag(tokens: Sequence[str]) -> list[str]:
        doc = Doc(nlp.vocab, words=list(tokens))
        for _, component in nlp.pipeline:
            doc = component(doc)
        tags = ["O"] * len(tokens)
        for ent in doc.ents:
            label = normalize_label(ent.label_)
            for i in range(ent.start, ent.end):
                tags[i] = f"{'B' if i == ent.start else 'I'}-{label}"
        return tags

    labels = tuple(sorted({normalize_label(l) for l in nlp.get_pipe("ner").labels}))
    return tag, labels
