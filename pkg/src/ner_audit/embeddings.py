"""Text-format word vector loading and lookup with an explicit OOV policy.

Lookups fall back along a fixed chain (exact form, deaccented form,
lower-cased form) before landing on the shared all-zeros OOV vector, and
every result records which step matched so OOV-rate analyses are exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, TextIO

import numpy as np

from .errors import ValidationError
from .names import NameRegistry, deaccent

OOV_POLICY = "exact,deaccent,lowercase,zero-vector"


@dataclass
class EmbeddingStore:
    dimension: int
    table: dict[str, np.ndarray]
    duplicate_count: int = 0
    oov_policy: str = OOV_POLICY
    _oov_vector: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self._oov_vector = np.zeros(self.dimension, dtype=np.float64)
        self._oov_vector.setflags(write=False)

    def __len__(self) -> int:
        return len(self.table)

    @property
    def oov_vector(self) -> np.ndarray:
        """The single uninformative vector every unresolvable token maps to."""
        return self._oov_vector


@dataclass(frozen=True)
class LookupResult:
    vector: np.ndarray
    matched_form: str
    is_oov: bool


def load_text_vectors(
    stream: TextIO | Iterable[str], expected_dimension: int | None = None
) -> EmbeddingStore:
    """Load ``word c1 c2 ...`` lines, streaming (never buffering the file).

    An optional leading ``count dim`` header line is tolerated. Later
    duplicates overwrite earlier entries and are tallied. Raises with the
    line number on dimension mismatches and non-numeric or non-finite
    components.
    """
    table: dict[str, np.ndarray] = {}
    dimension = expected_dimension
    duplicates = 0
    first = True
    for lineno, raw in enumerate(stream, start=1):
        line = raw.rstrip("\n").rstrip("\r")
        if not line.strip():
            continue
        parts = line.split()
        if first:
            first = False
            if len(parts) == 2 and parts[0].isdigit() and parts[1].isdigit():
                continue  # vocabulary-size / dimension header
        word, components = parts[0], parts[1:]
        try:
            vector = np.array([float(c) for c in components], dtype=np.float64)
        except ValueError as exc:
            raise ValidationError(f"line {lineno}: non-numeric component ({exc})") from None
        if not np.all(np.isfinite(vector)):
            raise ValidationError(f"line {lineno}: non-finite component")
        if dimension is None:
            dimension = len(vector)
        if len(vector) != dimension:
            raise ValidationError(
                f"line {lineno}: {len(vector)} components, expected {dimension}"
            )
        if word in table:
            duplicates += 1
        vector.setflags(write=False)
        table[word] = vector
    if dimension is None:
        raise ValidationError("no vectors found and no expected dimension given")
    return EmbeddingStore(dimension=dimension, table=table, duplicate_count=duplicates)


def lookup(store: EmbeddingStore, token: str) -> LookupResult:
    """Resolve a token through the fallback chain; never fails.

    Tries the exact form, then the deaccented form, then the lower-cased
    form; a miss at every step yields the zero OOV vector with is_oov set.
    """
    for form in (token, deaccent(token), token.lower()):
        vector = store.table.get(form)
        if vector is not None:
            return LookupResult(vector=vector, matched_form=form, is_oov=False)
    return LookupResult(vector=store.oov_vector, matched_form="", is_oov=True)


def oov_report(store: EmbeddingStore, registry: NameRegistry) -> list[tuple[str, str]]:
    """Registry names (OOV baseline excluded) that miss every fallback step,
    as (surface, category code) pairs in registry order."""
    return [
        (e.surface, e.category.value)
        for e in registry.entries
        if lookup(store, e.surface).is_oov
    ]
