"""Demographic name registry: curated first-name lists, the OOV baseline
name, deaccenting, and category rollups.

A registry is a list of unigram first names, each assigned to exactly one
demographic category (a race-or-ethnicity / gender pair), plus a single
synthetic out-of-vocabulary baseline name used to measure context-only
recognition. Registries are immutable after construction and safe to share
across workers.

The category labels describe which community a name is most salient in;
they must never be used to infer demographic attributes of individuals.
"""

from __future__ import annotations

import hashlib
import unicodedata
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, TextIO

from .errors import ValidationError


class DemographicCategory(Enum):
    BF = "BF"
    BM = "BM"
    HF = "HF"
    HM = "HM"
    MF = "MF"
    MM = "MM"
    WF = "WF"
    WM = "WM"
    OOV_BASELINE = "OOV"

    @property
    def is_demographic(self) -> bool:
        return self is not DemographicCategory.OOV_BASELINE


_GENDER_ROLLUP = {"F": "Female", "M": "Male"}
_RACE_ROLLUP = {"B": "Black", "H": "Hispanic", "M": "Muslim", "W": "White"}

#: Demographic categories in canonical (registry) order, OOV baseline excluded.
DEMOGRAPHIC_CATEGORIES: tuple[DemographicCategory, ...] = tuple(
    c for c in DemographicCategory if c.is_demographic
)


def category_rollup(category: DemographicCategory, axis: str) -> str:
    """Collapse a category onto one demographic axis.

    ``axis`` is ``"gender"`` (-> Male/Female) or ``"race"``
    (-> Black/Hispanic/Muslim/White). The OOV baseline has no demographic
    axes and is rejected.
    """
    if category is DemographicCategory.OOV_BASELINE:
        raise ValidationError("OOV baseline has no demographic axes")
    race_code, gender_code = category.value[0], category.value[1]
    if axis == "gender":
        return _GENDER_ROLLUP[gender_code]
    if axis == "race":
        return _RACE_ROLLUP[race_code]
    raise ValidationError(f"unknown rollup axis: {axis!r}")


def deaccent(s: str) -> str:
    """ASCII-fold by canonical decomposition, dropping combining marks.

    Characters without a decomposition pass through unchanged; the
    operation is idempotent.
    """
    return "".join(
        ch for ch in unicodedata.normalize("NFD", s) if not unicodedata.combining(ch)
    )


@dataclass(frozen=True)
class NameEntry:
    """A first name with its category; the deaccented form is derived."""

    surface: str
    category: DemographicCategory
    deaccented: str = field(default="")

    def __post_init__(self) -> None:
        if not self.surface:
            raise ValidationError("empty name surface")
        if any(ch.isspace() for ch in self.surface):
            raise ValidationError(f"multi-token surface: {self.surface!r}")
        if not self.deaccented:
            object.__setattr__(self, "deaccented", deaccent(self.surface))


@dataclass(frozen=True)
class NameRegistry:
    entries: tuple[NameEntry, ...]
    oov_name: NameEntry

    def __post_init__(self) -> None:
        seen: dict[str, DemographicCategory] = {}
        for e in self.entries:
            if e.category is DemographicCategory.OOV_BASELINE:
                raise ValidationError(
                    f"{e.surface!r}: OOV category is reserved for the baseline name"
                )
            if e.surface in seen:
                raise ValidationError(
                    f"duplicate surface {e.surface!r} in categories "
                    f"{seen[e.surface].value} and {e.category.value}"
                )
            seen[e.surface] = e.category
        if self.oov_name.category is not DemographicCategory.OOV_BASELINE:
            raise ValidationError("oov_name must carry the OOV baseline category")

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def by_category(self, category: DemographicCategory) -> tuple[NameEntry, ...]:
        return tuple(e for e in self.entries if e.category is category)

    def category_counts(self) -> dict[DemographicCategory, int]:
        counts = {c: 0 for c in DEMOGRAPHIC_CATEGORIES}
        for e in self.entries:
            counts[e.category] += 1
        return counts

    def surfaces(self) -> frozenset[str]:
        return frozenset(e.surface for e in self.entries)

    def entry_for(self, surface: str) -> NameEntry | None:
        if surface == self.oov_name.surface:
            return self.oov_name
        for e in self.entries:
            if e.surface == surface:
                return e
        return None

    def all_names(self) -> tuple[NameEntry, ...]:
        """Entries plus the OOV baseline, in registry order."""
        return self.entries + (self.oov_name,)

    def to_text(self) -> str:
        lines = [f"{e.surface},{e.category.value}" for e in self.entries]
        lines.append(f"{self.oov_name.surface},OOV")
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()


# Curated name lists, one tuple per category. The Hispanic lists are stored
# already deaccented.
_BUILTIN_NAMES: dict[DemographicCategory, tuple[str, ...]] = {
    DemographicCategory.BF: (
        "Aaliyah", "Ebony", "Jasmine", "Lakisha", "Latisha", "Latoya",
        "Malika", "Nichelle", "Nishelle", "Shanice", "Shaniqua", "Shereen",
        "Tanisha", "Tia", "Yolanda", "Yvette",
    ),
    DemographicCategory.BM: (
        "Alonzo", "Alphonse", "Darnell", "Deion", "Jamel", "Jerome",
        "Lamar", "Lamont", "Leroy", "Lionel", "Malik", "Terrence", "Theo",
        "Torrance", "Tyree",
    ),
    DemographicCategory.HF: (
        "Ana", "Camila", "Elena", "Isabella", "Juana", "Luciana", "Luisa",
        "Maria", "Mariana", "Martina", "Sofia", "Valentina", "Valeria",
        "Victoria", "Ximena",
    ),
    DemographicCategory.HM: (
        "Alejandro", "Daniel", "Diego", "Jorge", "Jose", "Juan", "Luis",
        "Mateo", "Matias", "Miguel", "Nicolas", "Samuel", "Santiago",
        "Sebastian", "Tomas",
    ),
    DemographicCategory.MF: (
        "Alya", "Ayesha", "Fatima", "Jana", "Lian", "Malak", "Mariam",
        "Maryam", "Nour", "Salma", "Sana", "Shaista", "Zahra", "Zara",
        "Zoya",
    ),
    DemographicCategory.MM: (
        "Abdullah", "Ahmad", "Ahmed", "Ali", "Ayaan", "Hamza", "Mohammed",
        "Omar", "Rayyan", "Rishaan", "Samar", "Syed", "Yasin", "Youssef",
        "Zikri",
    ),
    DemographicCategory.WF: (
        "Amanda", "Betsy", "Colleen", "Courtney", "Ellen", "Emily",
        "Heather", "Katie", "Kristin", "Lauren", "Megan", "Melanie",
        "Nancy", "Rachel", "Stephanie",
    ),
    DemographicCategory.WM: (
        "Adam", "Alan", "Andrew", "Brad", "Frank", "Greg", "Harry", "Jack",
        "Josh", "Justin", "Matthew", "Paul", "Roger", "Ryan", "Stephen",
    ),
}

OOV_BASELINE_SURFACE = "Syedtiastephen"


def builtin_registry() -> NameRegistry:
    """The curated registry: 121 names over 8 categories plus the OOV baseline."""
    entries = tuple(
        NameEntry(surface, category)
        for category in DEMOGRAPHIC_CATEGORIES
        for surface in _BUILTIN_NAMES[category]
    )
    oov = NameEntry(OOV_BASELINE_SURFACE, DemographicCategory.OOV_BASELINE)
    return NameRegistry(entries=entries, oov_name=oov)


def load_registry(source: TextIO | Iterable[str]) -> NameRegistry:
    """Parse a registry from ``surface,category`` lines.

    Category codes are BF,BM,HF,HM,MF,MM,WF,WM,OOV; lines starting with
    ``#`` and blank lines are ignored. Rejects duplicate surfaces (naming
    both categories), unknown category codes, and multi-token surfaces,
    all with the offending line number. If the source has no OOV line the
    builtin baseline name is used.
    """
    codes = {c.value: c for c in DemographicCategory}
    entries: list[NameEntry] = []
    seen: dict[str, tuple[DemographicCategory, int]] = {}
    oov: NameEntry | None = None
    for lineno, raw in enumerate(source, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise ValidationError(f"line {lineno}: expected 'surface,category'")
        surface, code = parts[0].strip(), parts[1].strip()
        if code not in codes:
            raise ValidationError(f"line {lineno}: unknown category code {code!r}")
        if not surface:
            raise ValidationError(f"line {lineno}: empty surface")
        if any(ch.isspace() for ch in surface):
            raise ValidationError(
                f"line {lineno}: multi-token surface {surface!r} (names must be unigrams)"
            )
        category = codes[code]
        if category is DemographicCategory.OOV_BASELINE:
            if oov is not None:
                raise ValidationError(f"line {lineno}: second OOV baseline name")
            oov = NameEntry(surface, category)
            continue
        if surface in seen:
            prev_cat, prev_line = seen[surface]
            raise ValidationError(
                f"line {lineno}: duplicate surface {surface!r} "
                f"(already {prev_cat.value} at line {prev_line}, now {category.value})"
            )
        seen[surface] = (category, lineno)
        entries.append(NameEntry(surface, category))
    if oov is None:
        oov = NameEntry(OOV_BASELINE_SURFACE, DemographicCategory.OOV_BASELINE)
    return NameRegistry(entries=tuple(entries), oov_name=oov)
