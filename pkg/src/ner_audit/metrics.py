"""Per-name and per-category recognition metrics over tagging results.

A fill counts as recognized only when the predicted entity set contains
exactly the unigram PER span at the fill position; anything else is a miss,
bucketed by the label actually covering the position so label confusion
stays visible. Accumulation is an associative merge of per-name counters,
so outcome shards from parallel tagging fold into identical audits.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .backends import TagResponse
from .conll import EntitySpan, spans_from_tags
from .errors import ValidationError
from .names import DemographicCategory
from .templates import CaseVariant, Dataset, GeneratedSentence

#: Outcome buckets for a fill; PER means an exact unigram match.
OUTCOME_LABELS = ("PER", "LOC", "ORG", "MISC", "OTHER", "NONE")


@dataclass(frozen=True)
class FillOutcome:
    surface: str
    category: DemographicCategory
    dataset: Dataset
    case_variant: CaseVariant
    outcome: str
    per_overlap: bool = False  # a PER span covered the fill but not exactly
    confidence: float | None = None


def score_sentence(
    prediction: TagResponse, sentence: GeneratedSentence
) -> list[FillOutcome]:
    """Outcome of every fill in one tagged sentence.

    PER requires the exact unigram span; otherwise the label of the span
    covering the position is recorded (NONE when uncovered, and NONE with
    the overlap flag when an inexact PER span covers it).
    """
    if len(prediction.tags) != len(sentence.tokens):
        raise ValidationError(
            f"{len(prediction.tags)} tags for {len(sentence.tokens)} tokens"
        )
    spans = spans_from_tags(prediction.tags)
    outcomes: list[FillOutcome] = []
    for (slot, entry), gold in zip(sentence.provenance.fills, sentence.gold_spans):
        pos = gold.start
        exact = EntitySpan(pos, pos + 1, "PER")
        outcome, overlap, confidence = "NONE", False, None
        if exact in spans:
            outcome = "PER"
            if prediction.confidences is not None:
                confidence = prediction.confidences[spans.index(exact)]
        else:
            covering = next((s for s in spans if s.start <= pos < s.end), None)
            if covering is not None:
                if covering.label == "PER":
                    overlap = True
                elif covering.label in ("LOC", "ORG", "MISC"):
                    outcome = covering.label
                else:
                    outcome = "OTHER"
        outcomes.append(
            FillOutcome(
                surface=entry.surface,
                category=entry.category,
                dataset=sentence.provenance.dataset,
                case_variant=sentence.provenance.case_variant,
                outcome=outcome,
                per_overlap=overlap,
                confidence=confidence,
            )
        )
    return outcomes


@dataclass(frozen=True)
class NameAudit:
    surface: str
    category: DemographicCategory
    dataset: Dataset
    case_variant: CaseVariant
    n_total: int
    n_person: int
    accuracy: float
    label_distribution: dict[str, float]
    n_per_overlap: int = 0


@dataclass
class _NameAccumulator:
    category: DemographicCategory
    counts: dict[str, int] = field(default_factory=lambda: {k: 0 for k in OUTCOME_LABELS})
    n_per_overlap: int = 0
    confidences: list[float] = field(default_factory=list)

    def merge(self, other: "_NameAccumulator") -> None:
        for k, v in other.counts.items():
            self.counts[k] += v
        self.n_per_overlap += other.n_per_overlap
        self.confidences.extend(other.confidences)


_Key = tuple[str, Dataset, CaseVariant]


def _population_std(values: np.ndarray) -> float:
    # exact zero for constant samples (the mean of n equal floats need not
    # equal them, which would leak ~1e-17 noise into std)
    if np.min(values) == np.max(values):
        return 0.0
    return float(np.std(values))


class OutcomeAggregator:
    """Shardable accumulator: add outcomes, merge shards, emit audits."""

    def __init__(self) -> None:
        self._names: dict[_Key, _NameAccumulator] = {}

    def add(self, outcome: FillOutcome) -> None:
        key = (outcome.surface, outcome.dataset, outcome.case_variant)
        acc = self._names.get(key)
        if acc is None:
            acc = self._names[key] = _NameAccumulator(category=outcome.category)
        acc.counts[outcome.outcome] += 1
        if outcome.per_overlap:
            acc.n_per_overlap += 1
        if outcome.outcome == "PER" and outcome.confidence is not None:
            acc.confidences.append(outcome.confidence)

    def merge(self, other: "OutcomeAggregator") -> None:
        for key, acc in other._names.items():
            if key in self._names:
                self._names[key].merge(acc)
            else:
                mine = self._names[key] = _NameAccumulator(category=acc.category)
                mine.merge(acc)

    def name_audits(self) -> list[NameAudit]:
        audits = []
        for (surface, dataset, variant), acc in sorted(
            self._names.items(), key=lambda kv: (kv[0][1].value, kv[0][2].value, kv[0][0])
        ):
            total = sum(acc.counts.values())
            audits.append(
                NameAudit(
                    surface=surface,
                    category=acc.category,
                    dataset=dataset,
                    case_variant=variant,
                    n_total=total,
                    n_person=acc.counts["PER"],
                    accuracy=acc.counts["PER"] / total,
                    label_distribution={k: v / total for k, v in acc.counts.items()},
                    n_per_overlap=acc.n_per_overlap,
                )
            )
        return audits

    def confidence_stats(self) -> tuple[list["ConfidenceStats"], list[_Key]]:
        stats: list[ConfidenceStats] = []
        skipped: list[_Key] = []
        for (surface, dataset, variant), acc in sorted(
            self._names.items(), key=lambda kv: (kv[0][1].value, kv[0][2].value, kv[0][0])
        ):
            if not acc.confidences:
                skipped.append((surface, dataset, variant))
                continue
            values = np.array(acc.confidences, dtype=np.float64)
            stats.append(
                ConfidenceStats(
                    surface=surface,
                    dataset=dataset,
                    case_variant=variant,
                    count=len(values),
                    min=float(np.min(values)),
                    mean=float(np.mean(values)),
                    median=float(np.percentile(values, 50)),
                    std=_population_std(values),
                    p25=float(np.percentile(values, 25)),
                )
            )
        return stats, skipped


def name_audits(outcomes: Iterable[FillOutcome]) -> list[NameAudit]:
    """Group outcomes by (surface, dataset, case variant) into audits."""
    agg = OutcomeAggregator()
    for outcome in outcomes:
        agg.add(outcome)
    return agg.name_audits()


class Weighting(Enum):
    UNIFORM_NAMES = "uniform"
    INSTANCE_WEIGHTED = "instance"


@dataclass(frozen=True)
class CategoryAudit:
    category: DemographicCategory
    dataset: Dataset
    case_variant: CaseVariant
    per_name: tuple[NameAudit, ...]
    accuracy: float
    weighting: Weighting

    @property
    def n_names(self) -> int:
        return len(self.per_name)

    @property
    def n_total(self) -> int:
        return sum(a.n_total for a in self.per_name)


def category_accuracy(
    audits: Sequence[NameAudit], weighting: Weighting = Weighting.UNIFORM_NAMES
) -> list[CategoryAudit]:
    """Aggregate name audits per demographic category (OOV baseline excluded).

    UNIFORM_NAMES weighs every name equally (p(n) = 1/N_c); INSTANCE_WEIGHTED
    weighs by occurrence counts (total recognized / total fills).
    """
    groups: dict[tuple[DemographicCategory, Dataset, CaseVariant], list[NameAudit]] = {}
    for audit in audits:
        if audit.category is DemographicCategory.OOV_BASELINE:
            continue
        groups.setdefault((audit.category, audit.dataset, audit.case_variant), []).append(audit)
    out = []
    for (cat, dataset, variant), members in sorted(
        groups.items(), key=lambda kv: (kv[0][1].value, kv[0][2].value, kv[0][0].value)
    ):
        if weighting is Weighting.UNIFORM_NAMES:
            acc = sum(a.accuracy for a in members) / len(members)
        else:
            acc = sum(a.n_person for a in members) / sum(a.n_total for a in members)
        out.append(
            CategoryAudit(
                category=cat,
                dataset=dataset,
                case_variant=variant,
                per_name=tuple(members),
                accuracy=acc,
                weighting=weighting,
            )
        )
    return out


@dataclass(frozen=True)
class EcdfCurve:
    """Right-continuous empirical CDF; points are (x, fraction <= x)."""

    points: tuple[tuple[float, float], ...]
    n: int

    def __post_init__(self) -> None:
        xs = [x for x, _ in self.points]
        if xs != sorted(set(xs)):
            raise ValidationError("ECDF x values must be strictly increasing")

    def evaluate(self, x: float) -> float:
        xs = [p[0] for p in self.points]
        i = bisect.bisect_right(xs, x)
        return 0.0 if i == 0 else self.points[i - 1][1]


def ecdf(values: Sequence[float]) -> EcdfCurve:
    if len(values) == 0:
        raise ValidationError("ECDF of an empty sample")
    ordered = sorted(values)
    n = len(ordered)
    points: list[tuple[float, float]] = []
    for i, x in enumerate(ordered, start=1):
        if points and points[-1][0] == x:
            points[-1] = (x, i / n)
        else:
            points.append((x, i / n))
    return EcdfCurve(points=tuple(points), n=n)


def below_baseline_fraction(
    audits: Sequence[NameAudit] | CategoryAudit, oov_accuracy: float
) -> float:
    """Fraction of the category's names with accuracy strictly below the
    OOV baseline accuracy."""
    members = audits.per_name if isinstance(audits, CategoryAudit) else tuple(audits)
    if not members:
        raise ValidationError("no names to compare against the baseline")
    return sum(1 for a in members if a.accuracy < oov_accuracy) / len(members)


@dataclass(frozen=True)
class ConfidenceStats:
    """Distribution summary of a name's confidences over PER-predicted fills.

    Percentiles interpolate linearly between order statistics; std uses the
    population (divide-by-N) convention.
    """

    surface: str
    dataset: Dataset
    case_variant: CaseVariant
    count: int
    min: float
    mean: float
    median: float
    std: float
    p25: float


def confidence_stats(
    outcomes: Iterable[FillOutcome],
) -> tuple[list[ConfidenceStats], list[_Key]]:
    """Per-name confidence summaries over instances predicted PER; names with
    no usable confidences are returned in the skipped list."""
    agg = OutcomeAggregator()
    for outcome in outcomes:
        agg.add(outcome)
    return agg.confidence_stats()


@dataclass(frozen=True)
class RangeSummary:
    min: float
    mean: float
    std: float
    median: float


def range_table(values: Sequence[float]) -> RangeSummary:
    """Spread of a per-name statistic across names (population std,
    linear-interpolation median)."""
    if len(values) == 0:
        raise ValidationError("range over an empty sample")
    arr = np.array(values, dtype=np.float64)
    return RangeSummary(
        min=float(np.min(arr)),
        mean=float(np.mean(arr)),
        std=_population_std(arr),
        median=float(np.percentile(arr, 50)),
    )
