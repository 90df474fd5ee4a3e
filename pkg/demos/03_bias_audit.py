"""
Measuring demographic bias end to end
=====================================

Plants a frequency imbalance in a toy training corpus (one group's names
appear ten times more often as PER than another's), trains the built-in
CRF, audits it on an exhaustive template expansion, and reads the bias off
the per-category accuracies, the OOV-name baseline, and the ECDF of
per-name accuracy. Also reruns everything lower-cased.

    python demos/03_bias_audit.py
"""

import io
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))
from fixtures import (  # the planted corpus shared with the acceptance suite
    PLANTED_EPOCHS,
    PLANTED_L2,
    PLANTED_SEED,
    TOY_REGISTRY_TEXT,
    TOY_TEMPLATES_TEXT,
    planted_training_conll,
)

from ner_audit import (
    BuiltinBackend,
    DemographicCategory,
    FeatureConfig,
    TrainConfig,
    Weighting,
    below_baseline_fraction,
    category_accuracy,
    category_rollup,
    confidence_stats,
    ecdf,
    expand,
    load_registry,
    load_templates,
    lowercase_variant,
    name_audits,
    parse_conll,
    range_table,
    score_sentence,
    train,
)

registry = load_registry(io.StringIO(TOY_REGISTRY_TEXT))
corpus = parse_conll(planted_training_conll())
print(f"training on {len(corpus)} sentences "
      f"(WM names appear 10x more often as PER than BF names)")
model = train(
    TrainConfig(
        feature_config=FeatureConfig(),
        epochs=PLANTED_EPOCHS,
        l2_strength=PLANTED_L2,
        seed=PLANTED_SEED,
        holdout_fraction=0.0,
    ),
    corpus,
)

templates = load_templates(TOY_TEMPLATES_TEXT)
names = registry.all_names()
backend = BuiltinBackend(model)


def audit(sentences):
    outcomes = []
    responses = backend.tag_batch([list(s.tokens) for s in sentences])
    for sentence, response in zip(sentences, responses):
        outcomes.extend(score_sentence(response, sentence))
    return outcomes


outcomes = audit(list(expand(templates, names)))
audits = name_audits(outcomes)
oov = next(a for a in audits if a.category is DemographicCategory.OOV_BASELINE)

print(f"\naudited {len(outcomes)} fills; OOV baseline accuracy {oov.accuracy:.4f}")
print(f"{'category':10s} {'accuracy':>9s} {'below-baseline':>15s}")
for cat in category_accuracy(audits, Weighting.UNIFORM_NAMES):
    fraction = below_baseline_fraction(cat, oov.accuracy)
    print(f"{cat.category.value:10s} {cat.accuracy:9.4f} {fraction:15.2f}")

demographic = [a for a in audits if a.category is not DemographicCategory.OOV_BASELINE]
spread = range_table([a.accuracy for a in demographic])
print(f"\nper-name accuracy spread: min {spread.min:.3f}  mean {spread.mean:.3f}  "
      f"std {spread.std:.3f}  median {spread.median:.3f}")

# ECDF points are what the accuracy-distribution figures plot.
for cat in category_accuracy(audits, Weighting.UNIFORM_NAMES):
    curve = ecdf([a.accuracy for a in cat.per_name])
    print(f"ECDF[{cat.category.value}]: " + "  ".join(f"({x:.2f}, {f:.2f})" for x, f in curve.points))

# Categories also roll up onto single axes for gender-only or race-only views.
by_axis: dict[str, list[float]] = {}
for audit_row in demographic:
    for axis in ("gender", "race"):
        by_axis.setdefault(category_rollup(audit_row.category, axis), []).append(
            audit_row.accuracy
        )
print("\nrollup accuracies (uniform over names):")
for group, values in sorted(by_axis.items()):
    print(f"  {group:9s} {sum(values) / len(values):.4f}  (n={len(values)} names)")

# Confidence tells the same story among correctly recognized fills.
stats, _ = confidence_stats(outcomes)
print("\nmedian confidence per name (PER-predicted fills only):")
for row in stats:
    print(f"  {row.surface:16s} median {row.median:.4f}  p25 {row.p25:.4f}  (n={row.count})")

# Lower-casing removes the shape features capitalization provides.
lower_outcomes = audit(list(lowercase_variant(expand(templates, names))))
lower_audits = [
    a for a in name_audits(lower_outcomes)
    if a.category is not DemographicCategory.OOV_BASELINE
]
lower_overall = sum(a.n_person for a in lower_audits) / sum(a.n_total for a in lower_audits)
orig_overall = sum(a.n_person for a in demographic) / sum(a.n_total for a in demographic)
print(f"\noverall accuracy: original-case {orig_overall:.4f} -> lower-cased {lower_overall:.4f}")
