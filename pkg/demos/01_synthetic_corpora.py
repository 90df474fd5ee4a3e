"""
Building controlled NER evaluation corpora
==========================================

Two ways to make sentences where only the name varies: expanding slot
templates over a name registry, and substituting names into real tagged
sentences (in-situ). Run from the repository root:

    python demos/01_synthetic_corpora.py
"""

import io
import itertools

from ner_audit import (
    builtin_registry,
    deaccent,
    expand,
    expansion_count,
    insitu_candidates,
    load_templates,
    lowercase_variant,
    parse_conll,
    synthesize_insitu,
    write_generated_corpus,
)

# The registry pairs each first name with the demographic category it is
# most salient in, plus one synthetic out-of-vocabulary baseline name.
registry = builtin_registry()
print(f"registry: {len(registry)} names + OOV baseline {registry.oov_name.surface!r}")
for category, count in registry.category_counts().items():
    sample = ", ".join(e.surface for e in registry.by_category(category)[:3])
    print(f"  {category.value}: {count:2d} names ({sample}, ...)")

# Accented variants fold onto their registry forms.
print("\ndeaccent('José') ->", deaccent("José"))

# Templates use {k} slots; the curated-set rules require 3+ slots.
templates = load_templates("{0} told {1} that {2} could pay with cash .")
n = len(registry.all_names())
print(f"\none 3-slot template x {n} names -> {expansion_count(n, templates):,} sentences")
print(f"at 123 names that is {expansion_count(123, templates):,} per template")

# Exhaustive expansion streams every ordered triple of distinct names in a
# fixed order, so runs are reproducible and shardable.
first_three = list(itertools.islice(expand(templates, registry.all_names()), 3))
for sentence in first_three:
    print("  ", " ".join(sentence.tokens))

# Sampling draws a duplicate-free subset of that enumeration by rank.
sample = list(expand(templates, registry.all_names(), sample_size=2, seed=7))
print("seeded sample of 2:")
for sentence in sample:
    print("  ", " ".join(sentence.tokens))

# In-situ: take real tagged sentences with exactly one unigram person
# entity and more than five tokens, then swap the name through the registry.
real = parse_conll(
    "Charlton NNP I-NP I-PER\nmanaged VBD I-VP O\nIreland NNP I-NP I-LOC\n"
    "for IN I-PP O\n93 CD I-NP O\nmatches NNS I-NP O\n. . O O\n\n"
    "Smith NNP I-NP I-PER\nwon VBD I-VP O\n. . O O\n\n"
)
eligible = insitu_candidates(real)
print(f"\nin-situ filter kept {len(eligible)} of {len(real)} sentences")
generated = list(synthesize_insitu(real, registry.all_names()[:2]))
for sentence in generated:
    print("  ", " ".join(sentence.tokens))

# Every corpus also has a lower-cased twin for the case-ablation runs.
lowered = next(lowercase_variant(iter(generated)))
print("lower-cased:", " ".join(lowered.tokens))

# Corpora are written as CoNLL text plus a JSONL provenance sidecar.
conll_io, prov_io = io.StringIO(), io.StringIO()
write_generated_corpus(generated, conll_io, prov_io)
print("\nprovenance record:", prov_io.getvalue().splitlines()[0])
