"""Shared fixtures and independent oracles.

The oracle helpers here deliberately avoid the package's dynamic programming:
legality comes straight from tag semantics, scores from explicit loops, and
sums from math.fsum, so they stay valid checks of the lattice code.
"""

from __future__ import annotations

import itertools
import math
import random

import numpy as np
import pytest

from ner_audit.conll import ConllSentence, Token
from ner_audit.crf import CrfModel, FeatureConfig, LabelSet, featurize


def make_sentence(tokens, tags, annotations=None) -> ConllSentence:
    annotations = annotations or [()] * len(tokens)
    return ConllSentence(
        tuple(Token(t, g, tuple(a)) for t, g, a in zip(tokens, tags, annotations))
    )


def legal_sequence(seq) -> bool:
    """IOB2 legality straight from tag semantics (oracle-side)."""
    prev = None
    for tag in seq:
        if tag.startswith("I-"):
            typ = tag[2:]
            if prev not in (f"B-{typ}", f"I-{typ}"):
                return False
        prev = tag
    return True


def sequence_score(model: CrfModel, emissions, seq, labels) -> float:
    idx = [labels.index(tag) for tag in seq]
    score = float(emissions[0][idx[0]])
    for t in range(1, len(seq)):
        score += float(model.transition_weights[idx[t - 1]][idx[t]])
        score += float(emissions[t][idx[t]])
    return score


def enumerate_scores(model: CrfModel, tokens, labels):
    """(sequence, score) for every legal labeling, via exhaustive product."""
    emissions = model.emissions(tokens)
    out = []
    for seq in itertools.product(labels, repeat=len(tokens)):
        if legal_sequence(seq):
            out.append((list(seq), sequence_score(model, emissions, seq, labels)))
    return out


def brute_log_partition(model: CrfModel, tokens, labels) -> float:
    return math.log(math.fsum(math.exp(s) for _, s in enumerate_scores(model, tokens, labels)))


def brute_best_sequence(model: CrfModel, tokens, labels):
    scored = enumerate_scores(model, tokens, labels)
    best = max(s for _, s in scored)
    return [seq for seq, s in scored if s == best], best


def brute_span_posterior(model: CrfModel, tokens, labels, span) -> float:
    want = ["B-" + span.label] + ["I-" + span.label] * (span.end - span.start - 1)
    num, den = [], []
    for seq, score in enumerate_scores(model, tokens, labels):
        weight = math.exp(score)
        den.append(weight)
        if seq[span.start : span.end] == want and (
            span.end >= len(tokens) or seq[span.end] != "I-" + span.label
        ):
            num.append(weight)
    return math.fsum(num) / math.fsum(den)


def random_model(
    rng: random.Random,
    labels,
    tokens,
    scale: float = 2.0,
    l2: float = 0.0,
    window=(-1, 0, 1),
) -> CrfModel:
    """Small model with random weights over the features the tokens fire."""
    config = FeatureConfig(window=tuple(window))
    index: dict[str, int] = {}
    for position in range(len(tokens)):
        for name, _ in featurize(tokens, position, config):
            index.setdefault(name, len(index))
    emission = np.array(
        [[rng.uniform(-scale, scale) for _ in labels] for _ in index], dtype=np.float64
    )
    transition = np.array(
        [[rng.uniform(-scale, scale) for _ in labels] for _ in labels], dtype=np.float64
    )
    return CrfModel(
        label_set=LabelSet(tuple(labels)),
        feature_config=config,
        feature_index=index,
        emission_weights=emission,
        transition_weights=transition,
        l2_strength=l2,
    )


TOY_VOCAB = ("Jose", "told", "Boston", "him", "x9", "the", "Alya", "ran")


def random_tokens(rng: random.Random, max_len: int, vocab=TOY_VOCAB):
    return [rng.choice(vocab) for _ in range(rng.randint(1, max_len))]


@pytest.fixture
def rng():
    return random.Random(20240817)
