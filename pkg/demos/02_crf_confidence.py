"""
CRF decoding and span confidence
================================

Trains the built-in linear-chain CRF on a tiny corpus, decodes with
Viterbi, and attaches a posterior probability to each extracted entity:
the mass of all labelings that realize exactly that span, over the full
partition function (a constrained forward-backward pass per span).

    python demos/02_crf_confidence.py
"""

import numpy as np

from ner_audit import (
    EntitySpan,
    FeatureConfig,
    TrainConfig,
    build_lattice,
    decode_with_confidence,
    entity_confidence,
    log_partition,
    parse_conll,
    train,
    viterbi,
)

corpus = parse_conll(
    "\n\n".join(
        "\n".join(f"{tok} {tag}" for tok, tag in sentence)
        for sentence in [
            [("Alya", "B-PER"), ("told", "O"), ("Jose", "B-PER"), ("everything", "O")],
            [("Jose", "B-PER"), ("ran", "O"), ("home", "O")],
            [("Maria", "B-PER"), ("visited", "O"), ("Boston", "B-LOC")],
            [("They", "O"), ("met", "O"), ("in", "O"), ("Boston", "B-LOC")],
            [("Tyree", "B-PER"), ("said", "O"), ("nothing", "O")],
            [("The", "O"), ("game", "O"), ("ended", "O"), ("late", "O")],
            [("Nancy", "B-PER"), ("beat", "O"), ("Omar", "B-PER"), ("twice", "O")],
            [("Rain", "O"), ("hit", "O"), ("Madrid", "B-LOC"), ("today", "O")],
        ]
    )
    + "\n"
)

config = TrainConfig(
    feature_config=FeatureConfig(window=(-1, 0, 1)),
    epochs=80,
    holdout_fraction=0.0,
    seed=0,
)
model = train(config, corpus)
print("labels:", model.label_set.labels)
print("final objective:", round(model.training_log[-1][1], 4))

tokens = ["Omar", "visited", "Boston", "today"]
print("\ntokens: ", tokens)
print("viterbi:", viterbi(model, tokens))

# Each decoded span carries its exact posterior probability.
for prediction in decode_with_confidence(model, tokens):
    token = tokens[prediction.span.start]
    print(f"  {token!r} as {prediction.label}: confidence {prediction.confidence:.4f}")

# The same machinery scores arbitrary candidate spans, decoded or not.
candidate = EntitySpan(2, 3, "PER")
print(f"\nP('Boston' is exactly a PER span) = "
      f"{entity_confidence(model, tokens, candidate):.6f}")

# Under the hood: forward and backward recursions agree on log Z, and the
# per-position label marginals are proper distributions.
lattice = build_lattice(model, tokens)
print("\nlog Z (forward) :", lattice.log_partition)
print("log Z (backward):", lattice.log_partition_backward)
print("marginal row sums:", np.round(lattice.node_marginals().sum(axis=1), 12))
assert np.isclose(lattice.log_partition, log_partition(model, tokens))
