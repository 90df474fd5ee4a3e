import math
import random

import numpy as np
import pytest

from ner_audit.conll import EntitySpan
from ner_audit.crf import (
    CrfModel,
    FeatureConfig,
    LabelSet,
    TrainConfig,
    build_lattice,
    constrained_log_partition,
    decode_with_confidence,
    entity_confidence,
    featurize,
    load_model,
    log_likelihood_and_gradient,
    log_partition,
    save_model,
    train,
    viterbi,
    word_shape,
)
from ner_audit.embeddings import load_text_vectors
from ner_audit.errors import ValidationError
from tests.conftest import (
    brute_best_sequence,
    brute_log_partition,
    brute_span_posterior,
    make_sentence,
    random_model,
    random_tokens,
)
import io


def zero_model(labels, tokens, window=(0,), l2=0.0, embeddings=None):
    config = FeatureConfig(window=tuple(window), embeddings=embeddings)
    index = {}
    for position in range(len(tokens)):
        for name, _ in featurize(tokens, position, config):
            index.setdefault(name, len(index))
    return CrfModel(
        label_set=LabelSet(tuple(labels)),
        feature_config=config,
        feature_index=index,
        emission_weights=np.zeros((len(index), len(labels))),
        transition_weights=np.zeros((len(labels), len(labels))),
        l2_strength=l2,
    )


# ---------------------------------------------------------------------------
# features


def test_featurize_capitalized_token():
    feats = dict(featurize(["Alya"], 0, FeatureConfig(window=(0,))))
    assert feats["w[0]=Alya"] == 1.0
    assert "shape[0]=Xxxx" in feats
    assert "cap" in feats


def test_featurize_lowercase_token():
    feats = dict(featurize(["alya"], 0, FeatureConfig(window=(0,))))
    assert "cap" not in feats
    assert "shape[0]=xxxx" in feats


def test_featurize_embedding_zero_for_oov():
    store = load_text_vectors(io.StringIO("known 1.0 2.0\n"))
    config = FeatureConfig(window=(0,), embeddings=store)
    names = [n for n, _ in featurize(["Unseenzz"], 0, config)]
    assert not any(n.startswith("emb[") for n in names)
    known = dict(featurize(["known"], 0, config))
    assert known["emb[0]"] == 1.0 and known["emb[1]"] == 2.0


def test_word_shape_signature():
    assert word_shape("Alya") == "Xxxx"
    assert word_shape("U.N.") == "X.X."
    assert word_shape("x9") == "xd"


def test_label_set_requires_o_and_bper():
    with pytest.raises(ValidationError):
        LabelSet(("O",))
    with pytest.raises(ValidationError):
        LabelSet(("B-PER", "I-PER"))
    labels = LabelSet(("O", "B-PER", "I-PER"))
    mask = labels.transition_mask()
    i_per = labels.index["I-PER"]
    assert not mask[labels.index["O"], i_per]
    assert mask[labels.index["B-PER"], i_per]
    assert mask[i_per, i_per]
    assert not labels.start_mask()[i_per]


# ---------------------------------------------------------------------------
# likelihood and gradient


def test_uniform_model_log_likelihood():
    tokens = ["Jose"]
    model = zero_model(["O", "B-PER"], tokens)
    ll, _ = log_likelihood_and_gradient(model, [make_sentence(tokens, ["B-PER"])])
    assert ll == pytest.approx(-math.log(2), abs=1e-12)


def test_gradient_positive_for_gold_only_feature():
    tokens = ["Jose"]
    model = zero_model(["O", "B-PER"], tokens)
    _, grad = log_likelihood_and_gradient(model, [make_sentence(tokens, ["B-PER"])])
    grad_e = grad[: model.emission_weights.size].reshape(model.emission_weights.shape)
    fid = model.feature_index["w[0]=Jose"]
    assert grad_e[fid, model.label_set.index["B-PER"]] > 0


def test_unknown_gold_tag_named():
    tokens = ["Jose"]
    model = zero_model(["O", "B-PER"], tokens)
    with pytest.raises(ValidationError, match="B-LOC"):
        log_likelihood_and_gradient(model, [make_sentence(tokens, ["B-LOC"])])


def test_gradient_matches_finite_differences(rng):
    labels = ["O", "B-PER", "I-PER"]
    for _ in range(15):
        tokens = random_tokens(rng, 5)
        model = random_model(rng, labels, tokens, scale=1.0, l2=rng.choice([0.0, 0.01]))
        tags = ["O"] * len(tokens)
        i = rng.randrange(len(tokens))
        tags[i] = "B-PER"
        if i + 1 < len(tokens) and rng.random() < 0.5:
            tags[i + 1] = "I-PER"
        batch = [make_sentence(tokens, tags)]
        _, grad = log_likelihood_and_gradient(model, batch)
        base = model.get_weights()
        h = 1e-5
        for k in range(len(base)):
            for sign, store in ((+1, "hi"), (-1, "lo")):
                shifted = base.copy()
                shifted[k] += sign * h
                model.set_weights(shifted)
                value, _ = log_likelihood_and_gradient(model, batch)
                if sign > 0:
                    hi = value
                else:
                    lo = value
            model.set_weights(base)
            fd = (hi - lo) / (2 * h)
            assert abs(grad[k] - fd) <= 1e-4 * max(1.0, abs(fd))


# ---------------------------------------------------------------------------
# partition function and lattice


def test_log_partition_uniform_examples():
    model = zero_model(["O", "B-PER"], ["Alya", "ran"])
    assert log_partition(model, ["Alya", "ran"]) == pytest.approx(math.log(4), abs=1e-12)
    for k, labels in ((2, ["O", "B-PER"]), (3, ["O", "B-PER", "B-LOC"])):
        single = zero_model(labels, ["Alya"])
        assert log_partition(single, ["Alya"]) == pytest.approx(math.log(k), abs=1e-12)


def test_log_partition_matches_enumeration(rng):
    labels = ["O", "B-PER", "I-PER"]
    for _ in range(25):
        tokens = random_tokens(rng, 4)
        model = random_model(rng, labels, tokens)
        expected = brute_log_partition(model, tokens, labels)
        assert abs(log_partition(model, tokens) - expected) <= 1e-8 * max(1.0, abs(expected))


def test_forward_backward_agree_and_marginals_normalize(rng):
    labels = ["O", "B-PER", "I-PER", "B-LOC"]
    for _ in range(25):
        tokens = random_tokens(rng, 6)
        lattice = build_lattice(random_model(rng, labels, tokens), tokens)
        scale = max(1.0, abs(lattice.log_partition))
        assert abs(lattice.log_partition - lattice.log_partition_backward) <= 1e-10 * scale
        np.testing.assert_allclose(lattice.node_marginals().sum(axis=1), 1.0, atol=1e-10)


def test_no_overflow_on_long_sentences():
    rng = random.Random(3)
    tokens = [rng.choice(["Jose", "ran", "Boston", "fast"]) for _ in range(512)]
    model = random_model(rng, ["O", "B-PER", "I-PER"], tokens, scale=50.0, window=(0,))
    lattice = build_lattice(model, tokens)
    assert np.isfinite(lattice.log_partition)
    scale = max(1.0, abs(lattice.log_partition))
    assert abs(lattice.log_partition - lattice.log_partition_backward) <= 1e-10 * scale
    np.testing.assert_allclose(lattice.node_marginals().sum(axis=1), 1.0, atol=1e-9)


# ---------------------------------------------------------------------------
# decoding


def test_viterbi_zero_weights_first_legal_sequence():
    tokens = ["Alya", "ran", "home"]
    assert viterbi(zero_model(["O", "B-PER", "I-PER"], tokens), tokens) == ["O", "O", "O"]
    assert viterbi(zero_model(["B-PER", "O"], tokens), tokens) == ["B-PER"] * 3


def test_viterbi_matches_exhaustive_argmax(rng):
    labels = ["O", "B-PER", "I-PER"]
    for _ in range(25):
        tokens = random_tokens(rng, 4)
        model = random_model(rng, labels, tokens)
        best_seqs, best_score = brute_best_sequence(model, tokens, labels)
        decoded = viterbi(model, tokens)
        assert decoded in best_seqs
        if len(best_seqs) == 1:
            assert decoded == best_seqs[0]


def test_viterbi_dominant_feature():
    tokens = ["Jose", "ran"]
    model = zero_model(["O", "B-PER"], tokens)
    model.emission_weights[model.feature_index["w[0]=Jose"], model.label_set.index["B-PER"]] = 8.0
    assert viterbi(model, tokens)[0] == "B-PER"


# ---------------------------------------------------------------------------
# entity confidence


def test_confidence_half_for_uniform_two_token_model():
    tokens = ["Alya", "ran"]
    model = zero_model(["O", "B-PER"], tokens)
    assert entity_confidence(model, tokens, EntitySpan(0, 1, "PER")) == 0.5


def test_confidence_matches_enumeration(rng):
    labels = ["O", "B-PER", "I-PER"]
    for _ in range(25):
        tokens = random_tokens(rng, 4)
        model = random_model(rng, labels, tokens)
        start = rng.randrange(len(tokens))
        end = rng.randrange(start + 1, len(tokens) + 1)
        span = EntitySpan(start, end, "PER")
        expected = brute_span_posterior(model, tokens, labels, span)
        assert abs(entity_confidence(model, tokens, span) - expected) <= 1e-8 * max(1.0, expected)


def test_constrained_partition_never_exceeds_full(rng):
    labels = ["O", "B-PER", "I-PER"]
    for _ in range(25):
        tokens = random_tokens(rng, 5)
        model = random_model(rng, labels, tokens)
        span = EntitySpan(0, min(2, len(tokens)), "PER")
        assert constrained_log_partition(model, tokens, span) <= log_partition(model, tokens) + 1e-12


def test_confidence_errors_and_edge_cases():
    tokens = ["Alya", "ran"]
    model = zero_model(["O", "B-PER"], tokens)
    with pytest.raises(ValidationError):
        entity_confidence(model, tokens, EntitySpan(0, 3, "PER"))
    with pytest.raises(ValidationError):
        entity_confidence(model, tokens, EntitySpan(0, 1, "LOC"))
    # width-2 span with no I-PER label in the set: zero mass, not an error
    assert entity_confidence(model, tokens, EntitySpan(0, 2, "PER")) == 0.0


def test_decode_with_confidence(rng):
    tokens = ["Jose", "lives", "here"]
    model = zero_model(["O", "B-PER", "I-PER"], tokens)
    model.emission_weights[model.feature_index["w[0]=Jose"], model.label_set.index["B-PER"]] = 4.0
    predictions = decode_with_confidence(model, tokens)
    assert [p.span for p in predictions] == [EntitySpan(0, 1, "PER")]
    expected = brute_span_posterior(model, tokens, ["O", "B-PER", "I-PER"], EntitySpan(0, 1, "PER"))
    assert predictions[0].confidence == pytest.approx(expected, abs=1e-10)
    assert predictions[0].confidence > 0.5
    # no entities decoded -> empty list; all confidences are probabilities
    bare = zero_model(["O", "B-PER"], tokens)
    assert decode_with_confidence(bare, tokens) == []
    for _ in range(10):
        toks = random_tokens(rng, 5)
        model = random_model(rng, ["O", "B-PER", "I-PER"], toks)
        for p in decode_with_confidence(model, toks):
            assert 0.0 <= p.confidence <= 1.0


# ---------------------------------------------------------------------------
# training


def _toy_corpus():
    rng = random.Random(12)
    person = ["Alya", "Jose", "Tyree", "Nancy", "Omar"]
    other = ["ran", "home", "the", "game", "ended", "late", "quickly"]
    corpus = []
    for _ in range(20):
        tokens, tags = [], []
        for _ in range(rng.randint(3, 7)):
            if rng.random() < 0.3:
                tokens.append(rng.choice(person))
                tags.append("B-PER")
            else:
                tokens.append(rng.choice(other))
                tags.append("O")
        corpus.append(make_sentence(tokens, tags))
    return corpus


def test_train_improves_likelihood():
    corpus = _toy_corpus()
    config = TrainConfig(feature_config=FeatureConfig(window=(-1, 0, 1)), epochs=50, seed=0)
    model = train(config, corpus)
    initial_objective = model.training_log[0][1]
    final_objective, _ = log_likelihood_and_gradient(model, corpus)
    assert final_objective > initial_objective


def test_train_deterministic_same_seed():
    corpus = _toy_corpus()
    config = TrainConfig(feature_config=FeatureConfig(window=(0,)), epochs=20, seed=7)
    a = train(config, corpus)
    b = train(config, corpus)
    assert np.array_equal(a.get_weights(), b.get_weights())
    assert a.training_log == b.training_log


def test_train_separable_corpus_high_accuracy():
    rng = random.Random(5)
    person = [f"Person{i}" for i in range(5)]
    other = [f"word{i}" for i in range(8)]
    corpus = []
    for _ in range(30):
        tokens, tags = [], []
        for _ in range(rng.randint(4, 8)):
            if rng.random() < 0.35:
                tokens.append(rng.choice(person))
                tags.append("B-PER")
            else:
                tokens.append(rng.choice(other))
                tags.append("O")
        corpus.append(make_sentence(tokens, tags))
    config = TrainConfig(
        feature_config=FeatureConfig(window=(0,)),
        epochs=150,
        l2_strength=1e-4,
        holdout_fraction=0.0,
        seed=0,
    )
    model = train(config, corpus)
    correct = total = 0
    for sentence in corpus:
        decoded = viterbi(model, sentence.texts)
        correct += sum(d == g for d, g in zip(decoded, sentence.tags))
        total += len(decoded)
    assert correct / total >= 0.99


def test_train_rejects_empty_corpus():
    with pytest.raises(ValidationError):
        train(TrainConfig(), [])


# ---------------------------------------------------------------------------
# persistence


def test_model_round_trip_bit_exact(tmp_path, rng):
    corpus = _toy_corpus()
    config = TrainConfig(feature_config=FeatureConfig(window=(-1, 0, 1)), epochs=15, seed=1)
    model = train(config, corpus)
    path = tmp_path / "model.json"
    save_model(model, path)
    reloaded = load_model(path)
    assert np.array_equal(model.emission_weights, reloaded.emission_weights)
    assert np.array_equal(model.transition_weights, reloaded.transition_weights)
    assert reloaded.training_log == model.training_log
    for _ in range(20):
        tokens = random_tokens(rng, 8)
        assert viterbi(model, tokens) == viterbi(reloaded, tokens)
        span = EntitySpan(0, 1, "PER")
        assert entity_confidence(model, tokens, span) == entity_confidence(reloaded, tokens, span)


def test_model_with_embeddings_round_trip(tmp_path):
    vectors = "Alya 0.5 -0.25\nran 0.125 1.0\n"
    vec_path = tmp_path / "vectors.txt"
    vec_path.write_text(vectors, encoding="utf-8")
    store = load_text_vectors(io.StringIO(vectors))
    config = TrainConfig(
        feature_config=FeatureConfig(
            window=(0,), embeddings=store, embeddings_path=str(vec_path)
        ),
        epochs=10,
        seed=0,
        holdout_fraction=0.0,
    )
    corpus = [make_sentence(["Alya", "ran"], ["B-PER", "O"])]
    model = train(config, corpus)
    path = tmp_path / "model.json"
    save_model(model, path)
    auto = load_model(path)  # store reloaded from the recorded path
    assert viterbi(auto, ["Alya", "ran"]) == viterbi(model, ["Alya", "ran"])
    vec_path.unlink()
    with pytest.raises(ValidationError, match="embedding"):
        load_model(path)
    explicit = load_model(path, embeddings=store)
    assert np.array_equal(explicit.emission_weights, model.emission_weights)
