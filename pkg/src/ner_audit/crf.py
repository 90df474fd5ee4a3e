"""Linear-chain CRF sequence labeler with log-space inference.

Implements feature extraction, L2-regularized maximum-likelihood training by
full-batch adaptive gradient ascent, Viterbi decoding under an IOB2 legality
mask, forward-backward, and span-level confidence: the probability that a
given entity span is realized exactly, computed as the ratio of a
constrained partition function to the full one.

Conventions fixed here:
  * scores are unnormalized log-potentials; every aggregation is a
    log-sum-exp, so sentences up to several hundred tokens cannot overflow;
  * transition legality (I-X only after B-X or I-X, never sentence-initial)
    is enforced by masking illegal moves to -inf at inference and training
    time rather than by deleting weights;
  * Viterbi ties break toward the earliest label in the label set.
"""

from __future__ import annotations

import base64
import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .conll import ConllSentence, EntitySpan, normalize_iob2, spans_from_tags, tag_parts
from .embeddings import EmbeddingStore, load_text_vectors, lookup
from .errors import ValidationError

NEG_INF = -np.inf


def _logsumexp(a: np.ndarray, axis: int = -1) -> np.ndarray | float:
    """Stable log-sum-exp; an all-(-inf) slice reduces to -inf, not NaN."""
    m = np.max(a, axis=axis, keepdims=True)
    safe = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(a - safe), axis=axis))
    return out + np.squeeze(safe, axis=axis)


@dataclass(frozen=True)
class LabelSet:
    """Ordered IOB2 tag inventory with derived legality masks."""

    labels: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(set(self.labels)) != len(self.labels):
            raise ValidationError("duplicate labels")
        if "O" not in self.labels:
            raise ValidationError("label set must contain O")
        if "B-PER" not in self.labels:
            raise ValidationError("label set must contain B-PER")
        for lab in self.labels:
            tag_parts(lab)  # validates syntax

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def index(self) -> dict[str, int]:
        return {lab: i for i, lab in enumerate(self.labels)}

    @property
    def entity_types(self) -> frozenset[str]:
        return frozenset(lab[2:] for lab in self.labels if lab.startswith("B-"))

    def transition_mask(self) -> np.ndarray:
        """mask[i, j] is True when label i may be followed by label j."""
        n = len(self.labels)
        mask = np.ones((n, n), dtype=bool)
        for j, to in enumerate(self.labels):
            prefix, typ = tag_parts(to)
            if prefix != "I":
                continue
            for i, frm in enumerate(self.labels):
                fp, ft = tag_parts(frm)
                mask[i, j] = fp in ("B", "I") and ft == typ
        return mask

    def start_mask(self) -> np.ndarray:
        return np.array([not lab.startswith("I-") for lab in self.labels], dtype=bool)


@dataclass(frozen=True)
class FeatureConfig:
    """Which feature families fire at each position.

    Lexical families: word identity / lower-cased form / shape signature at
    every window offset, plus 1-4 char prefixes and suffixes and the
    capitalization and digit flags of the current token. Embedding features
    contribute the current token's vector components (zero OOV vector for
    unresolvable tokens).
    """

    window: tuple[int, ...] = (-2, -1, 0, 1, 2)
    use_lexical: bool = True
    embeddings: EmbeddingStore | None = None
    embeddings_path: str | None = None

    def __post_init__(self) -> None:
        if not self.use_lexical and self.embeddings is None:
            raise ValidationError("at least one feature family must be enabled")


def word_shape(token: str) -> str:
    out = []
    for ch in token:
        if ch.isupper():
            out.append("X")
        elif ch.islower():
            out.append("x")
        elif ch.isdigit():
            out.append("d")
        else:
            out.append(ch)
    return "".join(out)


def collapsed_shape(token: str) -> str:
    """word_shape with character runs collapsed ("Xxxx" -> "Xx"), so shape
    evidence transfers across token lengths."""
    shape = word_shape(token)
    out = [ch for i, ch in enumerate(shape) if i == 0 or shape[i - 1] != ch]
    return "".join(out)


def featurize(
    tokens: Sequence[str], position: int, config: FeatureConfig
) -> list[tuple[str, float]]:
    """Sparse features for one position as (feature id, value) pairs."""
    if not (0 <= position < len(tokens)):
        raise ValidationError(f"position {position} out of range")
    feats: list[tuple[str, float]] = []
    if config.use_lexical:
        for d in config.window:
            i = position + d
            if 0 <= i < len(tokens):
                t = tokens[i]
                feats.append((f"w[{d}]={t}", 1.0))
                feats.append((f"low[{d}]={t.lower()}", 1.0))
                feats.append((f"shape[{d}]={word_shape(t)}", 1.0))
                feats.append((f"shapec[{d}]={collapsed_shape(t)}", 1.0))
            else:
                feats.append((f"w[{d}]={'<s>' if i < 0 else '</s>'}", 1.0))
        t = tokens[position]
        for k in range(1, 5):
            if len(t) >= k:
                feats.append((f"pre{k}={t[:k]}", 1.0))
                feats.append((f"suf{k}={t[-k:]}", 1.0))
        if t[:1].isupper():
            feats.append(("cap", 1.0))
        if t.isupper() and any(c.isalpha() for c in t):
            feats.append(("allcaps", 1.0))
        if any(c.isdigit() for c in t):
            feats.append(("digit", 1.0))
    if config.embeddings is not None:
        vec = lookup(config.embeddings, tokens[position]).vector
        for i, v in enumerate(vec):
            if v != 0.0:
                feats.append((f"emb[{i}]", float(v)))
    return feats


@dataclass
class CrfModel:
    label_set: LabelSet
    feature_config: FeatureConfig
    feature_index: dict[str, int]
    emission_weights: np.ndarray  # (n_features, n_labels)
    transition_weights: np.ndarray  # (n_labels, n_labels)
    l2_strength: float = 1e-3
    training_log: tuple[tuple[int, float, float | None], ...] = ()

    def __post_init__(self) -> None:
        n_lab = len(self.label_set)
        if self.emission_weights.shape != (len(self.feature_index), n_lab):
            raise ValidationError("emission weight shape mismatch")
        if self.transition_weights.shape != (n_lab, n_lab):
            raise ValidationError("transition weight shape mismatch")
        if not (
            np.all(np.isfinite(self.emission_weights))
            and np.all(np.isfinite(self.transition_weights))
        ):
            raise ValidationError("weights must be finite")
        if self.l2_strength < 0:
            raise ValidationError("l2_strength must be nonnegative")

    # -- weight vector packing (used by the optimizer and gradient checks) --

    def get_weights(self) -> np.ndarray:
        return np.concatenate(
            [self.emission_weights.ravel(), self.transition_weights.ravel()]
        )

    def set_weights(self, flat: np.ndarray) -> None:
        n_e = self.emission_weights.size
        self.emission_weights = flat[:n_e].reshape(self.emission_weights.shape).copy()
        self.transition_weights = flat[n_e:].reshape(self.transition_weights.shape).copy()

    def sparse_features(self, tokens: Sequence[str]) -> list[tuple[np.ndarray, np.ndarray]]:
        """Per-position (feature ids, values); unknown features are dropped."""
        out = []
        for pos in range(len(tokens)):
            ids, vals = [], []
            for name, value in featurize(tokens, pos, self.feature_config):
                idx = self.feature_index.get(name)
                if idx is not None:
                    ids.append(idx)
                    vals.append(value)
            out.append((np.array(ids, dtype=np.intp), np.array(vals, dtype=np.float64)))
        return out

    def emissions(self, tokens: Sequence[str]) -> np.ndarray:
        E = np.zeros((len(tokens), len(self.label_set)), dtype=np.float64)
        for t, (ids, vals) in enumerate(self.sparse_features(tokens)):
            if len(ids):
                E[t] = vals @ self.emission_weights[ids]
        return E


@dataclass
class Lattice:
    """Scored DP table for one sentence: emissions, masked transitions, and
    forward/backward log-messages. Forward and backward estimates of the
    log-partition must agree to ~1e-10 relative."""

    emissions: np.ndarray  # (T, L), legality and constraint penalties applied
    transitions: np.ndarray  # (L, L), -inf at illegal moves
    alpha: np.ndarray
    beta: np.ndarray
    log_partition: float
    log_partition_backward: float

    def node_marginals(self) -> np.ndarray:
        """P(tag_t = y) for every position; rows sum to 1."""
        return np.exp(self.alpha + self.beta - self.log_partition)


def build_lattice(
    model: CrfModel,
    tokens: Sequence[str],
    allowed: np.ndarray | None = None,
) -> Lattice:
    """Run forward-backward; ``allowed`` (T, L) restricts labels per position."""
    if not tokens:
        raise ValidationError("empty token sequence")
    n_lab = len(model.label_set)
    E = model.emissions(tokens)
    E[0] = np.where(model.label_set.start_mask(), E[0], NEG_INF)
    if allowed is not None:
        E = np.where(allowed, E, NEG_INF)
    trans = np.where(model.label_set.transition_mask(), model.transition_weights, NEG_INF)

    T = len(tokens)
    alpha = np.full((T, n_lab), NEG_INF)
    alpha[0] = E[0]
    for t in range(1, T):
        alpha[t] = E[t] + _logsumexp(alpha[t - 1][:, None] + trans, axis=0)
    beta = np.full((T, n_lab), NEG_INF)
    beta[T - 1] = 0.0
    for t in range(T - 2, -1, -1):
        beta[t] = _logsumexp(trans + (E[t + 1] + beta[t + 1])[None, :], axis=1)
    log_z = float(_logsumexp(alpha[T - 1], axis=-1))
    log_z_b = float(_logsumexp(E[0] + beta[0], axis=-1))
    return Lattice(E, trans, alpha, beta, log_z, log_z_b)


def log_partition(model: CrfModel, tokens: Sequence[str]) -> float:
    """log of the summed exponentiated scores over all legal labelings."""
    return build_lattice(model, tokens).log_partition


# ---------------------------------------------------------------------------
# Training objective


def _gold_indices(model: CrfModel, tags: Sequence[str]) -> np.ndarray:
    index = model.label_set.index
    out = []
    for tag in normalize_iob2(tags):
        if tag not in index:
            raise ValidationError(f"gold tag {tag!r} not in model label set")
        out.append(index[tag])
    return np.array(out, dtype=np.intp)


def _sentence_ll_grad(
    model: CrfModel,
    feats: list[tuple[np.ndarray, np.ndarray]],
    gold: np.ndarray,
    tokens: Sequence[str],
    grad_e: np.ndarray,
    grad_t: np.ndarray,
) -> float:
    """Accumulate one sentence's empirical-minus-expected counts; returns its
    unregularized log-likelihood."""
    lattice = build_lattice(model, tokens)
    E, trans = lattice.emissions, lattice.transitions
    T = len(tokens)

    path = float(E[0, gold[0]])
    for t in range(1, T):
        path += float(trans[gold[t - 1], gold[t]] + E[t, gold[t]])

    marginals = lattice.node_marginals()
    for t, (ids, vals) in enumerate(feats):
        if not len(ids):
            continue
        residual = -marginals[t]
        residual[gold[t]] += 1.0
        grad_e[ids] += vals[:, None] * residual[None, :]
    for t in range(1, T):
        pair = np.exp(
            lattice.alpha[t - 1][:, None]
            + trans
            + (E[t] + lattice.beta[t])[None, :]
            - lattice.log_partition
        )
        grad_t -= pair
        grad_t[gold[t - 1], gold[t]] += 1.0
    return path - lattice.log_partition


def log_likelihood_and_gradient(
    model: CrfModel, batch: Sequence[ConllSentence]
) -> tuple[float, np.ndarray]:
    """L2-regularized mean log-likelihood of the batch and its exact gradient
    (flat, ordered as emission weights then transition weights)."""
    if not batch:
        raise ValidationError("empty batch")
    grad_e = np.zeros_like(model.emission_weights)
    grad_t = np.zeros_like(model.transition_weights)
    total = 0.0
    for sentence in batch:
        tokens = sentence.texts
        feats = model.sparse_features(tokens)
        gold = _gold_indices(model, sentence.tags)
        total += _sentence_ll_grad(model, feats, gold, tokens, grad_e, grad_t)
    n = len(batch)
    grad = np.concatenate([grad_e.ravel(), grad_t.ravel()]) / n
    weights = model.get_weights()
    objective = total / n - 0.5 * model.l2_strength * float(weights @ weights)
    grad -= model.l2_strength * weights
    return objective, grad


# ---------------------------------------------------------------------------
# Decoding


def viterbi(model: CrfModel, tokens: Sequence[str]) -> list[str]:
    """Highest-scoring legal labeling; ties resolve to the earliest label."""
    if not tokens:
        raise ValidationError("empty token sequence")
    E = model.emissions(tokens)
    E[0] = np.where(model.label_set.start_mask(), E[0], NEG_INF)
    trans = np.where(model.label_set.transition_mask(), model.transition_weights, NEG_INF)
    T = len(tokens)
    delta = E[0]
    back: list[np.ndarray] = []
    for t in range(1, T):
        scores = delta[:, None] + trans
        back.append(np.argmax(scores, axis=0))  # first max: label-order ties
        delta = E[t] + np.max(scores, axis=0)
    best = int(np.argmax(delta))
    path = [best]
    for pointers in reversed(back):
        best = int(pointers[best])
        path.append(best)
    path.reverse()
    return [model.label_set.labels[i] for i in path]


def _span_constraint(model: CrfModel, n_tokens: int, span: EntitySpan) -> np.ndarray:
    labels = model.label_set
    if span.end > n_tokens:
        raise ValidationError(f"span {span} exceeds sentence length {n_tokens}")
    if span.label not in labels.entity_types:
        raise ValidationError(f"label {span.label!r} not among model entity types")
    index = labels.index
    b_idx = index[f"B-{span.label}"]
    i_idx = index.get(f"I-{span.label}")
    allowed = np.ones((n_tokens, len(labels)), dtype=bool)
    allowed[span.start] = False
    allowed[span.start, b_idx] = True
    for t in range(span.start + 1, span.end):
        allowed[t] = False
        if i_idx is not None:
            allowed[t, i_idx] = True
    if span.end < n_tokens and i_idx is not None:
        allowed[span.end, i_idx] = False
    return allowed


def constrained_log_partition(
    model: CrfModel, tokens: Sequence[str], span: EntitySpan
) -> float:
    """log-sum over labelings that realize exactly the given entity span:
    B-X at start, I-X through end-1, and no I-X continuation at end."""
    allowed = _span_constraint(model, len(tokens), span)
    return build_lattice(model, tokens, allowed=allowed).log_partition


def entity_confidence(model: CrfModel, tokens: Sequence[str], span: EntitySpan) -> float:
    """Posterior probability mass of the exact span, in [0, 1]."""
    constrained = constrained_log_partition(model, tokens, span)
    if constrained == NEG_INF:
        return 0.0
    ratio = float(np.exp(constrained - log_partition(model, tokens)))
    return min(max(ratio, 0.0), 1.0)


@dataclass(frozen=True)
class EntityPrediction:
    span: EntitySpan
    confidence: float | None = None

    @property
    def label(self) -> str:
        return self.span.label


def decode_with_confidence(model: CrfModel, tokens: Sequence[str]) -> list[EntityPrediction]:
    """Viterbi tags -> entity spans, each with its constrained-FB confidence."""
    tags = viterbi(model, tokens)
    return [
        EntityPrediction(span, entity_confidence(model, tokens, span))
        for span in spans_from_tags(tags)
    ]


# ---------------------------------------------------------------------------
# Training


@dataclass(frozen=True)
class TrainConfig:
    feature_config: FeatureConfig = FeatureConfig()
    labels: tuple[str, ...] | None = None  # derived from the corpus when None
    epochs: int = 100
    learning_rate: float = 0.5
    l2_strength: float = 1e-3
    seed: int = 0
    holdout_fraction: float = 0.1
    patience: int = 10


def labels_for_corpus(corpus: Iterable[ConllSentence]) -> tuple[str, ...]:
    """O first, then the corpus tag inventory sorted; B-PER always included."""
    seen = {tag for sentence in corpus for tag in normalize_iob2(sentence.tags)}
    seen.discard("O")
    seen.add("B-PER")
    return ("O", *sorted(seen))


def train(config: TrainConfig, corpus: Sequence[ConllSentence]) -> CrfModel:
    """Full-batch adaptive gradient ascent on the regularized likelihood.

    Deterministic for a fixed config: the seed only drives the held-out
    split. Early stopping watches the held-out (unregularized) mean
    log-likelihood with the configured patience and restores the best
    weights. The per-epoch log is kept on the returned model.
    """
    if not corpus:
        raise ValidationError("empty training corpus")
    labels = config.labels or labels_for_corpus(corpus)
    label_set = LabelSet(labels=tuple(labels))

    feature_index: dict[str, int] = {}
    store = config.feature_config.embeddings
    if store is not None:
        for i in range(store.dimension):
            feature_index[f"emb[{i}]"] = len(feature_index)
    sentences: list[tuple[list[str], list[list[tuple[str, float]]], list[str]]] = []
    for sentence in corpus:
        tokens = sentence.texts
        per_pos = [featurize(tokens, p, config.feature_config) for p in range(len(tokens))]
        for feats in per_pos:
            for name, _ in feats:
                if name not in feature_index:
                    feature_index[name] = len(feature_index)
        sentences.append((tokens, per_pos, sentence.tags))

    model = CrfModel(
        label_set=label_set,
        feature_config=config.feature_config,
        feature_index=feature_index,
        emission_weights=np.zeros((len(feature_index), len(label_set))),
        transition_weights=np.zeros((len(label_set), len(label_set))),
        l2_strength=config.l2_strength,
    )
    cached = [
        (
            tokens,
            [
                (
                    np.array([feature_index[n] for n, _ in feats], dtype=np.intp),
                    np.array([v for _, v in feats], dtype=np.float64),
                )
                for feats in per_pos
            ],
            _gold_indices(model, tags),
        )
        for tokens, per_pos, tags in sentences
    ]

    order = list(range(len(cached)))
    random.Random(config.seed).shuffle(order)
    n_held = int(round(len(cached) * config.holdout_fraction))
    if len(cached) - n_held < 1:
        n_held = 0
    held = [cached[i] for i in order[:n_held]]
    fit = [cached[i] for i in order[n_held:]]

    def objective(batch) -> tuple[float, np.ndarray, np.ndarray]:
        grad_e = np.zeros_like(model.emission_weights)
        grad_t = np.zeros_like(model.transition_weights)
        total = 0.0
        for tokens, feats, gold in batch:
            total += _sentence_ll_grad(model, feats, gold, tokens, grad_e, grad_t)
        n = len(batch)
        return total / n, grad_e / n, grad_t / n

    def holdout_ll() -> float | None:
        if not held:
            return None
        total = 0.0
        for tokens, feats, gold in held:
            lattice = build_lattice(model, tokens)
            path = float(lattice.emissions[0, gold[0]])
            for t in range(1, len(tokens)):
                path += float(
                    lattice.transitions[gold[t - 1], gold[t]] + lattice.emissions[t, gold[t]]
                )
            total += path - lattice.log_partition
        return total / len(held)

    accum_e = np.zeros_like(model.emission_weights)
    accum_t = np.zeros_like(model.transition_weights)
    best_score = -np.inf
    best_weights = model.get_weights()
    stale = 0
    log: list[tuple[int, float, float | None]] = []
    for epoch in range(config.epochs):
        ll, grad_e, grad_t = objective(fit)
        obj = ll - 0.5 * config.l2_strength * float(model.get_weights() @ model.get_weights())
        grad_e -= config.l2_strength * model.emission_weights
        grad_t -= config.l2_strength * model.transition_weights
        accum_e += grad_e**2
        accum_t += grad_t**2
        model.emission_weights = model.emission_weights + config.learning_rate * grad_e / (
            np.sqrt(accum_e) + 1e-8
        )
        model.transition_weights = model.transition_weights + config.learning_rate * grad_t / (
            np.sqrt(accum_t) + 1e-8
        )
        held_ll = holdout_ll()
        log.append((epoch, obj, held_ll))
        score = held_ll if held_ll is not None else obj
        if score > best_score:
            best_score = score
            best_weights = model.get_weights()
            stale = 0
        else:
            stale += 1
            if held and stale >= config.patience:
                break
    model.set_weights(best_weights)
    model.training_log = tuple(log)
    return model


# ---------------------------------------------------------------------------
# Persistence

MODEL_FORMAT_VERSION = 1


def _encode_array(a: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(a, dtype="<f8").tobytes()).decode("ascii")


def _decode_array(s: str, shape: tuple[int, ...]) -> np.ndarray:
    return np.frombuffer(base64.b64decode(s), dtype="<f8").reshape(shape).copy()


def save_model(model: CrfModel, path: str | Path) -> None:
    """Versioned JSON container; weights are raw little-endian float64 bytes,
    so a reloaded model reproduces decoding decisions bit-exactly."""
    cfg = model.feature_config
    payload = {
        "format_version": MODEL_FORMAT_VERSION,
        "labels": list(model.label_set.labels),
        "l2_strength": model.l2_strength,
        "feature_config": {
            "window": list(cfg.window),
            "use_lexical": cfg.use_lexical,
            "embedding_dimension": cfg.embeddings.dimension if cfg.embeddings else None,
            "embeddings_path": cfg.embeddings_path,
        },
        "feature_index": model.feature_index,
        "emission_shape": list(model.emission_weights.shape),
        "emission_weights": _encode_array(model.emission_weights),
        "transition_weights": _encode_array(model.transition_weights),
        "training_log": [list(row) for row in model.training_log],
    }
    Path(path).write_text(
        json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n", encoding="utf-8"
    )


def load_model(path: str | Path, embeddings: EmbeddingStore | None = None) -> CrfModel:
    """Reload a model; embedding-featured models need their store back,
    either passed in or found at the recorded vectors path."""
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("format_version") != MODEL_FORMAT_VERSION:
        raise ValidationError(f"unsupported model format: {payload.get('format_version')}")
    cfg = payload["feature_config"]
    store = embeddings
    if cfg["embedding_dimension"] is not None:
        if store is None and cfg["embeddings_path"]:
            vec_path = Path(cfg["embeddings_path"])
            if vec_path.exists():
                with vec_path.open(encoding="utf-8") as fh:
                    store = load_text_vectors(fh)
        if store is None:
            raise ValidationError(
                "model uses embedding features; supply the embedding store"
            )
        if store.dimension != cfg["embedding_dimension"]:
            raise ValidationError(
                f"embedding dimension {store.dimension} != model's {cfg['embedding_dimension']}"
            )
    feature_config = FeatureConfig(
        window=tuple(cfg["window"]),
        use_lexical=cfg["use_lexical"],
        embeddings=store,
        embeddings_path=cfg["embeddings_path"],
    )
    n_lab = len(payload["labels"])
    shape = tuple(payload["emission_shape"])
    return CrfModel(
        label_set=LabelSet(labels=tuple(payload["labels"])),
        feature_config=feature_config,
        feature_index={k: int(v) for k, v in payload["feature_index"].items()},
        emission_weights=_decode_array(payload["emission_weights"], shape),
        transition_weights=_decode_array(payload["transition_weights"], (n_lab, n_lab)),
        l2_strength=payload["l2_strength"],
        training_log=tuple(
            (int(e), float(o), None if h is None else float(h))
            for e, o, h in payload["training_log"]
        ),
    )
