"""Harness for measuring demographic bias in named entity recognition.

Synthesizes controlled evaluation corpora from demographic name lists and
sentence templates, tags them with the built-in CRF or any external backend
speaking a JSON-lines protocol, and quantifies per-name and per-category
recognition accuracy and confidence.
"""

from .backends import (
    Backend,
    BackendDescriptor,
    BackendKind,
    BuiltinBackend,
    CallableBackend,
    Capabilities,
    ProbeReport,
    ProcessBackend,
    TagRequest,
    TagResponse,
    TcpBackend,
    open_backend,
    parse_backend,
    probe_backend,
)
from .conll import (
    ConllSentence,
    EntitySpan,
    NameFrequencyReport,
    Token,
    extract_entities,
    name_frequency,
    normalize_iob2,
    parse_conll,
    spans_from_tags,
    tags_from_spans,
    valid_iob2,
    write_conll,
)
from .crf import (
    CrfModel,
    EntityPrediction,
    FeatureConfig,
    LabelSet,
    Lattice,
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
from .embeddings import EmbeddingStore, LookupResult, load_text_vectors, lookup, oov_report
from .errors import BackendError, NerAuditError, ProtocolError, ValidationError
from .metrics import (
    CategoryAudit,
    ConfidenceStats,
    EcdfCurve,
    FillOutcome,
    NameAudit,
    OutcomeAggregator,
    RangeSummary,
    Weighting,
    below_baseline_fraction,
    category_accuracy,
    confidence_stats,
    ecdf,
    name_audits,
    range_table,
    score_sentence,
)
from .names import (
    DEMOGRAPHIC_CATEGORIES,
    DemographicCategory,
    NameEntry,
    NameRegistry,
    builtin_registry,
    category_rollup,
    deaccent,
    load_registry,
)
from .templates import (
    CaseVariant,
    Dataset,
    GeneratedSentence,
    Provenance,
    Template,
    expand,
    expansion_count,
    insitu_candidates,
    load_templates,
    lowercase_variant,
    read_generated_corpus,
    synthesize_insitu,
    to_conll_sentence,
    write_generated_corpus,
)

__version__ = "0.1.0"
