"""Command-line pipeline: generate -> train -> tag -> audit -> report.

Reports are machine-readable: JSON for programs, CSV for tables, and plain
text point files for ECDF curves; no plotting happens in-process. Every
number in a report can be recomputed from the per-fill outcomes.jsonl file
written alongside it, and re-running a command with identical inputs and
seed produces byte-identical files.

Exit codes: 0 success, 1 validation error, 2 backend/protocol error,
3 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import queue
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Sequence

from .backends import Backend, TagResponse, open_backend
from .conll import parse_conll
from .crf import FeatureConfig, TrainConfig, train
from .crf import save_model
from .embeddings import EmbeddingStore, load_text_vectors, oov_report
from .errors import BackendError, ProtocolError, ValidationError
from .metrics import (
    FillOutcome,
    NameAudit,
    Weighting,
    below_baseline_fraction,
    category_accuracy,
    confidence_stats,
    ecdf,
    name_audits,
    range_table,
    score_sentence,
)
from .names import DemographicCategory, NameRegistry, builtin_registry, load_registry
from .templates import (
    CaseVariant,
    Dataset,
    GeneratedSentence,
    expand,
    load_templates,
    lowercase_variant,
    read_generated_corpus,
    synthesize_insitu,
    write_generated_corpus,
)

SCHEMA_VERSION = 1


# ---------------------------------------------------------------------------
# shared helpers


def _load_registry(path: str | None) -> NameRegistry:
    if path is None:
        return builtin_registry()
    with open(path, encoding="utf-8") as fh:
        return load_registry(fh)


def _variants(mode: str) -> list[CaseVariant]:
    return {
        "off": [CaseVariant.ORIGINAL],
        "on": [CaseVariant.LOWER],
        "both": [CaseVariant.ORIGINAL, CaseVariant.LOWER],
    }[mode]


def _corpus_files(out_dir: Path, variant: CaseVariant) -> tuple[Path, Path]:
    suffix = "" if variant is CaseVariant.ORIGINAL else "_lower"
    return out_dir / f"corpus{suffix}.conll", out_dir / f"provenance{suffix}.jsonl"


def _dump_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _open_backend_from_args(args) -> Backend:
    store: EmbeddingStore | None = None
    if getattr(args, "embeddings", None):
        with open(args.embeddings, encoding="utf-8") as fh:
            store = load_text_vectors(fh)
    return open_backend(
        args.backend,
        embeddings=store,
        batch_size=args.batch_size,
        timeout=args.timeout,
    )


def _tag_all(
    factory: Callable[[], Backend],
    first: Backend,
    sentences: list[list[str]],
    workers: int,
    batch_size: int,
) -> list[TagResponse]:
    """Tag with bounded fan-out; each worker owns one backend connection and
    results come back in input order regardless of scheduling."""
    if workers <= 1 or len(sentences) <= batch_size:
        return first.tag_batch(sentences)
    pool: queue.SimpleQueue[Backend] = queue.SimpleQueue()
    pool.put(first)
    extras = [factory() for _ in range(workers - 1)]
    for b in extras:
        pool.put(b)
    chunks = [sentences[i : i + batch_size] for i in range(0, len(sentences), batch_size)]

    def work(chunk: list[list[str]]) -> list[TagResponse]:
        backend = pool.get()
        try:
            return backend.tag_batch(chunk)
        finally:
            pool.put(backend)

    try:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            results = list(executor.map(work, chunks))
    finally:
        for b in extras:
            b.close()
    return [r for rs in results for r in rs]


# ---------------------------------------------------------------------------
# generate


def cmd_generate(args) -> int:
    registry = _load_registry(args.registry)
    names = registry.all_names()
    if bool(args.templates) == bool(args.conll):
        raise ValidationError("give exactly one of --templates (expansion) or --conll (in-situ)")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    def stream():
        if args.templates:
            templates = load_templates(
                Path(args.templates).read_text(encoding="utf-8"),
                builtin_rules=not args.free_templates,
            )
            return expand(templates, names, sample_size=args.sample, seed=args.seed)
        if args.sample is not None:
            raise ValidationError("--sample applies to template expansion only")
        corpus = parse_conll(Path(args.conll).read_text(encoding="utf-8"))
        return synthesize_insitu(corpus, names)

    for variant in _variants(args.lowercase):
        sentences = stream()
        if variant is CaseVariant.LOWER:
            sentences = lowercase_variant(sentences)
        conll_path, prov_path = _corpus_files(out_dir, variant)
        with conll_path.open("w", encoding="utf-8") as fc, prov_path.open(
            "w", encoding="utf-8"
        ) as fp:
            count = write_generated_corpus(sentences, fc, fp)
        print(f"{variant.value}: {count} sentences -> {conll_path}")
    return 0


# ---------------------------------------------------------------------------
# train


def cmd_train(args) -> int:
    corpus = parse_conll(Path(args.conll).read_text(encoding="utf-8"))
    store: EmbeddingStore | None = None
    if args.embeddings:
        with open(args.embeddings, encoding="utf-8") as fh:
            store = load_text_vectors(fh)
    feature_config = FeatureConfig(
        embeddings=store,
        embeddings_path=str(args.embeddings) if args.embeddings else None,
    )
    config = TrainConfig(
        feature_config=feature_config,
        epochs=args.epochs,
        learning_rate=args.learning_rate,
        l2_strength=args.l2,
        seed=args.seed,
        holdout_fraction=args.holdout,
    )
    model = train(config, corpus)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    model_path = out_dir / "model.json"
    save_model(model, model_path)
    log_lines = ["epoch\ttrain_objective\theldout_ll"]
    for epoch, objective, held in model.training_log:
        log_lines.append(f"{epoch}\t{objective!r}\t{'' if held is None else repr(held)}")
    (out_dir / "training_log.tsv").write_text("\n".join(log_lines) + "\n", encoding="utf-8")
    final = model.training_log[-1][1]
    print(f"trained on {len(corpus)} sentences, final objective {final:.6f}")
    print(f"model -> {model_path}")
    if store is not None:
        registry = _load_registry(args.registry)
        missing = oov_report(store, registry)
        print(f"OOV registry names ({len(missing)}):")
        for surface, category in missing:
            print(f"  {surface} ({category})")
    return 0


# ---------------------------------------------------------------------------
# tag


def cmd_tag(args) -> int:
    corpus = parse_conll(Path(args.conll).read_text(encoding="utf-8"))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    with _open_backend_from_args(args) as backend:
        backend.handshake()
        sentences = [s.texts for s in corpus]
        responses = _tag_all(
            lambda: _open_backend_from_args(args), backend, sentences, args.workers, args.batch_size
        )
    lines = []
    for sentence, response in zip(corpus, responses):
        for token, tag in zip(sentence.tokens, response.tags):
            lines.append(f"{token.text} {tag}")
        lines.append("")
    (out_dir / "predictions.conll").write_text("\n".join(lines) + "\n", encoding="utf-8")
    with (out_dir / "predictions.jsonl").open("w", encoding="utf-8") as fh:
        for response in responses:
            row = {"id": response.id, "tags": list(response.tags)}
            if response.confidences is not None:
                row["confidences"] = list(response.confidences)
            fh.write(json.dumps(row, sort_keys=True, separators=(",", ":")) + "\n")
    print(f"tagged {len(responses)} sentences -> {out_dir / 'predictions.conll'}")
    return 0


# ---------------------------------------------------------------------------
# audit


def _load_variant_corpus(
    corpus_dir: Path, variant: CaseVariant, base_cache: dict
) -> list[GeneratedSentence]:
    conll_path, prov_path = _corpus_files(corpus_dir, variant)
    if conll_path.exists():
        with prov_path.open(encoding="utf-8") as fp:
            return read_generated_corpus(
                conll_path.read_text(encoding="utf-8"), list(fp)
            )
    if variant is CaseVariant.LOWER:
        if "base" not in base_cache:
            base_cache["base"] = _load_variant_corpus(corpus_dir, CaseVariant.ORIGINAL, base_cache)
        return list(lowercase_variant(base_cache["base"]))
    raise ValidationError(f"missing corpus file {conll_path}")


def _slice_payload(
    dataset: Dataset,
    variant: CaseVariant,
    audits: list[NameAudit],
    weighting: Weighting,
    has_confidence: bool,
    outcomes: list[FillOutcome],
) -> dict | None:
    slice_audits = [a for a in audits if a.dataset is dataset and a.case_variant is variant]
    if not slice_audits:
        return None
    demographic = [a for a in slice_audits if a.category is not DemographicCategory.OOV_BASELINE]
    oov = next(
        (a for a in slice_audits if a.category is DemographicCategory.OOV_BASELINE), None
    )
    categories = category_accuracy(slice_audits, weighting)
    oov_accuracy = oov.accuracy if oov is not None else None
    category_rows = []
    for cat in categories:
        category_rows.append(
            {
                "category": cat.category.value,
                "n_names": cat.n_names,
                "n_instances": cat.n_total,
                "accuracy": cat.accuracy,
                "below_baseline_fraction": (
                    None if oov_accuracy is None else below_baseline_fraction(cat, oov_accuracy)
                ),
            }
        )
    payload: dict = {
        "dataset": dataset.value,
        "case_variant": variant.value,
        "categories": category_rows,
        "oov_baseline": (
            None
            if oov is None
            else {"surface": oov.surface, "accuracy": oov.accuracy, "n_instances": oov.n_total}
        ),
        "overall_accuracy": (
            sum(a.n_person for a in demographic) / sum(a.n_total for a in demographic)
            if demographic
            else None
        ),
        "accuracy_range": (
            vars(range_table([a.accuracy for a in demographic])) if demographic else None
        ),
        "ecdf": {
            cat.category.value: [list(p) for p in ecdf([a.accuracy for a in cat.per_name]).points]
            for cat in categories
        },
        "name_audits": [
            {
                "surface": a.surface,
                "category": a.category.value,
                "n_total": a.n_total,
                "n_person": a.n_person,
                "accuracy": a.accuracy,
                "label_distribution": a.label_distribution,
                "n_per_overlap": a.n_per_overlap,
            }
            for a in slice_audits
        ],
        "confidence_stats": None,
        "confidence_skipped": None,
        "median_confidence_range": None,
    }
    if has_confidence:
        slice_outcomes = [
            o for o in outcomes if o.dataset is dataset and o.case_variant is variant
        ]
        stats, skipped = confidence_stats(slice_outcomes)
        payload["confidence_stats"] = [
            {
                "surface": s.surface,
                "count": s.count,
                "min": s.min,
                "mean": s.mean,
                "median": s.median,
                "std": s.std,
                "p25": s.p25,
            }
            for s in stats
        ]
        payload["confidence_skipped"] = [key[0] for key in skipped]
        oov_surface = oov.surface if oov is not None else None
        medians = [s.median for s in stats if s.surface != oov_surface]
        payload["median_confidence_range"] = vars(range_table(medians)) if medians else None
    return payload


def cmd_audit(args) -> int:
    registry = _load_registry(args.registry)
    weighting = Weighting(args.weighting)
    corpus_dir = Path(args.corpus)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    base_cache: dict = {}
    variant_corpora = [
        (variant, _load_variant_corpus(corpus_dir, variant, base_cache))
        for variant in _variants(args.lowercase)
    ]

    backend = _open_backend_from_args(args)
    digest = hashlib.sha256()
    outcomes: list[FillOutcome] = []
    outcome_rows: list[dict] = []
    try:
        capabilities = backend.handshake()
        for variant, sentences in variant_corpora:
            for sentence in sentences:
                digest.update(" ".join(sentence.tokens).encode("utf-8"))
                digest.update(b"\n")
            responses = _tag_all(
                lambda: _open_backend_from_args(args),
                backend,
                [list(s.tokens) for s in sentences],
                args.workers,
                args.batch_size,
            )
            for index, (sentence, response) in enumerate(zip(sentences, responses)):
                for outcome in score_sentence(response, sentence):
                    outcomes.append(outcome)
                    outcome_rows.append(
                        {
                            "sentence_index": index,
                            "dataset": outcome.dataset.value,
                            "case_variant": outcome.case_variant.value,
                            "surface": outcome.surface,
                            "category": outcome.category.value,
                            "outcome": outcome.outcome,
                            "per_overlap": outcome.per_overlap,
                            "confidence": outcome.confidence,
                        }
                    )
    finally:
        backend.close()

    audits = name_audits(outcomes)
    slices = []
    for dataset in Dataset:
        for variant in CaseVariant:
            payload = _slice_payload(
                dataset, variant, audits, weighting, capabilities.has_confidence, outcomes
            )
            if payload is not None:
                slices.append(payload)

    report = {
        "schema_version": SCHEMA_VERSION,
        "metadata": {
            "backend": str(args.backend),
            "has_confidence": capabilities.has_confidence,
            "registry_digest": registry.digest(),
            "corpus_digest": digest.hexdigest(),
            "seed": args.seed,
            "weighting": weighting.value,
            "case_variants": [v.value for v, _ in variant_corpora],
        },
        "slices": slices,
    }
    (out_dir / "report.json").write_text(_dump_json(report), encoding="utf-8")

    with (out_dir / "outcomes.jsonl").open("w", encoding="utf-8") as fh:
        for row in outcome_rows:
            fh.write(json.dumps(row, sort_keys=True, separators=(",", ":")) + "\n")

    category_rows = []
    for s in slices:
        for row in s["categories"]:
            category_rows.append(
                [
                    s["dataset"],
                    s["case_variant"],
                    row["category"],
                    row["n_names"],
                    row["n_instances"],
                    repr(row["accuracy"]),
                    "" if row["below_baseline_fraction"] is None else repr(row["below_baseline_fraction"]),
                ]
            )
        if s["oov_baseline"] is not None:
            category_rows.append(
                [
                    s["dataset"],
                    s["case_variant"],
                    "OOV",
                    1,
                    s["oov_baseline"]["n_instances"],
                    repr(s["oov_baseline"]["accuracy"]),
                    "",
                ]
            )
    _write_csv(
        out_dir / "category_table.csv",
        ["dataset", "case_variant", "category", "n_names", "n_instances", "accuracy", "below_baseline_fraction"],
        category_rows,
    )

    range_rows = []
    for s in slices:
        for stat_name, summary in (
            ("accuracy", s["accuracy_range"]),
            ("median_confidence", s["median_confidence_range"]),
        ):
            if summary is not None:
                range_rows.append(
                    [s["dataset"], s["case_variant"], stat_name]
                    + [repr(summary[k]) for k in ("min", "mean", "std", "median")]
                )
    _write_csv(
        out_dir / "range_table.csv",
        ["dataset", "case_variant", "statistic", "min", "mean", "std", "median"],
        range_rows,
    )

    audit_rows = [
        [
            a.dataset.value,
            a.case_variant.value,
            a.category.value,
            a.surface,
            a.n_total,
            a.n_person,
            repr(a.accuracy),
            *[repr(a.label_distribution[k]) for k in ("PER", "LOC", "ORG", "MISC", "OTHER", "NONE")],
            a.n_per_overlap,
        ]
        for a in audits
    ]
    _write_csv(
        out_dir / "name_audits.csv",
        ["dataset", "case_variant", "category", "surface", "n_total", "n_person", "accuracy",
         "p_per", "p_loc", "p_org", "p_misc", "p_other", "p_none", "n_per_overlap"],
        audit_rows,
    )

    if capabilities.has_confidence:
        stat_rows = []
        for s in slices:
            for row in s["confidence_stats"] or []:
                stat_rows.append(
                    [s["dataset"], s["case_variant"], row["surface"], row["count"]]
                    + [repr(row[k]) for k in ("min", "mean", "median", "std", "p25")]
                )
        _write_csv(
            out_dir / "confidence_stats.csv",
            ["dataset", "case_variant", "surface", "count", "min", "mean", "median", "std", "p25"],
            stat_rows,
        )

    ecdf_dir = out_dir / "ecdf"
    ecdf_dir.mkdir(exist_ok=True)
    for s in slices:
        for category, points in s["ecdf"].items():
            path = ecdf_dir / f"{s['dataset']}_{s['case_variant']}_{category}.txt"
            path.write_text(
                "".join(f"{x!r} {f!r}\n" for x, f in points), encoding="utf-8"
            )

    for s in slices:
        overall = s["overall_accuracy"]
        shown = "n/a" if overall is None else f"{overall:.4f}"
        print(f"[{s['dataset']} {s['case_variant']}] overall accuracy: {shown}")
        for row in s["categories"]:
            print(f"  {row['category']}: {row['accuracy']:.4f}  (n={row['n_instances']})")
        if s["oov_baseline"] is not None:
            print(f"  OOV: {s['oov_baseline']['accuracy']:.4f}")
    print(f"report -> {out_dir / 'report.json'}")
    return 0


# ---------------------------------------------------------------------------
# report (merge / compare)


def cmd_report(args) -> int:
    loaded = []
    for path_str in args.reports:
        path = Path(path_str)
        loaded.append((path, json.loads(path.read_text(encoding="utf-8"))))
    digests = {rep["metadata"]["registry_digest"] for _, rep in loaded}
    if len(digests) != 1:
        raise ValidationError("reports were built from different registries")
    if args.labels:
        labels = [x.strip() for x in args.labels.split(",")]
        if len(labels) != len(loaded):
            raise ValidationError(f"{len(labels)} labels for {len(loaded)} reports")
    else:
        labels = []
        for path, _ in loaded:
            base = path.parent.name if path.name == "report.json" else path.stem
            label = base
            n = 2
            while label in labels:
                label = f"{base}#{n}"
                n += 1
            labels.append(label)

    table: dict[tuple[str, str, str], dict[str, float]] = {}
    for label, (_, rep) in zip(labels, loaded):
        for s in rep["slices"]:
            for row in s["categories"]:
                key = (s["dataset"], s["case_variant"], row["category"])
                table.setdefault(key, {})[label] = row["accuracy"]
            if s.get("oov_baseline"):
                key = (s["dataset"], s["case_variant"], "OOV")
                table.setdefault(key, {})[label] = s["oov_baseline"]["accuracy"]

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    merged_rows = []
    for key in sorted(table):
        values = table[key]
        present = {k: v for k, v in values.items() if v is not None}
        best = max(present.values()) if present else None
        worst = min(present.values()) if present else None
        best_models = sorted(k for k, v in present.items() if v == best)
        worst_models = sorted(k for k, v in present.items() if v == worst)
        rows.append(
            list(key)
            + ["" if label not in values else repr(values[label]) for label in labels]
            + ["|".join(best_models), "|".join(worst_models)]
        )
        merged_rows.append(
            {
                "dataset": key[0],
                "case_variant": key[1],
                "category": key[2],
                "accuracy": values,
                "best": best_models,
                "worst": worst_models,
            }
        )
    _write_csv(
        out_dir / "comparison.csv",
        ["dataset", "case_variant", "category", *labels, "best", "worst"],
        rows,
    )
    merged = {
        "schema_version": SCHEMA_VERSION,
        "registry_digest": next(iter(digests)),
        "models": labels,
        "rows": merged_rows,
    }
    (out_dir / "merged.json").write_text(_dump_json(merged), encoding="utf-8")
    for row in rows:
        print(",".join(str(c) for c in row))
    print(f"comparison -> {out_dir / 'comparison.csv'}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--registry", help="registry file (surface,category per line); builtin when omitted")
    p.add_argument("--seed", type=int, default=None, help="seed for sampled generation")
    p.add_argument("--out", required=True, help="output directory")


def _add_backend(p: argparse.ArgumentParser) -> None:
    p.add_argument("--backend", required=True,
                   help="builtin:<model.json> | proc:<command> | tcp:<host:port>")
    p.add_argument("--embeddings", help="text-format word vectors for builtin models")
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--timeout", type=float, default=30.0)
    p.add_argument("--workers", type=int, default=1, help="parallel tagging connections")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ner-audit",
        description="Synthesize controlled NER corpora and audit per-demographic recognition.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="expand templates or substitute names in-situ")
    _add_common(p)
    p.add_argument("--templates", help="template file ({k} slots, one per line)")
    p.add_argument("--conll", help="CoNLL corpus for in-situ substitution")
    p.add_argument("--sample", type=int, default=None, help="sample size (needs --seed)")
    p.add_argument("--lowercase", choices=["off", "on", "both"], default="off")
    p.add_argument("--free-templates", action="store_true",
                   help="skip the curated-set template constraints (3+ slots, no 'the' before slots)")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train the built-in CRF on a CoNLL corpus")
    _add_common(p)
    p.add_argument("--conll", required=True, help="CoNLL training corpus")
    p.add_argument("--embeddings", help="text-format word vectors")
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--learning-rate", type=float, default=0.5)
    p.add_argument("--l2", type=float, default=1e-3)
    p.add_argument("--holdout", type=float, default=0.1)
    p.set_defaults(func=cmd_train, seed=0)

    p = sub.add_parser("tag", help="tag a CoNLL corpus with any backend")
    p.add_argument("--conll", required=True)
    p.add_argument("--out", required=True)
    _add_backend(p)
    p.set_defaults(func=cmd_tag)

    p = sub.add_parser("audit", help="tag a generated corpus and compute bias metrics")
    _add_common(p)
    p.add_argument("--corpus", required=True,
                   help="directory from `generate` (corpus.conll + provenance.jsonl)")
    p.add_argument("--lowercase", choices=["off", "on", "both"], default="off")
    p.add_argument("--weighting", choices=["uniform", "instance"], default="uniform")
    _add_backend(p)
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("report", help="merge audit reports into a model comparison")
    p.add_argument("reports", nargs="+", help="report.json files")
    p.add_argument("--labels", help="comma-separated model labels, one per report")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ProtocolError, BackendError) as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
