"""Command-line entry point orchestrating the pipeline.

Subcommands: build-index, count, ngram-stats, features, label,
train-eval, bootstrap, sparsity, and tree dump. Every run writes its
outputs plus a provenance JSON into a fresh directory named by the hash
of the resolved configuration, so identical invocations are idempotent.

Exit codes: 0 ok, 2 usage, 3 I/O, 4 data validation. Randomized
subcommands require an explicit --seed. OSTD_THREADS caps the number of
worker threads used for per-subset index builds.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

import ostd
from ostd import classifiers, features, labeling_eval, ngram_stats, suffix_index
from ostd.corpus import (
    Vocabulary,
    flatten_corpus,
    read_jsonl_documents,
    read_pretokenized,
)
from ostd.errors import IndexFileError, OstdError, ValidationError
from ostd.kernels import BACKEND

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_DATA = 4


def _config_hash(config: dict) -> str:
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:12]


def _prepare_run_dir(out_dir: str, config: dict) -> str:
    run_dir = os.path.join(out_dir, f"run-{_config_hash(config)}")
    os.makedirs(run_dir, exist_ok=True)
    return run_dir


def _write_provenance(run_dir: str, config: dict, extra: dict | None = None) -> None:
    payload = {
        "config": config,
        "config_hash": _config_hash(config),
        "versions": {
            "package": ostd.__version__,
            "index_format": suffix_index.INDEX_FORMAT_VERSION,
            "kernel_backend": BACKEND,
        },
        "rng_algorithm": labeling_eval.RNG_ALGORITHM,
        "threads": _thread_cap(),
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    if extra:
        payload.update(extra)
    with open(os.path.join(run_dir, "provenance.json"), "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True)


def _thread_cap() -> int:
    raw = os.environ.get("OSTD_THREADS")
    if raw is None:
        return 1
    try:
        cap = int(raw)
    except ValueError:
        raise ValidationError(f"OSTD_THREADS must be an integer, got {raw!r}") from None
    return max(1, cap)


def _write_json(path, payload) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True)


def _parse_int_list(raw: str) -> list[int]:
    try:
        return [int(part) for part in raw.split(",") if part.strip()]
    except ValueError:
        raise ValidationError(f"expected a comma-separated integer list, got {raw!r}") from None


# ---------------------------------------------------------------------------
# Shared loading helpers
# ---------------------------------------------------------------------------


def _load_indexes_and_vocab(manifest_path: str, frozen_vocab: bool = False):
    indexes = suffix_index.load_manifest_indexes(manifest_path)
    vocab_path = suffix_index.manifest_vocab_path(manifest_path)
    vocab = Vocabulary.load(vocab_path, frozen=frozen_vocab)
    return indexes, vocab


def _feature_config(stopword_filter: str) -> features.FeatureConfig:
    cfg = features.FeatureConfig()
    if stopword_filter == "prompt":
        cfg.prompt_raw_filter = ngram_stats.StopwordFilterConfig(mode=ngram_stats.MODE_RAW_FRAC)
        cfg.prompt_ng_filter = ngram_stats.StopwordFilterConfig(mode=ngram_stats.MODE_FINAL_TOKEN)
    return cfg


def _label_record(record, criterion: str):
    if criterion == labeling_eval.CRITERION_EM:
        return labeling_eval.exact_match_label(record.generation, record.references), None
    if criterion == labeling_eval.CRITERION_ROUGE_L:
        score = labeling_eval.rouge_l_best(record.generation, record.references)
        label = labeling_eval.HALLUCINATED if score < labeling_eval.ROUGE_L_THRESHOLD else labeling_eval.FAITHFUL
        return label, score
    raise ValidationError(f"unknown criterion {criterion!r}")


def _labeled_feature_records(dataset_path, manifest_path, criterion, stopword_filter):
    indexes, vocab = _load_indexes_and_vocab(manifest_path)
    records = features.read_dataset_jsonl(dataset_path, tokenizer=vocab)
    cfg = _feature_config(stopword_filter)
    labeled = []
    for record in records:
        fv = features.assemble_features(record, indexes, cfg, tokenizer=vocab)
        label, _ = _label_record(record, criterion)
        labeled.append(
            labeling_eval.LabeledRecord(
                id=record.id,
                label=label,
                features=fv,
                generation_length=len(record.generation_tokens),
            )
        )
    return labeled


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_build_index(args) -> int:
    config = {
        "subcommand": "build-index",
        "input": args.input,
        "tokens_bin": args.tokens_bin,
        "doc_manifest": args.doc_manifest,
        "subset": args.subset,
        "vocab": args.vocab,
        "out_dir": args.out_dir,
    }
    run_dir = _prepare_run_dir(args.out_dir, config)

    vocab = Vocabulary.load(args.vocab) if args.vocab else Vocabulary()
    subset_docs: dict[str, list] = {}
    if args.input:
        for text, subset in read_jsonl_documents(args.input):
            if args.subset and subset != args.subset:
                continue
            subset_docs.setdefault(subset, []).append(vocab.encode(text))
    elif args.tokens_bin:
        if not args.subset:
            raise ValidationError("--subset is required with --tokens-bin")
        if not args.doc_manifest:
            raise ValidationError("--doc-manifest is required with --tokens-bin")
        subset_docs[args.subset] = read_pretokenized(args.tokens_bin, args.doc_manifest)
    else:
        raise ValidationError("build-index needs --input or --tokens-bin")
    if not subset_docs:
        raise ValidationError("no documents matched; nothing to index")

    vocab_file = os.path.join(run_dir, "vocab.json")
    vocab.save(vocab_file)

    def build_one(item):
        name, docs = item
        corpus = flatten_corpus(
            docs, eos_id=vocab.eos_id, subset_name=name, vocab_size=vocab.vocab_size
        )
        index = suffix_index.build_index(corpus)
        filename = f"{name}.idx"
        suffix_index.save_index(index, os.path.join(run_dir, filename))
        return name, filename, len(corpus)

    with ThreadPoolExecutor(max_workers=_thread_cap()) as pool:
        built = list(pool.map(build_one, sorted(subset_docs.items())))

    suffix_index.write_manifest(
        os.path.join(run_dir, "manifest.json"),
        subsets={name: filename for name, filename, _ in built},
        vocab_path="vocab.json",
    )
    _write_provenance(run_dir, config, {"subsets": {n: m for n, _, m in built}})
    print(f"run_dir: {run_dir}")
    for name, filename, m in built:
        print(f"indexed subset {name}: {m} tokens -> {filename}")
    print(f"manifest: {os.path.join(run_dir, 'manifest.json')}")
    return EXIT_OK


def cmd_count(args) -> int:
    config = {
        "subcommand": "count",
        "manifest": args.manifest,
        "pattern_text": args.pattern_text,
        "pattern_ids": args.pattern_ids,
        "out_dir": args.out_dir,
    }
    run_dir = _prepare_run_dir(args.out_dir, config)
    indexes, vocab = _load_indexes_and_vocab(args.manifest)
    if args.pattern_ids:
        pattern = _parse_int_list(args.pattern_ids)
    elif args.pattern_text is not None:
        pattern = vocab.encode(args.pattern_text)
    else:
        raise ValidationError("count needs --pattern-text or --pattern-ids")
    if not pattern:
        raise ValidationError("pattern tokenizes to an empty sequence")
    result = suffix_index.count_across_subsets(indexes, pattern)
    payload = {"pattern_ids": [int(t) for t in pattern], **result.to_dict()}
    _write_json(os.path.join(run_dir, "count.json"), payload)
    _write_provenance(run_dir, config)
    for name, c in result.per_subset.items():
        print(f"{name}\t{c}")
    print(f"total\t{result.total}")
    return EXIT_OK


def cmd_ngram_stats(args) -> int:
    config = {
        "subcommand": "ngram-stats",
        "manifest": args.manifest,
        "text": args.text,
        "n": args.n,
        "out_dir": args.out_dir,
    }
    run_dir = _prepare_run_dir(args.out_dir, config)
    indexes, vocab = _load_indexes_and_vocab(args.manifest)
    tokens = vocab.encode(args.text)
    subset_names = [idx.subset_name for idx in indexes]
    out_path = os.path.join(run_dir, "ngram_stats.csv")
    with open(out_path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["n", "gram_decoded", *subset_names, "total"])
        for n in _parse_int_list(args.n):
            for gram in ngram_stats.enumerate_ngrams(tokens, n):
                result = suffix_index.count_across_subsets(indexes, gram.tokens)
                writer.writerow(
                    [
                        n,
                        vocab.decode(gram.tokens),
                        *[result.per_subset[s] for s in subset_names],
                        result.total,
                    ]
                )
    _write_provenance(run_dir, config)
    print(f"wrote {out_path}")
    return EXIT_OK


def cmd_features(args) -> int:
    config = {
        "subcommand": "features",
        "manifest": args.manifest,
        "dataset": args.dataset,
        "stopword_filter": args.stopword_filter,
        "out_dir": args.out_dir,
    }
    run_dir = _prepare_run_dir(args.out_dir, config)
    indexes, vocab = _load_indexes_and_vocab(args.manifest)
    records = features.read_dataset_jsonl(args.dataset, tokenizer=vocab)
    cfg = _feature_config(args.stopword_filter)
    out_path = os.path.join(run_dir, "features.csv")
    flags: dict[str, list[str]] = {}
    with open(out_path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["id", *features.FEATURE_NAMES])
        for record in records:
            fv = features.assemble_features(record, indexes, cfg, tokenizer=vocab)
            writer.writerow([record.id, *[repr(v) for v in fv.as_row()]])
            if fv.undefined_flags:
                flags[record.id] = sorted(fv.undefined_flags)
    _write_json(os.path.join(run_dir, "undefined_flags.json"), flags)
    _write_provenance(run_dir, config)
    print(f"wrote {out_path} ({len(records)} records)")
    return EXIT_OK


def cmd_label(args) -> int:
    config = {
        "subcommand": "label",
        "dataset": args.dataset,
        "criterion": args.criterion,
        "out_dir": args.out_dir,
    }
    run_dir = _prepare_run_dir(args.out_dir, config)
    records = features.read_dataset_jsonl(args.dataset)
    out_path = os.path.join(run_dir, "labels.jsonl")
    with open(out_path, "w", encoding="utf-8") as f:
        for record in records:
            label, rouge = _label_record(record, args.criterion)
            f.write(
                json.dumps(
                    {
                        "id": record.id,
                        "label": labeling_eval.LABEL_NAMES[label],
                        "criterion": args.criterion,
                        "rouge_l": rouge,
                    }
                )
                + "\n"
            )
    _write_provenance(run_dir, config)
    print(f"wrote {out_path} ({len(records)} records)")
    return EXIT_OK


def cmd_train_eval(args) -> int:
    config = {
        "subcommand": "train-eval",
        "manifest": args.manifest,
        "dataset": args.dataset,
        "criterion": args.criterion,
        "features": args.features,
        "model": args.model,
        "depth": args.depth,
        "seeds": args.seeds,
        "seed": args.seed,
        "stopword_filter": args.stopword_filter,
        "out_dir": args.out_dir,
    }
    run_dir = _prepare_run_dir(args.out_dir, config)
    labeled = _labeled_feature_records(
        args.dataset, args.manifest, args.criterion, args.stopword_filter
    )
    feature_set = {"logprob": classifiers.FEATURE_SET_LOGPROB, "full": classifiers.FEATURE_SET_FULL}[
        args.features
    ]
    spec = classifiers.ModelSpec(kind=args.model, depth=args.depth)
    result = classifiers.run_protocol(
        labeled,
        feature_set=feature_set,
        model_spec=spec,
        seeds=args.seeds,
        master_seed=args.seed,
        criterion=args.criterion,
    )

    # Per-feature AUROC over all records plus ROC curve points, computed
    # on the full labeled set (plot-ready artifacts).
    matrix = features.feature_matrix([r.features for r in labeled])
    labels = np.array([r.label for r in labeled])
    report = labeling_eval.EvalReport()
    if len(np.unique(labels)) == 2:
        for i, name in enumerate(features.FEATURE_NAMES):
            report.per_feature_auroc[name] = labeling_eval.auroc(matrix[:, i], labels)
        curve = labeling_eval.roc_curve_points(matrix[:, features.FEATURE_NAMES.index("gen_logp")], labels)
        with open(os.path.join(run_dir, "roc_gen_logp.csv"), "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["threshold", "fpr", "tpr"])
            for thr, fpr, tpr in curve:
                writer.writerow([thr, fpr, tpr])
    report.accuracy_rows = [result.to_row()]

    with open(os.path.join(run_dir, "accuracy.csv"), "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["feature_set", "model", "depth", "mean_accuracy", "std_accuracy"])
        row = result.to_row()
        writer.writerow(
            [row["feature_set"], row["model"], row["depth"], row["mean_accuracy"], row["std_accuracy"]]
        )
    _write_json(os.path.join(run_dir, "report.json"), report.to_dict())
    _write_json(
        os.path.join(run_dir, "runs.json"),
        [
            {
                "seed_index": r.seed_index,
                "test_accuracy": r.test_accuracy,
                "train_accuracy": r.train_accuracy,
                "selected_features": r.selected_features,
            }
            for r in result.runs
        ],
    )
    _write_provenance(run_dir, config, {"seeds_used": [classifiers.hash_seed(args.seed, s) for s in range(args.seeds)]})
    print(
        f"{args.model} ({feature_set}): accuracy {result.mean_accuracy:.3f} "
        f"+/- {result.std_accuracy:.3f} over {args.seeds} seeds"
    )
    print(f"run_dir: {run_dir}")
    return EXIT_OK


def cmd_bootstrap(args) -> int:
    config = {
        "subcommand": "bootstrap",
        "manifest": args.manifest,
        "dataset": args.dataset,
        "criterion": args.criterion,
        "features": args.features,
        "runs": args.runs,
        "depth": args.depth,
        "seed": args.seed,
        "stopword_filter": args.stopword_filter,
        "out_dir": args.out_dir,
    }
    run_dir = _prepare_run_dir(args.out_dir, config)
    labeled = _labeled_feature_records(
        args.dataset, args.manifest, args.criterion, args.stopword_filter
    )
    feature_set = {"logprob": classifiers.FEATURE_SET_LOGPROB, "full": classifiers.FEATURE_SET_FULL}[
        args.features
    ]
    balanced = labeling_eval.balanced_split(labeled, seed=args.seed, criterion=args.criterion)
    train, test = labeling_eval.train_test_split(balanced, 0.8, seed=args.seed)
    X_train_full = features.feature_matrix([r.features for r in train.records])
    X_test_full = features.feature_matrix([r.features for r in test.records])
    y_train = train.labels()
    names = classifiers.select_feature_columns(X_train_full, y_train, feature_set)
    cols = [features.FEATURE_NAMES.index(n) for n in names]
    params = features.fit_standardizer(X_train_full[:, cols])
    X_train = features.apply_standardizer(params, X_train_full[:, cols])
    X_test = features.apply_standardizer(params, X_test_full[:, cols])
    consistent, agreement = classifiers.bootstrap_consistency(
        X_train, y_train, X_test, runs=args.runs, depth=args.depth, seed=args.seed
    )
    payload = {
        "consistency": consistent,
        "runs": args.runs,
        "depth": args.depth,
        "selected_features": names,
        "per_test_row_agreement": agreement.tolist(),
    }
    _write_json(os.path.join(run_dir, "bootstrap.json"), payload)
    _write_provenance(run_dir, config)
    print(f"prediction consistency: {consistent:.4f} ({args.runs} runs, depth {args.depth})")
    print(f"run_dir: {run_dir}")
    return EXIT_OK


def cmd_sparsity(args) -> int:
    config = {
        "subcommand": "sparsity",
        "manifest": args.manifest,
        "dataset": args.dataset,
        "n": args.n,
        "key_phrases": args.key_phrases,
        "out_dir": args.out_dir,
    }
    run_dir = _prepare_run_dir(args.out_dir, config)
    indexes, vocab = _load_indexes_and_vocab(args.manifest)
    records = features.read_dataset_jsonl(args.dataset, tokenizer=vocab)
    key_phrases = [r.key_phrases or [] for r in records] if args.key_phrases else None
    report = ngram_stats.sparsity_report(
        questions=[r.question_tokens for r in records],
        indexes=indexes,
        n_values=_parse_int_list(args.n),
        key_phrases=key_phrases,
        tokenizer=vocab,
        dataset=os.path.basename(args.dataset),
    )
    out_path = os.path.join(run_dir, "sparsity.json")
    _write_json(out_path, report.to_dict())
    _write_provenance(run_dir, config)
    for n, pct in sorted(report.percent_zero.items()):
        print(f"{n}-gram zero-occurrence: {pct:.2f}%")
    if report.keyphrase_percent_zero is not None:
        print(f"key phrases zero-occurrence: {report.keyphrase_percent_zero:.2f}%")
    print(f"wrote {out_path}")
    return EXIT_OK


def cmd_tree_dump(args) -> int:
    config = {
        "subcommand": "tree dump",
        "manifest": args.manifest,
        "dataset": args.dataset,
        "criterion": args.criterion,
        "features": args.features,
        "depth": args.depth,
        "seed": args.seed,
        "stopword_filter": args.stopword_filter,
        "out_dir": args.out_dir,
    }
    run_dir = _prepare_run_dir(args.out_dir, config)
    labeled = _labeled_feature_records(
        args.dataset, args.manifest, args.criterion, args.stopword_filter
    )
    feature_set = {"logprob": classifiers.FEATURE_SET_LOGPROB, "full": classifiers.FEATURE_SET_FULL}[
        args.features
    ]
    balanced = labeling_eval.balanced_split(labeled, seed=args.seed, criterion=args.criterion)
    train, _ = labeling_eval.train_test_split(balanced, 0.8, seed=args.seed)
    X_full = features.feature_matrix([r.features for r in train.records])
    y = train.labels()
    names = classifiers.select_feature_columns(X_full, y, feature_set)
    cols = [features.FEATURE_NAMES.index(n) for n in names]
    params = features.fit_standardizer(X_full[:, cols])
    X = features.apply_standardizer(params, X_full[:, cols])
    model = classifiers.fit_tree(X, y, args.depth)
    text = classifiers.dump_tree(model, feature_names=names)
    with open(os.path.join(run_dir, "tree.txt"), "w", encoding="utf-8") as f:
        f.write(text + "\n")
    _write_provenance(run_dir, config)
    print(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ostd",
        description="Suffix-array occurrence statistics and hallucination-feature pipeline",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add_common(p):
        p.add_argument("--out-dir", default="runs", help="base directory for run outputs")

    p = sub.add_parser("build-index", help="tokenize documents and build per-subset indexes")
    p.add_argument("--input", help="JSON-lines documents: {'text':..., 'subset':...}")
    p.add_argument("--tokens-bin", help="pre-tokenized binary token file")
    p.add_argument("--doc-manifest", help="JSON-lines document spans for --tokens-bin")
    p.add_argument("--subset", help="restrict to one subset name")
    p.add_argument("--vocab", help="existing vocabulary JSON to extend")
    add_common(p)
    p.set_defaults(func=cmd_build_index)

    p = sub.add_parser("count", help="count a token pattern across subsets")
    p.add_argument("--manifest", required=True)
    p.add_argument("--pattern-text", help="text to tokenize and count")
    p.add_argument("--pattern-ids", help="comma-separated token ids")
    add_common(p)
    p.set_defaults(func=cmd_count)

    p = sub.add_parser("ngram-stats", help="per-gram counts CSV for a text")
    p.add_argument("--manifest", required=True)
    p.add_argument("--text", required=True)
    p.add_argument("--n", default="3", help="comma-separated gram orders")
    add_common(p)
    p.set_defaults(func=cmd_ngram_stats)

    p = sub.add_parser("features", help="assemble the feature matrix for a dataset")
    p.add_argument("--manifest", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--stopword-filter", choices=["none", "prompt"], default="none")
    add_common(p)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("label", help="label generations by EM or ROUGE-L")
    p.add_argument("--dataset", required=True)
    p.add_argument("--criterion", choices=["em", "rougel"], required=True)
    add_common(p)
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("train-eval", help="run the seeded classifier protocol")
    p.add_argument("--manifest", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--criterion", choices=["em", "rougel"], required=True)
    p.add_argument("--features", choices=["logprob", "full"], required=True)
    p.add_argument("--model", choices=["threshold", "tree", "nn"], required=True)
    p.add_argument("--depth", type=int, default=3)
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--seed", type=int, required=True, help="master seed (no wall-clock default)")
    p.add_argument("--stopword-filter", choices=["none", "prompt"], default="none")
    add_common(p)
    p.set_defaults(func=cmd_train_eval)

    p = sub.add_parser("bootstrap", help="bootstrap prediction-consistency analysis")
    p.add_argument("--manifest", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--criterion", choices=["em", "rougel"], required=True)
    p.add_argument("--features", choices=["logprob", "full"], required=True)
    p.add_argument("--runs", type=int, default=200)
    p.add_argument("--depth", type=int, default=3)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--stopword-filter", choices=["none", "prompt"], default="none")
    add_common(p)
    p.set_defaults(func=cmd_bootstrap)

    p = sub.add_parser("sparsity", help="zero-occurrence n-gram report")
    p.add_argument("--manifest", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--n", default="1,2,3,4,5")
    p.add_argument("--key-phrases", action="store_true", help="include the key-phrase row")
    add_common(p)
    p.set_defaults(func=cmd_sparsity)

    p_tree = sub.add_parser("tree", help="decision-tree inspection")
    tree_sub = p_tree.add_subparsers(dest="tree_action", required=True)
    p = tree_sub.add_parser("dump", help="render a fitted tree as indented text")
    p.add_argument("--manifest", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--criterion", choices=["em", "rougel"], required=True)
    p.add_argument("--features", choices=["logprob", "full"], default="full")
    p.add_argument("--depth", type=int, default=3)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--stopword-filter", choices=["none", "prompt"], default="none")
    add_common(p)
    p.set_defaults(func=cmd_tree_dump)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (FileNotFoundError, PermissionError, IsADirectoryError) as exc:
        print(f"error: I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO
    except IndexFileError as exc:
        print(f"error: index file: {exc}", file=sys.stderr)
        return EXIT_IO
    except OstdError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"error: I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
