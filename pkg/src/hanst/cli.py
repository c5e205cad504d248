"""Command-line surface: prepare | train | evaluate | predict | stats | significance.

Artifacts live in one data directory chosen by --out, then the
HANST_DATA_DIR environment variable, then ./hanst-data. Every file is
written atomically (temp file + rename) and every failure exits 1 with a
single stderr line of the form ``error: <code>: <message>``.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys
import tempfile
import time

import numpy as np

from . import __version__
from . import models as md
from . import training as tr
from .corpus import RawDocument, load_corpus, split_corpus
from .errors import (AlignmentError, CheckpointMismatchError, ConfigurationError,
                     CorpusFormatError, DegenerateInputError, HanstError,
                     OutputExistsError, TrainingAbortedError)
from .evalstats import (CitationStats, PredictionRecord, accuracy, build_report,
                        corpus_citation_stats, histogram_csv_lines,
                        inverse_citation_score, load_predictions, mae,
                        mcnemar_exact, save_predictions, vote_aggregate,
                        wilcoxon_signed_rank)
from .textprep import (CharacterLimit, TaggedDocument, Vocabulary, apply_cutoff,
                       build_vocabulary, encode_document, inject_tags,
                       load_embeddings, tag_tokens, tokenize)

DATA_DIR_ENV = "HANST_DATA_DIR"
PREPARED_NAME = "prepared.jsonl"
VOCAB_NAME = "vocab.json"
MANIFEST_NAME = "manifest.json"
REPORT_NAME = "report.json"
HISTOGRAM_NAME = "citation-histogram.csv"
PREPARED_KIND = "hanst-prepared"
MANIFEST_KIND = "hanst-manifest"
FORMAT_VERSION = 1
PREDICT_BATCH = 32


# ---------------------------------------------------------------------------
# small helpers
# ---------------------------------------------------------------------------

def _atomic_write_text(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _atomic_via(path: str, write_fn) -> None:
    """Run a path-taking writer against a temp file, then rename over path."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    os.close(fd)
    try:
        write_fn(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def file_sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def data_dir_from(args: argparse.Namespace) -> str:
    directory = args.out or os.environ.get(DATA_DIR_ENV) or "hanst-data"
    os.makedirs(directory, exist_ok=True)
    return directory


def _one_line(message: str) -> str:
    return " ".join(message.split())


# ---------------------------------------------------------------------------
# experiment configuration files
# ---------------------------------------------------------------------------

_CONFIG_KEYS = {"task", "model_kind", "tagset", "embedding_dim", "bilstm_hidden",
                "dropout_p", "epochs", "batch_size", "lr", "loss", "resample",
                "seeds", "max_chars", "vocab_size", "embeddings"}
_MODEL_OVERRIDES = ("embedding_dim", "bilstm_hidden", "dropout_p")
_TRAIN_OVERRIDES = ("epochs", "batch_size", "lr", "loss", "resample", "max_chars")


def load_config_file(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigurationError(f"{path}: config must be a JSON object")
    unknown = sorted(set(raw) - _CONFIG_KEYS)
    if unknown:
        raise ConfigurationError(f"{path}: unknown config keys: {unknown}")
    for key in ("task", "model_kind"):
        if key not in raw:
            raise ConfigurationError(f"{path}: missing required key {key!r}")
    return raw


def _parse_seed_list(text: str) -> tuple[int, ...]:
    try:
        seeds = tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError as exc:
        raise ConfigurationError(f"--seed-list must be comma-separated integers, got {text!r}") from exc
    if not seeds:
        raise ConfigurationError("--seed-list must name at least one seed")
    return seeds


def make_train_config(raw: dict, vocab_size: int,
                      seed_list: str | None = None) -> tr.TrainConfig:
    """Resolve a config dict against task defaults into a TrainConfig."""
    model = md.default_model_config(raw["model_kind"], raw["task"], vocab_size,
                                    tagset=raw.get("tagset", "none"))
    model_over = {k: raw[k] for k in _MODEL_OVERRIDES if k in raw}
    if model_over:
        model = dataclasses.replace(model, **model_over)
    train_over = {k: raw[k] for k in _TRAIN_OVERRIDES if k in raw}
    if "seeds" in raw:
        train_over["seeds"] = tuple(raw["seeds"])
    if seed_list:
        train_over["seeds"] = _parse_seed_list(seed_list)
    return tr.default_train_config(raw["task"], model, **train_over)


def resolved_config(config: tr.TrainConfig, embeddings_path: str | None) -> dict:
    """Fully explicit snapshot; feeding it back rebuilds the same configs."""
    model = config.model
    return {"task": config.task, "model_kind": model.model_kind,
            "tagset": model.tagset, "embedding_dim": model.embedding_dim,
            "bilstm_hidden": model.bilstm_hidden, "dropout_p": model.dropout_p,
            "epochs": config.epochs, "batch_size": config.batch_size,
            "lr": config.lr, "loss": config.loss, "resample": config.resample,
            "seeds": list(config.seeds), "max_chars": config.max_chars,
            "vocab_size": model.vocab_size, "embeddings": embeddings_path}


def _require_config(args: argparse.Namespace) -> str:
    if not args.config:
        raise ConfigurationError("--config is required for this command")
    return args.config


# ---------------------------------------------------------------------------
# prepared-dataset persistence
# ---------------------------------------------------------------------------

def write_prepared(path: str, meta: dict, docs: list[TaggedDocument],
                   splits: list[str]) -> None:
    lines = [json.dumps(meta, sort_keys=True)]
    for doc, split in zip(docs, splits):
        lines.append(json.dumps({"id": doc.id, "split": split, "label": doc.label,
                                 "roles": doc.roles, "sentences": doc.sentences},
                                sort_keys=True))
    _atomic_write_text(path, "\n".join(lines) + "\n")


def load_prepared(data_dir: str) -> tuple[dict, dict[str, list[TaggedDocument]]]:
    path = os.path.join(data_dir, PREPARED_NAME)
    if not os.path.exists(path):
        raise ConfigurationError(f"no prepared dataset at {path}; run the prepare command first")
    by_split: dict[str, list[TaggedDocument]] = {"train": [], "valid": [], "test": []}
    with open(path, encoding="utf-8") as fh:
        meta = json.loads(fh.readline())
        if meta.get("kind") != PREPARED_KIND:
            raise ConfigurationError(f"{path}: not a prepared dataset")
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            by_split[obj["split"]].append(TaggedDocument(
                id=obj["id"], sentences=obj["sentences"],
                roles=obj["roles"], label=obj["label"]))
    return meta, by_split


# ---------------------------------------------------------------------------
# prepare
# ---------------------------------------------------------------------------

def cmd_prepare(args: argparse.Namespace) -> int:
    raw = load_config_file(_require_config(args))
    data_dir = data_dir_from(args)
    docs = load_corpus(args.corpus)
    tagset = raw.get("tagset", "none")
    cutoff = CharacterLimit(int(raw.get("max_chars", 20000)))
    by_split = split_corpus(docs)

    # vocabulary from train-split surface text; tag tokens forced in
    token_lists = []
    for doc in by_split["train"]:
        sentences = [sent for _, sent in inject_tags(doc, "none")]
        for sent in apply_cutoff(sentences, cutoff):
            token_lists.append(tokenize(sent))
    if not token_lists:
        raise DegenerateInputError("train split has no text to build a vocabulary from")
    vocab = build_vocabulary(token_lists, max_size=int(raw.get("vocab_size", 10000)),
                             forced_tokens=tag_tokens(tagset))

    encoded = [encode_document(doc, vocab, tagset, cutoff) for doc in docs]
    meta = {"kind": PREPARED_KIND, "format_version": FORMAT_VERSION,
            "tagset": tagset, "max_chars": cutoff.limit, "vocab_size": len(vocab),
            "corpus_sha256": file_sha256(args.corpus),
            "vocab_sha256": vocab.sha256(), "n_docs": len(docs)}
    _atomic_via(os.path.join(data_dir, VOCAB_NAME), vocab.save)
    write_prepared(os.path.join(data_dir, PREPARED_NAME), meta, encoded,
                   [doc.split for doc in docs])

    tag_ids = {vocab.encode(tok) for tok in tag_tokens(tagset)}
    print(f"{'split':<6} {'docs':>6} {'avg_words':>10} {'median_words':>13}")
    for split in ("train", "valid", "test"):
        counts = [sum(1 for sent in enc.sentences for t in sent if t not in tag_ids)
                  for enc, doc in zip(encoded, docs) if doc.split == split]
        avg = float(np.mean(counts)) if counts else 0.0
        median = float(np.median(counts)) if counts else 0.0
        print(f"{split:<6} {len(counts):>6} {avg:>10.1f} {median:>13.1f}")
    return 0


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def _load_manifest(path: str) -> dict:
    with open(path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("kind") != MANIFEST_KIND:
        raise ConfigurationError(f"{path}: not an experiment manifest")
    return manifest


def cmd_train(args: argparse.Namespace) -> int:
    data_dir = data_dir_from(args)
    meta, by_split = load_prepared(data_dir)
    vocab = Vocabulary.load(os.path.join(data_dir, VOCAB_NAME))
    if vocab.sha256() != meta["vocab_sha256"]:
        raise CheckpointMismatchError("vocabulary file does not match the prepared dataset")

    if args.from_manifest:
        manifest_in = _load_manifest(args.from_manifest)
        if manifest_in["corpus_sha256"] != meta["corpus_sha256"]:
            raise ConfigurationError("manifest corpus hash does not match the prepared dataset")
        if manifest_in["vocab_sha256"] != meta["vocab_sha256"]:
            raise ConfigurationError("manifest vocabulary hash does not match the prepared dataset")
        raw = manifest_in["config"]
    else:
        raw = load_config_file(_require_config(args))
    if raw.get("tagset", "none") != meta["tagset"]:
        raise ConfigurationError(
            f"prepared dataset uses tagset {meta['tagset']!r} but the config wants "
            f"{raw.get('tagset', 'none')!r}; rerun prepare")
    if int(raw.get("max_chars", 20000)) != meta["max_chars"]:
        raise ConfigurationError(
            f"prepared dataset used max_chars={meta['max_chars']} but the config wants "
            f"{raw.get('max_chars', 20000)}; rerun prepare")
    config = make_train_config(raw, len(vocab), seed_list=args.seed_list)

    manifest_path = os.path.join(data_dir, MANIFEST_NAME)
    if os.path.exists(manifest_path) and not args.force:
        raise OutputExistsError(f"{manifest_path} exists; pass --force to overwrite")

    embeddings = None
    embeddings_path = raw.get("embeddings")
    if embeddings_path:
        embeddings = load_embeddings(embeddings_path, vocab,
                                     config.model.embedding_dim,
                                     np.random.default_rng(0))

    events: dict[int, list[dict]] = {}

    def log_fn(event: dict) -> None:
        stamped = dict(event)
        stamped["timestamp"] = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
        events.setdefault(event["seed"], []).append(stamped)

    result = tr.run_experiment(config, by_split["train"], by_split["valid"],
                               by_split["test"], embeddings=embeddings, log_fn=log_fn)
    if result.failed:
        raise TrainingAbortedError(result.failure or "training aborted")

    checkpoints: dict[str, str] = {}
    for run in result.runs:
        name = f"run-{run.seed}.ckpt"
        model = md.build_model(config.model, np.random.default_rng(0))
        for pname, values in run.parameters.items():
            model.params[pname].values = values.copy()
        _atomic_via(os.path.join(data_dir, name),
                    lambda p, m=model: md.save_checkpoint(m, meta["vocab_sha256"], p))
        checkpoints[str(run.seed)] = name
        log_lines = [json.dumps(e, sort_keys=True) for e in events.get(run.seed, [])]
        log_lines.append(json.dumps({"seed": run.seed, "event": "selected",
                                     "epoch": run.selected_epoch}, sort_keys=True))
        _atomic_write_text(os.path.join(data_dir, f"train-log-{run.seed}.jsonl"),
                           "\n".join(log_lines) + "\n")
        _atomic_via(os.path.join(data_dir, f"predictions-{run.seed}.jsonl"),
                    lambda p, r=run: save_predictions(r.test_predictions, p))
    vote_path = os.path.join(data_dir, "predictions-vote.jsonl")
    if result.vote_predictions:
        _atomic_via(vote_path, lambda p: save_predictions(result.vote_predictions, p))
    elif os.path.exists(vote_path):
        os.unlink(vote_path)

    report = build_report(config.task, result.per_run_metrics)
    _atomic_write_text(os.path.join(data_dir, REPORT_NAME),
                       json.dumps(report, indent=2, sort_keys=True) + "\n")
    manifest = {"kind": MANIFEST_KIND, "format_version": FORMAT_VERSION,
                "tool_version": __version__,
                "config": resolved_config(config, embeddings_path),
                "corpus_sha256": meta["corpus_sha256"],
                "vocab_sha256": meta["vocab_sha256"],
                "seeds": list(config.seeds), "checkpoints": checkpoints,
                "report": REPORT_NAME}
    _atomic_write_text(manifest_path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")

    print(f"manifest: {manifest_path}")
    for name, entry in report["metrics"].items():
        print(f"{name}: {entry['mean']:.4f} ± {entry['std']:.4f}")
    return 0


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------

def _check_tagset(model: md.Model, meta: dict) -> None:
    if model.config.tagset != meta["tagset"]:
        raise CheckpointMismatchError(
            f"checkpoint expects tagset {model.config.tagset!r} but the prepared "
            f"dataset uses {meta['tagset']!r}")


def cmd_evaluate(args: argparse.Namespace) -> int:
    if bool(args.manifest) == bool(args.checkpoint):
        raise ConfigurationError("pass exactly one of --manifest or --checkpoint")
    data_dir = data_dir_from(args)
    meta, by_split = load_prepared(data_dir)
    vocab_hash = Vocabulary.load(os.path.join(data_dir, VOCAB_NAME)).sha256()
    docs = by_split[args.split]
    if not docs:
        raise DegenerateInputError(f"split {args.split!r} has no documents")

    per_run: dict[str, list[float]] = {}
    if args.manifest:
        manifest = _load_manifest(args.manifest)
        if manifest["vocab_sha256"] != vocab_hash:
            raise CheckpointMismatchError("manifest vocabulary hash does not match the data directory")
        task = manifest["config"]["task"]
        batch_size = int(manifest["config"]["batch_size"])
        base = os.path.dirname(os.path.abspath(args.manifest))
        runs = []
        for seed in manifest["seeds"]:
            rel = manifest["checkpoints"][str(seed)]
            path = rel if os.path.isabs(rel) else os.path.join(base, rel)
            model, _ = md.load_checkpoint(path, expected_vocab_sha256=vocab_hash)
            _check_tagset(model, meta)
            runs.append(tr.predict(model, docs, task, batch_size, seed=int(seed)))
        for records in runs:
            for name, value in tr.run_metrics(records, task).items():
                per_run.setdefault(name, []).append(value)
        if task == "regress" or len(runs) % 2 == 1:
            vote = vote_aggregate(runs, task)
            golds = [r.gold for r in vote]
            preds = [r.pred for r in vote]
            if task == "classify":
                per_run["vote_accuracy"] = [accuracy(golds, preds)]
            else:
                per_run["run_mean_mae"] = [mae(golds, preds)]
    else:
        model, _ = md.load_checkpoint(args.checkpoint, expected_vocab_sha256=vocab_hash)
        _check_tagset(model, meta)
        task = "classify" if model.config.head_kind == "classify-2" else "regress"
        records = tr.predict(model, docs, task, PREDICT_BATCH)
        for name, value in tr.run_metrics(records, task).items():
            per_run[name] = [value]

    print(json.dumps(build_report(task, per_run), indent=2, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------
# predict
# ---------------------------------------------------------------------------

def _load_predict_docs(path: str) -> list[RawDocument]:
    """Documents for inference; labels are optional and never read."""
    docs = []
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"invalid JSON: {exc.msg}", line_number=n) from exc
            if not isinstance(obj, dict) or "id" not in obj:
                raise CorpusFormatError("expected an object with an 'id' field", line_number=n)
            title = str(obj.get("title", ""))
            abstract = str(obj.get("abstract", ""))
            body = str(obj.get("body_text", ""))
            if not (title or abstract or body):
                raise DegenerateInputError(f"line {n}: document {obj['id']!r} has no text")
            label = obj.get("label") or {"accepted": False}
            docs.append(RawDocument(id=str(obj["id"]), title=title, abstract=abstract,
                                    body_text=body, label=label, split="test"))
    return docs


def cmd_predict(args: argparse.Namespace) -> int:
    data_dir = data_dir_from(args)
    vocab_path = os.path.join(data_dir, VOCAB_NAME)
    if not os.path.exists(vocab_path):
        raise ConfigurationError(f"no vocabulary at {vocab_path}; run the prepare command first")
    vocab = Vocabulary.load(vocab_path)
    model, _ = md.load_checkpoint(args.checkpoint, expected_vocab_sha256=vocab.sha256())
    task = "classify" if model.config.head_kind == "classify-2" else "regress"
    if args.attention and model.config.model_kind != "han":
        raise ConfigurationError(
            f"model kind {model.config.model_kind!r} produces no attention maps")

    max_chars = 20000
    prepared_path = os.path.join(data_dir, PREPARED_NAME)
    if os.path.exists(prepared_path):
        with open(prepared_path, encoding="utf-8") as fh:
            max_chars = int(json.loads(fh.readline())["max_chars"])
    cutoff = CharacterLimit(max_chars)

    docs = _load_predict_docs(args.docs)
    encoded = [encode_document(doc, vocab, model.config.tagset, cutoff) for doc in docs]
    for start in range(0, len(encoded), PREDICT_BATCH):
        chunk = encoded[start:start + PREDICT_BATCH]
        result = model.forward(md.pad_batch(chunk), training=False)
        out = result.output.values
        for i, doc in enumerate(chunk):
            if task == "classify":
                probs = tr.class_probabilities(out[i:i + 1])[0]
                row = {"id": doc.id, "class": int(np.argmax(out[i])),
                       "prob": float(probs[1])}
            else:
                score = float(out[i, 0])
                row = {"id": doc.id, "score": score,
                       "citations": inverse_citation_score(score)}
            if args.attention:
                row["sentence_attention"] = [
                    float(v) for v in result.sent_attention[i, :len(doc.sentences)]]
                row["word_attention"] = [
                    [float(v) for v in result.word_attention[i, j, :len(sent)]]
                    for j, sent in enumerate(doc.sentences)]
            print(json.dumps(row, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------
# stats
# ---------------------------------------------------------------------------

def cmd_stats(args: argparse.Namespace) -> int:
    data_dir = data_dir_from(args)
    docs = load_corpus(args.corpus)
    have_both = all("accepted" in d.label and "citation_count" in d.label for d in docs)
    have_citations = all("citation_count" in d.label for d in docs)
    if have_both:
        stats = corpus_citation_stats(docs, truncate_at=args.truncate_at,
                                      bin_width=args.bin_width)
        for group in sorted(stats.group_means):
            print(f"{group}: mean citations {stats.group_means[group]:.2f} "
                  f"± {stats.group_stds[group]:.2f} (n={stats.group_sizes[group]})")
        print(f"spearman rho {stats.rho:.4f}, p {stats.p_value:.6g}")
    elif have_citations:
        counts = [d.citation_count for d in docs]
        mean = float(np.mean(counts))
        std = float(np.std(counts))
        histogram = []
        for startv in range(0, args.truncate_at, args.bin_width):
            end = min(startv + args.bin_width, args.truncate_at)
            hits = sum(1 for c in counts if startv <= c < end)
            histogram.append((startv, end, hits, "all"))
        stats = CitationStats(group_means={"all": mean}, group_stds={"all": std},
                              group_sizes={"all": len(counts)}, rho=float("nan"),
                              p_value=float("nan"), histogram=histogram)
        print(f"all: mean citations {mean:.2f} ± {std:.2f} (n={len(counts)})")
        print("group statistics skipped: no acceptance labels")
    else:
        raise DegenerateInputError("citation statistics need a citation count on every document")
    csv_path = os.path.join(data_dir, HISTOGRAM_NAME)
    _atomic_write_text(csv_path, "\n".join(histogram_csv_lines(stats)) + "\n")
    print(f"histogram: {csv_path}")
    return 0


# ---------------------------------------------------------------------------
# significance
# ---------------------------------------------------------------------------

def _runs_by_seed(records: list[PredictionRecord]) -> list[list[PredictionRecord]]:
    by_seed: dict = {}
    for rec in records:
        by_seed.setdefault(rec.seed, []).append(rec)
    return [by_seed[s] for s in sorted(by_seed, key=lambda s: (s is None, s))]


def cmd_significance(args: argparse.Namespace) -> int:
    records_a = load_predictions(args.predictions_a)
    records_b = load_predictions(args.predictions_b)
    name_a = args.name_a or os.path.basename(args.predictions_a)
    name_b = args.name_b or os.path.basename(args.predictions_b)
    task = "classify" if args.test == "mcnemar" else "regress"
    agg_a = {r.id: r for r in vote_aggregate(_runs_by_seed(records_a), task)}
    agg_b = {r.id: r for r in vote_aggregate(_runs_by_seed(records_b), task)}

    only_a = sorted(set(agg_a) - set(agg_b))
    only_b = sorted(set(agg_b) - set(agg_a))
    if only_a or only_b:
        raise AlignmentError(
            f"prediction files disagree on ids; only in {name_a}: {only_a[:5]}; "
            f"only in {name_b}: {only_b[:5]}")
    ids = sorted(agg_a)
    conflicts = [i for i in ids if agg_a[i].gold != agg_b[i].gold]
    if conflicts:
        raise AlignmentError(f"gold labels disagree for ids: {conflicts[:5]}")

    golds = [agg_a[i].gold for i in ids]
    if args.test == "mcnemar":
        result = mcnemar_exact(golds, [agg_a[i].pred for i in ids],
                               [agg_b[i].pred for i in ids],
                               system_a=name_a, system_b=name_b)
    else:
        errors_a = [abs(agg_a[i].pred - agg_a[i].gold) for i in ids]
        errors_b = [abs(agg_b[i].pred - agg_b[i].gold) for i in ids]
        result = wilcoxon_signed_rank(errors_a, errors_b,
                                      system_a=name_a, system_b=name_b)
    print(json.dumps(result.to_json(), indent=2, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", help="JSON experiment config file")
    shared.add_argument("--seed-list", help="comma-separated seeds overriding the config")
    shared.add_argument("--threads", type=int, default=1,
                        help="advisory thread budget (work currently runs on one core)")
    shared.add_argument("--out", help=f"data directory (default ${DATA_DIR_ENV} or ./hanst-data)")
    shared.add_argument("--force", action="store_true",
                        help="overwrite an existing experiment manifest")

    parser = argparse.ArgumentParser(
        prog="hanst",
        description="Hierarchical attention document models with sentence structure tags")
    parser.add_argument("--version", action="version", version=f"hanst {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", parents=[shared],
                       help="segment, tag, encode a corpus and build its vocabulary")
    p.add_argument("corpus", help="corpus JSONL file")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", parents=[shared], help="run the multi-seed training recipe")
    p.add_argument("--from-manifest", help="re-run an experiment from its manifest")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", parents=[shared], help="score checkpoints on a split")
    p.add_argument("--manifest", help="experiment manifest (evaluates every run)")
    p.add_argument("--checkpoint", help="single checkpoint file")
    p.add_argument("--split", choices=("train", "valid", "test"), default="test")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", parents=[shared], help="label raw documents with a checkpoint")
    p.add_argument("docs", help="JSONL documents (labels optional)")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--attention", action="store_true",
                   help="include per-document attention maps")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("stats", parents=[shared], help="corpus citation/acceptance statistics")
    p.add_argument("corpus", help="corpus JSONL file")
    p.add_argument("--truncate-at", type=int, default=100,
                   help="histogram upper bound (excluded counts still enter the stats)")
    p.add_argument("--bin-width", type=int, default=5)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("significance", parents=[shared],
                       help="paired significance test between two prediction files")
    p.add_argument("predictions_a")
    p.add_argument("predictions_b")
    p.add_argument("--test", choices=("mcnemar", "wilcoxon"), required=True)
    p.add_argument("--name-a", help="label for system A in the output")
    p.add_argument("--name-b", help="label for system B in the output")
    p.set_defaults(func=cmd_significance)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except HanstError as exc:
        print(f"error: {exc.code}: {_one_line(str(exc))}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: io-error: {_one_line(str(exc))}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
