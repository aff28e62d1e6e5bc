"""Command-line entry point.

Results are printed to stdout as JSON; artifacts go only to the output
directory; failures print ``{"error": ..., "message": ..., "exit_code": ...}``
to stderr. Exit codes: 0 success, 2 config error, 3 data error, 4 numeric
failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import torch

from . import detection, downstream, memory, synthetic
from .checkpoint import Checkpoint, CheckpointError, load_checkpoint, save_checkpoint
from .config import ConfigError, DetectSettings, RunConfig, load_config, render_config
from .hierarchical import encode_record
from .log_tree import (DepthExceeded, EmptyTree, LogTree, MalformedRecord, build_segments, linearize,
                       read_corpus, to_json, tree_text)
from .model_core import EncoderConfig, NonFiniteGradient, block_params, count_params
from .tokenizer import EmptyCorpus, Vocab, build_vocab
from .training import (NoMaskablePositions, TrainingDiverged, evaluate, gradient_check, split_dataset,
                       train)

log = logging.getLogger("hlogformer")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
MODE_NAMES = {"hlog": "bidirectional", "flat": "flat", "forward-only": "forward_only",
              "no-summary": "no_summary"}


class DataError(ValueError):
    pass


class NumericFailure(ArithmeticError):
    pass


def _error_code(exc: BaseException) -> int:
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, (DataError, MalformedRecord, DepthExceeded, EmptyTree, EmptyCorpus, CheckpointError,
                        NoMaskablePositions, FileNotFoundError, UnicodeDecodeError)):
        return EXIT_DATA
    if isinstance(exc, (NumericFailure, TrainingDiverged, NonFiniteGradient, FloatingPointError)):
        return EXIT_NUMERIC
    if isinstance(exc, ValueError):
        return EXIT_CONFIG
    return 1


# ---------------------------------------------------------------- helpers

def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


class OutDir:
    """Output directory guard: artifacts stay inside it and are never silently replaced."""

    def __init__(self, path: str | Path | None, force: bool):
        if path is None:
            raise ConfigError("an output directory is required (--out or [run] out)")
        self.path = Path(path)
        self.force = force
        self.path.mkdir(parents=True, exist_ok=True)

    def file(self, name: str) -> Path:
        target = self.path / name
        if target.exists() and not self.force:
            raise ConfigError(f"{target} exists; pass --force to overwrite")
        return target

    def write_text(self, name: str, text: str) -> Path:
        target = self.file(name)
        target.write_text(text, encoding="utf-8")
        return target


def _read(path) -> list[LogTree]:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"data file not found: {path}")
    trees = read_corpus(path)
    if not trees:
        raise DataError(f"{path} holds no records")
    return trees


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as e:
        raise ConfigError(f"bad number list {text!r}") from e


def _ints(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError as e:
        raise ConfigError(f"bad integer list {text!r}") from e


def _config(args) -> RunConfig:
    cfg = load_config(getattr(args, "config", None), getattr(args, "set", None) or [])
    return cfg


def _ckpt(path) -> Checkpoint:
    if not Path(path).is_file():
        raise DataError(f"checkpoint not found: {path}")
    ckpt = load_checkpoint(path)
    if ckpt.vocab is None:
        raise CheckpointError(f"{path} carries no vocabulary")
    return ckpt


def _encode(trees, ckpt: Checkpoint):
    return [encode_record(t, ckpt.vocab, ckpt.stack.config) for t in trees]


# ---------------------------------------------------------------- subcommands

def cmd_synth(args) -> None:
    out = OutDir(args.out, args.force)
    if args.kind == "logs":
        lines = synthetic.synth_logs(args.n, args.seed)
        path = out.write_text("logs.jsonl", "\n".join(lines) + "\n")
        _emit({"records": len(lines), "path": str(path)})
        return
    items, clusters, histories = synthetic.synth_items(args.n_items, args.n_users, args.seed)
    paths = {"items": out.write_text("items.jsonl", "\n".join(items) + "\n")}
    # record ids are 1-based line numbers, matching read_corpus
    labels = "record_id,label\n" + "".join(f"{i + 1},cluster_{c}\n" for i, c in enumerate(clusters))
    paths["labels"] = out.write_text("item_labels.csv", labels)
    paths["histories"] = out.write_text("histories.json",
                                        json.dumps([[str(i + 1) for i in h] for h in histories]) + "\n")
    _emit({"items": len(items), "users": len(histories), **{k: str(v) for k, v in paths.items()}})


def cmd_build_vocab(args) -> None:
    trees = _read(args.corpus)
    vocab = build_vocab([tree_text(t) for t in trees], min_freq=args.min_freq)
    out = OutDir(args.out, args.force)
    path = out.file("vocab.txt")
    vocab.save(path)
    _emit({"size": len(vocab), "path": str(path)})


def prepare_splits(cfg: RunConfig, corpus=None):
    corpus = corpus or cfg.corpus
    if corpus is None:
        raise ConfigError("no corpus given ([data] corpus or --data)")
    trees = _read(corpus)
    train_t, val_t, test_t = split_dataset(trees, cfg.seed)
    vocab = build_vocab([tree_text(t) for t in train_t], min_freq=cfg.min_freq)
    return (train_t, val_t, test_t), vocab


def cmd_train(args) -> None:
    if args.epochs is not None:
        args.set = (args.set or []) + [f"train.epochs={args.epochs}"]
    cfg = _config(args)
    if args.out is not None:    # relative to the working directory, unlike [run] out
        cfg = replace(cfg, out=Path(args.out))
        cfg = replace(cfg, source=render_config(cfg))
    mode = MODE_NAMES[args.mode]
    splits, vocab = prepare_splits(cfg, args.data)
    enc_cfg = cfg.encoder_config(len(vocab), mode)
    tr_cfg = cfg.train_config(mode)
    if args.wallclock:
        tr_cfg = replace(tr_cfg, record_wallclock=True)
    out = OutDir(cfg.out, args.force)
    encoded = [[encode_record(t, vocab, enc_cfg) for t in part] for part in splits]

    paths = [out.file(n) for n in ("effective_config.ini", "vocab.txt", "checkpoint.hlog", "metrics.json",
                                   "train.jsonl", "val.jsonl", "test.jsonl")]
    paths[0].write_text(cfg.source, encoding="utf-8")
    vocab.save(paths[1])
    for name, part in zip(("train", "val", "test"), splits):
        (out.path / f"{name}.jsonl").write_text("".join(to_json(t) + "\n" for t in part), encoding="utf-8")

    try:
        result = train(enc_cfg, tr_cfg, encoded[0], encoded[1])
    except TrainingDiverged as e:
        if e.last_good_state is not None:
            from .model_core import EncoderStack
            stack = EncoderStack(enc_cfg)
            stack.load_state_dict(e.last_good_state)
            save_checkpoint(out.path / "last_good.hlog", Checkpoint(stack, vocab, None, mode))
        raise
    extras = {"train_config": tr_cfg.to_dict(), "best_epoch": result.best_epoch}
    save_checkpoint(paths[2], Checkpoint(result.stack, vocab, result.center, mode, extras))
    doc = result.metrics_document()
    doc["mode"] = mode
    doc["param_count"] = count_params(enc_cfg)
    paths[3].write_text(_dump(doc), encoding="utf-8")
    best_val = [h for h in result.history if h["split"] == "val" and h["epoch"] == result.best_epoch][0]
    _emit({"checkpoint": str(paths[2]), "metrics": str(paths[3]), "best_epoch": result.best_epoch,
           "best_val_mlm": best_val["mlm"]})


def cmd_eval_mlm(args) -> None:
    ckpt = _ckpt(args.ckpt)
    records = _encode(_read(args.data), ckpt)
    ev = evaluate(ckpt.stack, records, ckpt.mode, mask_rate=args.mask_rate, mask_seed=args.mask_seed,
                  center=ckpt.center)
    res = {"mlm": ev.mlm, "records": len(records), "masked_tokens": ev.masked_tokens, "mode": ckpt.mode}
    if args.out:
        OutDir(args.out, args.force).write_text("eval_mlm.json", _dump(res))
    _emit(res)


def _detect_settings(args):
    """Flags win over the optional config's [detect] section, which wins over built-in defaults."""
    base = _config(args).detect if args.config else DetectSettings()
    pick = lambda flag, value: value if flag is None else flag  # noqa: E731
    return replace(base, **{k: pick(getattr(args, a, None), getattr(base, k)) for a, k in (
        ("p", "p"), ("seed", "fake_seed"), ("mask_seed", "mask_seed"), ("mask_rate", "mask_rate"),
        ("classify_T", "classify_t"))})


def cmd_gen_fake(args) -> None:
    src = Path(args.data)
    trees = _read(src)
    ds = _detect_settings(args)
    fakes = detection.gen_fake(trees, detection.FakeGenConfig(ds.p, ds.fake_seed))
    name = src.name[:-len(".jsonl")] if src.name.endswith(".jsonl") else src.stem
    out = OutDir(args.out if args.out else src.parent, args.force)
    path = out.write_text(f"{name}.fake.jsonl", "".join(to_json(t) + "\n" for t in fakes))
    _emit({"records": len(fakes), "skipped": len(trees) - len(fakes), "path": str(path)})


def cmd_detect(args) -> None:
    ckpt = _ckpt(args.ckpt)
    real = _encode(_read(args.real), ckpt)
    fake = _encode(_read(args.fake), ckpt)
    ds = _detect_settings(args)
    T_values = _ints(args.T) if args.T else list(ds.t_values)
    alphas = _floats(args.alpha_grid) if args.alpha_grid else list(ds.alpha_grid)
    if ds.classify_t not in T_values:
        raise ConfigError(f"classify T={ds.classify_t} must be one of {T_values}")
    report = detection.detect_by_loss(ckpt.stack, ckpt.mode, real, fake, ckpt.center,
                                      mask_seed=ds.mask_seed, mask_rate=ds.mask_rate)
    kw = dict(mask_seed=ds.mask_seed, mask_rate=ds.mask_rate)
    rr = detection.fake_rates(ckpt.stack, ckpt.mode, real, T_values, **kw)
    fr = detection.fake_rates(ckpt.stack, ckpt.mode, fake, T_values, **kw)
    report.T_values = T_values
    report.real_rates, report.fake_rates = rr.tolist(), fr.tolist()
    col = T_values.index(ds.classify_t)
    report.classification_T = ds.classify_t
    report.classification = [detection.classify_by_rate(rr[:, col], fr[:, col], a) for a in alphas]
    doc = report.to_dict()
    best = max(report.classification, key=lambda c: (c.balanced_accuracy, -c.alpha))
    doc["best_alpha"] = {"alpha": best.alpha, "balanced_accuracy": best.balanced_accuracy}
    out = OutDir(args.out, args.force)
    path = out.write_text("report.json", _dump(doc))
    _emit({"report": str(path), "means": doc["means"], "best_alpha": doc["best_alpha"]})


def cmd_export_embeddings(args) -> None:
    ckpt = _ckpt(args.ckpt)
    sets = [(args.data, args.label)] + ([(args.fake, "fake")] if args.fake else [])
    ids, labels, vecs = [], [], []
    for path, label in sets:
        trees = _read(path)
        S = detection.record_summaries(ckpt.stack, ckpt.mode, _encode(trees, ckpt), mask_seed=args.mask_seed)
        ids += [t.record_id for t in trees]
        labels += [label] * len(trees)
        vecs.append(S)
    out = OutDir(args.out, args.force)
    path = out.file("embeddings.csv")
    detection.export_summaries(path, torch.cat(vecs), ids, labels)
    _emit({"rows": len(ids), "dims": ckpt.stack.config.d_model, "path": str(path)})


def _embeddings(path):
    if not Path(path).is_file():
        raise DataError(f"embeddings file not found: {path}")
    return detection.read_summaries(path)


def cmd_pca(args) -> None:
    ids, labels, X = _embeddings(args.embeddings)
    res = downstream.pca_project(X, args.dims)
    out = OutDir(args.out, args.force)
    path = out.file("pca.csv")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["record_id", "label"] + [f"pc_{j + 1}" for j in range(args.dims)])
        for rid, lab, row in zip(ids, labels, res.coords):
            w.writerow([rid, lab] + [repr(float(x)) for x in row])
    _emit({"path": str(path), "explained_variance_ratio": res.explained_variance_ratio.tolist()})


def cmd_classify(args) -> None:
    ids, _, X = _embeddings(args.embeddings)
    if not Path(args.labels).is_file():
        raise DataError(f"labels file not found: {args.labels}")
    with open(args.labels, newline="", encoding="utf-8") as fh:
        mapping = {row["record_id"]: row["label"] for row in csv.DictReader(fh)}
    missing = [i for i in ids if i not in mapping]
    if missing:
        raise DataError(f"{len(missing)} embedding rows have no label (first: {missing[0]!r})")
    labels = [mapping[i] for i in ids]
    splits = split_dataset(list(range(len(ids))), args.seed)
    try:
        res = downstream.classify_supervised(X, labels, splits, epochs=args.epochs, seed=args.seed)
    except ValueError as e:
        raise DataError(str(e)) from e
    doc = {"test_accuracy": res.test_accuracy, "train_accuracy": res.train_accuracy,
           "classes": res.n_classes, "records": len(ids)}
    if args.out:
        OutDir(args.out, args.force).write_text("classify.json", _dump(doc))
    _emit(doc)


def cmd_recommend(args) -> None:
    ids, _, X = _embeddings(args.embeddings)
    row = {rid: i for i, rid in enumerate(ids)}
    try:
        histories = json.loads(Path(args.histories).read_text(encoding="utf-8"))
        hist_rows = [[row[str(r)] for r in h] for h in histories]
    except FileNotFoundError:
        raise DataError(f"histories file not found: {args.histories}") from None
    except (KeyError, json.JSONDecodeError, TypeError) as e:
        raise DataError(f"bad histories file: {e}") from e
    ks = _ints(args.k_list)
    try:
        prec = downstream.recommend_eval(X, hist_rows, ks, seed=args.seed)
    except ValueError as e:
        raise DataError(str(e)) from e
    doc = {"precision_at_k": {str(k): v for k, v in prec.items()}, "users": len(hist_rows)}
    if args.out:
        OutDir(args.out, args.force).write_text("recommend.json", _dump(doc))
    _emit(doc)


def cmd_param_count(args) -> None:
    cfg = _config(args)
    if args.vocab_size is not None:
        V = args.vocab_size
    elif cfg.corpus is not None:
        V = len(prepare_splits(cfg)[1])
    else:
        raise ConfigError("need --vocab-size or a [data] corpus")
    doc = {}
    for name, mode in (("hlogformer", "bidirectional"), ("flat_baseline", "flat")):
        ec = cfg.encoder_config(V, mode)
        doc[name] = {"total": count_params(ec), "n_blocks": ec.n_blocks,
                     "per_block": block_params(ec.d_model, ec.d_ff),
                     "blocks": ec.n_blocks * block_params(ec.d_model, ec.d_ff)}
    doc["vocab_size"] = V
    doc["block_ratio"] = doc["hlogformer"]["blocks"] / doc["flat_baseline"]["blocks"]
    _emit(doc)


def cmd_mem_report(args) -> None:
    if args.segment_lengths:
        lengths = _ints(args.segment_lengths)
        tokens = args.tokens if args.tokens is not None else sum(lengths)
        k = args.summary_slots if args.summary_slots is not None else 10
        W = args.window if args.window is not None else tokens
        rows = [memory.memory_row("custom", lengths, tokens, k, W)]
    else:
        if args.data is None:
            raise ConfigError("need --data or --segment-lengths")
        cfg = _config(args)
        ec = cfg.encoder_config(NUM_VOCAB_PLACEHOLDER)
        k = args.summary_slots if args.summary_slots is not None else ec.summary_slots
        W = args.window if args.window is not None else ec.max_window
        trees = _read(args.data)
        vocab = build_vocab([tree_text(t) for t in trees])
        rows = []
        for t in trees:
            plan = build_segments(t, vocab, ec.max_segment_len)
            rows.append(memory.memory_row(t.record_id, [len(s.token_ids) for s in plan.steps],
                                          len(linearize(t, vocab)), k, W))
    hier = sum(r.hierarchical for r in rows)
    flat = sum(r.flat for r in rows)
    doc = {"records": len(rows), "summary_slots": k, "window": W, "hierarchical_total": hier,
           "flat_total": flat, "ratio": hier / flat, "rows": [r.to_dict() for r in rows]}
    if args.out:
        out = OutDir(args.out, args.force)
        with open(out.file("mem_report.csv"), "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=list(doc["rows"][0]))
            w.writeheader()
            w.writerows(doc["rows"])
    _emit(doc)


NUM_VOCAB_PLACEHOLDER = 8     # segment lengths do not depend on the vocabulary size


GRADCHECK_DEFAULTS = dict(d_model=16, n_heads=2, d_ff=32, n_blocks=2, max_window=32, summary_slots=3)


def cmd_gradcheck(args) -> None:
    if args.config:
        cfg = _config(args)
        ec = cfg.encoder_config(NUM_VOCAB_PLACEHOLDER)
    else:
        ec = EncoderConfig(NUM_VOCAB_PLACEHOLDER, **GRADCHECK_DEFAULTS)
    res = gradient_check(ec, probes=args.probes, seed=args.seed, mode=MODE_NAMES[args.mode],
                         init_std=args.init_std)
    doc = res.to_dict()
    doc["tolerance"] = args.tol
    doc["passed"] = res.max_rel_error < args.tol and all(v < 1e-10 for v in res.structural_zeros.values())
    if args.out:
        OutDir(args.out, args.force).write_text("gradcheck.json", _dump(doc))
    _emit(doc)
    if not doc["passed"]:
        raise NumericFailure(f"gradient check failed: max relative error {res.max_rel_error:.3e}")


# ---------------------------------------------------------------- parser

def _formatter(prog):
    return argparse.HelpFormatter(prog, width=100, max_help_position=32)


class _Parser(argparse.ArgumentParser):
    """Usage errors become the same JSON error document as every other failure."""

    def error(self, message):
        sys.stderr.write(json.dumps({"error": "UsageError", "message": f"{self.prog}: {message}",
                                     "exit_code": EXIT_CONFIG}) + "\n")
        sys.exit(EXIT_CONFIG)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hlogformer", formatter_class=_formatter,
                                description="Hierarchical transformer for dictionary-like logs.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name, fn, help_):
        sp = sub.add_parser(name, help=help_, description=help_, formatter_class=_formatter)
        sp.set_defaults(fn=fn)
        return sp

    def out_flags(sp, required=False):
        sp.add_argument("--out", required=required, help="output directory for artifacts")
        sp.add_argument("--force", action="store_true", help="overwrite existing artifacts")

    def config_flags(sp, required=False):
        sp.add_argument("--config", required=required, help="INI run configuration")
        sp.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                        help="override a configuration value (repeatable)")

    sp = add("synth", cmd_synth, "write a synthetic corpus")
    sp.add_argument("kind", choices=["logs", "items"], help="log records or product items with histories")
    sp.add_argument("--n", type=int, default=500, help="number of log records (default 500)")
    sp.add_argument("--n-items", type=int, default=600, help="number of items (default 600)")
    sp.add_argument("--n-users", type=int, default=200, help="number of users (default 200)")
    sp.add_argument("--seed", type=int, default=0, help="generator seed (default 0)")
    out_flags(sp, required=True)

    sp = add("build-vocab", cmd_build_vocab, "build a vocabulary file from a JSONL corpus")
    sp.add_argument("corpus", help="JSONL corpus")
    sp.add_argument("--min-freq", type=int, default=1, help="drop tokens rarer than this (default 1)")
    out_flags(sp, required=True)

    sp = add("train", cmd_train, "train a model and write checkpoint and metrics")
    config_flags(sp, required=True)
    sp.add_argument("--mode", choices=list(MODE_NAMES), default="hlog", help="model variant (default hlog)")
    sp.add_argument("--data", help="corpus path (overrides [data] corpus)")
    sp.add_argument("--epochs", type=int, help="number of epochs (overrides [train] epochs)")
    sp.add_argument("--wallclock", action="store_true", help="record elapsed seconds in the metrics")
    out_flags(sp)

    sp = add("eval-mlm", cmd_eval_mlm, "masked-token loss of a checkpoint on a corpus")
    sp.add_argument("--ckpt", required=True, help="checkpoint file")
    sp.add_argument("--data", required=True, help="JSONL corpus")
    sp.add_argument("--mask-seed", type=int, default=1234, help="mask seed (default 1234)")
    sp.add_argument("--mask-rate", type=float, default=0.2, help="mask rate (default 0.2)")
    out_flags(sp)

    sp = add("gen-fake", cmd_gen_fake, "write a corpus with mismatched key/value pairs")
    sp.add_argument("--data", required=True, help="JSONL corpus of real records")
    sp.add_argument("--p", type=float, help="per-leaf mismatch probability (default 0.2)")
    sp.add_argument("--seed", type=int, help="seed (default 0)")
    config_flags(sp)
    sp.add_argument("--out", help="output directory (default: beside the source)")
    sp.add_argument("--force", action="store_true", help="overwrite existing artifacts")

    sp = add("detect", cmd_detect, "detection report for real and fake corpora")
    sp.add_argument("--ckpt", required=True, help="checkpoint file")
    sp.add_argument("--real", required=True, help="JSONL corpus of real records")
    sp.add_argument("--fake", required=True, help="JSONL corpus of fake records")
    sp.add_argument("--T", help="candidate sizes (default 1,5,10,20,50)")
    sp.add_argument("--classify-T", type=int, help="candidate size used for thresholds (default 10)")
    sp.add_argument("--alpha-grid", help="thresholds to sweep (default 0.0,0.05,...,1.0)")
    sp.add_argument("--mask-seed", type=int, help="mask seed (default 1234)")
    sp.add_argument("--mask-rate", type=float, help="mask rate (default 0.2)")
    config_flags(sp)
    out_flags(sp, required=True)

    sp = add("export-embeddings", cmd_export_embeddings, "write record summary vectors as CSV")
    sp.add_argument("--ckpt", required=True, help="checkpoint file")
    sp.add_argument("--data", required=True, help="JSONL corpus")
    sp.add_argument("--label", default="real", help="label for --data rows (default real)")
    sp.add_argument("--fake", help="optional JSONL corpus labelled fake")
    sp.add_argument("--mask-seed", type=int, default=1234, help="mask seed (default 1234)")
    out_flags(sp, required=True)

    sp = add("pca", cmd_pca, "project an embeddings CSV onto its principal components")
    sp.add_argument("--embeddings", required=True, help="CSV from export-embeddings")
    sp.add_argument("--dims", type=int, default=2, help="output dimensions (default 2)")
    out_flags(sp, required=True)

    sp = add("classify", cmd_classify, "linear probe on embeddings")
    sp.add_argument("--embeddings", required=True, help="CSV from export-embeddings")
    sp.add_argument("--labels", required=True, help="CSV with record_id,label")
    sp.add_argument("--epochs", type=int, default=300, help="probe training epochs (default 300)")
    sp.add_argument("--seed", type=int, default=0, help="split and init seed (default 0)")
    out_flags(sp)

    sp = add("recommend", cmd_recommend, "precision@K of embedding-based recommendation")
    sp.add_argument("--embeddings", required=True, help="item CSV from export-embeddings")
    sp.add_argument("--histories", required=True, help="JSON list of per-user item record ids")
    sp.add_argument("--k-list", default="1,3,5,8,10", help="cutoffs (default 1,3,5,8,10)")
    sp.add_argument("--seed", type=int, default=0, help="negative sampling seed (default 0)")
    out_flags(sp)

    sp = add("param-count", cmd_param_count, "closed-form parameter counts")
    config_flags(sp, required=True)
    sp.add_argument("--vocab-size", type=int, help="vocabulary size (default: built from [data] corpus)")

    sp = add("mem-report", cmd_mem_report, "attention memory of hierarchical vs flat encoding")
    config_flags(sp)
    sp.add_argument("--data", help="JSONL corpus")
    sp.add_argument("--segment-lengths", help="comma-separated segment lengths instead of --data")
    sp.add_argument("--tokens", type=int, help="flat token count for --segment-lengths (default: their sum)")
    sp.add_argument("--summary-slots", type=int, help="summary slots k (default from config, else 10)")
    sp.add_argument("--window", type=int, help="flat window (default from config, else all tokens)")
    out_flags(sp)

    sp = add("gradcheck", cmd_gradcheck, "finite-difference gradient check in double precision")
    config_flags(sp)
    sp.add_argument("--probes", type=int, default=50, help="number of probed entries (default 50)")
    sp.add_argument("--seed", type=int, default=0, help="seed (default 0)")
    sp.add_argument("--mode", choices=list(MODE_NAMES), default="hlog", help="model variant (default hlog)")
    sp.add_argument("--init-std", type=float, default=0.3, help="parameter scale at the probe point (default 0.3)")
    sp.add_argument("--tol", type=float, default=1e-4, help="maximum relative error (default 1e-4)")
    out_flags(sp)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    torch.set_num_threads(1)   # bit-reproducible reductions
    try:
        args.fn(args)
    except Exception as exc:  # noqa: BLE001 - every failure becomes an error document
        code = _error_code(exc)
        if code == 1:
            log.debug("unexpected failure", exc_info=True)
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc), "exit_code": code}) + "\n")
        return code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
