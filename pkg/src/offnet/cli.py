"""``offnet`` command line: preprocess, augment, train, predict, evaluate.

Options can also come from an INI-style file passed with ``--config``:
section names are free-form, keys are option names with dashes or
underscores (``batch_size = 64``). Command-line flags win over the file.

Exit codes: 0 success, 1 unexpected failure, 2 configuration error,
3 data error, 4 numeric failure.
"""
from __future__ import annotations

import argparse
import configparser
import json
import logging
import os
import sys
from dataclasses import asdict

import numpy as np

from .core import RngStream
from .data_eval import DataError, Dataset, atomic_write_text, get_schema, load_tsv, score, stratified_split, write_tsv
from .embed_aug import EmbeddingError, augment_corpus, build_synonym_table, expand, load_embeddings
from .models import Ensemble, EnsembleWeights, ModelSpec, build_model, decide
from .optim import CheckpointError, NumericError, TrainConfig, load_checkpoint, save_checkpoint, train
from .pipeline import contextual_dataset, encode_dataset, token_lists
from .textprep import LANGUAGES, CleanConfig, Vocab, clean_text

log = logging.getLogger("offnet")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3, 4


class ConfigError(Exception):
    pass


DEFAULTS = {
    "task": "A",
    "language": "english",
    "seed": 0,
    "max_len": 60,
    "epochs": 20,
    "batch_size": 128,
    "lr": 0.01,
    "l2": 0.01,
    "patience": 3,
    "lr_factor": 0.5,
    "min_lr": 1e-5,
    "optimizer": "amsgrad",
    "w_bigru": 0.6,
    "w_cnn": 0.4,
    "val_fraction": 0.2,
    "top_n": 1000,
    "min_cos": 0.7,
    "policy": "replace_all",
    "max_per_tweet": 1,
    "arch": "ensemble",
    "unidirectional_gru": False,
    "unlabeled": False,
}

TYPES = {
    "seed": int, "max_len": int, "epochs": int, "batch_size": int, "patience": int, "top_n": int,
    "max_per_tweet": int, "lr": float, "l2": float, "lr_factor": float, "min_lr": float,
    "w_bigru": float, "w_cnn": float, "val_fraction": float, "min_cos": float,
}
BOOLS = {"unidirectional_gru", "unlabeled"}


def _read_config(path):
    if path is None:
        return {}
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    cp = configparser.ConfigParser()
    try:
        cp.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    out = {}
    for section in cp.sections():
        for key, value in cp.items(section):
            key = key.replace("-", "_")
            try:
                if key in BOOLS:
                    out[key] = cp.getboolean(section, key)
                else:
                    out[key] = TYPES.get(key, str)(value)
            except ValueError:
                raise ConfigError(f"{path}: [{section}] {key} = {value!r} is not a valid value") from None
    return out


class Options:
    """Resolved options: flag, then config file, then built-in default."""

    def __init__(self, args, file_values):
        self._args = vars(args)
        self._file = file_values

    def __getattr__(self, name):
        v = self._args.get(name)
        if v is not None:
            return v
        if name in self._file:
            return self._file[name]
        return DEFAULTS.get(name)

    def require(self, name, why):
        v = getattr(self, name)
        if v is None:
            raise ConfigError(f"--{name.replace('_', '-')} is required {why}")
        return v

    def path_in(self, name, why):
        p = self.require(name, why)
        if not os.path.exists(p):
            raise ConfigError(f"--{name.replace('_', '-')}: file not found: {p}")
        return p


class Outputs:
    """Tracks files a command writes and removes them all if it fails."""

    def __init__(self):
        self.paths = []

    def add(self, path):
        if path is not None:
            self.paths.append(path)
        return path

    def rollback(self):
        for p in self.paths:
            if os.path.exists(p):
                os.remove(p)


def _clean_config(opts):
    if opts.language not in LANGUAGES:
        raise ConfigError(f"unknown language {opts.language!r}; expected one of {', '.join(LANGUAGES)}")
    return CleanConfig(opts.language)


def _schema(opts):
    try:
        return get_schema(opts.task)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


# ---------------------------------------------------------------------------
# commands


def cmd_preprocess(opts, outs):
    schema = _schema(opts)
    cfg = _clean_config(opts)
    ds = load_tsv(opts.path_in("input", "for preprocess"), schema, labeled=not opts.unlabeled)
    out = opts.require("output", "for preprocess")
    cleaned = ds.with_records(type(r)(r.id, clean_text(r.text, cfg), r.label) for r in ds.records)
    write_tsv(cleaned, outs.add(out))
    print(f"cleaned {len(cleaned)} records -> {out}")


def cmd_augment(opts, outs):
    schema = _schema(opts)
    cfg = _clean_config(opts)
    ds = load_tsv(opts.path_in("input", "for augment"), schema)
    table = load_embeddings(opts.path_in("embeddings", "for augment"))
    out = opts.require("output", "for augment")
    ds = ds.with_records(type(r)(r.id, clean_text(r.text, cfg), r.label) for r in ds.records)
    syn = build_synonym_table(ds, table, opts.top_n, opts.min_cos)
    policy = opts.policy
    if policy not in ("replace_all", "per_tweet_max"):
        raise ConfigError(f"--policy must be replace_all or per_tweet_max, got {policy!r}")
    new = augment_corpus(ds, syn, policy, opts.max_per_tweet, RngStream(opts.seed, 4))
    write_tsv(expand(ds, new), outs.add(out))
    syn_out = opts.synonyms_out or out + ".synonyms.tsv"
    syn.save(outs.add(syn_out))
    print(f"{len(syn)} synonym pairs; {len(new)} synthetic records added -> {out}")


def _train_config(opts):
    try:
        return TrainConfig(
            epochs=opts.epochs, batch_size=opts.batch_size, lr=opts.lr, l2_lambda=opts.l2,
            patience=opts.patience, lr_reduction_factor=opts.lr_factor, min_lr=opts.min_lr,
            seed=opts.seed, optimizer=opts.optimizer,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _split(opts, schema):
    train_ds = load_tsv(opts.path_in("train", "for train"), schema)
    if opts.val:
        val_ds = load_tsv(opts.path_in("val", "for train"), schema)
    else:
        train_ds, val_ds = stratified_split(train_ds, opts.val_fraction, RngStream(opts.seed, 5))
    return train_ds, val_ds


def _history_path(base, suffix):
    if base is None:
        return None
    root, ext = os.path.splitext(base)
    return f"{root}.{suffix}{ext or '.csv'}"


def cmd_train(opts, outs):
    schema = _schema(opts)
    cfg = _clean_config(opts)
    arch = opts.arch
    if arch not in ("keis_bigru", "keis_cnn", "ensemble", "bert_bi_head"):
        raise ConfigError(f"unknown --arch {arch!r}")
    ckpt = opts.require("checkpoint", "for train")
    config = _train_config(opts)
    if arch == "bert_bi_head":
        ctx = opts.path_in("contextual", "for the bert_bi_head architecture")
    else:
        emb_path = opts.path_in("embeddings", f"for the {arch} architecture")
    try:
        weights = EnsembleWeights(opts.w_bigru, opts.w_cnn)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    train_ds, val_ds = _split(opts, schema)
    meta = {"task": schema.task, "language": opts.language}

    if arch == "bert_bi_head":
        tr, va = contextual_dataset(train_ds, ctx), contextual_dataset(val_ds, ctx)
        spec = ModelSpec.bert_bi_head(tr.x.shape[2], schema.head, tr.x.shape[1],
                                      bidirectional_gru=not opts.unidirectional_gru)
        model = build_model(spec, RngStream(opts.seed, 20))
        model, hist = train(model, tr, va, config)
        save_checkpoint(model, outs.add(ckpt), meta)
        if opts.history:
            atomic_write_text(outs.add(opts.history), hist.to_csv())
        _report_training(arch, hist)
        return

    table = load_embeddings(emb_path)
    vocab = Vocab.build(token_lists(train_ds, cfg))
    emb = table.matrix_for(vocab, RngStream(opts.seed, 3))
    tr = encode_dataset(train_ds, vocab, opts.max_len, cfg)
    va = encode_dataset(val_ds, vocab, opts.max_len, cfg)
    meta.update(vocab=vocab.to_list(), max_len=opts.max_len)
    members = ["keis_bigru", "keis_cnn"] if arch == "ensemble" else [arch]
    files = {}
    for i, member in enumerate(members):
        maker = getattr(ModelSpec, member)
        try:
            spec = maker(len(vocab), table.dimension, schema.head, opts.max_len)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        model = build_model(spec, RngStream(opts.seed, 20 + i), emb)
        model, hist = train(model, tr, va, config)
        if arch == "ensemble":
            short = member.split("_")[1]
            path = outs.add(f"{ckpt}.{short}")
            files[short] = os.path.basename(path)
            hpath = _history_path(opts.history, short)
        else:
            path, hpath = outs.add(ckpt), opts.history
        save_checkpoint(model, path, meta)
        if hpath:
            atomic_write_text(outs.add(hpath), hist.to_csv())
        _report_training(member, hist)
    if arch == "ensemble":
        manifest = {"type": "ensemble", **files, **asdict(weights)}
        atomic_write_text(outs.add(ckpt), json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _report_training(name, hist):
    i = hist.best_epoch - 1
    print(f"{name}: {len(hist)} epochs, best epoch {hist.best_epoch} "
          f"(val_loss {hist.val_loss[i]:.4f}, val macro-F1 {hist.val_macro_f1[i]:.4f})")


def load_predictor(path):
    """Model or :class:`Ensemble` plus its metadata from a checkpoint or ensemble manifest."""
    with open(path, "rb") as fh:
        head = fh.read(8)
    if head == b"OFFNETCK":
        return load_checkpoint(path)
    try:
        with open(path, encoding="utf-8") as fh:
            manifest = json.load(fh)
    except (UnicodeDecodeError, json.JSONDecodeError):
        raise CheckpointError(f"{path}: neither a checkpoint nor an ensemble manifest") from None
    if manifest.get("type") != "ensemble":
        raise CheckpointError(f"{path}: unknown manifest type {manifest.get('type')!r}")
    base = os.path.dirname(path)
    bigru, meta = load_checkpoint(os.path.join(base, manifest["bigru"]))
    cnn, meta_cnn = load_checkpoint(os.path.join(base, manifest["cnn"]))
    if meta.get("vocab") != meta_cnn.get("vocab"):
        raise CheckpointError(f"{path}: ensemble members were trained on different vocabularies")
    return Ensemble(bigru, cnn, EnsembleWeights(manifest["w_bigru"], manifest["w_cnn"])), meta


def cmd_predict(opts, outs):
    predictor, meta = load_predictor(opts.path_in("checkpoint", "for predict"))
    schema = get_schema(meta.get("task", opts.task))
    cfg = CleanConfig(meta.get("language", opts.language))
    ds = load_tsv(opts.path_in("input", "for predict"), schema, labeled=not opts.unlabeled)
    out = opts.require("output", "for predict")
    if predictor.spec.token_input:
        data = encode_dataset(ds, Vocab.from_list(meta["vocab"]), meta["max_len"], cfg)
    else:
        data = contextual_dataset(ds, opts.path_in("contextual", "for a bert_bi_head checkpoint"))
    probs = predictor.predict(data.x, data.mask)
    if not np.all(np.isfinite(probs)):
        raise NumericError("non-finite probabilities")
    pred = decide(probs)
    lines = []
    if probs.ndim == 1:
        lines.append("id\tpredicted_label\tprobability")
        for rid, k, p in zip(ds.ids, pred, probs):
            lines.append(f"{rid}\t{schema.labels[k]}\t{float(p)!r}")
    else:
        lines.append("id\tpredicted_label\t" + "\t".join(f"prob_{l}" for l in schema.labels))
        for rid, k, row in zip(ds.ids, pred, probs):
            lines.append(f"{rid}\t{schema.labels[k]}\t" + "\t".join(repr(float(p)) for p in row))
    atomic_write_text(outs.add(out), "\n".join(lines) + "\n")
    print(f"wrote {len(ds)} predictions -> {out}")


def read_predictions(path):
    preds = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip("\n").split("\t")
            if lineno == 1 and parts[0] == "id":
                continue
            if not line.strip():
                continue
            if len(parts) < 2:
                raise DataError(f"{path}:{lineno}: expected id and predicted_label columns")
            preds[parts[0]] = parts[1]
    return preds


def cmd_evaluate(opts, outs):
    schema = _schema(opts)
    preds = read_predictions(opts.path_in("predictions", "for evaluate"))
    gold = load_tsv(opts.path_in("gold", "for evaluate"), schema)
    missing = [i for i in gold.ids if i not in preds]
    if missing:
        raise DataError(f"no prediction for ids {missing[:5]}" + (" ..." if len(missing) > 5 else ""))
    report = score([preds[i] for i in gold.ids], gold.labels, schema)
    if opts.report_json:
        atomic_write_text(outs.add(opts.report_json), report.to_json() + "\n")
    if opts.report_text:
        atomic_write_text(outs.add(opts.report_text), report.to_text())
    print(report.to_text(), end="")


COMMANDS = {
    "preprocess": cmd_preprocess,
    "augment": cmd_augment,
    "train": cmd_train,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
}


def build_parser():
    p = argparse.ArgumentParser(
        prog="offnet",
        description="Offensive-language tweet classification: preprocess, augment, train, predict, evaluate.",
    )
    p.add_argument("--config", help="INI-style file of option defaults")
    p.add_argument("-v", "--verbose", action="store_true", help="log every training epoch")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--task", choices=["A", "B", "C"], help="sub-task label schema (default A)")
        sp.add_argument("--language", choices=LANGUAGES, help="cleaning rules (default english)")
        sp.add_argument("--seed", type=int, help="random seed (default 0)")

    sp = sub.add_parser("preprocess", help="clean tweet text")
    common(sp)
    sp.add_argument("--input")
    sp.add_argument("--output")
    sp.add_argument("--unlabeled", action="store_const", const=True, help="input has no label column")

    sp = sub.add_parser("augment", help="add synonym-substituted copies of training tweets")
    common(sp)
    sp.add_argument("--input")
    sp.add_argument("--embeddings", help="word2vec text file")
    sp.add_argument("--output", help="originals plus synthetic records")
    sp.add_argument("--synonyms-out", help="synonym table TSV (default <output>.synonyms.tsv)")
    sp.add_argument("--top-n", type=int, help="most frequent words considered (default 1000)")
    sp.add_argument("--min-cos", type=float, help="minimum neighbour cosine (default 0.7)")
    sp.add_argument("--policy", choices=["replace_all", "per_tweet_max"], help="default replace_all")
    sp.add_argument("--max-per-tweet", type=int, help="substitutions per tweet for per_tweet_max (default 1)")

    sp = sub.add_parser("train", help="train a model or the two-member ensemble")
    common(sp)
    sp.add_argument("--arch", choices=["keis_bigru", "keis_cnn", "ensemble", "bert_bi_head"],
                    help="default ensemble (BiGRU + CNN)")
    sp.add_argument("--train")
    sp.add_argument("--val", help="validation TSV; without it a stratified split of --train is used")
    sp.add_argument("--val-fraction", type=float, help="held-out share when splitting (default 0.2)")
    sp.add_argument("--embeddings", help="word2vec text file (token-id architectures)")
    sp.add_argument("--contextual", help="contextual-vector .npz (bert_bi_head)")
    sp.add_argument("--checkpoint", help="output checkpoint, or ensemble manifest")
    sp.add_argument("--history", help="per-epoch loss CSV")
    sp.add_argument("--max-len", type=int, help="tokens per tweet (default 60, reference setting)")
    sp.add_argument("--epochs", type=int, help="default 20 (reference setting)")
    sp.add_argument("--batch-size", type=int, help="default 128 (reference setting)")
    sp.add_argument("--lr", type=float, help="default 0.01 (reference AMSGrad setting)")
    sp.add_argument("--l2", type=float, help="kernel L2 coefficient, default 0.01 (reference setting)")
    sp.add_argument("--optimizer", choices=["amsgrad", "adam"], help="default amsgrad (reference setting)")
    sp.add_argument("--patience", type=int, help="early-stopping patience in epochs (default 3)")
    sp.add_argument("--lr-factor", type=float, help="plateau lr multiplier (default 0.5)")
    sp.add_argument("--min-lr", type=float, help="lr floor (default 1e-5)")
    sp.add_argument("--w-bigru", type=float, help="ensemble weight, default 0.6 (reference setting)")
    sp.add_argument("--w-cnn", type=float, help="ensemble weight, default 0.4 (reference setting)")
    sp.add_argument("--unidirectional-gru", action="store_const", const=True,
                    help="bert_bi_head: plain GRU instead of Bi-GRU after the Bi-LSTM")

    sp = sub.add_parser("predict", help="label a TSV with a trained checkpoint")
    common(sp)
    sp.add_argument("--checkpoint")
    sp.add_argument("--input")
    sp.add_argument("--unlabeled", action="store_const", const=True, help="input has no label column")
    sp.add_argument("--contextual", help="contextual-vector .npz (bert_bi_head)")
    sp.add_argument("--output", help="prediction TSV")

    sp = sub.add_parser("evaluate", help="macro-F1 report for a prediction TSV")
    common(sp)
    sp.add_argument("--predictions")
    sp.add_argument("--gold")
    sp.add_argument("--report-json")
    sp.add_argument("--report-text")
    return p


def run(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    outs = Outputs()
    try:
        opts = Options(args, _read_config(args.config))
        COMMANDS[args.command](opts, outs)
        return EXIT_OK
    except ConfigError as exc:
        code, kind = EXIT_CONFIG, "config error"
        err = exc
    except (DataError, EmbeddingError, CheckpointError) as exc:
        code, kind = EXIT_DATA, "data error"
        err = exc
    except NumericError as exc:
        code, kind = EXIT_NUMERIC, "numeric error"
        err = exc
    except (OSError, ValueError, KeyError) as exc:
        code, kind = EXIT_FAIL, "error"
        err = exc
    outs.rollback()
    print(f"offnet {args.command}: {kind}: {err}", file=sys.stderr)
    return code


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
