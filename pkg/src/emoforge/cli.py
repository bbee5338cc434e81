"""Command-line driver for the full pipeline.

Subcommands: preprocess, balance, train, tune-thresholds, evaluate, predict,
report. Settings come from an INI config file (--config) and individual
flags; a flag always beats the file. Every delimited output file starts with
a comment header recording the resolved-config hash, the seed, and the format
version, so artifacts can be traced back to the run that made them.

Exit codes: 0 success, 1 usage errors, 2 data errors (malformed corpus,
missing file, bad checkpoint), 3 numerical failures.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import os
import sys

import numpy as np

from . import augment, corpus, embeddings, evaluate, figures, netcore, trainer
from .errors import DataError, NumericError, UsageError

FORMAT_VERSION = 1

_CONFIG_DEFAULTS = {
    "paths": {
        "labels": "", "vectors": "", "output_dir": "out",
        "train": "", "val": "", "test": "",
    },
    "model": {
        "seq_len": "30", "embed_dim": "300", "conv_filters": "64",
        "conv_kernel": "5", "pool_size": "2", "lstm_units": "128",
        "dense_units": "128", "dropout_rate": "0.5", "use_attention": "true",
    },
    "training": {
        "lr": "0.001", "beta1": "0.9", "beta2": "0.999", "epsilon": "1e-7",
        "batch_size": "256", "max_epochs": "34", "patience": "5",
        "precision": "full", "loss_scale": "1024",
    },
    "balance": {
        "target": "", "max_duplication_factor": "1000", "weak": "",
        "votes": "", "cutoff": "0.5", "alignment_threshold": "0.7",
    },
    "thresholds": {"start": "0.05", "stop": "0.95", "step": "0.05"},
    "run": {"seed": "42", "top_words": "50"},
}


class RunConfig:
    """INI settings merged with CLI overrides; hashable once resolved."""

    def __init__(self, path=None):
        self._cp = configparser.ConfigParser()
        self._cp.read_dict(_CONFIG_DEFAULTS)
        if path is not None:
            if not os.path.exists(path):
                raise DataError(f"config file not found: {path}")
            try:
                self._cp.read(path, encoding="utf-8")
            except configparser.Error as exc:
                raise UsageError(f"unreadable config file: {exc}") from None

    def override(self, section: str, key: str, value):
        if value is not None:
            if not self._cp.has_section(section):
                self._cp.add_section(section)
            self._cp.set(section, key, str(value))

    def get(self, section: str, key: str) -> str:
        try:
            return self._cp.get(section, key)
        except (configparser.NoSectionError, configparser.NoOptionError):
            raise UsageError(f"missing config key {section}.{key}") from None

    def require(self, section: str, key: str) -> str:
        value = self.get(section, key).strip()
        if not value:
            raise UsageError(f"missing config key {section}.{key}")
        return value

    def optional(self, section: str, key: str) -> str | None:
        value = self.get(section, key).strip()
        return value or None

    def getint(self, section: str, key: str) -> int:
        raw = self.get(section, key)
        try:
            return int(raw)
        except ValueError:
            raise UsageError(f"bad integer for {section}.{key}: {raw!r}") from None

    def getfloat(self, section: str, key: str) -> float:
        raw = self.get(section, key)
        try:
            return float(raw)
        except ValueError:
            raise UsageError(f"bad number for {section}.{key}: {raw!r}") from None

    def getbool(self, section: str, key: str) -> bool:
        raw = self.get(section, key)
        try:
            return self._cp.getboolean(section, key)
        except ValueError:
            raise UsageError(f"bad boolean for {section}.{key}: {raw!r}") from None

    def config_hash(self) -> str:
        lines = []
        for section in sorted(self._cp.sections()):
            for key, value in sorted(self._cp.items(section)):
                lines.append(f"{section}.{key}={value}")
        digest = hashlib.sha256("\n".join(lines).encode("utf-8")).hexdigest()
        return digest[:12]

    def header(self) -> str:
        seed = self.getint("run", "seed")
        return f"# emoforge format={FORMAT_VERSION} config={self.config_hash()} seed={seed}"

    def model_config(self) -> netcore.ModelConfig:
        return netcore.ModelConfig(
            seq_len=self.getint("model", "seq_len"),
            embed_dim=self.getint("model", "embed_dim"),
            conv_filters=self.getint("model", "conv_filters"),
            conv_kernel=self.getint("model", "conv_kernel"),
            pool_size=self.getint("model", "pool_size"),
            lstm_units=self.getint("model", "lstm_units"),
            dense_units=self.getint("model", "dense_units"),
            dropout_rate=self.getfloat("model", "dropout_rate"),
            num_labels=corpus.NUM_LABELS,
            use_attention=self.getbool("model", "use_attention"),
        )

    def training_config(self) -> trainer.TrainingConfig:
        precision = self.get("training", "precision").strip()
        if precision not in ("full", "mixed"):
            raise UsageError(f"bad value for training.precision: {precision!r}")
        return trainer.TrainingConfig(
            lr=self.getfloat("training", "lr"),
            beta1=self.getfloat("training", "beta1"),
            beta2=self.getfloat("training", "beta2"),
            epsilon=self.getfloat("training", "epsilon"),
            batch_size=self.getint("training", "batch_size"),
            max_epochs=self.getint("training", "max_epochs"),
            patience=self.getint("training", "patience"),
            seed=self.getint("run", "seed"),
            precision=precision,
            loss_scale=self.getfloat("training", "loss_scale"),
        )


def _log(msg: str):
    print(f"[emoforge] {msg}")


def _load_labels(cfg: RunConfig) -> corpus.LabelVocabulary:
    path = cfg.optional("paths", "labels")
    if path:
        return corpus.LabelVocabulary.from_file(path)
    return corpus.LabelVocabulary.goemotions()


def _output_dir(cfg: RunConfig) -> str:
    out = cfg.require("paths", "output_dir")
    os.makedirs(out, exist_ok=True)
    return out


def _meta(cfg: RunConfig) -> dict:
    return {"format": FORMAT_VERSION, "config": cfg.config_hash(),
            "seed": cfg.getint("run", "seed")}


def _write_label_distribution(path, splits: dict, vocab, header):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(header + "\n")
        fh.write("split,label,name,count\n")
        for split, counts in splits.items():
            for j, count in enumerate(counts):
                fh.write(f"{split},{j},{vocab.names[j]},{int(count)}\n")


def _read_label_distribution(path):
    splits: dict[str, np.ndarray] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#") or line.startswith("split,"):
                continue
            split, j, _, count = line.split(",")
            splits.setdefault(split, np.zeros(corpus.NUM_LABELS, dtype=np.int64))
            splits[split][int(j)] = int(count)
    return splits


# ------------------------------------------------------------- subcommands

def cmd_preprocess(cfg: RunConfig, args) -> int:
    vocab = _load_labels(cfg)
    out = _output_dir(cfg)
    train = corpus.load_dataset(cfg.require("paths", "train"), vocab)
    _log(f"loaded {len(train)} training samples")
    normalized = [corpus.Sample(corpus.normalize_text(s.text), s.labels, s.meta)
                  for s in train]
    tok = corpus.fit_tokenizer(normalized)
    _log(f"tokenizer fitted on train split only, vocab_size={tok.vocab_size}")
    corpus.save_tokenizer(tok, os.path.join(out, "tokenizer.json"), _meta(cfg))

    distributions = {}
    for split in ("train", "val", "test"):
        path = cfg.optional("paths", split)
        if split == "train":
            samples = normalized
        elif path:
            raw = corpus.load_dataset(path, vocab)
            samples = [corpus.Sample(corpus.normalize_text(s.text), s.labels, s.meta)
                       for s in raw]
        else:
            continue
        ds = corpus.encode(samples, tok, vocab, split=split)
        corpus.save_encoded(ds, os.path.join(out, f"{split}.npz"), _meta(cfg))
        distributions[split] = corpus.label_distribution(ds)
        _log(f"encoded {split}: {len(ds)} rows -> {split}.npz")

    _write_label_distribution(os.path.join(out, "label_distribution.csv"),
                              distributions, vocab, cfg.header())
    k = cfg.getint("run", "top_words")
    with open(os.path.join(out, "top_words.csv"), "w", encoding="utf-8", newline="") as fh:
        fh.write(cfg.header() + "\n")
        fh.write("rank,token,count\n")
        for rank, (token, count) in enumerate(corpus.top_k_words(normalized, k), start=1):
            fh.write(f"{rank},{token},{count}\n")
    _log(f"wrote label_distribution.csv and top_words.csv to {out}")
    return 0


def cmd_balance(cfg: RunConfig, args) -> int:
    vocab = _load_labels(cfg)
    out = _output_dir(cfg)
    train = corpus.load_dataset(cfg.require("paths", "train"), vocab)
    _log(f"loaded {len(train)} training samples")

    weak_path = cfg.optional("balance", "weak")
    if weak_path:
        weak = augment.read_weak_labeled_csv(weak_path, cfg.getfloat("balance", "cutoff"))
        votes_path = cfg.optional("balance", "votes")
        votes = augment.read_votes_csv(votes_path) if votes_path else None
        accepted = augment.resolve_weak_samples(
            weak, votes, cfg.getfloat("balance", "alignment_threshold"))
        _log(f"weak supervision: {len(weak)} candidates, {len(accepted)} accepted")
        train = train + accepted

    target_raw = cfg.optional("balance", "target")
    bal_cfg = augment.BalanceConfig(
        target=int(target_raw) if target_raw else None,
        seed=cfg.getint("run", "seed"),
        max_duplication_factor=cfg.getint("balance", "max_duplication_factor"),
    )
    before = np.zeros(len(vocab), dtype=np.int64)
    for s in train:
        for j in s.labels:
            before[j] += 1
    balanced = augment.oversample_samples(train, bal_cfg, len(vocab))
    after = np.zeros(len(vocab), dtype=np.int64)
    for s in balanced:
        for j in s.labels:
            after[j] += 1

    out_tsv = os.path.join(out, "balanced_train.tsv")
    corpus.save_dataset(balanced, out_tsv, cfg.header())
    with open(os.path.join(out, "balance_summary.csv"), "w", encoding="utf-8",
              newline="") as fh:
        fh.write(cfg.header() + "\n")
        fh.write("label,name,before,after\n")
        for j in range(len(vocab)):
            fh.write(f"{j},{vocab.names[j]},{before[j]},{after[j]}\n")
    _log(f"balanced {len(train)} -> {len(balanced)} samples "
         f"(min label count {before.min()} -> {after.min()})")
    _log(f"wrote {out_tsv}")
    return 0


def _load_split(out: str, split: str) -> corpus.EncodedDataset:
    path = os.path.join(out, f"{split}.npz")
    if not os.path.exists(path):
        raise DataError(f"encoded split not found: {path} (run preprocess first)")
    return corpus.load_encoded(path)


def _load_tok(out: str) -> corpus.TokenizerState:
    path = os.path.join(out, "tokenizer.json")
    if not os.path.exists(path):
        raise DataError(f"tokenizer not found: {path} (run preprocess first)")
    return corpus.load_tokenizer(path)


def cmd_train(cfg: RunConfig, args) -> int:
    out = _output_dir(cfg)
    tok = _load_tok(out)
    train_ds = _load_split(out, "train")
    val_ds = _load_split(out, "val")
    model_cfg = cfg.model_config()

    vectors_path = cfg.optional("paths", "vectors")
    if vectors_path:
        vectors = embeddings.load_vec(vectors_path, expected_dim=model_cfg.embed_dim)
        matrix = embeddings.build_matrix(vectors, tok, model_cfg.embed_dim,
                                         seed=cfg.getint("run", "seed"))
        _log(f"embedding matrix from {vectors_path}: "
             f"{sum(t in vectors for t in tok.word_index)}/{len(tok.word_index)} tokens covered")
        params = netcore.init_params(model_cfg, embedding=matrix,
                                     seed=cfg.getint("run", "seed"))
    else:
        _log("no pretrained vectors configured; using a seeded random table")
        params = netcore.init_params(model_cfg, vocab_size=tok.vocab_size,
                                     seed=cfg.getint("run", "seed"))

    total, trainable, frozen = netcore.count_params(params)
    _log(f"parameters: total {total:,} trainable {trainable:,} frozen {frozen:,}")
    train_cfg = cfg.training_config()
    _log(f"training: precision={train_cfg.precision} batch={train_cfg.batch_size} "
         f"max_epochs={train_cfg.max_epochs} patience={train_cfg.patience}")
    best, history = trainer.train(params, model_cfg, train_ds, val_ds, train_cfg,
                                  checkpoint_dir=os.path.join(out, "checkpoints"),
                                  log=_log)
    netcore.save_checkpoint(best, model_cfg, os.path.join(out, "model.ckpt"))
    history.write_csv(os.path.join(out, "history.csv"), cfg.header())
    _log(f"best epoch {history.best_epoch}, stopped after {history.stopped_epoch}")
    _log(f"wrote model.ckpt and history.csv to {out}")
    return 0


def _load_model(cfg: RunConfig, out: str):
    path = os.path.join(out, "model.ckpt")
    if not os.path.exists(path):
        raise DataError(f"checkpoint not found: {path} (run train first)")
    return netcore.load_checkpoint(path)


def cmd_tune_thresholds(cfg: RunConfig, args) -> int:
    out = _output_dir(cfg)
    vocab = _load_labels(cfg)
    params, model_cfg = _load_model(cfg, out)
    val_ds = _load_split(out, "val")
    probs = trainer.predict_probs(params, model_cfg, val_ds.sequences)
    grid = evaluate.threshold_grid(cfg.getfloat("thresholds", "start"),
                                   cfg.getfloat("thresholds", "stop"),
                                   cfg.getfloat("thresholds", "step"))
    tau = evaluate.tune_thresholds(probs, val_ds.labels, grid)
    evaluate.write_thresholds_csv(tau, os.path.join(out, "thresholds.csv"),
                                  list(vocab.names), cfg.header())
    evaluate.write_predictions_csv(probs, os.path.join(out, "val_predictions.csv"),
                                   cfg.header())
    _log(f"tuned thresholds over a {len(grid)}-point grid: "
         f"min {tau.min():.2f} max {tau.max():.2f}")
    _log(f"wrote thresholds.csv and val_predictions.csv to {out}")
    return 0


def _resolve_tau(cfg: RunConfig, args, out: str) -> np.ndarray | float:
    if getattr(args, "threshold", None) is not None:
        return float(args.threshold)
    path = os.path.join(out, "thresholds.csv")
    if os.path.exists(path):
        return evaluate.read_thresholds_csv(path, corpus.NUM_LABELS)
    return evaluate.DEFAULT_THRESHOLD


def cmd_evaluate(cfg: RunConfig, args) -> int:
    out = _output_dir(cfg)
    vocab = _load_labels(cfg)
    test_ds = _load_split(out, getattr(args, "split", None) or "test")
    if getattr(args, "predictions", None):
        probs = evaluate.read_predictions_csv(args.predictions, corpus.NUM_LABELS)
        if probs.shape[0] != len(test_ds):
            raise DataError(
                f"predictions cover {probs.shape[0]} rows, split has {len(test_ds)}"
            )
        _log(f"evaluating stored predictions from {args.predictions}")
    else:
        params, model_cfg = _load_model(cfg, out)
        probs = trainer.predict_probs(params, model_cfg, test_ds.sequences)
        evaluate.write_predictions_csv(
            probs, os.path.join(out, "test_predictions.csv"), cfg.header())
        _log("wrote test_predictions.csv")
    tau = _resolve_tau(cfg, args, out)
    report = evaluate.compute_report(test_ds.labels, probs, tau, list(vocab.names))
    evaluate.write_aggregate_csv(report, os.path.join(out, "aggregate_metrics.csv"),
                                 cfg.header())
    evaluate.write_per_label_csv(report, os.path.join(out, "per_label_metrics.csv"),
                                 cfg.header())
    for name, value in report.aggregate_rows():
        if value is None:
            shown = "n/a"
        elif isinstance(value, int):
            shown = str(value)
        else:
            shown = f"{value:.4f}"
        _log(f"{name}: {shown}")
    if getattr(args, "figure", None):
        figures.per_label_f1_bars(
            np.array([lm.f1 for lm in report.per_label]), list(vocab.names),
            args.figure)
        _log(f"wrote figure {args.figure}")
    _log(f"wrote aggregate_metrics.csv and per_label_metrics.csv to {out}")
    return 0


def cmd_predict(cfg: RunConfig, args) -> int:
    out = _output_dir(cfg)
    vocab = _load_labels(cfg)
    if not args.input:
        raise UsageError("predict needs --input FILE with one text per line")
    params, model_cfg = _load_model(cfg, out)
    tok = _load_tok(out)
    with open(args.input, encoding="utf-8") as fh:
        texts = [line.rstrip("\n") for line in fh if line.strip()]
    if not texts:
        raise DataError(f"no input texts found in {args.input}")
    ids = corpus.encode_texts(texts, tok)
    probs = trainer.predict_probs(params, model_cfg, ids)
    tau = _resolve_tau(cfg, args, out)
    evaluate.write_predictions_csv(probs, os.path.join(out, "predictions.csv"),
                                   cfg.header())
    ranked_path = os.path.join(out, "ranked.tsv")
    with open(ranked_path, "w", encoding="utf-8") as fh:
        fh.write(cfg.header() + "\n")
        fh.write("text\tprimary\tsecondary\ttertiary\tquaternary\n")
        for text, row in zip(texts, probs):
            picks, below = evaluate.rank_sentence_labels(row, tau, k=4)
            cells = [f"{vocab.names[j]}:{p:.4f}" for j, p in picks]
            if below:
                cells[0] += " (below threshold)"
            cells += [""] * (4 - len(cells))
            fh.write("\t".join([text] + cells) + "\n")
    _log(f"predicted {len(texts)} texts -> predictions.csv, ranked.tsv")
    return 0


def cmd_report(cfg: RunConfig, args) -> int:
    out = _output_dir(cfg)
    vocab = _load_labels(cfg)
    names = list(vocab.names)
    rows: list[tuple[str, str]] = []
    made_figures = []

    dist_path = os.path.join(out, "label_distribution.csv")
    if os.path.exists(dist_path):
        splits = _read_label_distribution(dist_path)
        fig = os.path.join(out, "label_distribution.png")
        figures.label_distribution_bars(splits, names, fig)
        made_figures.append(fig)
        for split, counts in splits.items():
            rows.append((f"{split}_rows_with_min_label", str(int(counts.min()))))
            rows.append((f"{split}_rows_with_max_label", str(int(counts.max()))))
    else:
        _log("label_distribution.csv not found; skipping distribution figure")

    hist_path = os.path.join(out, "history.csv")
    if os.path.exists(hist_path):
        hist_rows = []
        best_epoch = 0
        with open(hist_path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line or line.startswith("#") or line.startswith("epoch,"):
                    continue
                parts = line.split(",")
                hist_rows.append((int(parts[0]), float(parts[1]), float(parts[2])))
                best_epoch = int(parts[4])
        fig = os.path.join(out, "training_curves.png")
        figures.loss_curves(hist_rows, best_epoch, fig)
        made_figures.append(fig)
        rows.append(("epochs_run", str(len(hist_rows))))
        rows.append(("best_epoch", str(best_epoch)))
        rows.append(("best_val_loss", f"{min(r[2] for r in hist_rows):.9g}"))
    else:
        _log("history.csv not found; skipping training curves")

    agg_path = os.path.join(out, "aggregate_metrics.csv")
    if os.path.exists(agg_path):
        with open(agg_path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line or line.startswith("#") or line.startswith("metric,"):
                    continue
                k, v = line.split(",")
                rows.append((k, v))

    per_label_path = os.path.join(out, "per_label_metrics.csv")
    if os.path.exists(per_label_path):
        f1 = np.zeros(len(names))
        with open(per_label_path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line or line.startswith("#") or line.startswith("label,"):
                    continue
                parts = line.split(",")
                f1[int(parts[0])] = float(parts[5])
        fig = os.path.join(out, "per_label_f1.png")
        figures.per_label_f1_bars(f1, names, fig)
        made_figures.append(fig)

    val_pred_path = os.path.join(out, "val_predictions.csv")
    if os.path.exists(val_pred_path) and os.path.exists(os.path.join(out, "val.npz")):
        val_ds = _load_split(out, "val")
        probs = evaluate.read_predictions_csv(val_pred_path, corpus.NUM_LABELS)
        grid = evaluate.threshold_grid(cfg.getfloat("thresholds", "start"),
                                       cfg.getfloat("thresholds", "stop"),
                                       cfg.getfloat("thresholds", "step"))
        sweep = np.zeros((len(grid), len(names)))
        yb = val_ds.labels != 0
        for gi, t in enumerate(grid):
            pred = probs >= t
            for j in range(len(names)):
                tp = int((yb[:, j] & pred[:, j]).sum())
                fp = int((~yb[:, j] & pred[:, j]).sum())
                fn = int((yb[:, j] & ~pred[:, j]).sum())
                sweep[gi, j] = 2 * tp / (2 * tp + fp + fn) if 2 * tp + fp + fn else 0.0
        fig = os.path.join(out, "threshold_sweep.png")
        figures.threshold_sweep(grid, sweep, names, fig)
        made_figures.append(fig)

    vectors_path = cfg.optional("paths", "vectors")
    if vectors_path and os.path.exists(vectors_path):
        vectors = embeddings.load_vec(vectors_path)
        try:
            label_vecs = embeddings.label_embedding_vectors(
                names, vectors, cfg.getint("model", "embed_dim"))
            sim = embeddings.cosine_similarity_matrix(label_vecs)
            fig = os.path.join(out, "label_similarity.png")
            figures.similarity_heatmap(sim, names, fig)
            made_figures.append(fig)
        except DataError as exc:
            _log(f"skipping similarity heatmap: {exc}")

    if not rows and not made_figures:
        raise DataError(f"no artifacts found in {out}; nothing to report")
    summary_path = os.path.join(out, "run_summary.csv")
    with open(summary_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(cfg.header() + "\n")
        fh.write("key,value\n")
        for k, v in rows:
            fh.write(f"{k},{v}\n")
    _log(f"wrote run_summary.csv and {len(made_figures)} figures to {out}")
    for fig in made_figures:
        _log(f"  figure: {os.path.basename(fig)}")
    return 0


# ------------------------------------------------------------------ parser

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _add_common(sub):
    sub.add_argument("--config", help="INI config file")
    sub.add_argument("--output-dir", help="artifact directory (beats the file)")
    sub.add_argument("--labels", help="label vocabulary file, one name per line")
    sub.add_argument("--seed", type=int, help="run seed (beats the file)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="emoforge",
                     description="Balanced multi-label emotion classifier pipeline")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("preprocess", help="normalize, fit tokenizer, encode splits")
    _add_common(p)
    p.add_argument("--train", help="training TSV")
    p.add_argument("--val", help="validation TSV")
    p.add_argument("--test", help="test TSV")

    p = subs.add_parser("balance", help="oversample the training split (plus "
                                        "optional weak-label merge)")
    _add_common(p)
    p.add_argument("--train", help="training TSV")
    p.add_argument("--target", type=int, help="per-label target count")
    p.add_argument("--weak", help="weak-labeled CSV text,p0..p27")
    p.add_argument("--votes", help="annotator votes CSV sample_id,annotator_id,labels")

    p = subs.add_parser("train", help="train on encoded splits")
    _add_common(p)
    p.add_argument("--vectors", help="pretrained .vec file")
    p.add_argument("--precision", choices=["full", "mixed"])
    p.add_argument("--epochs", type=int, help="max epochs")
    p.add_argument("--batch-size", type=int)
    p.add_argument("--no-attention", action="store_true",
                   help="replace attention pooling with a temporal average")

    p = subs.add_parser("tune-thresholds", help="grid-search per-label thresholds "
                                                "on the validation split")
    _add_common(p)

    p = subs.add_parser("evaluate", help="metric suite on an encoded split")
    _add_common(p)
    p.add_argument("--split", choices=["train", "val", "test"], default="test")
    p.add_argument("--predictions", help="evaluate a stored predictions CSV "
                                         "instead of running the model")
    p.add_argument("--threshold", type=float, help="single threshold overriding "
                                                   "thresholds.csv")
    p.add_argument("--figure", help="write a per-label F1 chart (.png or .svg)")

    p = subs.add_parser("predict", help="rank labels for raw input texts")
    _add_common(p)
    p.add_argument("--input", help="file with one raw text per line")
    p.add_argument("--threshold", type=float)

    p = subs.add_parser("report", help="summary CSV plus figures from run artifacts")
    _add_common(p)

    return parser


_COMMANDS = {
    "preprocess": cmd_preprocess,
    "balance": cmd_balance,
    "train": cmd_train,
    "tune-thresholds": cmd_tune_thresholds,
    "evaluate": cmd_evaluate,
    "predict": cmd_predict,
    "report": cmd_report,
}


def _apply_overrides(cfg: RunConfig, args):
    mapping = [
        ("output_dir", "paths", "output_dir"),
        ("labels", "paths", "labels"),
        ("train", "paths", "train"),
        ("val", "paths", "val"),
        ("test", "paths", "test"),
        ("vectors", "paths", "vectors"),
        ("seed", "run", "seed"),
        ("precision", "training", "precision"),
        ("epochs", "training", "max_epochs"),
        ("batch_size", "training", "batch_size"),
        ("target", "balance", "target"),
        ("weak", "balance", "weak"),
        ("votes", "balance", "votes"),
    ]
    for attr, section, key in mapping:
        cfg.override(section, key, getattr(args, attr, None))
    if getattr(args, "no_attention", False):
        cfg.override("model", "use_attention", "false")


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = RunConfig(args.config)
        _apply_overrides(cfg, args)
        return _COMMANDS[args.command](cfg, args)
    except UsageError as exc:
        print(f"[emoforge] usage error: {exc}", file=sys.stderr)
        return 1
    except (DataError, OSError) as exc:
        print(f"[emoforge] data error: {exc}", file=sys.stderr)
        return 2
    except (NumericError, FloatingPointError) as exc:
        print(f"[emoforge] numeric error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
