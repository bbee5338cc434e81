"""Training loop: Adam with bias correction, patience-based early stopping
with best-weight restore, and an optional float16 mixed-precision mode with
dynamic loss scaling.

Mixed precision keeps float32 master weights and optimizer state; each batch
runs forward/backward with float16 activations and a scaled loss, gradients
are unscaled back to float32, and a batch producing non-finite gradients is
skipped while the loss scale is halved. A loss scale driven below 1 means
training cannot proceed at half precision.
"""

from __future__ import annotations

import csv
import os
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import netcore
from .corpus import EncodedDataset
from .errors import DataError, NumericError


@dataclass
class TrainingConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-7
    batch_size: int = 256
    max_epochs: int = 34
    patience: int = 5
    seed: int = 0
    precision: str = "full"      # "full" or "mixed"
    loss_scale: float = 1024.0


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    seconds: float


@dataclass
class TrainingHistory:
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    stopped_epoch: int = 0

    def val_losses(self) -> list[float]:
        return [r.val_loss for r in self.epochs]

    def write_csv(self, path, header: str | None = None):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            if header:
                fh.write(header if header.endswith("\n") else header + "\n")
            writer = csv.writer(fh)
            writer.writerow(["epoch", "train_loss", "val_loss", "seconds",
                             "best_epoch", "stopped_epoch"])
            for r in self.epochs:
                writer.writerow([r.epoch, f"{r.train_loss:.9g}", f"{r.val_loss:.9g}",
                                 f"{r.seconds:.3f}", self.best_epoch, self.stopped_epoch])


class AdamState:
    """First/second moment accumulators for every trainable tensor."""

    def __init__(self, params: netcore.ModelParams):
        self.m = {n: np.zeros_like(v) for n, v in params.trainable_items()}
        self.v = {n: np.zeros_like(v) for n, v in params.trainable_items()}
        self.t = 0


def adam_step(params: netcore.ModelParams, grads: dict, state: AdamState,
              cfg: TrainingConfig):
    """One in-place update; frozen tensors are untouched by construction."""
    state.t += 1
    corr1 = 1.0 - cfg.beta1 ** state.t
    corr2 = 1.0 - cfg.beta2 ** state.t
    for name, theta in params.trainable_items():
        if name not in grads:
            raise DataError(f"missing gradient for {name!r}")
        g = grads[name].astype(theta.dtype, copy=False)
        if g.shape != theta.shape:
            raise DataError(
                f"gradient shape {g.shape} does not match parameter {name!r} {theta.shape}"
            )
        m = state.m[name]
        v = state.v[name]
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * (g * g)
        m_hat = m / corr1
        v_hat = v / corr2
        theta -= cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.epsilon)


class EarlyStopper:
    """Stop after `patience` consecutive epochs without strict improvement."""

    def __init__(self, patience: int):
        if patience < 1:
            raise DataError(f"patience must be at least 1, got {patience}")
        self.patience = patience
        self.best = float("inf")
        self.best_epoch = 0
        self.bad_epochs = 0

    def update(self, epoch: int, val_loss: float) -> tuple[bool, bool]:
        """Returns (improved, should_stop)."""
        if val_loss < self.best:
            self.best = val_loss
            self.best_epoch = epoch
            self.bad_epochs = 0
            return True, False
        self.bad_epochs += 1
        return False, self.bad_epochs >= self.patience


def _batch_slices(n: int, batch_size: int) -> list[slice]:
    """Contiguous batches; a trailing singleton is merged into the previous
    batch because batch norm cannot normalize a single row."""
    edges = list(range(0, n, batch_size)) + [n]
    if len(edges) > 2 and edges[-1] - edges[-2] == 1:
        edges.pop(-2)
    return [slice(a, b) for a, b in zip(edges[:-1], edges[1:])]


def predict_probs(params: netcore.ModelParams, cfg: netcore.ModelConfig,
                  ids: np.ndarray, batch_size: int = 256) -> np.ndarray:
    """Inference probabilities for a matrix of id rows, float32 (n, labels)."""
    chunks = []
    for lo in range(0, ids.shape[0], batch_size):
        probs, _ = netcore.forward(params, cfg, ids[lo:lo + batch_size], mode="infer")
        chunks.append(probs)
    if not chunks:
        return np.zeros((0, cfg.num_labels), dtype=np.float32)
    return np.concatenate(chunks, axis=0)


def evaluate_loss(params: netcore.ModelParams, cfg: netcore.ModelConfig,
                  ds: EncodedDataset, batch_size: int = 256) -> float:
    """Mean binary cross-entropy over a whole split, inference mode."""
    if len(ds) == 0:
        raise DataError("cannot evaluate loss on an empty dataset")
    probs = predict_probs(params, cfg, ds.sequences, batch_size)
    return netcore.bce_loss(probs, ds.labels.astype(np.float32))


def _grads_finite(grads: dict) -> bool:
    return all(np.all(np.isfinite(g)) for g in grads.values())


def train(params: netcore.ModelParams, model_cfg: netcore.ModelConfig,
          train_ds: EncodedDataset, val_ds: EncodedDataset, cfg: TrainingConfig,
          checkpoint_dir=None, val_loss_fn=None, log=None
          ) -> tuple[netcore.ModelParams, TrainingHistory]:
    """Run the full loop and return (best weights, history).

    Epochs are 1-indexed. Per epoch: reshuffle, minibatch updates, full-pass
    validation loss in inference mode, early-stopping bookkeeping. The weights
    returned are a copy from the best validation epoch, not the last one.

    `val_loss_fn(params, epoch) -> float` replaces the real validation pass
    when supplied, which is how the stopping logic is exercised on scripted
    loss curves. `checkpoint_dir` gets one checkpoint per improvement epoch.
    """
    if len(train_ds) < 2:
        raise DataError("training needs at least 2 samples")
    if val_loss_fn is None and len(val_ds) == 0:
        raise DataError("validation split is empty")
    if cfg.batch_size < 2:
        raise DataError("batch size must be at least 2")
    if cfg.precision not in ("full", "mixed"):
        raise DataError(f"unknown precision {cfg.precision!r}")
    mixed = cfg.precision == "mixed"
    dtype = np.float16 if mixed else np.float32
    loss_scale = float(cfg.loss_scale) if mixed else 1.0

    rng = np.random.default_rng(cfg.seed)
    state = AdamState(params)
    stopper = EarlyStopper(cfg.patience)
    best_params = params.copy()
    history = TrainingHistory()
    n = len(train_ds)
    x_all = train_ds.sequences
    y_all = train_ds.labels.astype(np.float32)

    for epoch in range(1, cfg.max_epochs + 1):
        t0 = time.perf_counter()
        perm = rng.permutation(n)
        loss_sum = 0.0
        seen = 0
        for sl in _batch_slices(n, cfg.batch_size):
            idx = perm[sl]
            ids = x_all[idx]
            y = y_all[idx]
            probs, cache = netcore.forward(params, model_cfg, ids, mode="train",
                                           dtype=dtype, rng=rng)
            loss = netcore.bce_loss(probs, y)
            grads = netcore.backward(params, model_cfg, cache, y, loss_scale=loss_scale)
            if mixed:
                with np.errstate(invalid="ignore"):  # inf/nan grads are detected below
                    grads = {k: (g / loss_scale).astype(np.float32)
                             for k, g in grads.items()}
                if not np.isfinite(loss) or not _grads_finite(grads):
                    loss_scale /= 2.0
                    if loss_scale < 1.0:
                        raise NumericError("mixed precision diverged: loss scale exhausted")
                    continue  # skip this update, try the next batch at the lower scale
            params.bn_mean = np.asarray(cache.new_bn_mean, dtype=params.bn_mean.dtype)
            params.bn_var = np.asarray(cache.new_bn_var, dtype=params.bn_var.dtype)
            adam_step(params, grads, state, cfg)
            loss_sum += loss * len(idx)
            seen += len(idx)
        train_loss = loss_sum / seen if seen else float("nan")
        if val_loss_fn is not None:
            val_loss = float(val_loss_fn(params, epoch))
        else:
            val_loss = evaluate_loss(params, model_cfg, val_ds, cfg.batch_size)
        seconds = time.perf_counter() - t0
        history.epochs.append(EpochRecord(epoch, train_loss, val_loss, seconds))
        improved, stop = stopper.update(epoch, val_loss)
        if improved:
            best_params = params.copy()
            if checkpoint_dir is not None:
                os.makedirs(checkpoint_dir, exist_ok=True)
                netcore.save_checkpoint(
                    best_params, model_cfg,
                    os.path.join(checkpoint_dir, f"epoch_{epoch:03d}.ckpt"))
        if log is not None:
            log(f"epoch {epoch:3d}  train_loss {train_loss:.4f}  "
                f"val_loss {val_loss:.4f}  {seconds:.1f}s"
                + ("  *" if improved else ""))
        if stop:
            break

    history.best_epoch = stopper.best_epoch
    history.stopped_epoch = history.epochs[-1].epoch if history.epochs else 0
    return best_params, history


def train_mixed(params, model_cfg, train_ds, val_ds, cfg: TrainingConfig,
                **kw) -> tuple[netcore.ModelParams, TrainingHistory]:
    """train() with precision forced to float16 storage; same contract."""
    return train(params, model_cfg, train_ds, val_ds,
                 replace(cfg, precision="mixed"), **kw)
