"""Model assembly: configuration, parameter container, initialization, and
the full forward/backward pass through embedding -> conv -> batch norm ->
max pool -> BiLSTM -> attention (or average) pool -> dense head."""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from ..errors import DataError
from . import layers
from .layers import (average_pool, average_pool_backward, attention_backward,
                     attention_pool, batchnorm_backward, batchnorm_forward,
                     bce_grad_logits, bilstm_backward, bilstm_forward,
                     conv1d_backward, conv1d_forward, embed_forward,
                     head_backward, head_forward, maxpool1d_backward,
                     maxpool1d_forward)


@dataclass(frozen=True)
class ModelConfig:
    seq_len: int = 30
    embed_dim: int = 300
    conv_filters: int = 64
    conv_kernel: int = 5
    pool_size: int = 2
    lstm_units: int = 128
    dense_units: int = 128
    dropout_rate: float = 0.5
    num_labels: int = 28
    use_attention: bool = True

    def __post_init__(self):
        if self.conv_len < 1:
            raise DataError(
                f"kernel {self.conv_kernel} too wide for sequence length {self.seq_len}"
            )
        if self.conv_len % self.pool_size:
            raise DataError(
                f"conv output length {self.conv_len} not divisible by pool {self.pool_size}"
            )
        if not 0.0 <= self.dropout_rate < 1.0:
            raise DataError(f"dropout rate must be in [0, 1), got {self.dropout_rate}")

    @property
    def conv_len(self) -> int:
        return self.seq_len - self.conv_kernel + 1

    @property
    def pooled_len(self) -> int:
        return self.conv_len // self.pool_size

    @property
    def context_dim(self) -> int:
        return 2 * self.lstm_units


@dataclass
class ModelParams:
    """All weight tensors. The embedding table and the batch-norm moving
    statistics are frozen; everything else is trainable."""

    embedding: np.ndarray        # (vocab, embed_dim), frozen
    conv_w: np.ndarray           # (K, embed_dim, filters)
    conv_b: np.ndarray           # (filters,)
    bn_gamma: np.ndarray         # (filters,)
    bn_beta: np.ndarray          # (filters,)
    bn_mean: np.ndarray          # (filters,), frozen moving statistic
    bn_var: np.ndarray           # (filters,), frozen moving statistic
    lstm_fwd_w: np.ndarray       # (filters, 4H)
    lstm_fwd_u: np.ndarray       # (H, 4H)
    lstm_fwd_b: np.ndarray       # (4H,)
    lstm_bwd_w: np.ndarray
    lstm_bwd_u: np.ndarray
    lstm_bwd_b: np.ndarray
    dense_w: np.ndarray          # (2H, dense_units)
    dense_b: np.ndarray          # (dense_units,)
    out_w: np.ndarray            # (dense_units, num_labels)
    out_b: np.ndarray            # (num_labels,)
    attn_w: np.ndarray | None = None   # (2H, 1) when attention is enabled
    attn_b: np.ndarray | None = None   # (1,)

    _FROZEN = ("embedding", "bn_mean", "bn_var")

    @property
    def vocab_size(self) -> int:
        return self.embedding.shape[0]

    def all_items(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for f in fields(self):
            v = getattr(self, f.name)
            if v is not None:
                out.append((f.name, v))
        return out

    def trainable_items(self) -> list[tuple[str, np.ndarray]]:
        return [(n, v) for n, v in self.all_items() if n not in self._FROZEN]

    def copy(self) -> "ModelParams":
        kw = {f.name: getattr(self, f.name) for f in fields(self)}
        return ModelParams(**{k: (v.copy() if v is not None else None)
                              for k, v in kw.items()})

    def astype(self, dtype) -> "ModelParams":
        kw = {f.name: getattr(self, f.name) for f in fields(self)}
        return ModelParams(**{k: (v.astype(dtype, order="C") if v is not None else None)
                              for k, v in kw.items()})


def _glorot(rng, shape, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def _orthogonal(rng, rows, cols):
    # QR of a Gaussian draw, signs fixed so the factorization is unique
    big, small = max(rows, cols), min(rows, cols)
    a = rng.standard_normal((big, small))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return np.ascontiguousarray(q)


def init_params(cfg: ModelConfig, vocab_size: int | None = None,
                embedding=None, seed: int = 0) -> ModelParams:
    """Fresh float32 parameters.

    `embedding` is an EmbeddingMatrix (or raw array); when omitted, a random
    uniform table in [-0.05, 0.05] with a zero padding row is generated, which
    is what desk-scale tests use. Conv and dense kernels are Glorot-uniform,
    LSTM kernels Glorot with orthogonal recurrent weights and forget-gate
    bias 1, batch norm starts at identity.
    """
    rng = np.random.default_rng(seed)
    if embedding is not None:
        table = np.asarray(getattr(embedding, "values", embedding), dtype=np.float32)
        if table.ndim != 2 or table.shape[1] != cfg.embed_dim:
            raise DataError(
                f"embedding table shape {table.shape} does not match embed_dim {cfg.embed_dim}"
            )
        table = table.copy()
    else:
        if vocab_size is None:
            raise DataError("init_params needs vocab_size when no embedding is given")
        table = rng.uniform(-0.05, 0.05, size=(vocab_size, cfg.embed_dim)).astype(np.float32)
        table[0] = 0.0

    k, d, f = cfg.conv_kernel, cfg.embed_dim, cfg.conv_filters
    h = cfg.lstm_units
    f32 = lambda a: np.asarray(a, dtype=np.float32)

    def lstm_block(c_in):
        w = f32(_glorot(rng, (c_in, 4 * h), c_in, 4 * h))
        u = f32(_orthogonal(rng, h, 4 * h))
        b = np.zeros(4 * h, dtype=np.float32)
        b[h:2 * h] = 1.0  # forget gate starts open
        return w, u, b

    conv_w = f32(_glorot(rng, (k, d, f), k * d, k * f))
    fwd = lstm_block(f)
    bwd = lstm_block(f)
    attn_w = attn_b = None
    if cfg.use_attention:
        attn_w = f32(_glorot(rng, (cfg.context_dim, 1), cfg.context_dim, 1))
        attn_b = np.zeros(1, dtype=np.float32)
    dense_w = f32(_glorot(rng, (cfg.context_dim, cfg.dense_units),
                          cfg.context_dim, cfg.dense_units))
    out_w = f32(_glorot(rng, (cfg.dense_units, cfg.num_labels),
                        cfg.dense_units, cfg.num_labels))
    return ModelParams(
        embedding=table,
        conv_w=conv_w,
        conv_b=np.zeros(f, dtype=np.float32),
        bn_gamma=np.ones(f, dtype=np.float32),
        bn_beta=np.zeros(f, dtype=np.float32),
        bn_mean=np.zeros(f, dtype=np.float32),
        bn_var=np.ones(f, dtype=np.float32),
        lstm_fwd_w=fwd[0], lstm_fwd_u=fwd[1], lstm_fwd_b=fwd[2],
        lstm_bwd_w=bwd[0], lstm_bwd_u=bwd[1], lstm_bwd_b=bwd[2],
        dense_w=dense_w,
        dense_b=np.zeros(cfg.dense_units, dtype=np.float32),
        out_w=out_w,
        out_b=np.zeros(cfg.num_labels, dtype=np.float32),
        attn_w=attn_w, attn_b=attn_b,
    )


class ForwardCache:
    """Everything the backward pass (and the tests) need from one forward run."""

    def __init__(self, **kw):
        self.__dict__.update(kw)


def _cast(a: np.ndarray, dtype) -> np.ndarray:
    return a if a.dtype == dtype else a.astype(dtype)


def forward(params: ModelParams, cfg: ModelConfig, ids: np.ndarray,
            mode: str = "infer", dtype=np.float32, rng=None,
            dropout_mask=None) -> tuple[np.ndarray, ForwardCache]:
    """Full forward pass; pure (updated moving stats ride in the cache).

    dtype selects the activation storage dtype; parameters are cast on the
    fly so float64 gradient checks and float16 mixed runs share this code.
    """
    if mode not in ("train", "infer"):
        raise DataError(f"unknown mode {mode!r}")
    ids = np.asarray(ids)
    if ids.ndim != 2 or ids.shape[1] != cfg.seq_len:
        raise DataError(f"expected ids of shape (batch, {cfg.seq_len}), got {ids.shape}")
    p = params
    x = embed_forward(ids, p.embedding, dtype=dtype)
    conv_out, conv_win = conv1d_forward(x, _cast(p.conv_w, dtype), _cast(p.conv_b, dtype))
    bn_out, bn_cache, new_mean, new_var = batchnorm_forward(
        conv_out, p.bn_gamma, p.bn_beta, p.bn_mean, p.bn_var, mode)
    pooled, pool_mask = maxpool1d_forward(bn_out, cfg.pool_size)
    fwd = (_cast(p.lstm_fwd_w, dtype), _cast(p.lstm_fwd_u, dtype), _cast(p.lstm_fwd_b, dtype))
    bwd = (_cast(p.lstm_bwd_w, dtype), _cast(p.lstm_bwd_u, dtype), _cast(p.lstm_bwd_b, dtype))
    h, lstm_caches = bilstm_forward(pooled, fwd, bwd)
    if cfg.use_attention:
        if p.attn_w is None:
            raise DataError("config enables attention but parameters have no attention weights")
        context, attn_weights = attention_pool(h, _cast(p.attn_w, dtype), _cast(p.attn_b, dtype))
    else:
        context, attn_weights = average_pool(h), None
    probs, head_cache = head_forward(
        context, _cast(p.dense_w, dtype), _cast(p.dense_b, dtype),
        _cast(p.out_w, dtype), _cast(p.out_b, dtype),
        mode, cfg.dropout_rate, rng=rng, dropout_mask=dropout_mask)
    cache = ForwardCache(
        ids=ids, mode=mode, dtype=dtype,
        x_emb=x, conv_win=conv_win, conv_shape=x.shape,
        bn_cache=bn_cache, bn_shape=conv_out.shape,
        new_bn_mean=new_mean, new_bn_var=new_var,
        pool_mask=pool_mask, pooled=pooled,
        lstm_inputs=(fwd, bwd), lstm_caches=lstm_caches, h=h,
        attention_weights=attn_weights, context=context,
        head_cache=head_cache, probs=probs,
        shapes={
            "embedded": x.shape, "conv": conv_out.shape, "pooled": pooled.shape,
            "bilstm": h.shape, "context": context.shape,
            "dense": head_cache[2].shape, "probs": probs.shape,
        },
    )
    return probs, cache


def loss_forward(params, cfg, ids, y, mode="train", dtype=np.float32,
                 rng=None, dropout_mask=None):
    """Forward pass plus mean binary cross-entropy; returns (loss, cache)."""
    probs, cache = forward(params, cfg, ids, mode=mode, dtype=dtype,
                           rng=rng, dropout_mask=dropout_mask)
    return layers.bce_loss(probs, y), cache


def backward(params: ModelParams, cfg: ModelConfig, cache: ForwardCache,
             y: np.ndarray, loss_scale: float = 1.0) -> dict[str, np.ndarray]:
    """Gradients of the (optionally scaled) loss for every trainable tensor.

    The frozen embedding gets no gradient. With float16 activations the
    returned parameter gradients are float32.
    """
    if cache.mode != "train":
        raise DataError("backward needs a cache from a train-mode forward pass")
    dtype = cache.dtype
    p = params
    dlogits = bce_grad_logits(cache.probs, y, scale=loss_scale).astype(dtype)
    dctx, ddense_w, ddense_b, dout_w, dout_b = head_backward(
        dlogits, cache.head_cache, _cast(p.dense_w, dtype), _cast(p.out_w, dtype),
        cfg.dropout_rate)
    grads = {"dense_w": ddense_w, "dense_b": ddense_b,
             "out_w": dout_w, "out_b": dout_b}
    if cfg.use_attention:
        dh, dattn_w, dattn_b = attention_backward(
            dctx, cache.h, _cast(p.attn_w, dtype), cache.attention_weights)
        grads["attn_w"] = dattn_w
        grads["attn_b"] = dattn_b
    else:
        dh = average_pool_backward(dctx, cfg.pooled_len)
    fwd, bwd = cache.lstm_inputs
    dpooled, gf, gb = bilstm_backward(dh, cache.pooled, fwd, bwd, cache.lstm_caches)
    grads["lstm_fwd_w"], grads["lstm_fwd_u"], grads["lstm_fwd_b"] = gf
    grads["lstm_bwd_w"], grads["lstm_bwd_u"], grads["lstm_bwd_b"] = gb
    dbn = maxpool1d_backward(dpooled, cache.pool_mask, cache.bn_shape)
    dconv, dgamma, dbeta = batchnorm_backward(dbn, cache.bn_cache, p.bn_gamma)
    grads["bn_gamma"], grads["bn_beta"] = dgamma, dbeta
    _, dconv_w, dconv_b = conv1d_backward(dconv, cache.conv_win,
                                          _cast(p.conv_w, dtype),
                                          cache.conv_shape, need_dx=False)
    grads["conv_w"], grads["conv_b"] = dconv_w, dconv_b
    return grads


def expected_param_counts(cfg: ModelConfig, vocab_size: int) -> dict[str, int]:
    """Closed-form per-layer parameter counts for a given vocabulary size."""
    k, d, f = cfg.conv_kernel, cfg.embed_dim, cfg.conv_filters
    h, dd, nl = cfg.lstm_units, cfg.dense_units, cfg.num_labels
    counts = {
        "embedding": vocab_size * d,
        "conv": k * d * f + f,
        "batch_norm": 4 * f,  # gamma, beta, moving mean, moving var
        "bilstm": 2 * (f * 4 * h + h * 4 * h + 4 * h),
        "attention": (cfg.context_dim + 1) if cfg.use_attention else 0,
        "dense": cfg.context_dim * dd + dd,
        "output": dd * nl + nl,
    }
    return counts


def count_params(params: ModelParams) -> tuple[int, int, int]:
    """(total, trainable, frozen) parameter counts measured from the tensors."""
    trainable = sum(v.size for _, v in params.trainable_items())
    frozen = sum(getattr(params, n).size for n in ModelParams._FROZEN)
    return trainable + frozen, trainable, frozen


def layer_param_counts(params: ModelParams) -> dict[str, int]:
    """Per-layer counts measured from the tensors (same keys as the formulas)."""
    p = params
    attn = (p.attn_w.size + p.attn_b.size) if p.attn_w is not None else 0
    return {
        "embedding": p.embedding.size,
        "conv": p.conv_w.size + p.conv_b.size,
        "batch_norm": p.bn_gamma.size + p.bn_beta.size + p.bn_mean.size + p.bn_var.size,
        "bilstm": sum(getattr(p, n).size for n in (
            "lstm_fwd_w", "lstm_fwd_u", "lstm_fwd_b",
            "lstm_bwd_w", "lstm_bwd_u", "lstm_bwd_b")),
        "attention": attn,
        "dense": p.dense_w.size + p.dense_b.size,
        "output": p.out_w.size + p.out_b.size,
    }
