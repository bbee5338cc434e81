"""Layer primitives: forward and backward passes for every block of the net.

Everything works on (batch, time, channels) arrays and is written against
three storage dtypes:

  float32  production training and inference
  float64  gradient checking
  float16  mixed-precision storage; matrix products are evaluated in float32
           (NumPy has no fast half-precision BLAS) and rounded back, which
           mirrors fp16 tensor arithmetic with fp32 accumulation

Parameter gradients are always returned in an accumulation dtype (float32 for
float16 storage, otherwise the storage dtype) so the optimizer never sees
half precision. Forward passes are pure: batch-norm returns its updated
moving statistics instead of mutating them.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import DataError

BN_EPS = 1e-3
BN_MOMENTUM = 0.99
BCE_CLAMP = 1e-7


def acc_dtype(x: np.ndarray):
    """Accumulation dtype for gradients flowing out of x's storage dtype."""
    return np.float32 if x.dtype == np.float16 else x.dtype


def _mm(a, b):
    """Matrix product in the storage dtype of `a` (fp16 goes through fp32)."""
    if a.dtype == np.float16:
        return (a.astype(np.float32) @ b.astype(np.float32)).astype(np.float16)
    return a @ b


def _mm_acc(a, b):
    """Matrix product kept in the accumulation dtype (for parameter grads)."""
    if a.dtype == np.float16:
        return a.astype(np.float32) @ b.astype(np.float32)
    return a @ b


def _compute(x: np.ndarray) -> np.ndarray:
    """View of x in its compute dtype (float16 is computed in float32)."""
    return x.astype(np.float32, copy=False) if x.dtype == np.float16 else x


def sigmoid(z: np.ndarray) -> np.ndarray:
    """Logistic function, elementwise. Saturated negatives underflow to an
    exact 0 through exp overflow, which the loss clamp absorbs."""
    zc = _compute(np.asarray(z))
    with np.errstate(over="ignore"):
        out = 1.0 / (1.0 + np.exp(-zc))
    return out.astype(z.dtype, copy=False)


# ---------------------------------------------------------------- embedding

def embed_forward(ids: np.ndarray, table: np.ndarray, dtype=None) -> np.ndarray:
    """Look up id rows; (B, T) int -> (B, T, dim)."""
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise DataError(
            f"token id out of range for vocabulary of {table.shape[0]}"
        )
    out = table[ids]
    if dtype is not None and out.dtype != dtype:
        out = out.astype(dtype)
    return out


# ------------------------------------------------------------- convolution

def conv1d_forward(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray):
    """Valid 1-d convolution over time. (B,T,C) x (K,C,F) -> (B,T-K+1,F).

    Returns (out, windows) where windows is the flattened im2col matrix kept
    for the backward pass.
    """
    b, t, c = x.shape
    k, ck, f = kernel.shape
    if ck != c:
        raise DataError(f"kernel expects {ck} input channels, got {c}")
    if t < k:
        raise DataError(f"sequence length {t} shorter than kernel {k}")
    t_out = t - k + 1
    win = sliding_window_view(x, k, axis=1)           # (B, t_out, C, K)
    win = np.ascontiguousarray(win.transpose(0, 1, 3, 2)).reshape(b * t_out, k * c)
    comp = acc_dtype(x)
    out = _compute(win) @ kernel.reshape(k * c, f).astype(comp, copy=False)
    out += bias.astype(comp, copy=False)
    return out.reshape(b, t_out, f).astype(x.dtype, copy=False), win


def conv1d_backward(dout: np.ndarray, win: np.ndarray, kernel: np.ndarray,
                    in_shape: tuple, need_dx: bool = True):
    b, t, c = in_shape
    k, _, f = kernel.shape
    t_out = t - k + 1
    comp = acc_dtype(dout)
    dmat = _compute(dout.reshape(b * t_out, f))
    dkernel = (_compute(win).T @ dmat).reshape(k, c, f)
    dbias = np.sum(dmat, axis=0, dtype=comp)
    dx = None
    if need_dx:
        kc = kernel.astype(comp, copy=False)
        dx_c = np.zeros(in_shape, dtype=comp)
        for j in range(k):
            dx_c[:, j:j + t_out, :] += (dmat @ kc[j].T).reshape(b, t_out, c)
        dx = dx_c.astype(dout.dtype, copy=False)
    return dx, dkernel, dbias


# -------------------------------------------------- batch norm (+ ReLU out)

def batchnorm_forward(x, gamma, beta, moving_mean, moving_var, mode: str,
                      momentum: float = BN_MOMENTUM, eps: float = BN_EPS):
    """Channelwise batch normalization over (batch, time), affine, then ReLU.

    Training mode normalizes with biased batch statistics and folds them into
    the moving averages; inference mode uses the moving averages as-is.
    Returns (out, cache, new_moving_mean, new_moving_var).
    """
    if mode not in ("train", "infer"):
        raise DataError(f"unknown batch-norm mode {mode!r}")
    comp = np.float32 if x.dtype == np.float16 else x.dtype
    xc = x.astype(comp, copy=False)
    if mode == "train":
        if x.shape[0] < 2:
            raise DataError("batch normalization needs at least 2 samples in train mode")
        mu = xc.mean(axis=(0, 1))
        var = xc.var(axis=(0, 1))  # biased
        new_mean = momentum * moving_mean + (1.0 - momentum) * mu.astype(moving_mean.dtype)
        new_var = momentum * moving_var + (1.0 - momentum) * var.astype(moving_var.dtype)
    else:
        mu = moving_mean.astype(comp)
        var = moving_var.astype(comp)
        new_mean, new_var = moving_mean, moving_var
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (xc - mu) * inv_std
    y = gamma.astype(comp) * xhat + beta.astype(comp)
    out = np.maximum(y, 0.0).astype(x.dtype)
    cache = (xhat.astype(x.dtype), inv_std, y > 0.0)
    return out, cache, new_mean, new_var


def batchnorm_backward(dout: np.ndarray, cache, gamma: np.ndarray):
    """Backward through ReLU, affine, and the batch statistics (train mode)."""
    xhat, inv_std, relu_mask = cache
    comp = acc_dtype(dout)
    dy = _compute(dout) * relu_mask
    xh = xhat.astype(comp, copy=False)
    dgamma = np.sum(dy * xh, axis=(0, 1), dtype=comp)
    dbeta = np.sum(dy, axis=(0, 1), dtype=comp)
    dxhat = dy * gamma.astype(comp)
    n = dout.shape[0] * dout.shape[1]
    s1 = np.sum(dxhat, axis=(0, 1), dtype=comp)
    s2 = np.sum(dxhat * xh, axis=(0, 1), dtype=comp)
    dx = (inv_std / n) * (n * dxhat - s1 - xh * s2)
    return dx.astype(dout.dtype), dgamma, dbeta


# ---------------------------------------------------------------- max pool

def maxpool1d_forward(x: np.ndarray, pool: int = 2):
    """Non-overlapping max over time; ties keep the earlier position."""
    b, t, c = x.shape
    if t % pool:
        raise DataError(f"time length {t} not divisible by pool size {pool}")
    if pool != 2:
        raise DataError("only pool size 2 is supported")
    first, second = x[:, 0::2, :], x[:, 1::2, :]
    take_first = first >= second
    out = np.where(take_first, first, second)
    return out, take_first


def maxpool1d_backward(dout: np.ndarray, take_first: np.ndarray, in_shape: tuple):
    dx = np.zeros(in_shape, dtype=dout.dtype)
    zero = np.zeros((), dtype=dout.dtype)
    dx[:, 0::2, :] = np.where(take_first, dout, zero)
    dx[:, 1::2, :] = np.where(take_first, zero, dout)
    return dx


# -------------------------------------------------------------------- LSTM

def lstm_forward(x: np.ndarray, w: np.ndarray, u: np.ndarray, b: np.ndarray):
    """Single-direction LSTM over (B, T, C); gate layout [input|forget|cell|output].

    Initial hidden and cell states are zero. The input projection for all
    timesteps is hoisted out of the recurrence. Returns (h_seq, cache) with
    h_seq of shape (B, T, H); cached tensors are rounded to the storage dtype.
    """
    bsz, t_len, c_in = x.shape
    h_units = u.shape[0]
    h2, h3 = 2 * h_units, 3 * h_units
    comp = np.float32 if x.dtype == np.float16 else x.dtype
    xc = _compute(x)
    wc, uc, bc = (a.astype(comp, copy=False) for a in (w, u, b))
    zx = (xc.reshape(bsz * t_len, c_in) @ wc).reshape(bsz, t_len, 4 * h_units) + bc
    h = np.zeros((bsz, h_units), dtype=comp)
    c = np.zeros((bsz, h_units), dtype=comp)
    hs = np.empty((t_len, bsz, h_units), dtype=comp)
    gates_i = np.empty_like(hs)
    gates_f = np.empty_like(hs)
    gates_g = np.empty_like(hs)
    gates_o = np.empty_like(hs)
    c_prev = np.empty_like(hs)
    h_prev = np.empty_like(hs)
    tanh_c = np.empty_like(hs)
    with np.errstate(over="ignore"):
        for t in range(t_len):
            z = zx[:, t, :] + h @ uc
            sig_if = 1.0 / (1.0 + np.exp(-z[:, :h2]))
            gi, gf = sig_if[:, :h_units], sig_if[:, h_units:]
            gg = np.tanh(z[:, h2:h3])
            go = 1.0 / (1.0 + np.exp(-z[:, h3:]))
            c_prev[t], h_prev[t] = c, h
            c = gf * c + gi * gg
            tc = np.tanh(c)
            h = go * tc
            gates_i[t], gates_f[t], gates_g[t], gates_o[t] = gi, gf, gg, go
            tanh_c[t] = tc
            hs[t] = h
    h_seq = np.ascontiguousarray(hs.transpose(1, 0, 2)).astype(x.dtype, copy=False)
    cache = tuple(a.astype(x.dtype, copy=False)
                  for a in (gates_i, gates_f, gates_g, gates_o, c_prev, h_prev, tanh_c))
    return h_seq, cache


def lstm_backward(dh_out: np.ndarray, x: np.ndarray, w: np.ndarray,
                  u: np.ndarray, cache):
    """Backpropagation through time; dh_out is the upstream gradient on every
    timestep's hidden state, shape (B, T, H). Only the recurrent coupling
    stays inside the loop; parameter gradients are single matrix products
    over all timesteps at once."""
    bsz, t_len, c_in = x.shape
    h_units = u.shape[0]
    h2, h3 = 2 * h_units, 3 * h_units
    comp = acc_dtype(x)
    gates_i, gates_f, gates_g, gates_o, c_prev, h_prev, tanh_c = (
        a.astype(comp, copy=False) for a in cache)
    dh_c = _compute(dh_out)
    u_t = u.astype(comp, copy=False).T
    dz_all = np.empty((t_len, bsz, 4 * h_units), dtype=comp)
    dh_next = np.zeros((bsz, h_units), dtype=comp)
    dc_next = np.zeros((bsz, h_units), dtype=comp)
    for t in reversed(range(t_len)):
        gi, gf, gg, go = gates_i[t], gates_f[t], gates_g[t], gates_o[t]
        tc = tanh_c[t]
        dh = dh_c[:, t, :] + dh_next
        do = dh * tc
        dc = dc_next + dh * go * (1.0 - tc * tc)
        dc_next = dc * gf
        dz = dz_all[t]
        dz[:, :h_units] = dc * gg * gi * (1.0 - gi)
        dz[:, h_units:h2] = dc * c_prev[t] * gf * (1.0 - gf)
        dz[:, h2:h3] = dc * gi * (1.0 - gg * gg)
        dz[:, h3:] = do * go * (1.0 - go)
        dh_next = dz @ u_t
    dzm = np.ascontiguousarray(dz_all.transpose(1, 0, 2)).reshape(bsz * t_len, -1)
    xm = _compute(x).reshape(bsz * t_len, c_in)
    hm = np.ascontiguousarray(h_prev.transpose(1, 0, 2)).reshape(bsz * t_len, h_units)
    dw = xm.T @ dzm
    du = hm.T @ dzm
    db = dzm.sum(axis=0)
    # dx stays in the accumulation dtype; bilstm_backward sums both directions
    # before rounding back to storage
    dx = (dzm @ w.astype(comp, copy=False).T).reshape(bsz, t_len, c_in)
    return dx, dw, du, db


def bilstm_forward(x: np.ndarray, fwd: tuple, bwd: tuple):
    """Bidirectional wrapper; concatenates [forward; backward] to (B, T, 2H)."""
    h_f, cache_f = lstm_forward(x, *fwd)
    x_rev = x[:, ::-1, :]
    h_b_rev, cache_b = lstm_forward(x_rev, *bwd)
    h = np.concatenate([h_f, h_b_rev[:, ::-1, :]], axis=2)
    return h, (cache_f, cache_b)


def bilstm_backward(dh: np.ndarray, x: np.ndarray, fwd: tuple, bwd: tuple, caches):
    cache_f, cache_b = caches
    h_units = fwd[1].shape[0]
    dh_f = dh[:, :, :h_units]
    dh_b_rev = dh[:, :, h_units:][:, ::-1, :]
    x_rev = x[:, ::-1, :]
    dx_f, dw_f, du_f, db_f = lstm_backward(np.ascontiguousarray(dh_f), x, fwd[0], fwd[1], cache_f)
    dx_b, dw_b, du_b, db_b = lstm_backward(np.ascontiguousarray(dh_b_rev), x_rev,
                                           bwd[0], bwd[1], cache_b)
    dx = (dx_f + dx_b[:, ::-1, :]).astype(x.dtype, copy=False)
    return dx, (dw_f, du_f, db_f), (dw_b, du_b, db_b)


# --------------------------------------------------------------- attention

def attention_pool(h: np.ndarray, w: np.ndarray, b: np.ndarray):
    """Additive scoring of each timestep, softmax over time, weighted sum.

    h (B, T, D), w (D, 1), b (1,) -> context (B, D), weights (B, T).
    """
    bsz, t_len, d = h.shape
    comp = acc_dtype(h)
    hc = _compute(h)
    scores = (hc.reshape(bsz * t_len, d) @ w.astype(comp, copy=False)).reshape(bsz, t_len)
    scores += b.astype(comp, copy=False)
    e = np.exp(scores - scores.max(axis=1, keepdims=True))
    weights = e / e.sum(axis=1, keepdims=True)
    context = (weights[:, :, None] * hc).sum(axis=1)
    return context.astype(h.dtype, copy=False), weights.astype(h.dtype, copy=False)


def attention_backward(dctx: np.ndarray, h: np.ndarray, w: np.ndarray,
                       weights: np.ndarray):
    bsz, t_len, d = h.shape
    comp = acc_dtype(h)
    hc, wt, dc = _compute(h), _compute(weights), _compute(dctx)
    da = (dc[:, None, :] * hc).sum(axis=2)
    dh = wt[:, :, None] * dc[:, None, :]
    ds = wt * (da - (wt * da).sum(axis=1, keepdims=True))
    dw = hc.reshape(bsz * t_len, d).T @ ds.reshape(bsz * t_len, 1)
    db = np.sum(ds, dtype=comp).reshape(1)
    dh += ds[:, :, None] * w[:, 0].astype(comp, copy=False)
    return dh.astype(h.dtype, copy=False), dw, db


def average_pool(h: np.ndarray) -> np.ndarray:
    """Uniform mean over timesteps; the no-attention ablation path."""
    return _compute(h).mean(axis=1).astype(h.dtype, copy=False)


def average_pool_backward(dctx: np.ndarray, t_len: int) -> np.ndarray:
    spread = np.repeat((_compute(dctx) / t_len)[:, None, :], t_len, axis=1)
    return spread.astype(dctx.dtype, copy=False)


# ------------------------------------------------------------ dense + head

def head_forward(v: np.ndarray, dense_w, dense_b, out_w, out_b, mode: str,
                 dropout_rate: float = 0.5, rng=None, dropout_mask=None):
    """Dense+ReLU, inverted dropout (train only), dense+sigmoid.

    A dropout mask may be passed explicitly (gradient checking); otherwise it
    is drawn from rng in train mode.
    """
    pre = _mm(v, dense_w) + dense_b.astype(v.dtype)
    hidden = np.maximum(pre, 0.0)
    if mode == "train":
        if dropout_mask is None:
            if rng is None:
                raise DataError("train-mode head needs an rng or an explicit dropout mask")
            dropout_mask = rng.random(hidden.shape) >= dropout_rate
        keep = np.asarray(1.0 - dropout_rate, dtype=v.dtype)
        dropped = hidden * dropout_mask.astype(v.dtype) / keep
    else:
        dropout_mask = None
        dropped = hidden
    logits = _mm(dropped, out_w) + out_b.astype(v.dtype)
    probs = sigmoid(logits)
    cache = (v, pre > 0.0, dropped, dropout_mask)
    return probs, cache


def head_backward(dlogits: np.ndarray, cache, dense_w, out_w,
                  dropout_rate: float = 0.5):
    v, relu_mask, dropped, dropout_mask = cache
    comp = acc_dtype(v)
    dout_w = _mm_acc(dropped.T, dlogits)
    dout_b = np.sum(dlogits, axis=0, dtype=comp)
    dhidden = _mm(dlogits, out_w.T.astype(dlogits.dtype, copy=False))
    if dropout_mask is not None:
        keep = np.asarray(1.0 - dropout_rate, dtype=dhidden.dtype)
        dhidden = dhidden * dropout_mask.astype(dhidden.dtype) / keep
    dpre = dhidden * relu_mask
    ddense_w = _mm_acc(v.T, dpre)
    ddense_b = np.sum(dpre, axis=0, dtype=comp)
    dv = _mm(dpre, dense_w.T.astype(dpre.dtype, copy=False))
    return dv, ddense_w, ddense_b, dout_w, dout_b


# -------------------------------------------------------------------- loss

def bce_loss(probs: np.ndarray, y: np.ndarray) -> float:
    """Mean binary cross-entropy over every (sample, label) cell.

    Probabilities are clamped to [BCE_CLAMP, 1 - BCE_CLAMP] before the logs.
    """
    p = np.clip(np.asarray(probs, dtype=np.float64), BCE_CLAMP, 1.0 - BCE_CLAMP)
    t = np.asarray(y, dtype=np.float64)
    return float(np.mean(-(t * np.log(p) + (1.0 - t) * np.log1p(-p))))


def bce_grad_logits(probs: np.ndarray, y: np.ndarray, scale: float = 1.0) -> np.ndarray:
    """Gradient of bce_loss at the logits (sigmoid fused), float64.

    Cells clamped by bce_loss contribute zero gradient, matching the forward
    exactly so finite differences agree.
    """
    p = np.asarray(probs, dtype=np.float64)
    t = np.asarray(y, dtype=np.float64)
    inside = (p > BCE_CLAMP) & (p < 1.0 - BCE_CLAMP)
    return np.where(inside, (p - t) * (scale / p.size), 0.0)
