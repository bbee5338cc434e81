"""Binary checkpoint format for model weights.

Layout, all integers little-endian:

    magic   4 bytes  b"EMFG"
    version u32      format version (currently 1)
    cfg_len u32      length of the JSON config block
    cfg     bytes    JSON: model config fields plus vocab_size
    count   u32      number of tensors
    per tensor:
        name_len u16, name utf-8, ndim u8, dims u32 each, payload float32 LE

Weights are stored as float32 regardless of in-memory dtype, so a
save/load/save round trip is byte-identical.
"""

from __future__ import annotations

import dataclasses
import json
import struct

import numpy as np

from ..errors import DataError
from .model import ModelConfig, ModelParams

MAGIC = b"EMFG"
VERSION = 1


def expected_shapes(cfg: ModelConfig, vocab_size: int) -> dict[str, tuple]:
    k, d, f = cfg.conv_kernel, cfg.embed_dim, cfg.conv_filters
    h, c2 = cfg.lstm_units, cfg.context_dim
    shapes = {
        "embedding": (vocab_size, d),
        "conv_w": (k, d, f), "conv_b": (f,),
        "bn_gamma": (f,), "bn_beta": (f,), "bn_mean": (f,), "bn_var": (f,),
        "lstm_fwd_w": (f, 4 * h), "lstm_fwd_u": (h, 4 * h), "lstm_fwd_b": (4 * h,),
        "lstm_bwd_w": (f, 4 * h), "lstm_bwd_u": (h, 4 * h), "lstm_bwd_b": (4 * h,),
        "dense_w": (c2, cfg.dense_units), "dense_b": (cfg.dense_units,),
        "out_w": (cfg.dense_units, cfg.num_labels), "out_b": (cfg.num_labels,),
    }
    if cfg.use_attention:
        shapes["attn_w"] = (c2, 1)
        shapes["attn_b"] = (1,)
    return shapes


def save_checkpoint(params: ModelParams, cfg: ModelConfig, path):
    meta = dataclasses.asdict(cfg)
    meta["vocab_size"] = params.vocab_size
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    items = params.all_items()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(struct.pack("<I", len(items)))
        for name, arr in items:
            data = np.ascontiguousarray(arr, dtype="<f4")
            raw = name.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<B", data.ndim))
            fh.write(struct.pack(f"<{data.ndim}I", *data.shape))
            fh.write(data.tobytes())


def _read_exact(fh, n: int) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise DataError("unexpected end of checkpoint")
    return buf


def load_checkpoint(path) -> tuple[ModelParams, ModelConfig]:
    with open(path, "rb") as fh:
        if _read_exact(fh, 4) != MAGIC:
            raise DataError("not a checkpoint file (bad magic)")
        (version,) = struct.unpack("<I", _read_exact(fh, 4))
        if version != VERSION:
            raise DataError(f"unsupported checkpoint version {version}")
        (cfg_len,) = struct.unpack("<I", _read_exact(fh, 4))
        try:
            meta = json.loads(_read_exact(fh, cfg_len).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise DataError(f"corrupt checkpoint config block: {exc}") from None
        vocab_size = int(meta.pop("vocab_size", 0))
        known = {f.name for f in dataclasses.fields(ModelConfig)}
        unknown = set(meta) - known
        if unknown or vocab_size < 1:
            raise DataError("corrupt checkpoint config block: unknown fields")
        cfg = ModelConfig(**meta)
        (count,) = struct.unpack("<I", _read_exact(fh, 4))
        tensors: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", _read_exact(fh, 2))
            name = _read_exact(fh, name_len).decode("utf-8")
            (ndim,) = struct.unpack("<B", _read_exact(fh, 1))
            dims = struct.unpack(f"<{ndim}I", _read_exact(fh, 4 * ndim))
            n_items = int(np.prod(dims, dtype=np.int64)) if ndim else 1
            payload = _read_exact(fh, 4 * n_items)
            tensors[name] = np.frombuffer(payload, dtype="<f4").reshape(dims).copy()
        if fh.read(1):
            raise DataError("trailing bytes after checkpoint payload")

    shapes = expected_shapes(cfg, vocab_size)
    missing = set(shapes) - set(tensors)
    if missing:
        raise DataError(f"checkpoint is missing tensor {sorted(missing)[0]!r}")
    extra = set(tensors) - set(shapes)
    if extra:
        raise DataError(f"checkpoint has unexpected tensor {sorted(extra)[0]!r}")
    for name, shape in shapes.items():
        if tensors[name].shape != shape:
            raise DataError(
                f"tensor {name!r} has shape {tensors[name].shape}, expected {shape}"
            )
    return ModelParams(**tensors), cfg
