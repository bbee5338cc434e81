"""Pretrained word-vector loading and embedding-matrix assembly.

The .vec text format: a header line "<count> <dim>" followed by one line per
token, the token and then <dim> space-separated floats. The embedding matrix
is frozen during training; tokens without a pretrained vector get a small
seeded uniform row so runs are reproducible.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .corpus import PAD_ID, TokenizerState
from .errors import DataError

EMBED_DIM = 300
GENERATED_ROW_SCALE = 0.05


@dataclass(frozen=True)
class EmbeddingMatrix:
    values: np.ndarray  # (vocab_size, dim) float32, row PAD_ID all zeros
    dim: int
    trainable: bool = False


def load_vec(path, expected_dim: int | None = None) -> dict[str, np.ndarray]:
    """Parse a .vec file into a token-to-vector map (float32)."""
    vectors: dict[str, np.ndarray] = {}
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
        if not header.strip():
            raise DataError("missing header in vector file")
        parts = header.split()
        if len(parts) != 2 or not all(p.isdigit() for p in parts):
            raise DataError(f"malformed header {header.strip()!r} in vector file")
        count, dim = int(parts[0]), int(parts[1])
        if expected_dim is not None and dim != expected_dim:
            raise DataError(f"vector file has dimension {dim}, expected {expected_dim}")
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            fields = line.split()
            if len(fields) != dim + 1:
                raise DataError(
                    f"expected {dim} vector components, got {len(fields) - 1}, line {lineno}"
                )
            try:
                vec = np.array([float(x) for x in fields[1:]], dtype=np.float32)
            except ValueError:
                raise DataError(f"non-numeric vector component, line {lineno}") from None
            vectors[fields[0]] = vec
    if len(vectors) != count:
        raise DataError(f"header declared {count} vectors, file holds {len(vectors)}")
    return vectors


def build_matrix(vectors: dict[str, np.ndarray], tok: TokenizerState,
                 dim: int = EMBED_DIM, seed: int = 0) -> EmbeddingMatrix:
    """Assemble the frozen lookup table for a fitted tokenizer.

    Row PAD_ID stays zero. Every other row is the pretrained vector when one
    exists, otherwise uniform in [-GENERATED_ROW_SCALE, GENERATED_ROW_SCALE]
    drawn from a generator seeded once and consumed in ascending id order, so
    the whole matrix is a pure function of (vectors, tokenizer, dim, seed).
    """
    rng = np.random.default_rng(seed)
    values = np.zeros((tok.vocab_size, dim), dtype=np.float32)
    id_to_token = {i: t for t, i in tok.word_index.items()}
    for idx in range(tok.vocab_size):
        if idx == PAD_ID:
            continue
        token = id_to_token.get(idx)
        vec = vectors.get(token) if token is not None else None
        if vec is None:
            values[idx] = rng.uniform(-GENERATED_ROW_SCALE, GENERATED_ROW_SCALE,
                                      size=dim).astype(np.float32)
        else:
            if vec.shape != (dim,):
                raise DataError(
                    f"vector for token {token!r} has dimension {vec.shape[0]}, expected {dim}"
                )
            values[idx] = vec
    return EmbeddingMatrix(values=values, dim=dim)


def cosine_similarity_matrix(vectors: np.ndarray) -> np.ndarray:
    """Pairwise cosine similarities of the given row vectors, float64 (k, k)."""
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim != 2:
        raise DataError(f"expected a 2-d array of row vectors, got shape {x.shape}")
    norms = np.linalg.norm(x, axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise DataError(f"zero-norm vector at index {int(zero[0])}")
    return (x @ x.T) / np.outer(norms, norms)


def label_embedding_vectors(names: list[str], vectors: dict[str, np.ndarray],
                            dim: int = EMBED_DIM) -> np.ndarray:
    """One row per label name: the mean of the pretrained vectors of its tokens.

    Multi-word names are split on whitespace and underscores; tokens without a
    pretrained vector are skipped, and a name with no covered token at all is
    an error rather than a silent zero row.
    """
    rows = np.zeros((len(names), dim), dtype=np.float64)
    for i, name in enumerate(names):
        tokens = [t for t in re.split(r"[\s_]+", name.lower()) if t]
        found = [vectors[t] for t in tokens if t in vectors]
        if not found:
            raise DataError(f"no pretrained vector covers label {name!r}")
        rows[i] = np.mean(np.stack(found), axis=0)
    return rows
