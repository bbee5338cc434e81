"""Corpus loading, text normalization, tokenizer fitting and integer encoding.

The on-disk corpus format is TSV: one sample per line, column 0 the raw text,
column 1 a comma-separated list of label indices, optional column 2 free-form
metadata that is carried along but never interpreted. Lines starting with
"# emoforge" are treated as file headers and skipped, so files written by the
CLI can be read back directly.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .errors import DataError

NUM_LABELS = 28
SEQ_LEN = 30
PAD_ID = 0
OOV_ID = 1

_HEADER_PREFIX = "# emoforge"

# Standard 28-way emotion taxonomy, used when no label file is supplied.
GOEMOTIONS_LABELS = (
    "admiration", "amusement", "anger", "annoyance", "approval", "caring",
    "confusion", "curiosity", "desire", "disappointment", "disapproval",
    "disgust", "embarrassment", "excitement", "fear", "gratitude", "grief",
    "joy", "love", "nervousness", "optimism", "pride", "realization",
    "relief", "remorse", "sadness", "surprise", "neutral",
)


@dataclass(frozen=True)
class LabelVocabulary:
    """Ordered set of label names; position in `names` is the label index."""

    names: tuple[str, ...]

    def __post_init__(self):
        if len(self.names) != NUM_LABELS:
            raise DataError(
                f"label vocabulary must have {NUM_LABELS} entries, got {len(self.names)}"
            )
        if len(set(self.names)) != len(self.names):
            raise DataError("label vocabulary contains duplicate names")

    def __len__(self):
        return len(self.names)

    def index_of(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise DataError(f"unknown label name {name!r}") from None

    @classmethod
    def goemotions(cls) -> "LabelVocabulary":
        return cls(names=GOEMOTIONS_LABELS)

    @classmethod
    def from_file(cls, path) -> "LabelVocabulary":
        """One label name per line, index = line position."""
        with open(path, encoding="utf-8") as fh:
            names = [ln.strip() for ln in fh if ln.strip() and not ln.startswith(_HEADER_PREFIX)]
        return cls(names=tuple(names))


@dataclass(frozen=True)
class Sample:
    text: str
    labels: frozenset[int]
    meta: str = ""


@dataclass(frozen=True)
class TokenizerState:
    """Frozen token-to-id mapping. Fit once on the training split, then reused
    verbatim for validation/test/prediction; unseen tokens map to OOV_ID."""

    word_index: dict[str, int]
    vocab_size: int
    fitted_on: str = "train"


@dataclass
class EncodedDataset:
    sequences: np.ndarray  # (n, SEQ_LEN) int32, left-padded with PAD_ID
    labels: np.ndarray     # (n, NUM_LABELS) int8 multi-hot
    split: str

    def __len__(self):
        return self.sequences.shape[0]


_URL_PREFIXES = ("http://", "https://", "www.")


def normalize_text(raw: str) -> str:
    """Normalize raw text for tokenization.

    Applied in order: drop @-mention tokens, drop URL tokens, map every
    non-alphanumeric character to a space, lowercase, collapse runs of
    whitespace. Idempotent: normalizing an already-normalized string is a
    no-op.
    """
    kept = [
        tok for tok in raw.split()
        if not tok.startswith("@") and not tok.startswith(_URL_PREFIXES)
    ]
    text = " ".join(kept)
    text = "".join(ch if ch.isalnum() or ch == " " else " " for ch in text)
    return " ".join(text.lower().split())


def load_dataset(path, vocab: LabelVocabulary) -> list[Sample]:
    """Read a TSV corpus file; raises DataError with a line number on any defect."""
    samples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line or line.startswith(_HEADER_PREFIX):
                continue
            parts = line.split("\t")
            if len(parts) not in (2, 3):
                raise DataError(
                    f"expected 2 or 3 tab-separated fields, got {len(parts)}, line {lineno}"
                )
            text, label_field = parts[0], parts[1]
            meta = parts[2] if len(parts) == 3 else ""
            if not label_field.strip():
                raise DataError(f"empty label field, line {lineno}")
            try:
                indices = [int(tok) for tok in label_field.split(",")]
            except ValueError:
                raise DataError(f"malformed label field {label_field!r}, line {lineno}") from None
            for ix in indices:
                if not 0 <= ix < len(vocab):
                    raise DataError(f"label index out of range: {ix}, line {lineno}")
            samples.append(Sample(text=text, labels=frozenset(indices), meta=meta))
    return samples


def save_dataset(samples: list[Sample], path, header: str | None = None):
    """Write samples back out in the TSV corpus format."""
    with open(path, "w", encoding="utf-8") as fh:
        if header:
            fh.write(header if header.endswith("\n") else header + "\n")
        for s in samples:
            labels = ",".join(str(j) for j in sorted(s.labels))
            row = [s.text, labels] + ([s.meta] if s.meta else [])
            fh.write("\t".join(row) + "\n")


def fit_tokenizer(train: list[Sample]) -> TokenizerState:
    """Build the token-to-id map from the training split only.

    Ids start at 2 (0 = padding, 1 = out-of-vocabulary) and are assigned by
    descending frequency, ties broken lexicographically so the mapping is
    independent of sample order.
    """
    if not train:
        raise DataError("empty corpus: cannot fit tokenizer")
    freq = Counter()
    for s in train:
        freq.update(s.text.split())
    ordered = sorted(freq.items(), key=lambda kv: (-kv[1], kv[0]))
    word_index = {tok: i for i, (tok, _) in enumerate(ordered, start=2)}
    return TokenizerState(word_index=word_index, vocab_size=len(word_index) + 2)


def encode(samples: list[Sample], tok: TokenizerState, vocab: LabelVocabulary,
           split: str = "train") -> EncodedDataset:
    """Map samples to fixed-length id rows and multi-hot label rows.

    Sequences longer than SEQ_LEN keep their last SEQ_LEN tokens; shorter ones
    are left-padded with PAD_ID. The tokenizer is never mutated here.
    """
    n = len(samples)
    seqs = np.zeros((n, SEQ_LEN), dtype=np.int32)
    labels = np.zeros((n, len(vocab)), dtype=np.int8)
    for i, s in enumerate(samples):
        ids = [tok.word_index.get(t, OOV_ID) for t in s.text.split()]
        ids = ids[-SEQ_LEN:]
        if ids:
            seqs[i, SEQ_LEN - len(ids):] = ids
        for j in s.labels:
            labels[i, j] = 1
    return EncodedDataset(sequences=seqs, labels=labels, split=split)


def encode_texts(texts: list[str], tok: TokenizerState) -> np.ndarray:
    """Normalize and encode bare strings (prediction path); returns (n, SEQ_LEN)."""
    seqs = np.zeros((len(texts), SEQ_LEN), dtype=np.int32)
    for i, raw in enumerate(texts):
        ids = [tok.word_index.get(t, OOV_ID) for t in normalize_text(raw).split()]
        ids = ids[-SEQ_LEN:]
        if ids:
            seqs[i, SEQ_LEN - len(ids):] = ids
    return seqs


def label_distribution(ds: EncodedDataset) -> np.ndarray:
    """Per-label positive counts, shape (num_labels,) int64."""
    return ds.labels.sum(axis=0, dtype=np.int64)


def top_k_words(samples: list[Sample], k: int) -> list[tuple[str, int]]:
    """Most frequent tokens with counts, frequency-descending then lexicographic."""
    if k < 0:
        raise DataError(f"k must be non-negative, got {k}")
    freq = Counter()
    for s in samples:
        freq.update(s.text.split())
    ordered = sorted(freq.items(), key=lambda kv: (-kv[1], kv[0]))
    return ordered[:k]


def save_tokenizer(tok: TokenizerState, path, meta: dict | None = None):
    payload = {
        "format": "emoforge-tokenizer-1",
        "fitted_on": tok.fitted_on,
        "vocab_size": tok.vocab_size,
        "word_index": tok.word_index,
        "meta": meta or {},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True)
        fh.write("\n")


def load_tokenizer(path) -> TokenizerState:
    with open(path, encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"unreadable tokenizer file: {exc}") from None
    if payload.get("format") != "emoforge-tokenizer-1":
        raise DataError("unreadable tokenizer file: bad format tag")
    word_index = {str(k): int(v) for k, v in payload["word_index"].items()}
    return TokenizerState(word_index=word_index,
                          vocab_size=int(payload["vocab_size"]),
                          fitted_on=str(payload.get("fitted_on", "train")))


def save_encoded(ds: EncodedDataset, path, meta: dict | None = None):
    """Persist an encoded split as .npz with a JSON metadata block."""
    np.savez(path,
             sequences=ds.sequences,
             labels=ds.labels,
             split=np.array(ds.split),
             meta=np.array(json.dumps(meta or {}, sort_keys=True)))


def load_encoded(path) -> EncodedDataset:
    try:
        with np.load(path, allow_pickle=False) as z:
            return EncodedDataset(sequences=z["sequences"].astype(np.int32),
                                  labels=z["labels"].astype(np.int8),
                                  split=str(z["split"]))
    except (OSError, KeyError, ValueError) as exc:
        raise DataError(f"unreadable encoded dataset {path}: {exc}") from None
