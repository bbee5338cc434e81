"""Training-set augmentation: weak labels from annotator probabilities,
agreement gating, majority voting, and minority-label oversampling.

Weak-label flow: an annotator (any callable mapping text to a probability
vector) proposes labels, the alignment gate drops samples whose proposed
labels the annotator is not confident enough about, and where several human
votes exist for a sample they override the proposal by strict majority.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass

import numpy as np

from .corpus import NUM_LABELS, EncodedDataset, Sample
from .errors import DataError

_HEADER_PREFIX = "# emoforge"


@dataclass(frozen=True)
class WeakLabeledSample:
    text: str
    prob: np.ndarray            # (NUM_LABELS,) float64 annotator probabilities
    proposed: frozenset[int]    # prob >= cutoff at load time


@dataclass(frozen=True)
class AnnotatorVote:
    annotator_id: int
    labels: frozenset[int]


@dataclass
class BalanceConfig:
    """Oversampling knobs. target=None means "match the most frequent label"."""

    target: int | None = None
    seed: int = 0
    max_duplication_factor: int = 1000


def weak_labels_from_probs(prob, cutoff: float = 0.5) -> frozenset[int]:
    """Indices whose probability clears the cutoff."""
    prob = np.asarray(prob, dtype=np.float64)
    if prob.shape != (NUM_LABELS,):
        raise DataError(
            f"probability vector must have {NUM_LABELS} entries, got shape {prob.shape}"
        )
    if np.any(prob < 0.0) or np.any(prob > 1.0):
        raise DataError("probability vector has entries outside [0, 1]")
    return frozenset(int(j) for j in np.flatnonzero(prob >= cutoff))


def alignment_gate(sample: WeakLabeledSample, threshold: float = 0.7) -> bool:
    """Accept only if every proposed label clears the confidence threshold
    strictly. A sample with no proposed labels has nothing to check and is a
    caller bug."""
    if not sample.proposed:
        raise DataError("alignment gate needs at least one proposed label")
    return min(float(sample.prob[j]) for j in sample.proposed) > threshold


def majority_vote(votes: list[AnnotatorVote]) -> frozenset[int]:
    """Labels selected by a strict majority of votes (> half)."""
    if not votes:
        raise DataError("majority vote over zero votes")
    tally: dict[int, int] = {}
    for v in votes:
        for j in v.labels:
            tally[j] = tally.get(j, 0) + 1
    n = len(votes)
    return frozenset(j for j, c in tally.items() if 2 * c > n)


class HashAnnotator:
    """Deterministic stand-in for an external probabilistic annotator.

    Probabilities are derived from a SHA-256 digest of (text, label index), so
    the same text always gets the same vector without any model or network.
    """

    def __init__(self, num_labels: int = NUM_LABELS):
        self.num_labels = num_labels

    def __call__(self, text: str) -> np.ndarray:
        prob = np.empty(self.num_labels, dtype=np.float64)
        for j in range(self.num_labels):
            digest = hashlib.sha256(f"{text}\x1f{j}".encode("utf-8")).digest()
            prob[j] = int.from_bytes(digest[:4], "big") / 2.0 ** 32
        return prob


def oversample_plan(labels: np.ndarray, cfg: BalanceConfig) -> list[int]:
    """Decide which rows to duplicate so every label count reaches the target.

    Labels are processed from rarest to most frequent (ties by index). For
    each label still short of the target, uniformly random rows among the
    ORIGINAL rows carrying that label are appended until the count is met or
    every such row has hit max_duplication_factor copies. Duplicating a
    multi-label row raises its other labels too; those incidental increments
    are allowed to overshoot the target.

    Returns the source row indices in append order.
    """
    labels = np.asarray(labels)
    if labels.ndim != 2:
        raise DataError(f"label matrix must be 2-d, got shape {labels.shape}")
    if cfg.max_duplication_factor < 1:
        raise DataError("max_duplication_factor must be at least 1")
    n_rows, n_labels = labels.shape
    counts = labels.sum(axis=0, dtype=np.int64)
    target = int(counts.max()) if cfg.target is None else int(cfg.target)
    if cfg.target is not None and target < 1:
        raise DataError(f"balance target must be positive, got {target}")
    if n_rows == 0:
        return []

    rng = np.random.default_rng(cfg.seed)
    order = sorted(range(n_labels), key=lambda j: (counts[j], j))
    copies = np.zeros(n_rows, dtype=np.int64)
    plan: list[int] = []
    for j in order:
        if counts[j] >= target:
            continue
        rows_j = np.flatnonzero(labels[:, j] != 0)
        cand = [int(i) for i in rows_j if copies[i] < cfg.max_duplication_factor]
        while counts[j] < target and cand:
            k = int(rng.integers(len(cand)))
            i = cand[k]
            plan.append(i)
            copies[i] += 1
            counts += labels[i]
            if copies[i] >= cfg.max_duplication_factor:
                cand.pop(k)
    return plan


def oversample_balance(ds: EncodedDataset, cfg: BalanceConfig) -> EncodedDataset:
    """Append duplicated rows to an encoded training split per oversample_plan.

    Original rows keep their positions; duplicates are appended in generation
    order, so the result is reproducible from the seed alone.
    """
    if ds.split != "train":
        raise DataError(f"balancing is restricted to the training split, got {ds.split!r}")
    plan = oversample_plan(ds.labels, cfg)
    if not plan:
        return EncodedDataset(sequences=ds.sequences.copy(),
                              labels=ds.labels.copy(), split=ds.split)
    idx = np.asarray(plan, dtype=np.int64)
    return EncodedDataset(
        sequences=np.concatenate([ds.sequences, ds.sequences[idx]], axis=0),
        labels=np.concatenate([ds.labels, ds.labels[idx]], axis=0),
        split=ds.split,
    )


def oversample_samples(samples: list[Sample], cfg: BalanceConfig,
                       num_labels: int = NUM_LABELS) -> list[Sample]:
    """Text-level variant of oversample_balance, for the CLI balance step."""
    labels = np.zeros((len(samples), num_labels), dtype=np.int8)
    for i, s in enumerate(samples):
        for j in s.labels:
            labels[i, j] = 1
    plan = oversample_plan(labels, cfg)
    return list(samples) + [samples[i] for i in plan]


def read_weak_labeled_csv(path, cutoff: float = 0.5) -> list[WeakLabeledSample]:
    """CSV with columns text,p0,...,p27; a header row is optional."""
    out = []
    first_data_row = True
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or row[0].startswith(_HEADER_PREFIX):
                continue
            if first_data_row:
                first_data_row = False
                if len(row) >= 2 and row[1].strip() == "p0":
                    continue  # header row
            if len(row) != NUM_LABELS + 1:
                raise DataError(
                    f"expected {NUM_LABELS + 1} columns, got {len(row)}, line {lineno}"
                )
            try:
                prob = np.array([float(x) for x in row[1:]], dtype=np.float64)
            except ValueError:
                raise DataError(f"non-numeric probability, line {lineno}") from None
            out.append(WeakLabeledSample(text=row[0], prob=prob,
                                         proposed=weak_labels_from_probs(prob, cutoff)))
    return out


def read_votes_csv(path) -> dict[int, list[AnnotatorVote]]:
    """CSV with columns sample_id,annotator_id,labels; labels space-separated."""
    votes: dict[int, list[AnnotatorVote]] = {}
    first_data_row = True
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or row[0].startswith(_HEADER_PREFIX):
                continue
            if first_data_row:
                first_data_row = False
                if row[0].strip() == "sample_id":
                    continue
            if len(row) != 3:
                raise DataError(f"expected 3 columns, got {len(row)}, line {lineno}")
            try:
                sid = int(row[0])
                aid = int(row[1])
                labels = frozenset(int(t) for t in row[2].replace(",", " ").split())
            except ValueError:
                raise DataError(f"malformed vote row, line {lineno}") from None
            for j in labels:
                if not 0 <= j < NUM_LABELS:
                    raise DataError(f"label index out of range: {j}, line {lineno}")
            votes.setdefault(sid, []).append(AnnotatorVote(annotator_id=aid, labels=labels))
    return votes


def resolve_weak_samples(weak: list[WeakLabeledSample],
                         votes: dict[int, list[AnnotatorVote]] | None = None,
                         threshold: float = 0.7) -> list[Sample]:
    """Turn gated weak samples into ordinary training samples.

    Samples with an empty proposal or a failed alignment gate are dropped.
    Where votes exist for a sample index they replace the proposal by strict
    majority; a vote round that yields no majority drops the sample too.
    """
    votes = votes or {}
    out = []
    for i, w in enumerate(weak):
        if not w.proposed or not alignment_gate(w, threshold):
            continue
        labels = majority_vote(votes[i]) if i in votes else w.proposed
        if labels:
            out.append(Sample(text=w.text, labels=labels))
    return out
