"""Multi-label evaluation: aggregate and per-label metrics, rank-based AUC,
per-label threshold tuning, and prediction/report CSV formats.

Metric conventions: any 0/0 precision, recall, or F1 is defined as 0; the
Jaccard score of two empty label sets is 1; AUC is undefined for a label
whose column is all-positive or all-negative and such labels are excluded
from the macro AUC mean. Counts are accumulated as exact integers and each
final ratio is a single float division, so results are reproducible to the
bit across runs and implementations.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DataError

DEFAULT_THRESHOLD = 0.5


def _check_pair(y: np.ndarray, pred: np.ndarray):
    if y.shape != pred.shape or y.ndim != 2:
        raise DataError(f"shape mismatch: truth {y.shape} vs predictions {pred.shape}")


def binarize(probs: np.ndarray, tau) -> np.ndarray:
    """probs >= tau as int8; tau is a scalar or a per-label vector."""
    probs = np.asarray(probs)
    tau = np.asarray(tau)
    if tau.ndim == 1 and tau.shape[0] != probs.shape[1]:
        raise DataError(
            f"threshold vector length {tau.shape[0]} does not match {probs.shape[1]} labels"
        )
    return (probs >= tau).astype(np.int8)


def subset_accuracy(y: np.ndarray, pred: np.ndarray) -> float:
    """Fraction of samples whose full label set is exactly right."""
    _check_pair(y, pred)
    matches = int(np.all(y == pred, axis=1).sum())
    return matches / y.shape[0]


def jaccard_score(y: np.ndarray, pred: np.ndarray) -> float:
    """Mean per-sample |intersection| / |union|; both-empty counts as 1."""
    _check_pair(y, pred)
    yb = y != 0
    pb = pred != 0
    inter = (yb & pb).sum(axis=1)
    union = (yb | pb).sum(axis=1)
    scores = [1.0 if u == 0 else int(i) / int(u) for i, u in zip(inter, union)]
    return sum(scores) / y.shape[0]


def hamming_loss(y: np.ndarray, pred: np.ndarray) -> float:
    """Fraction of label cells that disagree."""
    _check_pair(y, pred)
    wrong = int(((y != 0) != (pred != 0)).sum())
    return wrong / y.size


def _confusion_counts(y: np.ndarray, pred: np.ndarray):
    """Per-label (tp, fp, fn) as int64 vectors."""
    yb = y != 0
    pb = pred != 0
    tp = (yb & pb).sum(axis=0, dtype=np.int64)
    fp = (~yb & pb).sum(axis=0, dtype=np.int64)
    fn = (yb & ~pb).sum(axis=0, dtype=np.int64)
    return tp, fp, fn


def _prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    """Precision/recall/F1 from exact counts; every 0/0 is 0. F1 uses the
    harmonic identity 2tp / (2tp + fp + fn) so it is one division too."""
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * tp / (2 * tp + fp + fn) if 2 * tp + fp + fn else 0.0
    return precision, recall, f1


def micro_prf(y: np.ndarray, pred: np.ndarray) -> tuple[float, float, float]:
    """Precision/recall/F1 from counts pooled over all labels."""
    _check_pair(y, pred)
    tp, fp, fn = _confusion_counts(y, pred)
    return _prf(int(tp.sum()), int(fp.sum()), int(fn.sum()))


def macro_prf(y: np.ndarray, pred: np.ndarray) -> tuple[float, float, float]:
    """Unweighted means of the per-label precision/recall/F1."""
    _check_pair(y, pred)
    tp, fp, fn = _confusion_counts(y, pred)
    per = [_prf(int(tp[j]), int(fp[j]), int(fn[j])) for j in range(y.shape[1])]
    n = y.shape[1]
    return (sum(p for p, _, _ in per) / n,
            sum(r for _, r, _ in per) / n,
            sum(f for _, _, f in per) / n)


def label_auc(scores: np.ndarray, truth: np.ndarray) -> float | None:
    """Rank-based ROC AUC for one label; ties get average ranks.

    None when the label has no positives or no negatives.
    """
    scores = np.asarray(scores, dtype=np.float64)
    truth = np.asarray(truth) != 0
    n_pos = int(truth.sum())
    n_neg = truth.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    uniq, inverse, counts = np.unique(scores, return_inverse=True, return_counts=True)
    last = np.cumsum(counts)
    first = last - counts + 1
    avg_rank = (first + last) / 2.0
    rank_sum = float(avg_rank[inverse][truth].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def macro_auc(probs: np.ndarray, y: np.ndarray) -> tuple[float, int]:
    """(mean of defined per-label AUCs, number of labels excluded as undefined).

    Every label undefined raises, since the mean would be meaningless.
    """
    _check_pair(y, probs)
    values = [label_auc(probs[:, j], y[:, j]) for j in range(y.shape[1])]
    defined = [v for v in values if v is not None]
    if not defined:
        raise DataError("AUC undefined for every label")
    return sum(defined) / len(defined), len(values) - len(defined)


def threshold_grid(start: float = 0.05, stop: float = 0.95, step: float = 0.05
                   ) -> list[float]:
    """Inclusive ascending grid, rounded so 0.05 * k prints exactly."""
    if step <= 0 or stop < start:
        raise DataError(f"bad threshold grid: start={start} stop={stop} step={step}")
    count = int(round((stop - start) / step)) + 1
    return [round(start + i * step, 10) for i in range(count)]


def tune_thresholds(val_probs: np.ndarray, val_y: np.ndarray,
                    grid: list[float] | None = None) -> np.ndarray:
    """Per-label threshold that maximizes validation F1 over the grid.

    The grid is scanned in ascending order keeping strict improvements only,
    so ties resolve to the smallest maximizing value. A label with no
    positives scores F1 = 0 everywhere and gets the smallest grid value.
    """
    if grid is None:
        grid = threshold_grid()
    if len(grid) == 0:
        raise DataError("threshold grid is empty")
    _check_pair(val_y, val_probs)
    yb = val_y != 0
    num_labels = val_y.shape[1]
    tau = np.empty(num_labels, dtype=np.float64)
    for j in range(num_labels):
        best_f1 = -1.0
        best_t = grid[0]
        col = val_probs[:, j]
        truth = yb[:, j]
        for t in grid:
            pred = col >= t
            tp = int((truth & pred).sum())
            fp = int((~truth & pred).sum())
            fn = int((truth & ~pred).sum())
            _, _, f1 = _prf(tp, fp, fn)
            if f1 > best_f1:
                best_f1 = f1
                best_t = t
        tau[j] = best_t
    return tau


@dataclass
class LabelMetrics:
    label: int
    name: str
    accuracy: float
    precision: float
    recall: float
    f1: float
    auc: float | None
    support: int
    threshold: float


@dataclass
class MetricsReport:
    subset_accuracy: float
    jaccard: float
    hamming_loss: float
    micro_precision: float
    micro_recall: float
    micro_f1: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    macro_auc: float | None
    auc_excluded: int
    per_label: list[LabelMetrics]

    def aggregate_rows(self) -> list[tuple[str, float | int | None]]:
        return [
            ("subset_accuracy", self.subset_accuracy),
            ("jaccard", self.jaccard),
            ("hamming_loss", self.hamming_loss),
            ("micro_precision", self.micro_precision),
            ("micro_recall", self.micro_recall),
            ("micro_f1", self.micro_f1),
            ("macro_precision", self.macro_precision),
            ("macro_recall", self.macro_recall),
            ("macro_f1", self.macro_f1),
            ("macro_auc", self.macro_auc),
            ("auc_excluded_labels", self.auc_excluded),
        ]


def compute_report(y: np.ndarray, probs: np.ndarray, tau,
                   names: list[str] | None = None) -> MetricsReport:
    """Full metric suite at the given threshold(s)."""
    _check_pair(y, probs)
    y = np.asarray(y)
    pred = binarize(probs, tau)
    tau_vec = np.broadcast_to(np.asarray(tau, dtype=np.float64), (y.shape[1],))
    tp, fp, fn = _confusion_counts(y, pred)
    n = y.shape[0]
    mic = micro_prf(y, pred)
    mac = macro_prf(y, pred)
    try:
        mauc, excluded = macro_auc(probs, y)
    except DataError:
        mauc, excluded = None, y.shape[1]
    per_label = []
    for j in range(y.shape[1]):
        p_j, r_j, f_j = _prf(int(tp[j]), int(fp[j]), int(fn[j]))
        correct = int((pred[:, j] == (y[:, j] != 0)).sum())
        per_label.append(LabelMetrics(
            label=j,
            name=names[j] if names else f"label_{j}",
            accuracy=correct / n,
            precision=p_j, recall=r_j, f1=f_j,
            auc=label_auc(probs[:, j], y[:, j]),
            support=int((y[:, j] != 0).sum()),
            threshold=float(tau_vec[j]),
        ))
    return MetricsReport(
        subset_accuracy=subset_accuracy(y, pred),
        jaccard=jaccard_score(y, pred),
        hamming_loss=hamming_loss(y, pred),
        micro_precision=mic[0], micro_recall=mic[1], micro_f1=mic[2],
        macro_precision=mac[0], macro_recall=mac[1], macro_f1=mac[2],
        macro_auc=mauc, auc_excluded=excluded,
        per_label=per_label,
    )


def rank_sentence_labels(probs_row: np.ndarray, tau, k: int = 4
                         ) -> tuple[list[tuple[int, float]], bool]:
    """Top labels for one sample: those clearing their thresholds, by
    descending probability (ties toward the lower index), at most k.

    When nothing clears, the single highest-probability label is returned
    with the below_threshold flag set, so a prediction is never empty.
    """
    probs_row = np.asarray(probs_row, dtype=np.float64)
    tau_vec = np.broadcast_to(np.asarray(tau, dtype=np.float64), probs_row.shape)
    cleared = [(j, float(probs_row[j])) for j in range(probs_row.size)
               if probs_row[j] >= tau_vec[j]]
    if cleared:
        cleared.sort(key=lambda jp: (-jp[1], jp[0]))
        return cleared[:k], False
    top = int(np.argmax(probs_row))  # argmax takes the lowest index on ties
    return [(top, float(probs_row[top]))], True


# ------------------------------------------------------------------ CSV I/O

def _open_rows(path):
    """Yield CSV rows, skipping file-header comment lines."""
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].startswith("# emoforge"):
                continue
            yield row


def write_predictions_csv(probs: np.ndarray, path, header: str | None = None):
    """Rows id,p0,...,p27 at %.9g, which round-trips float32 exactly."""
    probs = np.asarray(probs, dtype=np.float32)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if header:
            fh.write(header if header.endswith("\n") else header + "\n")
        writer = csv.writer(fh)
        writer.writerow(["id"] + [f"p{j}" for j in range(probs.shape[1])])
        for i, row in enumerate(probs):
            writer.writerow([i] + [f"{float(v):.9g}" for v in row])


def read_predictions_csv(path, num_labels: int = 28) -> np.ndarray:
    rows = []
    for lineno, row in enumerate(_open_rows(path), start=1):
        if row[0] == "id":
            continue
        if len(row) != num_labels + 1:
            raise DataError(
                f"expected {num_labels + 1} columns, got {len(row)}, row {lineno}"
            )
        try:
            rows.append((int(row[0]), [float(v) for v in row[1:]]))
        except ValueError:
            raise DataError(f"non-numeric prediction value, row {lineno}") from None
    rows.sort(key=lambda r: r[0])
    if [r[0] for r in rows] != list(range(len(rows))):
        raise DataError("prediction ids are not a contiguous 0-based range")
    return np.array([r[1] for r in rows], dtype=np.float32)


def write_thresholds_csv(tau: np.ndarray, path, names: list[str] | None = None,
                         header: str | None = None):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if header:
            fh.write(header if header.endswith("\n") else header + "\n")
        writer = csv.writer(fh)
        writer.writerow(["label", "name", "tau"])
        for j, t in enumerate(np.asarray(tau, dtype=np.float64)):
            name = names[j] if names else f"label_{j}"
            writer.writerow([j, name, f"{t:.6g}"])


def read_thresholds_csv(path, num_labels: int = 28) -> np.ndarray:
    tau = np.full(num_labels, np.nan)
    for lineno, row in enumerate(_open_rows(path), start=1):
        if row[0] == "label":
            continue
        if len(row) != 3:
            raise DataError(f"expected 3 columns, got {len(row)}, row {lineno}")
        try:
            j = int(row[0])
            tau[j] = float(row[2])
        except (ValueError, IndexError):
            raise DataError(f"malformed threshold row, row {lineno}") from None
    if np.any(np.isnan(tau)):
        raise DataError("threshold file does not cover every label")
    return tau


def write_aggregate_csv(report: MetricsReport, path, header: str | None = None):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if header:
            fh.write(header if header.endswith("\n") else header + "\n")
        writer = csv.writer(fh)
        writer.writerow(["metric", "value"])
        for name, value in report.aggregate_rows():
            writer.writerow([name, "" if value is None else f"{value:.9g}"])


def write_per_label_csv(report: MetricsReport, path, header: str | None = None):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if header:
            fh.write(header if header.endswith("\n") else header + "\n")
        writer = csv.writer(fh)
        writer.writerow(["label", "name", "accuracy", "precision", "recall",
                         "f1", "auc", "support", "threshold"])
        for lm in report.per_label:
            writer.writerow([
                lm.label, lm.name, f"{lm.accuracy:.9g}", f"{lm.precision:.9g}",
                f"{lm.recall:.9g}", f"{lm.f1:.9g}",
                "" if lm.auc is None else f"{lm.auc:.9g}",
                lm.support, f"{lm.threshold:.6g}",
            ])
