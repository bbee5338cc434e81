"""Figure rendering for the report path. Every function draws one figure and
writes it straight to a file; the format follows the file extension (.png or
.svg). SVG date metadata is stripped so repeated runs produce identical
bytes.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_RC = {
    "figure.dpi": 120,
    "savefig.dpi": 120,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
    "svg.hashsalt": "emoforge",
}


def _save(fig, path):
    meta = {"Date": None} if str(path).lower().endswith(".svg") else None
    fig.savefig(path, metadata=meta, bbox_inches="tight")
    plt.close(fig)


def label_distribution_bars(counts_by_split: dict[str, np.ndarray],
                            names: list[str], path):
    """Grouped bars of per-label positive counts, one group color per split."""
    splits = list(counts_by_split)
    n = len(names)
    x = np.arange(n)
    width = 0.8 / max(len(splits), 1)
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(max(8, n * 0.35), 4))
        for i, split in enumerate(splits):
            ax.bar(x + i * width, counts_by_split[split], width, label=split)
        ax.set_xticks(x + width * (len(splits) - 1) / 2)
        ax.set_xticklabels(names, rotation=75, ha="right")
        ax.set_ylabel("positive samples")
        ax.set_title("label distribution")
        ax.legend()
        _save(fig, path)


def loss_curves(history_rows: list[tuple[int, float, float]], best_epoch: int, path):
    """Train/validation loss per epoch with the best epoch marked."""
    epochs = [r[0] for r in history_rows]
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(epochs, [r[1] for r in history_rows], marker="o", label="train")
        ax.plot(epochs, [r[2] for r in history_rows], marker="s", label="validation")
        if best_epoch in epochs:
            ax.axvline(best_epoch, color="gray", linestyle="--", linewidth=1,
                       label=f"best epoch ({best_epoch})")
        ax.set_xlabel("epoch")
        ax.set_ylabel("binary cross-entropy")
        ax.set_title("training curves")
        ax.legend()
        _save(fig, path)


def per_label_f1_bars(f1: np.ndarray, names: list[str], path,
                      baseline: np.ndarray | None = None):
    """Per-label F1 bars, optionally against a second bar set (e.g. tau=0.5)."""
    n = len(names)
    x = np.arange(n)
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(max(8, n * 0.35), 4))
        if baseline is not None:
            ax.bar(x - 0.2, baseline, 0.4, label="default threshold")
            ax.bar(x + 0.2, f1, 0.4, label="tuned threshold")
            ax.legend()
        else:
            ax.bar(x, f1, 0.7)
        ax.set_xticks(x)
        ax.set_xticklabels(names, rotation=75, ha="right")
        ax.set_ylabel("F1")
        ax.set_ylim(0, 1.05)
        ax.set_title("per-label F1")
        _save(fig, path)


def similarity_heatmap(matrix: np.ndarray, names: list[str], path):
    """Cosine-similarity heatmap between label embedding vectors."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(8, 7))
        im = ax.imshow(matrix, cmap="viridis", vmin=-1.0, vmax=1.0)
        ax.set_xticks(range(len(names)))
        ax.set_yticks(range(len(names)))
        ax.set_xticklabels(names, rotation=90)
        ax.set_yticklabels(names)
        ax.grid(False)
        fig.colorbar(im, ax=ax, shrink=0.8, label="cosine similarity")
        ax.set_title("label-name embedding similarity")
        _save(fig, path)


def threshold_sweep(grid: list[float], f1_by_label: np.ndarray,
                    names: list[str], path, labels_to_show: int = 6):
    """Validation F1 versus threshold for the labels with the most movement."""
    f1_by_label = np.asarray(f1_by_label)
    spread = f1_by_label.max(axis=0) - f1_by_label.min(axis=0)
    show = np.argsort(-spread)[:labels_to_show]
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(6, 4))
        for j in sorted(int(s) for s in show):
            ax.plot(grid, f1_by_label[:, j], marker=".", label=names[j])
        ax.set_xlabel("threshold")
        ax.set_ylabel("validation F1")
        ax.set_title("threshold sweep")
        ax.legend(fontsize=7)
        _save(fig, path)
