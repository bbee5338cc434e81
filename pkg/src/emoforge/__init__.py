"""Balanced multi-label emotion classification, end to end.

The package covers the whole pipeline: corpus loading and normalization,
oversampling and weak-label resolution, pretrained embedding assembly, the
conv/recurrent/attention network with hand-written forward and backward
passes, Adam training with early stopping, threshold tuning, the multi-label
metric suite, and figure rendering. `emoforge.cli` drives it from the shell.
"""

from .errors import DataError, EmoforgeError, NumericError, UsageError

__version__ = "0.1.0"

__all__ = [
    "DataError",
    "EmoforgeError",
    "NumericError",
    "UsageError",
    "__version__",
]
