"""Exception types shared across the package.

Each carries the process exit code the command-line driver maps it to, so
library code never has to know about the CLI and the CLI never has to know
which subsystem raised.
"""


class EmoforgeError(Exception):
    """Base class for everything raised deliberately by this package."""

    exit_code = 1


class UsageError(EmoforgeError):
    """Bad invocation: unknown flag, missing config key, contradictory options."""

    exit_code = 1


class DataError(EmoforgeError, ValueError):
    """Malformed or inconsistent input data (corpus, vectors, checkpoints, CSVs)."""

    exit_code = 2


class NumericError(EmoforgeError, ArithmeticError):
    """Numerical failure during training or inference (divergence, overflow)."""

    exit_code = 3
