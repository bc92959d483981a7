"""Pure NumPy implementations of the sign-classification kernels.

Semantics must match ``_core`` exactly: a sample with psi < 0 belongs to
species A, psi >= 0 (zero included) to species B.  All outputs are integer
counts so the two lanes produce bitwise-identical fractions.
"""

import numpy as np

NAME = "pure"


def classify(vals: np.ndarray) -> np.ndarray:
    """Per-row sign class of an (n, s) sample block.

    0: all samples negative (pure A), 1: none negative (pure B), 2: mixed.
    """
    neg = vals < 0.0
    out = np.full(vals.shape[0], 2, dtype=np.int8)
    out[neg.all(axis=1)] = 0
    out[~neg.any(axis=1)] = 1
    return out


def negatives(vals: np.ndarray) -> np.ndarray:
    """Count of negative samples per row of an (n, p) block."""
    return (vals < 0.0).sum(axis=1, dtype=np.int64)


def accumulate_pure(codes, cell_pos, amount, out):
    """Add ``amount`` to ``out[cell_pos]`` wherever ``codes == 0``."""
    pure = codes == 0
    np.add.at(out, cell_pos[pure], amount)


def accumulate_counts(cell_pos, counts, out):
    """out[cell_pos] += counts, with repeated positions accumulating."""
    np.add.at(out, cell_pos, counts)
