"""Seeded, reproducible cross-validation fold assignment.

Fold membership depends only on (n, n_folds, seed): indices are shuffled by
a seeded generator and cut into contiguous chunks, the first n % n_folds
folds taking one extra row. Seeds may be ints or tuples of ints (tuples are
used to derive independent inner-loop seeds from an outer seed).
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidConfigError, InvalidInputError

SeedLike = int | tuple[int, ...]


def make_folds(n: int, n_folds: int, seed: SeedLike) -> np.ndarray:
    """Assign each of n rows to one of n_folds folds.

    Returns:
        (n,) int64 array of fold ids in [0, n_folds).
    """
    if n_folds < 2:
        raise InvalidConfigError("need at least 2 folds")
    if n < n_folds:
        raise InvalidInputError(f"cannot split {n} rows into {n_folds} folds")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    fold_ids = np.empty(n, dtype=np.int64)
    base = n // n_folds
    extra = n % n_folds
    start = 0
    for f in range(n_folds):
        size = base + (1 if f < extra else 0)
        fold_ids[order[start : start + size]] = f
        start += size
    return fold_ids


def make_stratified_folds(
    classes: np.ndarray, n_folds: int, seed: SeedLike
) -> np.ndarray:
    """Fold assignment that balances integer class counts across folds.

    Rows of each class are shuffled and dealt round-robin, the deal origin
    rotating per class so small classes do not pile onto fold 0.
    """
    y = np.asarray(classes)
    if y.ndim != 1:
        raise InvalidInputError("classes must be a 1-D array")
    n = y.size
    if n_folds < 2:
        raise InvalidConfigError("need at least 2 folds")
    if n < n_folds:
        raise InvalidInputError(f"cannot split {n} rows into {n_folds} folds")
    rng = np.random.default_rng(seed)
    fold_ids = np.empty(n, dtype=np.int64)
    offset = 0
    for cls in np.unique(y):
        members = np.flatnonzero(y == cls)
        members = members[rng.permutation(members.size)]
        for j, row in enumerate(members):
            fold_ids[row] = (offset + j) % n_folds
        offset += members.size
    return fold_ids
