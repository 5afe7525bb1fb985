"""Input checks for the estimator interface."""
from __future__ import annotations

import numpy as np

from .errors import DataError, ParameterError


def check_sequences(X, num_items: int | None = None, min_length: int = 1) -> list[np.ndarray]:
    """Coerce ``X`` to a list of 1-D int64 arrays of item indices and validate them."""
    if isinstance(X, np.ndarray) and X.ndim == 2:
        X = list(X)
    if isinstance(X, (str, bytes)) or not hasattr(X, "__len__"):
        raise DataError(f"expected a sequence of item-id sequences, got {type(X).__name__}")
    if len(X) == 0:
        raise DataError("no sequences given")
    out = []
    for n, seq in enumerate(X):
        arr = np.asarray(seq)
        if arr.ndim != 1:
            raise DataError(f"sequence {n} is not one-dimensional (shape {arr.shape})")
        if arr.size and not np.issubdtype(arr.dtype, np.integer):
            if not np.all(np.mod(arr, 1) == 0):
                raise DataError(f"sequence {n} has non-integer item ids")
        arr = arr.astype(np.int64)
        if len(arr) < min_length:
            raise DataError(f"sequence {n} has {len(arr)} items, need at least {min_length}")
        if arr.size and arr.min() < 0:
            raise DataError(f"sequence {n} has a negative item id")
        if num_items is not None and arr.size and arr.max() >= num_items:
            raise DataError(f"sequence {n} has item id {arr.max()} >= num_items {num_items}")
        out.append(arr)
    return out


def check_targets(y, n: int, num_items: int) -> np.ndarray:
    y = np.asarray(y)
    if y.shape != (n,):
        raise DataError(f"expected {n} targets, got shape {y.shape}")
    y = y.astype(np.int64)
    if y.min() < 0 or y.max() >= num_items:
        raise DataError(f"targets must lie in [0, {num_items})")
    return y


def check_k(k: int, num_items: int) -> int:
    if not 1 <= k <= num_items:
        raise ParameterError(f"k must be in [1, {num_items}], got {k}")
    return int(k)
