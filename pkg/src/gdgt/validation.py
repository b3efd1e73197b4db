"""Input validation helpers for the estimator-facing API."""

from __future__ import annotations

import numpy as np


def check_image_batch(X, input_size: int | None = None) -> np.ndarray:
    """Coerce to a finite (N, 3, S, S) float64 batch of images."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 3:
        X = X[None]
    if X.ndim != 4 or X.shape[1] != 3:
        raise ValueError(
            f"expected images shaped (N, 3, S, S), got {X.shape}"
        )
    if X.shape[2] != X.shape[3]:
        raise ValueError(f"images must be square, got {X.shape[2]}x{X.shape[3]}")
    if input_size is not None and X.shape[2] != input_size:
        raise ValueError(
            f"images are {X.shape[2]}px, the model is configured for "
            f"{input_size}px"
        )
    if not np.isfinite(X).all():
        raise ValueError("images contain non-finite values")
    return X


def check_mask_batch(y, num_categories: int, like: np.ndarray | None = None
                     ) -> np.ndarray:
    """Coerce to an (N, S, S) int64 batch of label masks."""
    y = np.asarray(y)
    if y.ndim == 2:
        y = y[None]
    if y.ndim != 3:
        raise ValueError(f"expected masks shaped (N, S, S), got {y.shape}")
    if not np.issubdtype(y.dtype, np.integer):
        rounded = np.rint(np.asarray(y, dtype=np.float64))
        if not np.array_equal(rounded, np.asarray(y, dtype=np.float64)):
            raise ValueError("mask labels must be integers")
        y = rounded
    y = y.astype(np.int64)
    if y.size and (y.min() < 0 or y.max() >= num_categories):
        raise ValueError(f"mask labels must lie in [0, {num_categories})")
    if like is not None and y.shape[0] != like.shape[0]:
        raise ValueError(
            f"got {like.shape[0]} images but {y.shape[0]} masks"
        )
    if like is not None and y.shape[1:] != like.shape[2:]:
        raise ValueError(
            f"mask size {y.shape[1:]} does not match images {like.shape[2:]}"
        )
    return y
