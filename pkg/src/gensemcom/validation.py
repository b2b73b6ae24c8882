"""Input checks for the estimator API, built on scikit-learn's validators."""

from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array

from .data import IGNORE_LABEL


def check_images(X, height: int | None = None, width: int | None = None) -> np.ndarray:
    """Return ``X`` as float32 ``(N, H, W, 3)`` in [0, 1].

    uint8 input is scaled by 1/255; float input must already lie in [0, 1].
    """
    raw = np.asarray(X)
    scale_uint8 = raw.dtype == np.uint8
    X = check_array(raw, allow_nd=True, dtype=None, ensure_all_finite=True, ensure_min_features=1)
    if X.ndim == 3:
        X = X[None]
    if X.ndim != 4 or X.shape[-1] != 3:
        raise ValueError(f"expected images shaped (N, H, W, 3), got {X.shape}")
    X = X.astype(np.float32) / (np.float32(255.0) if scale_uint8 else np.float32(1.0))
    if X.min() < 0.0 or X.max() > 1.0:
        raise ValueError("float images must lie in [0, 1]")
    if height is not None and (X.shape[1], X.shape[2]) != (height, width):
        raise ValueError(f"images are {X.shape[1]}x{X.shape[2]}, model expects {height}x{width}")
    return X


def check_masks(y, images: np.ndarray, num_classes: int) -> np.ndarray:
    y = check_array(np.asarray(y), allow_nd=True, dtype=None, ensure_min_features=1)
    if y.ndim == 2:
        y = y[None]
    if y.shape != images.shape[:3]:
        raise ValueError(f"masks shaped {y.shape} do not match images {images.shape[:3]}")
    if not np.issubdtype(y.dtype, np.integer):
        if not np.all(np.equal(np.mod(y, 1), 0)):
            raise ValueError("mask labels must be integers")
    y = y.astype(np.int64)
    bad = ((y < 0) | (y >= num_classes)) & (y != IGNORE_LABEL)
    if bad.any():
        raise ValueError(f"mask labels must lie in [0, {num_classes - 1}] or equal {IGNORE_LABEL}")
    return y.astype(np.uint8)
