"""Input validation helpers for the estimator-facing API.

Public entry points accept images the way the scientific-Python ecosystem
usually passes them (channels last) and convert to the internal
(batch, channels, height, width) float64 layout:

* (h, w)          -- one grayscale image
* (n, h, w)       -- a batch of grayscale images
* (n, h, w, c)    -- a batch of channels-last images

A single color image must be passed as (1, h, w, c).
"""

from __future__ import annotations

import numpy as np


def image_batch_to_tensor4(X, name="X"):
    """Convert user-facing image batches to (n, c, h, w); returns (tensor, ndim)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 2:
        t = X[None, None]
    elif X.ndim == 3:
        t = X[:, None]
    elif X.ndim == 4:
        t = np.transpose(X, (0, 3, 1, 2))
    else:
        raise ValueError(
            f"{name} must be (h, w), (n, h, w) or (n, h, w, c); got shape {X.shape}"
        )
    if min(t.shape) < 1:
        raise ValueError(f"{name} has an empty dimension: {X.shape}")
    if not np.all(np.isfinite(t)):
        raise ValueError(f"{name} contains non-finite values")
    if t.min() < -1e-6 or t.max() > 1.0 + 1e-6:
        raise ValueError(
            f"{name} values must lie in [0, 1]; got range "
            f"[{t.min():.4g}, {t.max():.4g}] (rescale, e.g. divide uint8 data by 255)"
        )
    return np.ascontiguousarray(np.clip(t, 0.0, 1.0)), X.ndim


def tensor4_to_image_batch(t, ndim):
    """Undo image_batch_to_tensor4 for the given original rank."""
    if ndim == 2:
        return t[0, 0]
    if ndim == 3:
        return t[:, 0]
    return np.transpose(t, (0, 2, 3, 1))
