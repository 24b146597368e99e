"""8-bit RGB PNG input/output; the only external image format.

Floats in [0, 1] map to bytes via value * 255 (rounded); anything Pillow
can open is converted to RGB on load.
"""

from __future__ import annotations

import numpy as np
from PIL import Image

from .ops import check_tensor4


def load_png(path):
    """Read an image file as a (1, 3, h, w) float64 tensor in [0, 1]."""
    with Image.open(path) as img:
        rgb = np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0
    return np.ascontiguousarray(rgb.transpose(2, 0, 1))[None]

def save_png(path, tensor):
    """Write a (1, c, h, w) tensor as an 8-bit RGB PNG (values clamped)."""
    t = check_tensor4(tensor, "image")
    if t.shape[0] != 1:
        raise ValueError("save_png expects a single image (batch == 1)")
    if t.shape[1] == 1:
        t = np.repeat(t, 3, axis=1)
    if t.shape[1] != 3:
        raise ValueError(f"expected 1 or 3 channels, got {t.shape[1]}")
    data = np.rint(np.clip(t[0], 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(data.transpose(1, 2, 0), mode="RGB").save(path, format="PNG")
