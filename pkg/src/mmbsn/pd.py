"""Pixel-shuffle downsampling (stride s) and its exact inverse.

``pd`` rearranges an image into the s*s subsampled sub-images, tiled as an
s x s mosaic of blocks inside one image of the same total size; sub-image
(i, j) holds the pixels (i + s*y, j + s*x).  The map is a permutation of
pixel positions, so ``pd_inv`` undoes it exactly.  Sizes that are not
multiples of s are reflect-padded up front; callers that need the original
size back pass ``crop_hw`` to ``pd_inv``.

``random_replace_refine`` is the inference-time post-processing step:
average several re-denoising passes in which each value is independently
reverted to the noisy original with probability p.
"""

from __future__ import annotations

import numpy as np

from .ops import check_tensor4


def _pad_to_multiple(x, s):
    h, w = x.shape[2], x.shape[3]
    ph = (-h) % s
    pw = (-w) % s
    if ph == 0 and pw == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (0, ph), (0, pw)), mode="reflect")


def pd(image, s):
    """Mosaic of the s*s stride-s sub-images; reflect-pads non-multiples."""
    if s < 1:
        raise ValueError(f"pd stride must be >= 1, got {s}")
    x = check_tensor4(image, "image")
    if s == 1:
        return x.copy()
    x = _pad_to_multiple(x, s)
    b, c, h, w = x.shape
    hs, ws = h // s, w // s
    # (b, c, y, i, x, j) -> (b, c, i, y, j, x)
    v = x.reshape(b, c, hs, s, ws, s)
    return np.ascontiguousarray(v.transpose(0, 1, 3, 2, 5, 4)).reshape(b, c, h, w)


def pd_inv(mosaic, s, crop_hw=None):
    """Exact inverse of ``pd``; optionally crop back to a pre-pad size."""
    if s < 1:
        raise ValueError(f"pd stride must be >= 1, got {s}")
    x = check_tensor4(mosaic, "mosaic")
    b, c, h, w = x.shape
    if h % s or w % s:
        raise ValueError(f"mosaic dims {(h, w)} not divisible by stride {s}")
    if s == 1:
        out = x.copy()
    else:
        hs, ws = h // s, w // s
        v = x.reshape(b, c, s, hs, s, ws)
        out = np.ascontiguousarray(v.transpose(0, 1, 3, 2, 5, 4)).reshape(b, c, h, w)
    if crop_hw is not None:
        out = np.ascontiguousarray(out[:, :, : crop_hw[0], : crop_hw[1]])
    return out


def random_replace_refine(denoise_fn, denoised, noisy, p=0.16, T=8, rng=None):
    """Average T re-denoising passes over randomly re-noised inputs.

    Each pass independently replaces every value of ``denoised`` by the
    corresponding ``noisy`` value with probability p, then re-denoises via
    ``denoise_fn``.  Deterministic for a given rng/seed; passes are averaged
    in index order.
    """
    if denoised.shape != noisy.shape:
        raise ValueError(f"shape mismatch: {denoised.shape} vs {noisy.shape}")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"replacement probability must be in [0, 1], got {p}")
    if T < 1:
        raise ValueError(f"number of passes must be >= 1, got {T}")
    if rng is None or isinstance(rng, int):
        rng = np.random.default_rng(rng)
    acc = np.zeros_like(denoised)
    for _ in range(T):
        replace = rng.random(denoised.shape) < p
        acc += denoise_fn(np.where(replace, noisy, denoised))
    return acc / T
