"""Synthetic clean images, spatially correlated noise, and residual-region
analysis.

Noise is a white Gaussian field convolved (circularly) with a unit-L2
shaping kernel, so the output standard deviation equals the requested
sigma while the kernel shape controls the correlation geometry: a 'slash'
kernel produces '/'-oriented streaks, 'square' produces blobs, and so on.

``analyze_regions`` binarizes a residual map, labels 8-connected
components, and reports how the noisy pixels distribute over component
areas -- in particular the fraction living in components larger than 25
pixels, the regime that pixel-shuffle strides up to 5 cannot break.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .masks import MASK_TAGS, shape_offsets
from .ops import check_tensor4

CLEAN_PATTERNS = ("stripes", "checker", "gradient", "disks")

# Component-area buckets: 1-9, 10-25, 26-100, >100 pixels.
AREA_BUCKETS = ((1, 9), (10, 25), (26, 100), (101, None))
LARGE_AREA = 25


def gen_clean(pattern, size, seed=0, channels=3, period=4):
    """Deterministic clean test image in [0, 1], shaped (1, channels, size, size)."""
    if size < 16:
        raise ValueError(f"size must be >= 16, got {size}")
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    if pattern == "checker":
        img = ((yy // period + xx // period) % 2)
        img = np.repeat(img[None], channels, axis=0)
    elif pattern == "gradient":
        img = np.repeat((xx / (size - 1))[None], channels, axis=0)
    elif pattern == "stripes":
        theta = rng.uniform(0, np.pi)
        wavelength = rng.uniform(8.0, 24.0)
        phase = rng.uniform(0, 2 * np.pi, size=channels)
        t = (xx * np.cos(theta) + yy * np.sin(theta)) * (2 * np.pi / wavelength)
        img = np.stack([0.5 + 0.5 * np.sin(t + ph) for ph in phase])
    elif pattern == "disks":
        img = np.full((channels, size, size), 0.2)
        for _ in range(max(4, size // 12)):
            cy, cx = rng.uniform(0, size, size=2)
            radius = rng.uniform(size / 12, size / 4)
            level = rng.uniform(0.3, 1.0, size=channels)
            dist = np.sqrt((yy - cy) ** 2 + (xx - cx) ** 2)
            soft = 1.0 / (1.0 + np.exp((dist - radius) / 1.5))
            img = np.maximum(img, level[:, None, None] * soft)
    else:
        raise ValueError(f"unknown pattern {pattern!r}; known: {', '.join(CLEAN_PATTERNS)}")
    return np.clip(img, 0.0, 1.0)[None]


@dataclass
class NoiseSpec:
    """Shape and strength of a synthetic correlated-noise field.

    kernel is 'white' (single tap), 'iso' (full support x support box), or
    any mask-shape tag; support sets the kernel canvas.  The kernel is
    normalized to unit L2 norm so the field's std equals sigma.
    """

    sigma: float = 0.2
    kernel: str = "iso"
    support: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if self.support < 1 or self.support % 2 == 0:
            raise ValueError("support must be odd and >= 1")
        self.kernel = str(self.kernel).lower()
        if self.kernel not in ("white", "iso") and self.kernel not in MASK_TAGS:
            raise ValueError(
                f"unknown kernel {self.kernel!r}; known: white, iso, {', '.join(MASK_TAGS)}"
            )

    def kernel_array(self):
        s = self.support
        if self.kernel == "white":
            arr = np.zeros((1, 1))
            arr[0, 0] = 1.0
            return arr
        if self.kernel == "iso":
            arr = np.ones((s, s))
        else:
            arr = np.zeros((s, s))
            r = (s - 1) // 2
            for p, c in shape_offsets(self.kernel, r):
                arr[p + r, c + r] = 1.0
        return arr / np.linalg.norm(arr)


def gen_correlated_noise(spec, size, channels=3):
    """Zero-mean correlated Gaussian field, shaped (1, channels, size, size)."""
    rng = np.random.default_rng(spec.seed)
    white = rng.normal(0.0, spec.sigma, size=(channels, size, size))
    kernel = spec.kernel_array()
    if kernel.shape == (1, 1):
        return white[None].copy()
    out = np.stack(
        [ndimage.convolve(white[c], kernel, mode="wrap") for c in range(channels)]
    )
    return out[None]


@dataclass
class NoiseRegionStats:
    """Connected-component census of a binarized residual map."""

    areas: list = field(default_factory=list)  # sorted component areas
    proportions: tuple = (0.0, 0.0, 0.0, 0.0)  # noisy-pixel share per AREA_BUCKET
    large_fraction: float = 0.0  # share of noisy pixels in areas > LARGE_AREA
    threshold: float = 0.0

    @property
    def total_noisy_pixels(self):
        return int(sum(self.areas))

    def area_histogram(self):
        """(area, count) pairs, ascending by area."""
        hist = {}
        for a in self.areas:
            hist[a] = hist.get(a, 0) + 1
        return sorted(hist.items())


def analyze_regions(residual, threshold=None):
    """Label 8-connected regions of |residual| > threshold and bucket them.

    residual is a single-image tensor (1, c, h, w); the channel-wise max of
    |residual| is binarized.  threshold defaults to twice a robust (MAD)
    estimate of the residual std.
    """
    r = check_tensor4(residual, "residual")
    if r.shape[0] != 1:
        raise ValueError("analyze_regions expects a single image (batch == 1)")
    mag = np.abs(r[0]).max(axis=0)
    if threshold is None:
        # 2x a robust std estimate; may be 0 for a constant residual, in
        # which case the strict > comparison below yields no components.
        flat = r[0].ravel()
        mad = np.median(np.abs(flat - np.median(flat)))
        threshold = 2.0 * 1.4826 * mad
    elif threshold <= 0:
        raise ValueError(f"threshold must be > 0, got {threshold}")
    binary = mag > threshold
    labels, count = ndimage.label(binary, structure=np.ones((3, 3), dtype=int))
    if count == 0:
        return NoiseRegionStats(threshold=float(threshold))
    areas = np.bincount(labels.ravel())[1:]
    total = float(areas.sum())
    props = []
    for lo, hi in AREA_BUCKETS:
        sel = (areas >= lo) if hi is None else ((areas >= lo) & (areas <= hi))
        props.append(float(areas[sel].sum()) / total)
    large = float(areas[areas > LARGE_AREA].sum()) / total
    return NoiseRegionStats(
        areas=sorted(int(a) for a in areas),
        proportions=tuple(props),
        large_fraction=large,
        threshold=float(threshold),
    )
