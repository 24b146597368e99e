"""PSNR and SSIM for float images in [0, peak]."""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
PSNR_CAP = 99.0


def psnr(a, b, peak=1.0):
    """10*log10(peak^2 / MSE), capped at 99 dB (and exactly 99 when MSE ~ 0)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse < 1e-12:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * np.log10(peak * peak / mse))


def _gaussian_window():
    r = (SSIM_WINDOW - 1) // 2
    g = np.exp(-0.5 * (np.arange(-r, r + 1) / SSIM_SIGMA) ** 2)
    g /= g.sum()
    return np.outer(g, g)


def _windowed(img, window):
    """Weighted local sums over all full (valid) windows."""
    views = sliding_window_view(img, window.shape)
    return np.tensordot(views, window, axes=([2, 3], [0, 1]))


def ssim(a, b, peak=1.0):
    """Mean structural similarity with an 11x11 Gaussian window (sigma 1.5).

    Accepts single images shaped (1, c, h, w), (c, h, w) or (h, w); the
    SSIM map is computed per channel over valid window positions and
    averaged.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a, b = a[None], b[None]
    elif a.ndim == 4:
        if a.shape[0] != 1:
            raise ValueError("ssim expects a single image (batch == 1)")
        a, b = a[0], b[0]
    elif a.ndim != 3:
        raise ValueError(f"unsupported image rank {a.ndim}")
    if a.shape[1] < SSIM_WINDOW or a.shape[2] < SSIM_WINDOW:
        raise ValueError(f"image smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} ssim window")

    window = _gaussian_window()
    c1 = (SSIM_K1 * peak) ** 2
    c2 = (SSIM_K2 * peak) ** 2
    scores = []
    for ca, cb in zip(a, b):
        mu_a = _windowed(ca, window)
        mu_b = _windowed(cb, window)
        var_a = _windowed(ca * ca, window) - mu_a * mu_a
        var_b = _windowed(cb * cb, window) - mu_b * mu_b
        cov = _windowed(ca * cb, window) - mu_a * mu_b
        num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
        den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
        scores.append(np.mean(num / den))
    return float(np.mean(scores))
