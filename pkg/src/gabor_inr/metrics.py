"""PSNR, SSIM and IOU."""
from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2


def _check(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def psnr(x, ref, peak: float = 1.0) -> float:
    """10 log10(peak^2 / MSE) over all elements; identical inputs give ``math.inf``."""
    x, ref = _check(x, ref)
    mse = float(np.mean((x - ref) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def _gaussian_kernel() -> np.ndarray:
    r = np.arange(SSIM_WINDOW) - (SSIM_WINDOW - 1) / 2
    k = np.exp(-(r ** 2) / (2 * SSIM_SIGMA ** 2))
    return k / k.sum()


def _filter_valid(img: np.ndarray, k: np.ndarray) -> np.ndarray:
    rows = sliding_window_view(img, len(k), axis=0) @ k
    return sliding_window_view(rows, len(k), axis=1) @ k


def _ssim_2d(x: np.ndarray, y: np.ndarray) -> float:
    k = _gaussian_kernel()
    mu_x, mu_y = _filter_valid(x, k), _filter_valid(y, k)
    sxx = _filter_valid(x * x, k) - mu_x ** 2
    syy = _filter_valid(y * y, k) - mu_y ** 2
    sxy = _filter_valid(x * y, k) - mu_x * mu_y
    num = (2 * mu_x * mu_y + SSIM_C1) * (2 * sxy + SSIM_C2)
    den = (mu_x ** 2 + mu_y ** 2 + SSIM_C1) * (sxx + syy + SSIM_C2)
    return float(np.mean(num / den))


def ssim(x, ref) -> float:
    """Mean local SSIM with an 11x11 Gaussian window (sigma 1.5) at unit range.

    Accepts [H, W] or [H, W, C]; channels are averaged.  Only windows fully
    inside the image contribute.
    """
    x, ref = _check(x, ref)
    if x.ndim == 2:
        x, ref = x[..., None], ref[..., None]
    if x.ndim != 3:
        raise ValueError(f"ssim expects [H, W] or [H, W, C], got {x.shape}")
    if x.shape[0] < SSIM_WINDOW or x.shape[1] < SSIM_WINDOW:
        raise ValueError(f"image {x.shape[:2]} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    return float(np.mean([_ssim_2d(x[..., c], ref[..., c]) for c in range(x.shape[2])]))


def iou(a, b, threshold: float = 0.5) -> float:
    """Intersection over union of two occupancy grids.

    Non-boolean inputs are thresholded (``value > threshold``).  Two empty
    grids score 1.0.
    """
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.dtype != bool:
        a = a > threshold
    if b.dtype != bool:
        b = b > threshold
    union = np.count_nonzero(a | b)
    if union == 0:
        return 1.0
    return np.count_nonzero(a & b) / union
