"""Image quality and text accuracy metrics.

PSNR and SSIM operate on unit-range images; text metrics take parallel
prediction/ground-truth lists. PSNR of identical images is capped at
100 dB so aggregation stays total.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractViolation
from .imgcore import ImageTensor, luminance

PSNR_CAP_DB = 100.0
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5


def _as_image_array(x) -> np.ndarray:
    if isinstance(x, ImageTensor):
        if x.range_tag != "unit":
            raise ContractViolation("metrics expect unit-range images")
        return x.data
    return np.asarray(x, dtype=np.float64)


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio in dB with MAX = 1, capped at 100 dB."""
    x = _as_image_array(a)
    y = _as_image_array(b)
    if x.shape != y.shape:
        raise ContractViolation(f"psnr shapes differ: {x.shape} vs {y.shape}")
    mse = float(np.mean((x - y) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return float(min(10.0 * np.log10(1.0 / mse), PSNR_CAP_DB))


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    """Normalized 2-D Gaussian kernel."""
    half = (size - 1) / 2.0
    coords = np.arange(size) - half
    g = np.exp(-(coords ** 2) / (2.0 * sigma ** 2))
    kernel = np.outer(g, g)
    return kernel / kernel.sum()


def _filter_valid(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    kh, kw = kernel.shape
    h, w = img.shape
    oh, ow = h - kh + 1, w - kw + 1
    windows = np.lib.stride_tricks.sliding_window_view(img, (kh, kw))
    return np.einsum("ijkl,kl->ij", windows, kernel, optimize=True)[:oh, :ow]


def ssim(a, b) -> float:
    """Mean local structural similarity (11x11 Gaussian window, sigma 1.5).

    RGB inputs are reduced to luminance first; images smaller than the
    window are rejected.
    """
    x = _as_image_array(a)
    y = _as_image_array(b)
    if x.shape != y.shape:
        raise ContractViolation(f"ssim shapes differ: {x.shape} vs {y.shape}")
    if x.ndim == 3:
        x = x.mean(axis=2) if not isinstance(a, ImageTensor) else luminance(a)
        y = y.mean(axis=2) if not isinstance(b, ImageTensor) else luminance(b)
    if x.shape[0] < SSIM_WINDOW or x.shape[1] < SSIM_WINDOW:
        raise ContractViolation(
            f"image {x.shape} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window"
        )
    kernel = gaussian_window()
    mu_x = _filter_valid(x, kernel)
    mu_y = _filter_valid(y, kernel)
    mu_xx = mu_x * mu_x
    mu_yy = mu_y * mu_y
    mu_xy = mu_x * mu_y
    sigma_xx = _filter_valid(x * x, kernel) - mu_xx
    sigma_yy = _filter_valid(y * y, kernel) - mu_yy
    sigma_xy = _filter_valid(x * y, kernel) - mu_xy
    num = (2.0 * mu_xy + SSIM_C1) * (2.0 * sigma_xy + SSIM_C2)
    den = (mu_xx + mu_yy + SSIM_C1) * (sigma_xx + sigma_yy + SSIM_C2)
    return float(np.mean(num / den))


def edit_distance(p: str, g: str) -> int:
    """Levenshtein distance with unit insert/delete/substitute costs."""
    if p == g:
        return 0
    if not p:
        return len(g)
    if not g:
        return len(p)
    prev = list(range(len(g) + 1))
    for i, pc in enumerate(p, 1):
        cur = [i]
        for j, gc in enumerate(g, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (pc != gc)))
        prev = cur
    return prev[-1]


def char_acc(preds, gts, casefold: bool = False) -> float:
    """Mean of 1 - ED(p, g) / max(|p|, |g|); an empty pair scores 1."""
    if len(preds) != len(gts):
        raise ContractViolation(f"list lengths differ: {len(preds)} vs {len(gts)}")
    if not preds:
        return 1.0
    total = 0.0
    for p, g in zip(preds, gts):
        if casefold:
            p, g = p.casefold(), g.casefold()
        denom = max(len(p), len(g))
        total += 1.0 if denom == 0 else 1.0 - edit_distance(p, g) / denom
    return total / len(preds)


def word_acc(preds, gts, case_insensitive: bool = True) -> float:
    """Percentage of exact matches; comparison is case-insensitive by default."""
    if len(preds) != len(gts):
        raise ContractViolation(f"list lengths differ: {len(preds)} vs {len(gts)}")
    if not preds:
        return 0.0
    hits = 0
    for p, g in zip(preds, gts):
        if case_insensitive:
            p, g = p.casefold(), g.casefold()
        hits += p == g
    return 100.0 * hits / len(preds)
