"""Training objective for the structure predictor.

Four terms compare a predicted foreground map against the binary truth:
mean absolute error, a positively-weighted binary cross entropy (the
foreground class counts double), a perceptual term on frozen conv
features, and a style term on Gram matrices of those features. All
gradients are written by hand and verified by finite differences.
"""

from __future__ import annotations

import numpy as np

from ..errors import ContractViolation
from ..imgcore import SegMap

CLAMP_EPS = 1e-7


def _as_batch(x) -> np.ndarray:
    """Accept SegMap, (H, W), or (N, 1, H, W); return (N, 1, H, W) float64."""
    if isinstance(x, SegMap):
        x = x.values
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        return x[None, None]
    if x.ndim == 4:
        return x
    raise ContractViolation(f"expected (H, W) or (N, 1, H, W), got shape {x.shape}")


def loss_pix(s, s_hat) -> float:
    """Mean absolute error over all pixels."""
    a, b = _as_batch(s), _as_batch(s_hat)
    return float(np.abs(a - b).mean())


def loss_seg(s, s_hat, positive_weight: float = 2.0, clamp_eps: float = CLAMP_EPS) -> float:
    """Weighted binary cross entropy with the stated extra weight on foreground.

    Per pixel: -(pw * s * ln v + (1 - s) * ln(1 - v)) with v clamped to
    [clamp_eps, 1 - clamp_eps]. positive_weight=1.0 gives standard BCE.
    """
    a, b = _as_batch(s), _as_batch(s_hat)
    v = np.clip(b, clamp_eps, 1.0 - clamp_eps)
    per_pixel = -(positive_weight * a * np.log(v) + (1.0 - a) * np.log1p(-v))
    return float(per_pixel.mean())


def loss_cha(s, s_hat, phi) -> float:
    """Mean absolute error between frozen-extractor features of s and s_hat."""
    fa, _ = phi.forward(_as_batch(s))
    fb, _ = phi.forward(_as_batch(s_hat))
    return float(np.abs(fa - fb).mean())


def gram(features: np.ndarray) -> np.ndarray:
    """Gram matrix of a (C, H, W) feature map, normalized by C*H*W."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 3:
        raise ContractViolation(f"gram expects (C, H, W), got shape {features.shape}")
    c, h, w = features.shape
    flat = features.reshape(c, h * w)
    return (flat @ flat.T) / (c * h * w)


def _gram_batch(features: np.ndarray) -> np.ndarray:
    n, c, h, w = features.shape
    flat = features.reshape(n, c, h * w)
    return np.matmul(flat, flat.transpose(0, 2, 1)) / (c * h * w)


def loss_sty(s, s_hat, phi) -> float:
    """Mean absolute difference between Gram matrices of extractor features."""
    fa, _ = phi.forward(_as_batch(s))
    fb, _ = phi.forward(_as_batch(s_hat))
    return float(np.abs(_gram_batch(fa) - _gram_batch(fb)).mean())


def loss_combined(s, s_hat, phi, weights=(1.0, 1.0, 1.0, 1.0),
                  positive_weight: float = 2.0) -> float:
    """Weighted sum of the four structure losses."""
    w1, w2, w3, w4 = weights
    total = w1 * loss_pix(s, s_hat) + w2 * loss_seg(s, s_hat, positive_weight)
    if w3 or w4:
        total += w3 * loss_cha(s, s_hat, phi) + w4 * loss_sty(s, s_hat, phi)
    return float(total)


def combined_loss_and_grad(seg_true, seg_pred, phi, weights=(1.0, 1.0, 1.0, 1.0),
                           positive_weight: float = 2.0, clamp_eps: float = CLAMP_EPS):
    """Total loss, per-term values, and the gradient wrt seg_pred.

    seg_true and seg_pred are (N, 1, H, W); the returned gradient
    matches seg_pred's shape and dtype.
    """
    w1, w2, w3, w4 = weights
    diff = seg_pred - seg_true
    n_pix = diff.size
    parts = {}
    grad = np.zeros_like(seg_pred)

    parts["pix"] = float(np.abs(diff).mean())
    grad += w1 * np.sign(diff) / n_pix

    v = np.clip(seg_pred, clamp_eps, 1.0 - clamp_eps)
    per_pixel = -(positive_weight * seg_true * np.log(v) + (1.0 - seg_true) * np.log1p(-v))
    parts["seg"] = float(per_pixel.mean())
    inside = (seg_pred >= clamp_eps) & (seg_pred <= 1.0 - clamp_eps)
    g_seg = (-(positive_weight * seg_true / v) + (1.0 - seg_true) / (1.0 - v)) / n_pix
    grad += w2 * g_seg * inside

    if w3 or w4:
        f_true, _ = phi.forward(seg_true)
        f_pred, cache = phi.forward(seg_pred)
        g_feat = np.zeros_like(f_pred)

        f_diff = f_pred - f_true
        parts["cha"] = float(np.abs(f_diff).mean())
        g_feat += w3 * np.sign(f_diff) / f_diff.size

        nb, c, h, w = f_pred.shape
        flat_p = f_pred.reshape(nb, c, h * w)
        g_true = _gram_batch(f_true)
        g_pred = _gram_batch(f_pred)
        g_diff = g_pred - g_true
        parts["sty"] = float(np.abs(g_diff).mean())
        d_gram = np.sign(g_diff) / g_diff.size
        g_sty = np.matmul(d_gram + d_gram.transpose(0, 2, 1), flat_p) / (c * h * w)
        g_feat += w4 * g_sty.reshape(f_pred.shape).astype(g_feat.dtype)

        grad += phi.backward(cache, g_feat)
    else:
        parts["cha"] = 0.0
        parts["sty"] = 0.0

    total = w1 * parts["pix"] + w2 * parts["seg"] + w3 * parts["cha"] + w4 * parts["sty"]
    return float(total), parts, grad
