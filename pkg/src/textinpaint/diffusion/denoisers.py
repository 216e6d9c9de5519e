"""Denoiser implementations behind a common predict() interface.

A denoiser maps (noisy state, corrupted image, foreground map, step)
to an estimate of the clean image. The trained U-Net can parameterize
either the clean image directly or the added noise; the oracle simply
returns a stored ground truth and anchors the sampler tests.
"""

from __future__ import annotations

import numpy as np

from ..errors import ContractViolation
from .schedule import NoiseSchedule


def assemble_input(x_t: np.ndarray, c: np.ndarray, seg: np.ndarray) -> np.ndarray:
    """Concatenate state, condition image, and replicated foreground map to 9 channels."""
    if x_t.ndim != 4 or c.ndim != 4 or seg.ndim != 4:
        raise ContractViolation("assemble_input expects (N, C, H, W) arrays")
    if x_t.shape[1] != 3 or c.shape[1] != 3:
        raise ContractViolation(
            f"state and condition must be 3-channel, got {x_t.shape[1]} and {c.shape[1]}"
        )
    if seg.shape[1] != 1:
        raise ContractViolation(f"foreground map must be 1-channel, got {seg.shape[1]}")
    if x_t.shape[0] != c.shape[0] or x_t.shape[2:] != c.shape[2:] or x_t.shape[2:] != seg.shape[2:]:
        raise ContractViolation(
            f"shape mismatch: x_t {x_t.shape}, c {c.shape}, seg {seg.shape}"
        )
    return np.concatenate([x_t, c, np.repeat(seg, 3, axis=1)], axis=1)


class OracleDenoiser:
    """Returns a stored clean image regardless of the input state."""

    def __init__(self, x0: np.ndarray):
        self.x0 = np.asarray(x0)

    def predict(self, x_t, c, seg, t):
        if x_t.shape != self.x0.shape:
            raise ContractViolation(
                f"oracle holds shape {self.x0.shape}, got state {x_t.shape}"
            )
        return self.x0.copy()


class UNetDenoiser:
    """Trained conditional U-Net with x0- or noise-prediction parameterization."""

    def __init__(self, net, schedule: NoiseSchedule, parameterization: str = "x"):
        if parameterization not in ("x", "eps"):
            raise ContractViolation(f"unknown parameterization {parameterization!r}")
        self.net = net
        self.schedule = schedule
        self.parameterization = parameterization

    def predict(self, x_t, c, seg, t):
        x_in = assemble_input(x_t.astype(self.net.dtype), c.astype(self.net.dtype),
                              seg.astype(self.net.dtype))
        temb = self.net.time_features(t, x_in.shape[0])
        out, _ = self.net.forward(x_in, temb)
        if self.parameterization == "x":
            return out
        return reconstruct_from_noise(x_t, out, t, self.schedule)


def reconstruct_from_noise(x_t, eps_hat, t, schedule: NoiseSchedule) -> np.ndarray:
    """Invert the forward process: x0 = (x_t - sqrt(1-abar_t) eps) / sqrt(abar_t)."""
    t_arr = np.asarray(t)
    abar = schedule.alpha_bar[t_arr]
    if t_arr.ndim == 1:
        abar = abar.reshape(-1, *([1] * (x_t.ndim - 1)))
    return (x_t - np.sqrt(1.0 - abar) * eps_hat) / np.sqrt(abar)


def predict_clean(model, x_t, c, seg, t) -> np.ndarray:
    """Validated denoiser call; output shape equals the state shape."""
    out = model.predict(x_t, c, seg, t)
    if out.shape != x_t.shape:
        raise ContractViolation(
            f"denoiser returned shape {out.shape}, expected {x_t.shape}"
        )
    return out
