"""Noise schedule and the forward (noising) process.

Linear per-step variances beta_1..beta_T; alpha_t = 1 - beta_t and
alpha_bar_t is the running product, with index 0 pinned to the identity
(beta_0 = 0, alpha_bar_0 = 1). Everything is computed and stored in
float64 so the product identities are exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ContractViolation


@dataclass(frozen=True)
class NoiseSchedule:
    """Length T+1 tables indexed by time step; index 0 is the no-noise step."""

    T: int
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray

    def __post_init__(self):
        for arr in (self.beta, self.alpha, self.alpha_bar):
            arr.setflags(write=False)


def make_schedule(T: int, beta_start: float = 1e-4, beta_end: float = 0.02) -> NoiseSchedule:
    """Linear beta schedule over T steps with cumulative products in float64."""
    if T < 1:
        raise ContractViolation(f"T must be >= 1, got {T}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ContractViolation(
            f"need 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})"
        )
    beta = np.zeros(T + 1, dtype=np.float64)
    beta[1:] = np.linspace(beta_start, beta_end, T, dtype=np.float64)
    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)
    return NoiseSchedule(T=T, beta=beta, alpha=alpha, alpha_bar=alpha_bar)


def forward_noise(x0: np.ndarray, t, eps: np.ndarray, schedule: NoiseSchedule) -> np.ndarray:
    """Noised state sqrt(abar_t) * x0 + sqrt(1 - abar_t) * eps.

    `t` is a scalar step in [0, T] or a per-sample (N,) array matched to
    a leading batch axis of x0.
    """
    x0 = np.asarray(x0)
    eps = np.asarray(eps)
    if x0.shape != eps.shape:
        raise ContractViolation(f"x0 {x0.shape} and eps {eps.shape} shapes differ")
    t_arr = np.asarray(t)
    if np.any(t_arr < 0) or np.any(t_arr > schedule.T):
        raise ContractViolation(f"t={t} outside [0, {schedule.T}]")
    abar = schedule.alpha_bar[t_arr]
    if t_arr.ndim == 1:
        extra = (1,) * (x0.ndim - 1)
        abar = abar.reshape(-1, *extra)
    return np.sqrt(abar) * x0 + np.sqrt(1.0 - abar) * eps
