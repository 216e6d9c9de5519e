"""Reverse-process samplers.

Two families: full ancestral (Markov) sampling through every schedule
step, and the accelerated non-Markov procedure that iterates the
denoiser over a short step subsequence, feeding each clean-image
estimate straight back in with no re-noising. A DDIM-style update is
also provided behind an explicit flag for comparison; it is not the
default inference path.
"""

from __future__ import annotations

import numpy as np

from ..errors import ContractViolation
from .denoisers import predict_clean
from .schedule import NoiseSchedule


def posterior_coefficients(t: int, schedule: NoiseSchedule):
    """Coefficients (on x0_hat, on x_t) and variance of q(x_{t-1} | x_t, x0)."""
    if not (1 <= t <= schedule.T):
        raise ContractViolation(f"t={t} outside [1, {schedule.T}]")
    abar_t = schedule.alpha_bar[t]
    abar_prev = schedule.alpha_bar[t - 1]
    beta_t = schedule.beta[t]
    alpha_t = schedule.alpha[t]
    coef_x0 = np.sqrt(abar_prev) * beta_t / (1.0 - abar_t)
    coef_xt = np.sqrt(alpha_t) * (1.0 - abar_prev) / (1.0 - abar_t)
    var = (1.0 - abar_prev) / (1.0 - abar_t) * beta_t
    return coef_x0, coef_xt, var


def markov_step(x_t, x0_hat, t: int, schedule: NoiseSchedule, rng) -> np.ndarray:
    """One ancestral step; deterministic (no noise) at t = 1."""
    coef_x0, coef_xt, var = posterior_coefficients(t, schedule)
    mean = coef_x0 * x0_hat + coef_xt * x_t
    if t == 1:
        return mean
    return mean + np.sqrt(var) * rng.standard_normal(x_t.shape)


def sample_markov(model, x_init, c, seg, schedule: NoiseSchedule, rng) -> np.ndarray:
    """Full T-step ancestral sampling from x_init ~ N(0, I)."""
    x = x_init
    for t in range(schedule.T, 0, -1):
        x0_hat = predict_clean(model, x, c, seg, t)
        x = markov_step(x, x0_hat, t, schedule, rng)
    return x


def make_tau(steps: int, T: int):
    """Step subsequence for accelerated sampling.

    A single step runs the denoiser once at t = T, where pure-noise
    input matches the training distribution; longer subsequences are
    evenly spaced from T down to 1.
    """
    if steps < 1:
        raise ContractViolation("steps must be >= 1")
    if steps == 1:
        return [T]
    vals = np.unique(np.round(np.linspace(T, 1, steps)).astype(int))[::-1]
    return [int(v) for v in vals]


def sample_non_markov(model, x_init, c, seg, tau) -> np.ndarray:
    """Iterate the denoiser over `tau`; each output becomes the next state.

    No re-noising happens between sub-steps: a single entry means one
    forward pass.
    """
    tau = list(tau)
    if not tau:
        raise ContractViolation("tau must be nonempty")
    if any(b >= a for a, b in zip(tau, tau[1:])):
        raise ContractViolation(f"tau must be strictly decreasing, got {tau}")
    if tau[-1] < 1:
        raise ContractViolation("tau steps must be >= 1")
    x = x_init
    for t in tau:
        x = predict_clean(model, x, c, seg, int(t))
    return x


def sample_ddim(model, x_init, c, seg, schedule: NoiseSchedule, tau,
                eta: float = 0.0, rng=None) -> np.ndarray:
    """Deterministic-by-default DDIM update over `tau` (comparison sampler)."""
    tau = list(tau)
    if not tau:
        raise ContractViolation("tau must be nonempty")
    if eta > 0.0 and rng is None:
        raise ContractViolation("stochastic DDIM (eta > 0) needs an rng")
    x = x_init
    for k, t in enumerate(tau):
        t = int(t)
        x0_hat = predict_clean(model, x, c, seg, t)
        t_prev = int(tau[k + 1]) if k + 1 < len(tau) else 0
        abar_t = schedule.alpha_bar[t]
        abar_prev = schedule.alpha_bar[t_prev]
        eps_hat = (x - np.sqrt(abar_t) * x0_hat) / np.sqrt(1.0 - abar_t)
        sigma = 0.0
        if eta > 0.0 and t_prev > 0:
            sigma = eta * np.sqrt((1.0 - abar_prev) / (1.0 - abar_t)) \
                * np.sqrt(1.0 - abar_t / abar_prev)
        x = np.sqrt(abar_prev) * x0_hat \
            + np.sqrt(max(1.0 - abar_prev - sigma ** 2, 0.0)) * eps_hat
        if sigma > 0.0:
            x = x + sigma * rng.standard_normal(x.shape)
    return x
