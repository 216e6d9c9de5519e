"""Training loop for the diffusion reconstruction stage."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractViolation, DivergenceError
from ..nnkit import adam_step
from .denoisers import UNetDenoiser
from .schedule import NoiseSchedule, forward_noise


@dataclass
class DiffusionTrainConfig:
    epochs: int = 20
    batch_size: int = 2
    lr: float = 1e-3
    predict_target: str = "x"  # "x" predicts the clean image, "eps" the noise
    seed: int = 0


@dataclass
class DiffusionTrainReport:
    epoch_losses: list = field(default_factory=list)
    steps: int = 0

    @property
    def initial_loss(self):
        return self.epoch_losses[0] if self.epoch_losses else None

    @property
    def final_loss(self):
        return self.epoch_losses[-1] if self.epoch_losses else None


def mse_loss(x0, x0_hat) -> float:
    """Mean squared error between a clean image and its reconstruction."""
    a = np.asarray(x0, dtype=np.float64)
    b = np.asarray(x0_hat, dtype=np.float64)
    if a.shape != b.shape:
        raise ContractViolation(f"shapes differ: {a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2))


def records_to_diffusion_arrays(records, seg_provider="oracle", dtype=np.float32):
    """Stack records into (clean, condition, foreground) model-range arrays.

    seg_provider is either the string "oracle" (use the ground-truth
    intact segmask) or a structure net whose predictions are
    precomputed here, mirroring two-stage training.
    """
    x0s, cs, segs = [], [], []
    for rec in records:
        x0 = rec.intact_image.data.transpose(2, 0, 1)
        c = rec.corrupted_image.data.transpose(2, 0, 1)
        if x0.shape[0] == 1:
            x0 = np.repeat(x0, 3, axis=0)
            c = np.repeat(c, 3, axis=0)
        x0s.append((2.0 * x0 - 1.0).astype(dtype))
        cs.append((2.0 * c - 1.0).astype(dtype))
        if seg_provider == "oracle":
            segs.append(rec.intact_segmask.values[None].astype(dtype))
        else:
            segs.append(seg_provider.predict(rec.corrupted_image).values[None].astype(dtype))
    return np.stack(x0s), np.stack(cs), np.stack(segs)


def train_denoiser(net, records, schedule: NoiseSchedule, cfg: DiffusionTrainConfig,
                   seg_provider="oracle", log=None, start_step: int = 0) -> DiffusionTrainReport:
    """Standard denoising training: noise each batch to a random step and
    regress the configured target with Adam."""
    if not records:
        raise ValueError("training needs at least one record")
    if cfg.predict_target not in ("x", "eps"):
        raise ContractViolation(f"predict_target must be 'x' or 'eps', got {cfg.predict_target!r}")
    x0_all, c_all, seg_all = records_to_diffusion_arrays(records, seg_provider, net.dtype)
    rng = np.random.default_rng(cfg.seed)
    report = DiffusionTrainReport()
    step = start_step
    n = len(records)
    bs = min(cfg.batch_size, n)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        losses = []
        for lo in range(0, n, bs):
            idx = order[lo:lo + bs]
            x0, c, seg = x0_all[idx], c_all[idx], seg_all[idx]
            t = rng.integers(1, schedule.T + 1, size=len(idx))
            eps = rng.standard_normal(x0.shape).astype(net.dtype)
            x_t = forward_noise(x0, t, eps, schedule).astype(net.dtype)
            x_in = np.concatenate([x_t, c, np.repeat(seg, 3, axis=1)], axis=1)
            temb = net.time_features(t, len(idx))
            pred, cache = net.forward(x_in, temb)
            target = x0 if cfg.predict_target == "x" else eps
            diff = pred - target
            loss = float(np.mean(diff.astype(np.float64) ** 2))
            if not np.isfinite(loss):
                raise DivergenceError(
                    f"non-finite diffusion loss at epoch {epoch} step {step}"
                )
            net.backward(cache, (2.0 * diff / diff.size).astype(net.dtype))
            step += 1
            adam_step(net.params, cfg.lr, step_index=step)
            losses.append(loss)
        report.epoch_losses.append(float(np.mean(losses)))
        if log:
            log(f"denoiser epoch {epoch + 1}/{cfg.epochs}: "
                f"loss {report.epoch_losses[-1]:.5f}")
    report.steps = step - start_step
    return report


def heldout_reconstruction_loss(denoiser, records, schedule: NoiseSchedule,
                                seg_provider="oracle", seed: int = 0,
                                samples_per_record: int = 4) -> float:
    """Mean MSE between clean images and denoiser reconstructions at random steps.

    Comparable across parameterizations: noise-predicting denoisers are
    scored after inverting to a clean-image estimate.
    """
    net = denoiser.net if isinstance(denoiser, UNetDenoiser) else None
    dtype = net.dtype if net is not None else np.float32
    x0_all, c_all, seg_all = records_to_diffusion_arrays(records, seg_provider, dtype)
    rng = np.random.default_rng(seed)
    losses = []
    for i in range(len(records)):
        for _ in range(samples_per_record):
            t = int(rng.integers(1, schedule.T + 1))
            eps = rng.standard_normal(x0_all[i:i + 1].shape).astype(dtype)
            x_t = forward_noise(x0_all[i:i + 1], t, eps, schedule).astype(dtype)
            x0_hat = denoiser.predict(x_t, c_all[i:i + 1], seg_all[i:i + 1], t)
            losses.append(mse_loss(x0_all[i:i + 1], x0_hat))
    return float(np.mean(losses))
