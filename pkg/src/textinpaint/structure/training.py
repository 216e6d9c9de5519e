"""Minibatch Adam training for the structure predictor."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DivergenceError
from ..nnkit import adam_step
from .features import FeatureExtractor
from .losses import combined_loss_and_grad


@dataclass
class StructureTrainConfig:
    epochs: int = 10
    batch_size: int = 8
    lr: float = 1e-4
    weights: tuple = (1.0, 1.0, 1.0, 1.0)
    positive_weight: float = 2.0
    seed: int = 0
    feature_seed: int = 0


@dataclass
class TrainReport:
    epoch_losses: list = field(default_factory=list)
    component_means: list = field(default_factory=list)
    steps: int = 0

    @property
    def initial_loss(self):
        return self.epoch_losses[0] if self.epoch_losses else None

    @property
    def final_loss(self):
        return self.epoch_losses[-1] if self.epoch_losses else None


def records_to_structure_arrays(records, in_channels=3, dtype=np.float32):
    """Stack records into (corrupted images, intact segmaps) training arrays."""
    xs, ys = [], []
    for rec in records:
        img = rec.corrupted_image.data.transpose(2, 0, 1)
        if img.shape[0] == 1 and in_channels == 3:
            img = np.repeat(img, 3, axis=0)
        xs.append(img.astype(dtype))
        ys.append(rec.intact_segmask.values[None].astype(dtype))
    return np.stack(xs), np.stack(ys)


def train_structure(net, records, cfg: StructureTrainConfig, phi=None,
                    log=None, start_step: int = 0) -> TrainReport:
    """Run minibatch Adam on the combined loss; raises on non-finite loss."""
    if not records:
        raise ValueError("training needs at least one record")
    if phi is None and (cfg.weights[2] or cfg.weights[3]):
        phi = FeatureExtractor(seed=cfg.feature_seed, dtype=net.dtype)
    x_all, y_all = records_to_structure_arrays(records, net.in_channels, net.dtype)
    rng = np.random.default_rng(cfg.seed)
    report = TrainReport()
    step = start_step
    n = len(records)
    bs = min(cfg.batch_size, n)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        losses, comps = [], []
        for lo in range(0, n, bs):
            idx = order[lo:lo + bs]
            x, y = x_all[idx], y_all[idx]
            pred, cache = net.forward(x)
            total, parts, grad = combined_loss_and_grad(
                y, pred, phi, cfg.weights, cfg.positive_weight)
            if not np.isfinite(total):
                raise DivergenceError(
                    f"non-finite structure loss at epoch {epoch} step {step}: "
                    f"{parts}"
                )
            net.backward(cache, grad.astype(net.dtype))
            step += 1
            adam_step(net.params, cfg.lr, step_index=step)
            losses.append(total)
            comps.append(parts)
        report.epoch_losses.append(float(np.mean(losses)))
        report.component_means.append(
            {k: float(np.mean([c[k] for c in comps])) for k in comps[0]})
        if log:
            log(f"structure epoch {epoch + 1}/{cfg.epochs}: "
                f"loss {report.epoch_losses[-1]:.5f}")
    report.steps = step - start_step
    return report
