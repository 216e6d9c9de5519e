"""Frozen random conv stack used by the perceptual and style losses.

Stand-in for pretrained recognizer features: weights are seeded and
immutable, so the losses stay deterministic and differentiable while
the extractor remains pluggable.
"""

from __future__ import annotations

import numpy as np

from ..nnkit import ELU, Chain, Conv2d, ParamStore


class FeatureExtractor:
    """Three seeded conv layers, (N, 1, H, W) -> (N, out_channels, H/2, W/2)."""

    def __init__(self, seed: int = 0, out_channels: int = 8, dtype=np.float32):
        rng = np.random.default_rng(seed)
        self.store = ParamStore()
        self.out_channels = out_channels
        self.chain = Chain([
            Conv2d(self.store, "f0", 1, 8, 3, padding=1, rng=rng, dtype=dtype, trainable=False),
            ELU(),
            Conv2d(self.store, "f1", 8, 8, 3, stride=2, padding=1, rng=rng, dtype=dtype,
                   trainable=False),
            ELU(),
            Conv2d(self.store, "f2", 8, out_channels, 3, padding=1, rng=rng, dtype=dtype,
                   trainable=False),
        ])

    def forward(self, x):
        return self.chain.forward(x)

    def backward(self, cache, gy):
        return self.chain.backward(cache, gy)


class IdentityFeatures:
    """Pass-through extractor; reduces the perceptual loss to the pixel loss."""

    def forward(self, x):
        return x, None

    def backward(self, cache, gy):
        return gy
