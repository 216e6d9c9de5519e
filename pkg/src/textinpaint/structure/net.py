"""Compact dilated-conv U-Net predicting the intact foreground map.

Three width levels with symmetric encoder/decoder blocks: resolution
halves and width doubles on the way down, mirrored on the way up, with
skip concatenation at each level and a sigmoid head. Dilated 3x3 convs
(rate 2) widen the receptive field over corroded regions.
"""

from __future__ import annotations

import numpy as np

from ..errors import ContractViolation
from ..imgcore import ImageTensor, SegMap
from ..nnkit import (ELU, BatchNorm, Chain, Concat, Conv2d, GroupNorm,
                     ParamStore, Residual, Sigmoid, UpsampleNearest)


class SegUNet:
    """(N, in_channels, H, W) -> (N, 1, H, W) foreground probabilities."""

    def __init__(self, in_channels: int = 3, widths=(8, 16, 32), groups: int = 4,
                 seed: int = 0, dtype=np.float32, norm: str = "group"):
        if len(widths) != 3:
            raise ContractViolation("SegUNet takes exactly three width levels")
        self.in_channels = in_channels
        self.widths = tuple(widths)
        self.dtype = dtype
        self.params = ParamStore()
        rng = np.random.default_rng(seed)
        w0, w1, w2 = widths

        def make_norm(name, ch):
            # batch-size-1 batch norm is ill-defined; group norm is the default
            if norm == "batch":
                return BatchNorm(self.params, name, ch, dtype=dtype)
            return GroupNorm(self.params, name, ch, groups=min(groups, ch), dtype=dtype)

        def dilated_block(name, cin, cout, stride=1):
            # convs feeding a norm carry no bias: the norm would cancel it
            return Chain([
                Conv2d(self.params, f"{name}.pre", cin, cout, 3, stride=stride,
                       padding=1 if stride > 1 else 2, dilation=1 if stride > 1 else 2,
                       bias=False, rng=rng, dtype=dtype),
                make_norm(f"{name}.pre_n", cout),
                ELU(),
                Residual([
                    Conv2d(self.params, f"{name}.res", cout, cout, 3, padding=2,
                           dilation=2, bias=False, rng=rng, dtype=dtype),
                    make_norm(f"{name}.res_n", cout),
                    ELU(),
                ]),
            ])

        def up_block(name, cin, cout):
            return Chain([
                UpsampleNearest(2),
                Conv2d(self.params, f"{name}.conv", cin, cout, 3, padding=1,
                       bias=False, rng=rng, dtype=dtype),
                make_norm(f"{name}.n", cout),
                ELU(),
            ])

        self.enc0 = dilated_block("enc0", in_channels, w0)
        self.enc1 = dilated_block("enc1", w0, w1, stride=2)
        self.enc2 = dilated_block("enc2", w1, w2, stride=2)
        self.up1 = up_block("up1", w2, w1)
        self.fuse1 = dilated_block("fuse1", 2 * w1, w1)
        self.up0 = up_block("up0", w1, w0)
        self.fuse0 = dilated_block("fuse0", 2 * w0, w0)
        self.head = Chain([
            Conv2d(self.params, "head", w0, 1, 1, rng=rng, dtype=dtype),
            Sigmoid(),
        ])
        self.concat = Concat()

    def forward(self, x):
        n, c, h, w = x.shape
        if c != self.in_channels:
            raise ContractViolation(f"expected {self.in_channels} channels, got {c}")
        if h % 4 or w % 4:
            raise ContractViolation(f"input {h}x{w} must be divisible by 4")
        h0, c_e0 = self.enc0.forward(x)
        h1, c_e1 = self.enc1.forward(h0)
        h2, c_e2 = self.enc2.forward(h1)
        u1, c_u1 = self.up1.forward(h2)
        cat1, c_c1 = self.concat.forward((u1, h1))
        f1, c_f1 = self.fuse1.forward(cat1)
        u0, c_u0 = self.up0.forward(f1)
        cat0, c_c0 = self.concat.forward((u0, h0))
        f0, c_f0 = self.fuse0.forward(cat0)
        y, c_h = self.head.forward(f0)
        return y, (c_e0, c_e1, c_e2, c_u1, c_c1, c_f1, c_u0, c_c0, c_f0, c_h)

    def backward(self, cache, gy):
        c_e0, c_e1, c_e2, c_u1, c_c1, c_f1, c_u0, c_c0, c_f0, c_h = cache
        g = self.head.backward(c_h, gy)
        g = self.fuse0.backward(c_f0, g)
        g_u0, g_h0_skip = self.concat.backward(c_c0, g)
        g = self.up0.backward(c_u0, g_u0)
        g = self.fuse1.backward(c_f1, g)
        g_u1, g_h1_skip = self.concat.backward(c_c1, g)
        g_h2 = self.up1.backward(c_u1, g_u1)
        g_h1 = self.enc2.backward(c_e2, g_h2) + g_h1_skip
        g_h0 = self.enc1.backward(c_e1, g_h1) + g_h0_skip
        return self.enc0.backward(c_e0, g_h0)

    def predict(self, img: ImageTensor) -> SegMap:
        """Foreground map for one unit-range image."""
        x = img.data.transpose(2, 0, 1)[None].astype(self.dtype)
        if x.shape[1] != self.in_channels:
            if x.shape[1] == 1 and self.in_channels == 3:
                x = np.repeat(x, 3, axis=1)
            else:
                raise ContractViolation(
                    f"image has {x.shape[1]} channels, net expects {self.in_channels}"
                )
        y, _ = self.forward(x)
        return SegMap(np.clip(y[0, 0].astype(np.float64), 0.0, 1.0))

    def predict_batch(self, x: np.ndarray) -> np.ndarray:
        y, _ = self.forward(x.astype(self.dtype))
        return y
