"""Time-conditioned U-Net for the diffusion reconstruction stage.

The noisy state, the corrupted image, and the (replicated) predicted
foreground map are concatenated into a 9-channel input. Each block is
a 3x3 conv followed by a residual sub-block of one linear time
projection and two conv+GroupNorm+Swish modules; resolution halves per
encoder level and mirrors back up with skip concatenation.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import ContractViolation
from ..nnkit import (Chain, Concat, Conv2d, GroupNorm, Linear, ParamStore,
                     Swish, UpsampleNearest)


def sinusoidal_embedding(t, dim: int) -> np.ndarray:
    """Standard sin/cos position features for (N,) step indices."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    half = dim // 2
    freqs = np.exp(-math.log(10000.0) * np.arange(half) / max(half - 1, 1))
    args = t[:, None] * freqs[None, :]
    return np.concatenate([np.sin(args), np.cos(args)], axis=1)


class TimeResBlock:
    """x + f(x) where f injects a learned per-channel shift of the time features."""

    def __init__(self, store, name, channels, temb_dim, groups, rng, dtype):
        g = min(groups, channels)
        # pre-norm convs carry no bias: the norm would cancel it
        self.conv1 = Conv2d(store, f"{name}.c1", channels, channels, 3, padding=1,
                            bias=False, rng=rng, dtype=dtype)
        self.norm1 = GroupNorm(store, f"{name}.n1", channels, groups=g, dtype=dtype)
        self.time_proj = Linear(store, f"{name}.t", temb_dim, channels, rng=rng, dtype=dtype)
        self.act1 = Swish()
        self.conv2 = Conv2d(store, f"{name}.c2", channels, channels, 3, padding=1,
                            bias=False, rng=rng, dtype=dtype)
        self.norm2 = GroupNorm(store, f"{name}.n2", channels, groups=g, dtype=dtype)
        self.act_out = Swish()

    def forward(self, x, temb):
        h, c1 = self.conv1.forward(x)
        h, cn1 = self.norm1.forward(h)
        shift, ct = self.time_proj.forward(temb)
        h = h + shift[:, :, None, None]
        h, ca1 = self.act1.forward(h)
        h, c2 = self.conv2.forward(h)
        h, cn2 = self.norm2.forward(h)
        y, cao = self.act_out.forward(x + h)
        return y, (c1, cn1, ct, ca1, c2, cn2, cao)

    def backward(self, cache, gy):
        c1, cn1, ct, ca1, c2, cn2, cao = cache
        g = self.act_out.backward(cao, gy)
        gh = self.norm2.backward(cn2, g)
        gh = self.conv2.backward(c2, gh)
        gh = self.act1.backward(ca1, gh)
        self.time_proj.backward(ct, gh.sum(axis=(2, 3)))
        gh = self.norm1.backward(cn1, gh)
        gx = self.conv1.backward(c1, gh)
        return g + gx


class CondUNet:
    """(N, in_channels, H, W) plus step indices -> (N, out_channels, H, W)."""

    def __init__(self, in_channels: int = 9, out_channels: int = 3,
                 widths=(16, 32, 64, 64, 64), temb_dim: int = 32, groups: int = 8,
                 seed: int = 0, dtype=np.float32):
        if len(widths) < 2:
            raise ContractViolation("CondUNet needs at least two width levels")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.widths = tuple(widths)
        self.temb_dim = temb_dim
        self.dtype = dtype
        self.params = ParamStore()
        rng = np.random.default_rng(seed)
        levels = len(widths)
        self.levels = levels

        self.stem = Conv2d(self.params, "stem", in_channels, widths[0], 3, padding=1,
                           rng=rng, dtype=dtype)
        self.down_convs = []
        self.enc_blocks = []
        for i, w in enumerate(widths):
            if i > 0:
                self.down_convs.append(Conv2d(
                    self.params, f"down{i}", widths[i - 1], w, 3, stride=2, padding=1,
                    rng=rng, dtype=dtype))
            self.enc_blocks.append(TimeResBlock(
                self.params, f"enc{i}", w, temb_dim, groups, rng, dtype))

        self.up_chains = []
        self.fuse_convs = []
        self.dec_blocks = []
        for i in reversed(range(levels - 1)):
            self.up_chains.append(Chain([
                UpsampleNearest(2),
                Conv2d(self.params, f"up{i}", widths[i + 1], widths[i], 3, padding=1,
                       rng=rng, dtype=dtype),
            ]))
            self.fuse_convs.append(Conv2d(
                self.params, f"fuse{i}", 2 * widths[i], widths[i], 3, padding=1,
                rng=rng, dtype=dtype))
            self.dec_blocks.append(TimeResBlock(
                self.params, f"dec{i}", widths[i], temb_dim, groups, rng, dtype))

        self.head_norm = GroupNorm(self.params, "head.n", widths[0],
                                   groups=min(groups, widths[0]), dtype=dtype)
        self.head_act = Swish()
        self.head_conv = Conv2d(self.params, "head.c", widths[0], out_channels, 3,
                                padding=1, rng=rng, dtype=dtype)
        self.concat = Concat()

    def time_features(self, t, batch: int) -> np.ndarray:
        temb = sinusoidal_embedding(t, self.temb_dim).astype(self.dtype)
        if temb.shape[0] == 1 and batch > 1:
            temb = np.repeat(temb, batch, axis=0)
        return temb

    def forward(self, x, temb):
        n, c, h, w = x.shape
        if c != self.in_channels:
            raise ContractViolation(
                f"denoiser expects {self.in_channels} input channels, got {c}"
            )
        factor = 2 ** (self.levels - 1)
        if h % factor or w % factor:
            raise ContractViolation(f"input {h}x{w} must be divisible by {factor}")
        caches = {}
        h_cur, caches["stem"] = self.stem.forward(x)
        skips = []
        enc_caches = []
        for i in range(self.levels):
            if i > 0:
                h_cur, c_down = self.down_convs[i - 1].forward(h_cur)
            else:
                c_down = None
            h_cur, c_blk = self.enc_blocks[i].forward(h_cur, temb)
            enc_caches.append((c_down, c_blk))
            if i < self.levels - 1:
                skips.append(h_cur)
        caches["enc"] = enc_caches

        dec_caches = []
        for j in range(self.levels - 1):
            h_cur, c_up = self.up_chains[j].forward(h_cur)
            skip = skips[-(j + 1)]
            h_cur, c_cat = self.concat.forward((h_cur, skip))
            h_cur, c_fuse = self.fuse_convs[j].forward(h_cur)
            h_cur, c_blk = self.dec_blocks[j].forward(h_cur, temb)
            dec_caches.append((c_up, c_cat, c_fuse, c_blk))
        caches["dec"] = dec_caches

        h_cur, caches["hn"] = self.head_norm.forward(h_cur)
        h_cur, caches["ha"] = self.head_act.forward(h_cur)
        y, caches["hc"] = self.head_conv.forward(h_cur)
        return y, caches

    def backward(self, caches, gy):
        g = self.head_conv.backward(caches["hc"], gy)
        g = self.head_act.backward(caches["ha"], g)
        g = self.head_norm.backward(caches["hn"], g)

        skip_grads = []
        for j in reversed(range(self.levels - 1)):
            c_up, c_cat, c_fuse, c_blk = caches["dec"][j]
            g = self.dec_blocks[j].backward(c_blk, g)
            g = self.fuse_convs[j].backward(c_fuse, g)
            g, g_skip = self.concat.backward(c_cat, g)
            skip_grads.append(g_skip)
            g = self.up_chains[j].backward(c_up, g)
        # skip_grads[k] belongs to encoder level (levels - 2 - ... ) reversed below
        skip_grads.reverse()  # now indexed by decoder step j = 0..levels-2

        for i in reversed(range(self.levels)):
            c_down, c_blk = caches["enc"][i]
            if i < self.levels - 1:
                # decoder step j consumed skips[-(j+1)] = encoder level (levels-2-j)
                g = g + skip_grads[self.levels - 2 - i]
            g = self.enc_blocks[i].backward(c_blk, g)
            if i > 0:
                g = self.down_convs[i - 1].backward(c_down, g)
        return self.stem.backward(caches["stem"], g)
