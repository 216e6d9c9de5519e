"""Layers with hand-written forward and backward passes.

Every layer exposes ``forward(x) -> (y, cache)`` and
``backward(cache, gy) -> gx``; parameter gradients accumulate into the
owning ParamStore. Feature maps are (N, C, H, W) arrays. Forward is
pure: all state needed by backward travels in the returned cache.
"""

from __future__ import annotations

import numpy as np

from ..errors import ContractViolation
from .params import ParamStore


def conv_out_size(size: int, k: int, stride: int, dilation: int, padding: int) -> int:
    eff = dilation * (k - 1) + 1
    return (size + 2 * padding - eff) // stride + 1


class Conv2d:
    """2-D convolution with stride, dilation, and zero padding."""

    def __init__(self, store: ParamStore, name: str, in_ch: int, out_ch: int, k: int,
                 stride: int = 1, dilation: int = 1, padding: int = 0, bias: bool = True,
                 rng=None, dtype=np.float32, trainable: bool = True):
        if stride < 1 or dilation < 1:
            raise ContractViolation("stride and dilation must be >= 1")
        rng = rng or np.random.default_rng(0)
        fan_in = in_ch * k * k
        w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(out_ch, in_ch, k, k))
        self.w = store.add(f"{name}.w", w.astype(dtype), trainable)
        self.b = store.add(f"{name}.b", np.zeros(out_ch, dtype=dtype), trainable) if bias else None
        self.in_ch, self.out_ch, self.k = in_ch, out_ch, k
        self.stride, self.dilation, self.padding = stride, dilation, padding
        self.name = name

    def forward(self, x):
        n, c, h, w = x.shape
        if c != self.in_ch:
            raise ContractViolation(
                f"conv {self.name}: expected {self.in_ch} input channels, got {c} "
                f"(input shape {x.shape})"
            )
        k, s, d, p = self.k, self.stride, self.dilation, self.padding
        oh = conv_out_size(h, k, s, d, p)
        ow = conv_out_size(w, k, s, d, p)
        if oh < 1 or ow < 1:
            raise ContractViolation(f"conv {self.name}: input {h}x{w} too small for kernel")
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
        cols = np.empty((n, self.in_ch, k, k, oh, ow), dtype=x.dtype)
        for i in range(k):
            for j in range(k):
                cols[:, :, i, j] = xp[:, :, i * d:i * d + s * (oh - 1) + 1:s,
                                      j * d:j * d + s * (ow - 1) + 1:s]
        cols2 = cols.reshape(n, self.in_ch * k * k, oh * ow)
        wm = self.w.value.reshape(self.out_ch, -1)
        y = np.matmul(wm, cols2).reshape(n, self.out_ch, oh, ow)
        if self.b is not None:
            y += self.b.value[None, :, None, None]
        return y, (xp, x.shape, (oh, ow))

    def backward(self, cache, gy):
        xp, x_shape, (oh, ow) = cache
        n = x_shape[0]
        k, s, d, p = self.k, self.stride, self.dilation, self.padding
        gyf = gy.reshape(n, self.out_ch, oh * ow)
        if self.b is not None and self.b.trainable:
            self.b.grad += gy.sum(axis=(0, 2, 3))
        gxp = np.zeros_like(xp)
        wm = self.w.value.reshape(self.out_ch, -1)
        gcols = np.matmul(wm.T, gyf)  # (n, in_ch*k*k, oh*ow)
        gcols = gcols.reshape(n, self.in_ch, k, k, oh, ow)
        accumulate_w = self.w.trainable
        gw = np.zeros_like(self.w.value) if accumulate_w else None
        for i in range(k):
            for j in range(k):
                sl_h = slice(i * d, i * d + s * (oh - 1) + 1, s)
                sl_w = slice(j * d, j * d + s * (ow - 1) + 1, s)
                gxp[:, :, sl_h, sl_w] += gcols[:, :, i, j]
                if accumulate_w:
                    patch = xp[:, :, sl_h, sl_w].reshape(n, self.in_ch, oh * ow)
                    gw[:, :, i, j] = np.tensordot(gyf, patch, axes=([0, 2], [0, 2]))
        if accumulate_w:
            self.w.grad += gw
        if p:
            return gxp[:, :, p:-p, p:-p]
        return gxp


class Linear:
    """Affine map on (N, in_features)."""

    def __init__(self, store, name, in_features, out_features, rng=None,
                 dtype=np.float32, trainable: bool = True):
        rng = rng or np.random.default_rng(0)
        w = rng.normal(0.0, np.sqrt(2.0 / in_features), size=(out_features, in_features))
        self.w = store.add(f"{name}.w", w.astype(dtype), trainable)
        self.b = store.add(f"{name}.b", np.zeros(out_features, dtype=dtype), trainable)
        self.name = name

    def forward(self, x):
        return x @ self.w.value.T + self.b.value, (x,)

    def backward(self, cache, gy):
        (x,) = cache
        if self.w.trainable:
            self.w.grad += gy.T @ x
            self.b.grad += gy.sum(axis=0)
        return gy @ self.w.value


class GroupNorm:
    """Per-sample normalization over channel groups with affine scale/shift."""

    def __init__(self, store, name, channels, groups=4, eps=1e-5, dtype=np.float32,
                 trainable: bool = True):
        if channels % groups != 0:
            raise ContractViolation(f"groups ({groups}) must divide channels ({channels})")
        self.gamma = store.add(f"{name}.gamma", np.ones(channels, dtype=dtype), trainable)
        self.beta = store.add(f"{name}.beta", np.zeros(channels, dtype=dtype), trainable)
        self.groups = groups
        self.channels = channels
        self.eps = eps

    def forward(self, x):
        n, c, h, w = x.shape
        g = self.groups
        xg = x.reshape(n, g, -1)
        mu = xg.mean(axis=2, keepdims=True)
        var = xg.var(axis=2, keepdims=True)
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = ((xg - mu) * inv_std).reshape(n, c, h, w)
        y = xhat * self.gamma.value[None, :, None, None] + self.beta.value[None, :, None, None]
        return y, (xhat, inv_std)

    def backward(self, cache, gy):
        xhat, inv_std = cache
        n, c, h, w = gy.shape
        g = self.groups
        if self.gamma.trainable:
            self.gamma.grad += (gy * xhat).sum(axis=(0, 2, 3))
            self.beta.grad += gy.sum(axis=(0, 2, 3))
        gxhat = (gy * self.gamma.value[None, :, None, None]).reshape(n, g, -1)
        xhat_g = xhat.reshape(n, g, -1)
        mean_g = gxhat.mean(axis=2, keepdims=True)
        mean_gx = (gxhat * xhat_g).mean(axis=2, keepdims=True)
        gx = inv_std * (gxhat - mean_g - xhat_g * mean_gx)
        return gx.reshape(n, c, h, w)


class BatchNorm:
    """Per-channel batch normalization with running statistics."""

    def __init__(self, store, name, channels, eps=1e-5, momentum=0.1, dtype=np.float32,
                 trainable: bool = True):
        self.gamma = store.add(f"{name}.gamma", np.ones(channels, dtype=dtype), trainable)
        self.beta = store.add(f"{name}.beta", np.zeros(channels, dtype=dtype), trainable)
        self.running_mean = np.zeros(channels, dtype=np.float64)
        self.running_var = np.ones(channels, dtype=np.float64)
        self.eps = eps
        self.momentum = momentum
        self.training = True

    def forward(self, x):
        if self.training:
            mu = x.mean(axis=(0, 2, 3))
            var = x.var(axis=(0, 2, 3))
            self.running_mean += self.momentum * (mu - self.running_mean)
            self.running_var += self.momentum * (var - self.running_var)
        else:
            mu = self.running_mean.astype(x.dtype)
            var = self.running_var.astype(x.dtype)
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mu[None, :, None, None]) * inv_std[None, :, None, None]
        y = xhat * self.gamma.value[None, :, None, None] + self.beta.value[None, :, None, None]
        return y, (xhat, inv_std, self.training)

    def backward(self, cache, gy):
        xhat, inv_std, was_training = cache
        if self.gamma.trainable:
            self.gamma.grad += (gy * xhat).sum(axis=(0, 2, 3))
            self.beta.grad += gy.sum(axis=(0, 2, 3))
        gxhat = gy * self.gamma.value[None, :, None, None]
        scale = inv_std[None, :, None, None]
        if not was_training:
            return gxhat * scale
        mean_g = gxhat.mean(axis=(0, 2, 3), keepdims=True)
        mean_gx = (gxhat * xhat).mean(axis=(0, 2, 3), keepdims=True)
        return scale * (gxhat - mean_g - xhat * mean_gx)


class ELU:
    def __init__(self, alpha=1.0):
        self.alpha = alpha

    def forward(self, x):
        neg = self.alpha * np.expm1(np.minimum(x, 0.0))
        y = np.where(x > 0.0, x, neg)
        return y, (x > 0.0, neg)

    def backward(self, cache, gy):
        pos_mask, neg = cache
        return gy * np.where(pos_mask, 1.0, neg + self.alpha)


def _sigmoid(x):
    # evaluate exp only on the non-overflowing side
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class Swish:
    def forward(self, x):
        sig = _sigmoid(x)
        return x * sig, (x, sig)

    def backward(self, cache, gy):
        x, sig = cache
        return gy * (sig + x * sig * (1.0 - sig))


class Sigmoid:
    def forward(self, x):
        y = _sigmoid(x)
        return y, (y,)

    def backward(self, cache, gy):
        (y,) = cache
        return gy * y * (1.0 - y)


class UpsampleNearest:
    """Integer-factor nearest-neighbor upsampling."""

    def __init__(self, factor=2):
        if factor < 1:
            raise ContractViolation("upsample factor must be >= 1")
        self.factor = factor

    def forward(self, x):
        f = self.factor
        y = x.repeat(f, axis=2).repeat(f, axis=3)
        return y, (x.shape,)

    def backward(self, cache, gy):
        (x_shape,) = cache
        n, c, h, w = x_shape
        f = self.factor
        return gy.reshape(n, c, h, f, w, f).sum(axis=(3, 5))


class Residual:
    """y = x + body(x); the body is a layer list preserving shape."""

    def __init__(self, body):
        self.body = list(body)

    def forward(self, x):
        h = x
        caches = []
        for layer in self.body:
            h, cache = layer.forward(h)
            caches.append(cache)
        if h.shape != x.shape:
            raise ContractViolation(
                f"residual body changed shape {x.shape} -> {h.shape}"
            )
        return x + h, caches

    def backward(self, caches, gy):
        g = gy
        for layer, cache in zip(reversed(self.body), reversed(caches)):
            g = layer.backward(cache, g)
        return gy + g


class Concat:
    """Channel-wise join of two feature maps."""

    def forward(self, xs):
        a, b = xs
        if a.shape[0] != b.shape[0] or a.shape[2:] != b.shape[2:]:
            raise ContractViolation(f"concat shapes disagree: {a.shape} vs {b.shape}")
        return np.concatenate([a, b], axis=1), (a.shape[1],)

    def backward(self, cache, gy):
        (ca,) = cache
        return gy[:, :ca], gy[:, ca:]


class Chain:
    """Linear composition of layers sharing the (y, cache) protocol."""

    def __init__(self, layers):
        self.layers = list(layers)

    def forward(self, x):
        caches = []
        for layer in self.layers:
            x, cache = layer.forward(x)
            caches.append(cache)
        return x, caches

    def backward(self, caches, gy):
        for layer, cache in zip(reversed(self.layers), reversed(caches)):
            gy = layer.backward(cache, gy)
        return gy
