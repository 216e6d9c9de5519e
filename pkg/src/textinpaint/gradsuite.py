"""Finite-difference verification suite over all layer kinds and both nets.

Each check builds a float64 layer (or network) with seeded random
parameters and input, computes a scalar loss, and compares hand-written
gradients against central differences. The CLI gradcheck subcommand and
the acceptance tests both run this.
"""

from __future__ import annotations

import numpy as np

from . import nnkit
from .diffusion import CondUNet
from .structure import SegUNet

TOLERANCE = 1e-4


def _layer_factories():
    """name -> (store, rng) -> (layer, input shape)."""

    def conv_plain(store, rng):
        return nnkit.Conv2d(store, "c", 3, 4, 3, padding=1, rng=rng,
                            dtype=np.float64), (2, 3, 6, 7)

    def conv_strided_dilated(store, rng):
        return nnkit.Conv2d(store, "c", 2, 3, 3, stride=2, dilation=2, padding=2,
                            rng=rng, dtype=np.float64), (2, 2, 8, 9)

    def linear(store, rng):
        return nnkit.Linear(store, "l", 5, 4, rng=rng, dtype=np.float64), (3, 5)

    def groupnorm(store, rng):
        return nnkit.GroupNorm(store, "g", 4, groups=2, dtype=np.float64), (2, 4, 3, 4)

    def batchnorm(store, rng):
        return nnkit.BatchNorm(store, "b", 4, dtype=np.float64), (3, 4, 3, 4)

    def residual(store, rng):
        body = [nnkit.Conv2d(store, "rc", 3, 3, 3, padding=1, bias=False,
                             rng=rng, dtype=np.float64),
                nnkit.GroupNorm(store, "rg", 3, groups=3, dtype=np.float64),
                nnkit.Swish()]
        return nnkit.Residual(body), (2, 3, 5, 6)

    return {
        "conv2d": conv_plain,
        "conv2d_strided_dilated": conv_strided_dilated,
        "linear": linear,
        "groupnorm": groupnorm,
        "batchnorm": batchnorm,
        "elu": lambda store, rng: (nnkit.ELU(), (2, 3, 4, 5)),
        "swish": lambda store, rng: (nnkit.Swish(), (2, 3, 4, 5)),
        "sigmoid": lambda store, rng: (nnkit.Sigmoid(), (2, 3, 4, 5)),
        "upsample_nearest": lambda store, rng: (nnkit.UpsampleNearest(2), (2, 3, 3, 4)),
        "residual": residual,
    }


def check_layer(name: str, seed: int) -> float:
    rng = np.random.default_rng(seed)
    store = nnkit.ParamStore()
    layer, x_shape = _layer_factories()[name](store, rng)
    x = store.add("__input__", rng.normal(size=x_shape))

    def loss_fn(want_grads):
        y, cache = layer.forward(x.value)
        if want_grads:
            x.grad += layer.backward(cache, np.cos(y))
        return float(np.sin(y).sum())

    return nnkit.finite_diff_gradcheck(loss_fn, store)


def check_concat(seed: int) -> float:
    rng = np.random.default_rng(seed)
    store = nnkit.ParamStore()
    cat = nnkit.Concat()
    a = store.add("a", rng.normal(size=(2, 2, 3, 4)))
    b = store.add("b", rng.normal(size=(2, 3, 3, 4)))

    def loss_fn(want_grads):
        y, cache = cat.forward((a.value, b.value))
        if want_grads:
            ga, gb = cat.backward(cache, np.cos(y))
            a.grad += ga
            b.grad += gb
        return float(np.sin(y).sum())

    return nnkit.finite_diff_gradcheck(loss_fn, store)


def check_structure_net(seed: int) -> float:
    """Full structure U-Net against finite differences, tiny widths."""
    rng = np.random.default_rng(seed)
    net = SegUNet(in_channels=3, widths=(2, 4, 4), groups=2, seed=seed, dtype=np.float64)
    x = net.params.add("__input__", rng.normal(size=(1, 3, 8, 16)))
    target = rng.random(size=(1, 1, 8, 16))

    def loss_fn(want_grads):
        y, cache = net.forward(x.value)
        diff = y - target
        if want_grads:
            x.grad += net.backward(cache, 2.0 * diff / diff.size)
        return float(np.mean(diff ** 2))

    # deep nets: smaller step keeps truncation below the 1e-4 bar
    return nnkit.finite_diff_gradcheck(loss_fn, net.params, eps=1e-5)


def check_denoiser_net(seed: int) -> float:
    """Full conditional denoiser U-Net against finite differences, tiny widths."""
    rng = np.random.default_rng(seed)
    net = CondUNet(in_channels=9, out_channels=3, widths=(2, 4), temb_dim=8,
                   groups=2, seed=seed, dtype=np.float64)
    x = net.params.add("__input__", rng.normal(size=(1, 9, 4, 8)))
    temb = net.time_features(np.array([3.0]), 1)
    target = rng.normal(size=(1, 3, 4, 8))

    def loss_fn(want_grads):
        y, cache = net.forward(x.value, temb)
        diff = y - target
        if want_grads:
            x.grad += net.backward(cache, 2.0 * diff / diff.size)
        return float(np.mean(diff ** 2))

    return nnkit.finite_diff_gradcheck(loss_fn, net.params, eps=1e-5)


def run_gradient_suite(seeds: int = 20, net_seeds: int = 3, log=None) -> dict:
    """Worst relative error per check; every entry must stay below TOLERANCE."""
    results = {}
    for name in _layer_factories():
        worst = max(check_layer(name, seed) for seed in range(seeds))
        results[name] = worst
        if log:
            log(f"{name:<24} worst rel err {worst:.3e}")
    results["concat"] = max(check_concat(seed) for seed in range(seeds))
    if log:
        log(f"{'concat':<24} worst rel err {results['concat']:.3e}")
    results["structure_unet"] = max(check_structure_net(s) for s in range(net_seeds))
    results["denoiser_unet"] = max(check_denoiser_net(s) for s in range(net_seeds))
    if log:
        log(f"{'structure_unet':<24} worst rel err {results['structure_unet']:.3e}")
        log(f"{'denoiser_unet':<24} worst rel err {results['denoiser_unet']:.3e}")
    return results
