"""Named parameter storage, the Adam update, and checkpoint files."""

from __future__ import annotations

import struct

import numpy as np

from ..errors import ContractViolation

CHECKPOINT_MAGIC = b"TXNN"
CHECKPOINT_VERSION = 1


class Param:
    """One parameter tensor with its gradient and Adam moment buffers."""

    __slots__ = ("name", "value", "grad", "m", "v", "trainable")

    def __init__(self, name, value, trainable=True):
        self.name = name
        self.value = value
        self.grad = np.zeros_like(value)
        self.m = np.zeros_like(value)
        self.v = np.zeros_like(value)
        self.trainable = trainable

    @property
    def shape(self):
        return self.value.shape


class ParamStore:
    """Ordered map of uniquely named parameters."""

    def __init__(self):
        self.entries: dict[str, Param] = {}

    def add(self, name: str, value: np.ndarray, trainable: bool = True) -> Param:
        if name in self.entries:
            raise ContractViolation(f"duplicate parameter name {name!r}")
        p = Param(name, np.ascontiguousarray(value), trainable)
        self.entries[name] = p
        return p

    def __iter__(self):
        return iter(self.entries.values())

    def __len__(self):
        return len(self.entries)

    def __getitem__(self, name: str) -> Param:
        return self.entries[name]

    def n_elements(self) -> int:
        return sum(p.value.size for p in self)

    def zero_grads(self) -> None:
        for p in self:
            p.grad[...] = 0.0

    def grads_finite(self) -> bool:
        return all(np.isfinite(p.grad).all() for p in self)


def adam_step(params: ParamStore, lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8, step_index: int = 1) -> None:
    """Bias-corrected Adam update; gradients are zeroed afterwards."""
    if step_index < 1:
        raise ContractViolation("step_index is 1-based")
    bc1 = 1.0 - beta1 ** step_index
    bc2 = 1.0 - beta2 ** step_index
    for p in params:
        if not p.trainable:
            continue
        g = p.grad
        p.m *= beta1
        p.m += (1.0 - beta1) * g
        p.v *= beta2
        p.v += (1.0 - beta2) * np.square(g)
        m_hat = p.m / bc1
        v_hat = p.v / bc2
        p.value -= lr * m_hat / (np.sqrt(v_hat) + eps)
    params.zero_grads()


def save_checkpoint(params: ParamStore, path) -> None:
    """Binary checkpoint: magic, version, then (name, shape, float32 LE) entries."""
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(params.entries)))
        for p in params:
            name_b = p.name.encode("utf-8")
            fh.write(struct.pack("<H", len(name_b)))
            fh.write(name_b)
            fh.write(struct.pack("<B", p.value.ndim))
            fh.write(struct.pack(f"<{p.value.ndim}I", *p.value.shape))
            fh.write(np.ascontiguousarray(p.value, dtype="<f4").tobytes())


def load_checkpoint(params: ParamStore, path) -> None:
    """Fill `params` in place from a checkpoint; shapes must match exactly."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise IOError(f"{path}: not a checkpoint file (bad magic {magic!r})")
        version, count = struct.unpack("<II", fh.read(8))
        if version != CHECKPOINT_VERSION:
            raise IOError(f"{path}: unsupported checkpoint version {version}")
        seen = set()
        for _ in range(count):
            (name_len,) = struct.unpack("<H", fh.read(2))
            name = fh.read(name_len).decode("utf-8")
            (ndim,) = struct.unpack("<B", fh.read(1))
            shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim))
            n_values = int(np.prod(shape)) if ndim else 1
            raw = fh.read(4 * n_values)
            if name not in params.entries:
                raise IOError(f"{path}: unknown parameter {name!r}")
            p = params[name]
            if tuple(p.value.shape) != tuple(shape):
                raise IOError(
                    f"{path}: shape mismatch for {name!r}: file {shape}, model {p.value.shape}"
                )
            p.value[...] = np.frombuffer(raw, dtype="<f4").reshape(shape).astype(p.value.dtype)
            seen.add(name)
        missing = set(params.entries) - seen
        if missing:
            raise IOError(f"{path}: checkpoint lacks parameters {sorted(missing)[:5]}")
