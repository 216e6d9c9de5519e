"""Core raster types, value-range conversion, resizing, and PNG I/O.

Images are float64 (h, w, c) arrays. Two value ranges exist and the tag
is explicit on the type: ``unit`` images live in [0, 1] and are used at
every I/O and metric boundary; ``model`` images live in [-1, 1] and are
used inside the diffusion machinery. Conversion is the affine map
v' = 2v - 1 and its inverse.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image

from .errors import ContractViolation, RangeTagError

UNIT = "unit"
MODEL = "model"

_RANGE_BOUNDS = {UNIT: (0.0, 1.0), MODEL: (-1.0, 1.0)}


@dataclass(frozen=True)
class ImageTensor:
    """Immutable (h, w, c) raster with an explicit value-range tag."""

    data: np.ndarray
    range_tag: str = UNIT

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 3:
            raise ContractViolation(f"image data must be (h, w, c), got shape {arr.shape}")
        h, w, c = arr.shape
        if h < 1 or w < 1 or c not in (1, 3):
            raise ContractViolation(f"bad image shape {arr.shape}: need h,w >= 1 and c in {{1,3}}")
        if self.range_tag not in _RANGE_BOUNDS:
            raise RangeTagError(f"unknown range tag {self.range_tag!r}")
        lo, hi = _RANGE_BOUNDS[self.range_tag]
        if arr.size and (arr.min() < lo or arr.max() > hi):
            raise ContractViolation(
                f"{self.range_tag}-range image has values outside [{lo}, {hi}]: "
                f"min={arr.min():.6g} max={arr.max():.6g}"
            )
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class MaskBitmap:
    """Binary (h, w) corrosion mask; 1 marks a corroded pixel."""

    bits: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.bits)
        if arr.ndim != 2:
            raise ContractViolation(f"mask must be (h, w), got shape {arr.shape}")
        if not np.isin(arr, (0, 1)).all():
            raise ContractViolation("mask bits must all be 0 or 1")
        arr = arr.astype(np.uint8)
        arr.setflags(write=False)
        object.__setattr__(self, "bits", arr)

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]


@dataclass(frozen=True)
class SegMap:
    """(h, w) text-foreground map with values in [0, 1].

    Ground-truth maps are binary; predicted maps are soft.
    """

    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 2:
            raise ContractViolation(f"segmap must be (h, w), got shape {arr.shape}")
        if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
            raise ContractViolation("segmap values must lie in [0, 1]")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def is_binary(self) -> bool:
        return bool(np.isin(self.values, (0.0, 1.0)).all())


def to_model_range(img: ImageTensor) -> ImageTensor:
    """Map a unit-range image to model range via v' = 2v - 1."""
    if img.range_tag != UNIT:
        raise RangeTagError(f"to_model_range expects a unit-range image, got {img.range_tag!r}")
    return ImageTensor(2.0 * img.data - 1.0, MODEL)


def to_unit_range(img: ImageTensor) -> ImageTensor:
    """Map a model-range image to unit range via v = (v' + 1) / 2."""
    if img.range_tag != MODEL:
        raise RangeTagError(f"to_unit_range expects a model-range image, got {img.range_tag!r}")
    return ImageTensor((img.data + 1.0) * 0.5, UNIT)


def resize_to_canonical(img: ImageTensor, h: int, w: int) -> ImageTensor:
    """Bilinear resize to (h, w). Identity when already at the target size."""
    if h < 1 or w < 1:
        raise ContractViolation(f"target size must be positive, got {h}x{w}")
    if (img.height, img.width) == (h, w):
        return img
    out = _bilinear(img.data, h, w)
    # interpolation is a convex combination; clip float noise at the tag bounds
    lo, hi = _RANGE_BOUNDS[img.range_tag]
    np.clip(out, lo, hi, out=out)
    return ImageTensor(out, img.range_tag)


def _bilinear(arr: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    in_h, in_w = arr.shape[:2]
    # half-pixel-center mapping, clamped at the borders
    ys = (np.arange(out_h) + 0.5) * (in_h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (in_w / out_w) - 0.5
    ys = np.clip(ys, 0.0, in_h - 1.0)
    xs = np.clip(xs, 0.0, in_w - 1.0)
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, in_h - 1)
    x1 = np.minimum(x0 + 1, in_w - 1)
    fy = (ys - y0)[:, None, None]
    fx = (xs - x0)[None, :, None]
    tl = arr[y0[:, None], x0[None, :]]
    tr = arr[y0[:, None], x1[None, :]]
    bl = arr[y1[:, None], x0[None, :]]
    br = arr[y1[:, None], x1[None, :]]
    top = tl * (1.0 - fx) + tr * fx
    bot = bl * (1.0 - fx) + br * fx
    return top * (1.0 - fy) + bot * fy


def read_png(path) -> ImageTensor:
    """Read an 8-bit grayscale or RGB PNG as a unit-range image."""
    try:
        with Image.open(path) as im:
            if im.mode in ("L", "1"):
                im = im.convert("L")
                arr = np.asarray(im, dtype=np.float64)[:, :, None]
            elif im.mode in ("RGB", "RGBA", "P", "LA"):
                im = im.convert("RGB")
                arr = np.asarray(im, dtype=np.float64)
            else:
                raise IOError(f"unsupported PNG mode {im.mode!r} in {path}")
    except (OSError, SyntaxError) as exc:
        raise IOError(f"cannot read PNG {path}: {exc}") from exc
    return ImageTensor(arr / 255.0, UNIT)


def write_png(path, img: ImageTensor) -> None:
    """Write a unit-range image as an 8-bit PNG (grayscale or RGB)."""
    if img.range_tag != UNIT:
        raise RangeTagError("write_png expects a unit-range image")
    u8 = np.clip(np.rint(img.data * 255.0), 0, 255).astype(np.uint8)
    if img.channels == 1:
        Image.fromarray(u8[:, :, 0], mode="L").save(path, format="PNG")
    else:
        Image.fromarray(u8, mode="RGB").save(path, format="PNG")


def read_mask_png(path) -> MaskBitmap:
    """Read a mask stored as a 1-bit or 8-bit PNG; any nonzero pixel is set."""
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("L"))
    except (OSError, SyntaxError) as exc:
        raise IOError(f"cannot read mask PNG {path}: {exc}") from exc
    return MaskBitmap((arr > 127).astype(np.uint8))


def write_mask_png(path, mask: MaskBitmap) -> None:
    """Write a mask as a 1-bit PNG."""
    Image.fromarray(mask.bits * np.uint8(255)).convert("1").save(path, format="PNG")


def luminance(img: ImageTensor) -> np.ndarray:
    """Channel mean as a (h, w) gray image; identity for grayscale."""
    if img.channels == 1:
        return img.data[:, :, 0]
    return img.data.mean(axis=2)


def gray_to_channels(gray: np.ndarray, channels: int) -> np.ndarray:
    """Replicate a (h, w) gray plane into (h, w, channels)."""
    return np.repeat(gray[:, :, None], channels, axis=2)
