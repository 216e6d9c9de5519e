"""Corrosion mask synthesis and application.

Three procedural damage patterns are supported: convex-hull polygons
(physical wear over a compact region), irregular blobs (rust-like,
non-uniform damage), and quick-draw scribbles (hasty pen strokes,
optionally dilated). Masks are sampled into a requested area-ratio
band by rejection with multiplicative parameter rescaling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import ndimage

from .errors import ContractViolation, DegenerateHullError, SamplingFailureError
from .imgcore import ImageTensor, MaskBitmap


class CorrosionForm(str, Enum):
    CONVEX_HULL = "ch"
    IRREGULAR = "ir"
    QUICK_DRAW = "qd"


class FillColor(str, Enum):
    BLACK = "black"
    WHITE = "white"


@dataclass(frozen=True)
class CorrosionSpec:
    """Recipe for sampling one corrosion mask."""

    form: CorrosionForm
    ratio_lo: float
    ratio_hi: float
    fill: FillColor
    rng_seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.ratio_lo <= self.ratio_hi < 1.0):
            raise ContractViolation(
                f"need 0 < ratio_lo <= ratio_hi < 1, got [{self.ratio_lo}, {self.ratio_hi}]"
            )


@dataclass(frozen=True)
class Polygon:
    """Ordered (x, y) vertex list; hull outputs are counter-clockwise."""

    vertices: tuple

    def __post_init__(self):
        object.__setattr__(self, "vertices", tuple((float(x), float(y)) for x, y in self.vertices))

    def __len__(self):
        return len(self.vertices)


def _cross(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def graham_convex_hull(points) -> Polygon:
    """Convex hull of >= 3 points, CCW, interior collinear points dropped.

    Raises DegenerateHullError when all points are collinear; callers
    resample their point set in that case.
    """
    raw = [(float(x), float(y)) for x, y in points]
    if len(raw) < 3:
        raise ContractViolation("convex hull needs at least 3 points")
    pts = sorted(set(raw))
    if len(pts) < 3:
        raise DegenerateHullError("fewer than 3 distinct points")

    # anchor at the lowest point (leftmost on ties), sort by polar angle
    # then by distance so collinear runs enter near-to-far
    anchor = min(pts, key=lambda p: (p[1], p[0]))
    rest = [p for p in pts if p != anchor]
    rest.sort(key=lambda p: (math.atan2(p[1] - anchor[1], p[0] - anchor[0]),
                             (p[0] - anchor[0]) ** 2 + (p[1] - anchor[1]) ** 2))

    stack = [anchor]
    for p in rest:
        while len(stack) >= 2 and _cross(stack[-2], stack[-1], p) <= 0.0:
            stack.pop()
        stack.append(p)
    if len(stack) < 3:
        raise DegenerateHullError("all points are collinear")
    return Polygon(tuple(stack))


def rasterize_polygon(poly: Polygon, h: int, w: int) -> MaskBitmap:
    """Even-odd scanline fill: a bit is set iff the pixel center is inside."""
    bits = np.zeros((h, w), dtype=np.uint8)
    verts = poly.vertices
    n = len(verts)
    if n < 3:
        return MaskBitmap(bits)
    xs = np.array([v[0] for v in verts])
    ys = np.array([v[1] for v in verts])
    xe = np.roll(xs, -1)
    ye = np.roll(ys, -1)
    for row in range(h):
        yc = row + 0.5
        # half-open rule [min, max) keeps shared vertices from double counting
        active = ((ys <= yc) & (ye > yc)) | ((ye <= yc) & (ys > yc))
        if not active.any():
            continue
        x0, y0, x1, y1 = xs[active], ys[active], xe[active], ye[active]
        cross_x = x0 + (yc - y0) * (x1 - x0) / (y1 - y0)
        cross_x = np.sort(cross_x)
        for i in range(0, len(cross_x) - 1, 2):
            lo = int(np.ceil(cross_x[i] - 0.5))
            hi = int(np.floor(cross_x[i + 1] - 0.5))
            if hi >= lo:
                bits[row, max(lo, 0):min(hi, w - 1) + 1] = 1
    return MaskBitmap(bits)


def gen_convexhull_mask(h: int, w: int, n_points: int, extent: float, rng) -> MaskBitmap:
    """Hull of random points inside a centered box covering `extent` of each side."""
    if n_points < 3:
        raise ContractViolation("need at least 3 points for a hull mask")
    extent = float(np.clip(extent, 0.02, 1.0))
    bw, bh = extent * w, extent * h
    cx = rng.uniform(bw / 2, w - bw / 2) if bw < w else w / 2
    cy = rng.uniform(bh / 2, h - bh / 2) if bh < h else h / 2
    for _ in range(20):
        px = rng.uniform(cx - bw / 2, cx + bw / 2, size=n_points)
        py = rng.uniform(cy - bh / 2, cy + bh / 2, size=n_points)
        try:
            hull = graham_convex_hull(zip(px, py))
        except DegenerateHullError:
            continue
        return rasterize_polygon(hull, h, w)
    raise SamplingFailureError("could not draw a non-degenerate point set in 20 tries")


def gen_quickdraw_mask(h: int, w: int, strokes: int, thickness: int,
                       dilation_radius: int, rng) -> MaskBitmap:
    """Union of random polyline scribbles, stamped thick, then dilated."""
    if strokes < 0 or thickness < 1:
        raise ContractViolation("need strokes >= 0 and thickness >= 1")
    bits = np.zeros((h, w), dtype=bool)
    yy, xx = np.mgrid[0:h, 0:w]
    centers_x = xx + 0.5
    centers_y = yy + 0.5
    radius = max((thickness - 1) / 2.0, 0.5)  # half-pixel floor so 1px strokes ink
    for _ in range(strokes):
        x = rng.uniform(0, w)
        y = rng.uniform(0, h)
        angle = rng.uniform(0, 2 * math.pi)
        for _seg in range(int(rng.integers(3, 8))):
            length = rng.uniform(0.1, 0.5) * min(h, w)
            angle += rng.uniform(-1.0, 1.0)
            nx = float(np.clip(x + length * math.cos(angle), 0, w - 1))
            ny = float(np.clip(y + length * math.sin(angle), 0, h - 1))
            bits |= _segment_distance(centers_x, centers_y, x, y, nx, ny) <= radius
            x, y = nx, ny
    if dilation_radius > 0 and bits.any():
        bits = ndimage.binary_dilation(bits, structure=_disk(dilation_radius))
    return MaskBitmap(bits.astype(np.uint8))


def draw_stroke(h: int, w: int, p0, p1, thickness: int) -> MaskBitmap:
    """Single straight stroke between two points; used directly by tests."""
    yy, xx = np.mgrid[0:h, 0:w]
    radius = max((thickness - 1) / 2.0, 0.5)
    d = _segment_distance(xx + 0.5, yy + 0.5, p0[0], p0[1], p1[0], p1[1])
    return MaskBitmap((d <= radius).astype(np.uint8))


def _segment_distance(px, py, x0, y0, x1, y1):
    dx, dy = x1 - x0, y1 - y0
    den = dx * dx + dy * dy
    if den == 0.0:
        return np.hypot(px - x0, py - y0)
    t = np.clip(((px - x0) * dx + (py - y0) * dy) / den, 0.0, 1.0)
    return np.hypot(px - (x0 + t * dx), py - (y0 + t * dy))


def _disk(radius: int) -> np.ndarray:
    r = int(radius)
    yy, xx = np.mgrid[-r:r + 1, -r:r + 1]
    return (xx * xx + yy * yy) <= r * r


def gen_irregular_mask(h: int, w: int, blob_count: int, rng, base_radius=None) -> MaskBitmap:
    """Union of star-shaped blobs whose boundary radius is a smoothed random walk."""
    if blob_count < 1:
        raise ContractViolation("need blob_count >= 1")
    if base_radius is None:
        base_radius = 0.22 * min(h, w)
    bits = np.zeros((h, w), dtype=bool)
    yy, xx = np.mgrid[0:h, 0:w]
    for _ in range(blob_count):
        cx = rng.uniform(0.15 * w, 0.85 * w)
        cy = rng.uniform(0.15 * h, 0.85 * h)
        n_knots = 24
        walk = np.cumsum(rng.normal(0.0, 0.35, size=n_knots))
        walk -= walk.mean()
        # periodic boundary: blend the seam so r(0) == r(2*pi)
        ramp = np.linspace(0, 1, n_knots)
        walk = walk * (1 - ramp) + np.roll(walk, 1) * ramp
        radii = base_radius * np.clip(1.0 + walk, 0.25, 2.2)
        theta = np.arctan2(yy + 0.5 - cy, xx + 0.5 - cx)
        knot_angles = np.linspace(-math.pi, math.pi, n_knots, endpoint=False)
        r_at = np.interp(theta, knot_angles, radii, period=2 * math.pi)
        rho = np.hypot(xx + 0.5 - cx, yy + 0.5 - cy)
        bits |= rho <= r_at
    return MaskBitmap(bits.astype(np.uint8))


def corrosion_ratio(mask: MaskBitmap) -> float:
    """Fraction of pixels destroyed by the mask."""
    return float(mask.bits.sum()) / (mask.height * mask.width)


def sample_mask_with_ratio(spec: CorrosionSpec, h: int, w: int, rng,
                           max_attempts: int = 200) -> MaskBitmap:
    """Sample a mask whose corrosion ratio lands inside [ratio_lo, ratio_hi].

    Rejection sampling: the size knob of the chosen form is rescaled
    multiplicatively toward the band midpoint after each miss. Raises
    SamplingFailureError after `max_attempts` misses.
    """
    target = 0.5 * (spec.ratio_lo + spec.ratio_hi)
    scale = 1.0
    for _ in range(max_attempts):
        mask = _draw_form(spec.form, h, w, target * scale, rng)
        ratio = corrosion_ratio(mask)
        if spec.ratio_lo <= ratio <= spec.ratio_hi:
            return mask
        if ratio <= 0.0:
            scale = min(scale * 2.0, 64.0)
        else:
            scale = float(np.clip(scale * math.sqrt(target / ratio), scale * 0.25, scale * 4.0))
        scale = float(np.clip(scale, 1e-3, 64.0))
    raise SamplingFailureError(
        f"no mask with ratio in [{spec.ratio_lo}, {spec.ratio_hi}] for form "
        f"{spec.form.value} on {h}x{w} after {max_attempts} attempts"
    )


def _draw_form(form: CorrosionForm, h: int, w: int, area_target: float, rng) -> MaskBitmap:
    area_target = float(np.clip(area_target, 1e-4, 0.98))
    if form is CorrosionForm.CONVEX_HULL:
        # a random hull fills roughly half its bounding box
        extent = math.sqrt(area_target / 0.5)
        n_points = int(rng.integers(5, 13))
        return gen_convexhull_mask(h, w, n_points, extent, rng)
    if form is CorrosionForm.IRREGULAR:
        blob_count = 1 + int(area_target > 0.25) + int(area_target > 0.45)
        radius = math.sqrt(area_target * h * w / (blob_count * math.pi))
        return gen_irregular_mask(h, w, blob_count, rng, base_radius=radius)
    if form is CorrosionForm.QUICK_DRAW:
        strokes = max(1, int(round(area_target * 14)))
        thickness = max(1, int(round(0.06 * min(h, w))))
        dilation = max(0, int(round(area_target * 0.16 * min(h, w))))
        return gen_quickdraw_mask(h, w, strokes, thickness, dilation, rng)
    raise ContractViolation(f"unknown corrosion form {form!r}")


def apply_corrosion(img: ImageTensor, mask: MaskBitmap, fill: FillColor) -> ImageTensor:
    """Overwrite masked pixels with the fill color on every channel."""
    if img.range_tag != "unit":
        raise ContractViolation("apply_corrosion operates on unit-range images")
    if (img.height, img.width) != (mask.height, mask.width):
        raise ContractViolation(
            f"image {img.height}x{img.width} and mask {mask.height}x{mask.width} differ"
        )
    value = 0.0 if fill is FillColor.BLACK else 1.0
    out = img.data.copy()
    out[mask.bits.astype(bool)] = value
    return ImageTensor(out, img.range_tag)
