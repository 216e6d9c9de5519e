"""Synthetic text images, five-part training records, and dataset manifests.

A record bundles everything restoration training needs for one image:
the corrupted image, the mask of where corrosion hit, the intact
original, and the text-foreground segmentation both before and after
corrosion, plus the text label and corrosion metadata.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import glyphs
from .corrosion import (CorrosionForm, CorrosionSpec, FillColor,
                        apply_corrosion, corrosion_ratio, sample_mask_with_ratio)
from .errors import ContractViolation, ManifestError, RenderError
from .imgcore import (ImageTensor, MaskBitmap, SegMap, gray_to_channels,
                      luminance, read_mask_png, read_png, write_mask_png,
                      write_png)

CANONICAL_H = 64
CANONICAL_W = 256


@dataclass(frozen=True)
class RenderStyle:
    """Appearance knobs for the glyph renderer."""

    font_id: str = glyphs.FONT_ID
    ink_level: float = 0.1
    background_level: float = 0.9
    jitter: int = 2

    def __post_init__(self):
        if abs(self.ink_level - self.background_level) < 0.3:
            raise ContractViolation("ink and background must differ by at least 0.3")
        if not (0.0 <= self.ink_level <= 1.0 and 0.0 <= self.background_level <= 1.0):
            raise ContractViolation("ink/background levels must lie in [0, 1]")


def glyph_scale_for(text: str, h: int, w: int) -> int:
    """Largest integer glyph scale at which `text` fits the canvas."""
    margin = 2
    n = max(len(text), 1)
    sw = (w - 2 * margin) // (6 * n - 1)
    sh = (h - 2 * margin) // glyphs.GLYPH_H
    return max(1, min(sw, sh))


def render_text_image(text: str, style: RenderStyle, rng, h: int = CANONICAL_H,
                      w: int = CANONICAL_W, channels: int = 3):
    """Rasterize `text` onto a constant background.

    Returns (image, segmap) where the segmap is exactly the set of ink
    pixels. Deterministic given (text, style, rng state).
    """
    if len(text) > 20:
        raise RenderError(f"text too long ({len(text)} > 20 characters)")
    for ch in text:
        if ch.upper() not in glyphs.ALPHABET:
            raise RenderError(f"unsupported character {ch!r} in {text!r}")
    gray = np.full((h, w), style.background_level, dtype=np.float64)
    seg = np.zeros((h, w), dtype=np.float64)
    if text:
        scale = glyph_scale_for(text, h, w)
        text_w = (6 * len(text) - 1) * scale
        text_h = glyphs.GLYPH_H * scale
        x0 = (w - text_w) // 2
        y0 = (h - text_h) // 2
        if style.jitter > 0:
            x0 += int(rng.integers(-style.jitter, style.jitter + 1))
            y0 += int(rng.integers(-style.jitter, style.jitter + 1))
        x0 = int(np.clip(x0, 0, w - text_w))
        y0 = int(np.clip(y0, 0, h - text_h))
        for i, ch in enumerate(text):
            bm = np.kron(glyphs.glyph_bitmap(ch), np.ones((scale, scale), dtype=np.uint8))
            gx = x0 + i * 6 * scale
            region = seg[y0:y0 + bm.shape[0], gx:gx + bm.shape[1]]
            region[bm == 1] = 1.0
        gray[seg == 1.0] = style.ink_level
    return ImageTensor(gray_to_channels(gray, channels), "unit"), SegMap(seg)


def threshold_segmentation(img: ImageTensor, theta: float, ink_darker: bool = True) -> SegMap:
    """Binary foreground map by luminance thresholding."""
    if not (0.0 < theta < 1.0):
        raise ContractViolation(f"theta must be in (0, 1), got {theta}")
    lum = luminance(img)
    fg = lum < theta if ink_darker else lum > theta
    return SegMap(fg.astype(np.float64))


@dataclass(frozen=True)
class DatasetRecord:
    """One training tuple plus its label and corrosion metadata."""

    id: str
    corrupted_image: ImageTensor
    corruption_mask: MaskBitmap
    intact_image: ImageTensor
    corrupted_segmask: SegMap
    intact_segmask: SegMap
    text_label: str
    corrosion_form: CorrosionForm
    corrosion_ratio: float
    fill: FillColor
    ratio_band: tuple = (0.0, 1.0)
    seed: int = 0

    def __post_init__(self):
        shape = (self.intact_image.height, self.intact_image.width)
        for raster in (self.corrupted_image, self.corruption_mask,
                       self.corrupted_segmask, self.intact_segmask):
            if (raster.height, raster.width) != shape:
                raise ContractViolation(f"record {self.id}: raster shapes disagree")
        if not self.intact_segmask.is_binary():
            raise ContractViolation(f"record {self.id}: intact segmask must be binary")


def build_record(intact: ImageTensor, segmask: SegMap, label: str,
                 cspec: CorrosionSpec, rng, record_id: str = "rec",
                 seed: int = 0) -> DatasetRecord:
    """Corrode an intact image into a full training record.

    The corrupted segmask is the intact one with every corroded pixel
    zeroed: corrosion destroys ink.
    """
    mask = sample_mask_with_ratio(cspec, intact.height, intact.width, rng)
    corrupted = apply_corrosion(intact, mask, cspec.fill)
    seg_corr = segmask.values * (1.0 - mask.bits)
    return DatasetRecord(
        id=record_id,
        corrupted_image=corrupted,
        corruption_mask=mask,
        intact_image=intact,
        corrupted_segmask=SegMap(seg_corr),
        intact_segmask=segmask,
        text_label=label,
        corrosion_form=cspec.form,
        corrosion_ratio=corrosion_ratio(mask),
        fill=cspec.fill,
        ratio_band=(cspec.ratio_lo, cspec.ratio_hi),
        seed=seed,
    )


_RASTER_FILES = ("intact.png", "corrupted.png", "mask.png", "seg.png", "seg_corrupted.png")


def write_manifest(records, out_dir) -> Path:
    """Write manifest.jsonl plus one PNG-per-raster directory per record."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest_path = out_dir / "manifest.jsonl"
    with open(manifest_path, "w", encoding="utf-8") as fh:
        for rec in records:
            rec_dir = out_dir / rec.id
            rec_dir.mkdir(parents=True, exist_ok=True)
            write_png(rec_dir / "intact.png", rec.intact_image)
            write_png(rec_dir / "corrupted.png", rec.corrupted_image)
            write_mask_png(rec_dir / "mask.png", rec.corruption_mask)
            write_mask_png(rec_dir / "seg.png", _seg_as_mask(rec.intact_segmask))
            write_mask_png(rec_dir / "seg_corrupted.png", _seg_as_mask(rec.corrupted_segmask))
            row = {
                "id": rec.id,
                "label": rec.text_label,
                "form": rec.corrosion_form.value,
                "ratio": rec.corrosion_ratio,
                "fill": rec.fill.value,
                "ratio_band": list(rec.ratio_band),
                "seed": rec.seed,
                "files": {name.split(".")[0]: f"{rec.id}/{name}" for name in _RASTER_FILES},
            }
            fh.write(json.dumps(row) + "\n")
    return manifest_path


def _seg_as_mask(seg: SegMap) -> MaskBitmap:
    if not seg.is_binary():
        raise ContractViolation("only binary segmaps serialize as 1-bit PNG")
    return MaskBitmap(seg.values.astype(np.uint8))


def read_manifest(dataset_dir):
    """Load all records from a dataset directory written by write_manifest."""
    dataset_dir = Path(dataset_dir)
    manifest_path = dataset_dir / "manifest.jsonl"
    if not manifest_path.is_file():
        raise ManifestError(f"no manifest.jsonl in {dataset_dir}")
    records = []
    with open(manifest_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"{manifest_path}:{lineno}: bad JSON: {exc}") from exc
            records.append(_load_record(dataset_dir, row, manifest_path, lineno))
    return records


def _load_record(root: Path, row: dict, manifest_path: Path, lineno: int) -> DatasetRecord:
    required = {"id", "label", "form", "ratio", "fill", "files"}
    missing = required - row.keys()
    if missing:
        raise ManifestError(f"{manifest_path}:{lineno}: missing keys {sorted(missing)}")
    paths = {}
    for key in ("intact", "corrupted", "mask", "seg", "seg_corrupted"):
        if key not in row["files"]:
            raise ManifestError(f"{manifest_path}:{lineno}: files entry lacks {key!r}")
        p = root / row["files"][key]
        if not p.is_file():
            raise ManifestError(f"record {row['id']}: missing raster {p}")
        paths[key] = p
    return DatasetRecord(
        id=row["id"],
        corrupted_image=read_png(paths["corrupted"]),
        corruption_mask=read_mask_png(paths["mask"]),
        intact_image=read_png(paths["intact"]),
        corrupted_segmask=SegMap(read_mask_png(paths["seg_corrupted"]).bits.astype(np.float64)),
        intact_segmask=SegMap(read_mask_png(paths["seg"]).bits.astype(np.float64)),
        text_label=row["label"],
        corrosion_form=CorrosionForm(row["form"]),
        corrosion_ratio=float(row["ratio"]),
        fill=FillColor(row["fill"]),
        ratio_band=tuple(row.get("ratio_band", (0.0, 1.0))),
        seed=int(row.get("seed", 0)),
    )


def split_records(records, test_fraction: float, seed: int):
    """Deterministic disjoint train/test split by record id."""
    if not (0.0 <= test_fraction < 1.0):
        raise ContractViolation("test_fraction must be in [0, 1)")
    ordered = sorted(records, key=lambda r: r.id)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(ordered))
    n_test = int(round(test_fraction * len(ordered)))
    test_idx = set(perm[:n_test].tolist())
    train = [r for i, r in enumerate(ordered) if i not in test_idx]
    test = [r for i, r in enumerate(ordered) if i in test_idx]
    return train, test
