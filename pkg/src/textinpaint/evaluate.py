"""Dataset-level evaluation: quality metrics plus recognition accuracy.

Scores a directory (or mapping) of restored images against the intact
originals and text labels of a test split, with breakdowns by corrosion
form and by corrosion-ratio band. Missing predictions are excluded from
the aggregates and reported per record.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .datagen import DatasetRecord
from .imgcore import ImageTensor, read_png
from .metrics import char_acc, edit_distance, psnr, ssim, word_acc

RATIO_BANDS = ((0.05, 0.20), (0.20, 0.40), (0.40, 0.60))


@dataclass
class EvalReport:
    n_records: int = 0
    n_missing: int = 0
    psnr_mean: float = float("nan")
    ssim_mean: float = float("nan")
    word_acc: float = float("nan")
    char_acc: float = float("nan")
    rows: list = field(default_factory=list)
    by_form: dict = field(default_factory=dict)
    by_ratio_band: dict = field(default_factory=dict)
    missing_ids: list = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps({
            "n_records": self.n_records,
            "n_missing": self.n_missing,
            "psnr_mean": self.psnr_mean,
            "ssim_mean": self.ssim_mean,
            "word_acc": self.word_acc,
            "char_acc": self.char_acc,
            "by_form": self.by_form,
            "by_ratio_band": self.by_ratio_band,
            "missing_ids": self.missing_ids,
            "rows": self.rows,
        }, indent=2)

    def to_text_table(self) -> str:
        lines = []
        header = f"{'group':<14} {'n':>5} {'WordAcc':>8} {'CharAcc':>8} {'PSNR':>8} {'SSIM':>8}"
        rule = "-" * len(header)
        lines.append(header)
        lines.append(rule)
        lines.append(_table_row("all", {
            "n": self.n_records - self.n_missing, "word_acc": self.word_acc,
            "char_acc": self.char_acc, "psnr": self.psnr_mean, "ssim": self.ssim_mean,
        }))
        for name, stats in self.by_form.items():
            lines.append(_table_row(f"form {name}", stats))
        for name, stats in self.by_ratio_band.items():
            lines.append(_table_row(f"ratio {name}", stats))
        if self.n_missing:
            lines.append(rule)
            lines.append(f"missing predictions: {self.n_missing}")
        return "\n".join(lines)


def _table_row(name, stats):
    return (f"{name:<14} {stats['n']:>5d} {stats['word_acc']:>8.2f} "
            f"{stats['char_acc']:>8.4f} {stats['psnr']:>8.2f} {stats['ssim']:>8.4f}")


def _aggregate(rows):
    return {
        "n": len(rows),
        "word_acc": word_acc([r["pred"] for r in rows], [r["label"] for r in rows]),
        "char_acc": char_acc([r["pred"] for r in rows], [r["label"] for r in rows],
                             casefold=True),
        "psnr": float(np.mean([r["psnr"] for r in rows])),
        "ssim": float(np.mean([r["ssim"] for r in rows])),
    }


def _lookup_prediction(predictions, rec: DatasetRecord):
    if isinstance(predictions, dict):
        return predictions.get(rec.id)
    path = Path(predictions) / f"{rec.id}.png"
    if not path.is_file():
        return None
    return read_png(path)


def evaluate(records, predictions, recognizer, bands=RATIO_BANDS) -> EvalReport:
    """Score predicted restorations for `records`.

    `predictions` is a directory containing <record id>.png files or a
    mapping of record id to ImageTensor.
    """
    report = EvalReport(n_records=len(records))
    scored = []
    for rec in sorted(records, key=lambda r: r.id):
        pred_img = _lookup_prediction(predictions, rec)
        if pred_img is None:
            report.missing_ids.append(rec.id)
            report.rows.append({"id": rec.id, "error": "missing prediction"})
            continue
        pred_img = _match_channels(pred_img, rec.intact_image)
        text = recognizer.transcribe(pred_img, record_id=rec.id)
        row = {
            "id": rec.id,
            "label": rec.text_label,
            "pred": text,
            "psnr": psnr(rec.intact_image, pred_img),
            "ssim": ssim(rec.intact_image, pred_img),
            "edit_distance": edit_distance(text.casefold(), rec.text_label.casefold()),
            "form": rec.corrosion_form.value,
            "ratio": rec.corrosion_ratio,
        }
        report.rows.append(row)
        scored.append(row)
    report.n_missing = len(report.missing_ids)
    if scored:
        overall = _aggregate(scored)
        report.psnr_mean = overall["psnr"]
        report.ssim_mean = overall["ssim"]
        report.word_acc = overall["word_acc"]
        report.char_acc = overall["char_acc"]
        for form in sorted({r["form"] for r in scored}):
            report.by_form[form] = _aggregate([r for r in scored if r["form"] == form])
        for lo, hi in bands:
            in_band = [r for r in scored if lo <= r["ratio"] < hi
                       or (hi == bands[-1][1] and r["ratio"] == hi)]
            if in_band:
                report.by_ratio_band[f"{lo:.0%}-{hi:.0%}"] = _aggregate(in_band)
    return report


def _match_channels(pred: ImageTensor, ref: ImageTensor) -> ImageTensor:
    if pred.channels == ref.channels:
        return pred
    if pred.channels == 1 and ref.channels == 3:
        return ImageTensor(np.repeat(pred.data, 3, axis=2), "unit")
    if pred.channels == 3 and ref.channels == 1:
        return ImageTensor(pred.data.mean(axis=2, keepdims=True), "unit")
    return pred
