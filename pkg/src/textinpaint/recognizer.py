"""Pluggable text recognizers for evaluation.

The bundled toy recognizer template-matches the same glyph bank the
renderer draws from: normalized cross-correlation over sliding windows
at every plausible glyph scale, then a greedy left-to-right decode on
the best-scoring glyph grid. Scale selection weighs match strength by
how much of the image's ink mass the matched windows cover, which keeps
sub-glyph matches at wrong scales from winning. Deterministic, no
training. Real recognizer output can be injected through
ExternalTranscriptFile.
"""

from __future__ import annotations

import json

import numpy as np

from . import glyphs
from .imgcore import ImageTensor, luminance


class ToyTemplateRecognizer:
    """Sliding-window NCC against the bundled glyph templates."""

    def __init__(self, threshold: float = 0.55, ink_polarity: str = "dark"):
        self.threshold = threshold
        self.ink_polarity = ink_polarity
        self._banks = {}

    def transcribe(self, img: ImageTensor, record_id=None) -> str:
        lum = luminance(img)
        raw = (1.0 - lum) if self.ink_polarity == "dark" else lum
        ink = np.clip(raw - np.median(raw), 0.0, None).astype(np.float32)
        total_mass = float(ink.sum())
        if total_mass < 1e-6:
            return ""
        h, w = ink.shape
        best_text, best_score = "", 0.0
        for scale in range(1, h // glyphs.GLYPH_H + 1):
            if glyphs.GLYPH_W * scale > w:
                break
            text, score = self._decode_at_scale(ink, scale, total_mass)
            if score > best_score:
                best_text, best_score = text, score
        return best_text

    def _bank(self, scale: int):
        if scale not in self._banks:
            mats = []
            for ch in glyphs.ALPHABET:
                bm = np.kron(glyphs.glyph_bitmap(ch),
                             np.ones((scale, scale), dtype=np.float32))
                flat = bm.reshape(-1)
                flat = flat - flat.mean()
                mats.append(flat / np.linalg.norm(flat))
            self._banks[scale] = np.stack(mats)  # (n_glyphs, window)
        return self._banks[scale]

    def _decode_at_scale(self, ink: np.ndarray, scale: int, total_mass: float):
        th, tw = glyphs.GLYPH_H * scale, glyphs.GLYPH_W * scale
        h, w = ink.shape
        if th > h or tw > w:
            return "", 0.0
        windows = np.lib.stride_tricks.sliding_window_view(ink, (th, tw))
        ny, nx = windows.shape[:2]
        flat = windows.reshape(ny, nx, th * tw)
        centered = flat - flat.mean(axis=2, keepdims=True)
        norms = np.linalg.norm(centered, axis=2)
        safe = np.where(norms > 1e-6, norms, 1.0)
        scores = np.einsum("yxw,gw->yxg", centered / safe[:, :, None],
                           self._bank(scale), optimize=True)
        scores[norms <= 1e-6] = 0.0
        col_scores = scores.max(axis=0)    # (nx, n_glyphs)
        col_rows = scores.argmax(axis=0)   # matching y per (x, glyph)

        best_flat = int(np.argmax(col_scores))
        anchor_x, anchor_g = divmod(best_flat, col_scores.shape[1])
        if col_scores[anchor_x, anchor_g] < self.threshold:
            return "", 0.0

        def slot_entry(x, g):
            y = int(col_rows[x, g])
            mass = float(flat[y, x].sum())
            return float(col_scores[x, g]), glyphs.ALPHABET[g], mass

        advance = 6 * scale
        tol = max(1, scale // 2)
        slots = {0: slot_entry(anchor_x, anchor_g)}
        for direction in (-1, 1):
            misses = 0
            k = direction
            while misses < 2:  # tolerate one destroyed glyph mid-word
                sx = anchor_x + k * advance
                if sx < -tol or sx > nx - 1 + tol:
                    break
                lo, hi = max(sx - tol, 0), min(sx + tol, nx - 1)
                window = col_scores[lo:hi + 1]
                flat_best = int(np.argmax(window))
                xi, g = divmod(flat_best, window.shape[1])
                if window[xi, g] >= self.threshold:
                    slots[k] = slot_entry(lo + xi, g)
                    misses = 0
                else:
                    misses += 1
                k += direction
        ks = sorted(slots)
        text = "".join(slots[k][1] for k in ks)
        mean_score = float(np.mean([slots[k][0] for k in ks]))
        coverage = min(sum(slots[k][2] for k in ks) / total_mass, 1.0)
        return text, mean_score * np.sqrt(coverage)


class ExternalTranscriptFile:
    """Recognizer backed by a JSON mapping of record id to transcript."""

    def __init__(self, path):
        with open(path, encoding="utf-8") as fh:
            self.transcripts = json.load(fh)
        if not isinstance(self.transcripts, dict):
            raise IOError(f"{path}: expected a JSON object of id -> text")

    def transcribe(self, img: ImageTensor, record_id=None) -> str:
        if record_id is None:
            return ""
        return str(self.transcripts.get(record_id, ""))
