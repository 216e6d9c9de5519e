"""Flat key=value run configuration with typed fields and strict parsing.

Every knob of the pipeline lives here with a documented default; files
use one `key = value` per line with `#` comments, and the CLI accepts
`-o key=value` overrides. Unknown keys are rejected.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

DEFAULT_HELP = {
    "dataset_dir": "directory synth writes and the other stages read",
    "canvas_h": "canvas height in pixels (divisible by the nets' downsample factor)",
    "canvas_w": "canvas width in pixels",
    "channels": "raster channels: 3 (scene-style) or 1 (handwriting-style)",
    "n_records": "number of records synth generates",
    "word_len_lo": "minimum synthesized word length",
    "word_len_hi": "maximum synthesized word length",
    "ratio_lo": "lower corrosion-ratio bound for sampled masks",
    "ratio_hi": "upper corrosion-ratio bound for sampled masks",
    "form_mix": "corrosion form weights, e.g. ch:1,ir:1,qd:1",
    "fill": "corrosion fill color: black (scene-style) or white (handwriting-style)",
    "ink_level": "glyph gray level in [0,1]",
    "background_level": "background gray level in [0,1]",
    "jitter": "max text placement jitter in pixels",
    "theta": "luminance threshold for derived segmentation maps",
    "test_fraction": "fraction of records held out as the test split",
    "data_seed": "seed for dataset synthesis",
    "train_seed": "seed for training shuffles and init",
    "sample_seed": "seed for inference sampling",
    "diffusion_steps": "total noising steps T (2000 matches the reference setting)",
    "beta_start": "linear schedule start variance",
    "beta_end": "linear schedule end variance (scale up when T is small)",
    "structure_widths": "channel widths of the structure net, comma separated",
    "denoiser_widths": "channel widths of the denoiser net, comma separated",
    "structure_epochs": "structure training epochs",
    "structure_batch": "structure minibatch size",
    "structure_lr": "structure Adam learning rate",
    "denoiser_epochs": "denoiser training epochs",
    "denoiser_batch": "denoiser minibatch size",
    "denoiser_lr": "denoiser Adam learning rate",
    "w_pix": "weight of the pixel (MAE) structure loss",
    "w_seg": "weight of the weighted-BCE structure loss",
    "w_percep": "weight of the perceptual structure loss",
    "w_style": "weight of the style (Gram) structure loss",
    "positive_weight": "foreground weight inside the BCE loss (1.0 = standard BCE)",
    "predict_target": "denoiser regression target: x (clean image) or eps (noise)",
    "sampler_mode": "inference sampler: non_markov, markov, or ddim",
    "sampler_steps": "denoiser evaluations for non_markov/ddim sampling",
    "groups": "group-norm group count",
    "temb_dim": "sinusoidal time feature width",
    "workers": "worker threads for record synthesis",
    "feature_seed": "seed of the frozen perceptual feature extractor",
}


@dataclass
class RunConfig:
    dataset_dir: str = "data/run"
    canvas_h: int = 64
    canvas_w: int = 256
    channels: int = 3
    n_records: int = 200
    word_len_lo: int = 3
    word_len_hi: int = 8
    ratio_lo: float = 0.05
    ratio_hi: float = 0.60
    form_mix: str = "ch:1,ir:1,qd:1"
    fill: str = "black"
    ink_level: float = 0.1
    background_level: float = 0.9
    jitter: int = 2
    theta: float = 0.5
    test_fraction: float = 0.1
    data_seed: int = 0
    train_seed: int = 0
    sample_seed: int = 0
    diffusion_steps: int = 200
    beta_start: float = 1e-4
    beta_end: float = 0.02
    structure_widths: str = "8,16,32"
    denoiser_widths: str = "16,32,64,64,64"
    structure_epochs: int = 10
    structure_batch: int = 8
    structure_lr: float = 1e-4
    denoiser_epochs: int = 20
    denoiser_batch: int = 2
    denoiser_lr: float = 1e-3
    w_pix: float = 1.0
    w_seg: float = 1.0
    w_percep: float = 1.0
    w_style: float = 1.0
    positive_weight: float = 2.0
    predict_target: str = "x"
    sampler_mode: str = "non_markov"
    sampler_steps: int = 1
    groups: int = 4
    temb_dim: int = 32
    workers: int = 1
    feature_seed: int = 0

    def widths(self, which: str):
        raw = self.structure_widths if which == "structure" else self.denoiser_widths
        return tuple(int(v) for v in raw.split(","))

    def loss_weights(self):
        return (self.w_pix, self.w_seg, self.w_percep, self.w_style)


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, raw: str):
    kind = _FIELD_TYPES[key]
    raw = raw.strip()
    if kind in ("int", int):
        return int(raw)
    if kind in ("float", float):
        return float(raw)
    return raw


def parse_config_text(text: str, source: str = "<config>") -> RunConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{source}:{lineno}: expected key = value, got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ValueError(f"{source}:{lineno}: unknown config key {key!r}")
        values[key] = _coerce(key, raw)
    return RunConfig(**values)


def parse_config(path=None, overrides=()) -> RunConfig:
    """Build a RunConfig from an optional file plus key=value overrides."""
    cfg = parse_config_text(Path(path).read_text(), str(path)) if path else RunConfig()
    for item in overrides:
        if "=" not in item:
            raise ValueError(f"override {item!r} is not key=value")
        key, raw = (part.strip() for part in item.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ValueError(f"unknown config key {key!r}")
        setattr(cfg, key, _coerce(key, raw))
    return cfg


def serialize_config(cfg: RunConfig) -> str:
    """Stable key = value text; parse(serialize(cfg)) == cfg."""
    return "\n".join(f"{f.name} = {getattr(cfg, f.name)}" for f in fields(RunConfig)) + "\n"
