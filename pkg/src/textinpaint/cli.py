"""Command-line pipeline: synth, corrupt, train-spm, train-rm, infer, eval, gradcheck.

Every stage is deterministic given the config's named seeds. Set
TEXTINPAINT_LOG=quiet to silence progress output.
"""

from __future__ import annotations

import argparse
import json
import os
import string
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .config import RunConfig, parse_config, serialize_config
from .corrosion import CorrosionForm, CorrosionSpec, FillColor
from .datagen import (DatasetRecord, RenderStyle, build_record, read_manifest,
                      render_text_image, split_records, write_manifest)
from .diffusion import (CondUNet, DiffusionTrainConfig, OracleDenoiser,
                        UNetDenoiser, make_schedule, make_tau, sample_ddim,
                        sample_markov, sample_non_markov, train_denoiser)
from .errors import DivergenceError
from .evaluate import evaluate
from .gradsuite import TOLERANCE, run_gradient_suite
from .imgcore import ImageTensor, read_png, write_png
from .nnkit import load_checkpoint, save_checkpoint
from .recognizer import ToyTemplateRecognizer
from .structure import SegUNet, StructureTrainConfig, train_structure

WORD_ALPHABET = string.ascii_uppercase + string.digits


def _log(*args):
    if os.environ.get("TEXTINPAINT_LOG", "info") != "quiet":
        print(*args)


def _parse_form_mix(spec: str):
    forms, weights = [], []
    for part in spec.split(","):
        name, _, weight = part.partition(":")
        forms.append(CorrosionForm(name.strip()))
        weights.append(float(weight) if weight else 1.0)
    total = sum(weights)
    return forms, [w / total for w in weights]


def synth_one_record(cfg: RunConfig, index: int) -> DatasetRecord:
    """Build record `index` from its own seed stream."""
    rng = np.random.default_rng(np.random.SeedSequence((cfg.data_seed, index)))
    length = int(rng.integers(cfg.word_len_lo, cfg.word_len_hi + 1))
    label = "".join(WORD_ALPHABET[i] for i in rng.integers(0, len(WORD_ALPHABET), length))
    style = RenderStyle(ink_level=cfg.ink_level, background_level=cfg.background_level,
                        jitter=cfg.jitter)
    img, seg = render_text_image(label, style, rng, cfg.canvas_h, cfg.canvas_w,
                                 cfg.channels)
    forms, weights = _parse_form_mix(cfg.form_mix)
    form = forms[int(rng.choice(len(forms), p=weights))]
    cspec = CorrosionSpec(form, cfg.ratio_lo, cfg.ratio_hi, FillColor(cfg.fill),
                          rng_seed=index)
    return build_record(img, seg, label, cspec, rng,
                        record_id=f"rec{index:05d}", seed=index)


def synth_records(cfg: RunConfig):
    indices = range(cfg.n_records)
    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            return list(pool.map(lambda i: synth_one_record(cfg, i), indices))
    return [synth_one_record(cfg, i) for i in indices]


def cmd_synth(args) -> int:
    cfg = parse_config(args.config, args.override)
    records = synth_records(cfg)
    out_dir = Path(args.out or cfg.dataset_dir)
    write_manifest(records, out_dir)
    (out_dir / "config.txt").write_text(serialize_config(cfg))
    ratios = [r.corrosion_ratio for r in records]
    _log(f"wrote {len(records)} records to {out_dir}")
    if ratios:
        hist, edges = np.histogram(ratios, bins=10, range=(0.0, 1.0))
        for count, lo, hi in zip(hist, edges, edges[1:]):
            if count:
                _log(f"  ratio {lo:.1f}-{hi:.1f}: {'#' * count} ({count})")
    return 0


def cmd_corrupt(args) -> int:
    cfg = parse_config(args.config, args.override)
    in_dir, out_dir = Path(args.input), Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    forms, weights = _parse_form_mix(cfg.form_mix)
    pngs = sorted(in_dir.glob("*.png"))
    if not pngs:
        print(f"no PNG files in {in_dir}", file=sys.stderr)
        return 2
    for i, path in enumerate(pngs):
        rng = np.random.default_rng(np.random.SeedSequence((cfg.data_seed, i)))
        img = read_png(path)
        form = forms[int(rng.choice(len(forms), p=weights))]
        cspec = CorrosionSpec(form, cfg.ratio_lo, cfg.ratio_hi, FillColor(cfg.fill), i)
        from .corrosion import apply_corrosion, sample_mask_with_ratio
        from .imgcore import write_mask_png
        mask = sample_mask_with_ratio(cspec, img.height, img.width, rng)
        write_png(out_dir / path.name, apply_corrosion(img, mask, cspec.fill))
        write_mask_png(out_dir / f"{path.stem}_mask.png", mask)
    _log(f"corrupted {len(pngs)} images into {out_dir}")
    return 0


def _write_meta(path, meta: dict):
    Path(str(path) + ".meta.json").write_text(json.dumps(meta, indent=2))


def _read_meta(path) -> dict:
    meta_path = Path(str(path) + ".meta.json")
    if not meta_path.is_file():
        raise IOError(f"missing checkpoint metadata {meta_path}")
    return json.loads(meta_path.read_text())


def _load_dataset(cfg: RunConfig, split: str):
    records = read_manifest(cfg.dataset_dir)
    if split == "all":
        return records
    train, test = split_records(records, cfg.test_fraction, cfg.data_seed)
    return train if split == "train" else test


def cmd_train_structure(args) -> int:
    cfg = parse_config(args.config, args.override)
    records = _load_dataset(cfg, "train")
    net = SegUNet(in_channels=cfg.channels, widths=cfg.widths("structure"),
                  groups=cfg.groups, seed=cfg.train_seed)
    if args.resume:
        load_checkpoint(net.params, args.resume)
        _log(f"resumed from {args.resume}")
    tcfg = StructureTrainConfig(
        epochs=cfg.structure_epochs, batch_size=cfg.structure_batch,
        lr=cfg.structure_lr, weights=cfg.loss_weights(),
        positive_weight=cfg.positive_weight, seed=cfg.train_seed,
        feature_seed=cfg.feature_seed)
    try:
        report = train_structure(net, records, tcfg, log=_log)
    except DivergenceError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return 3
    out = Path(args.out or Path(cfg.dataset_dir) / "structure.ckpt")
    out.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(net.params, out)
    _write_meta(out, {"kind": "structure", "in_channels": cfg.channels,
                      "widths": list(cfg.widths("structure")), "groups": cfg.groups})
    Path(str(out) + ".losses.json").write_text(json.dumps(report.epoch_losses))
    _log(f"saved {out}; loss {report.initial_loss:.5f} -> {report.final_loss:.5f}")
    return 0


def cmd_train_denoiser(args) -> int:
    cfg = parse_config(args.config, args.override)
    records = _load_dataset(cfg, "train")
    net = CondUNet(in_channels=9, out_channels=3, widths=cfg.widths("denoiser"),
                   temb_dim=cfg.temb_dim, groups=cfg.groups, seed=cfg.train_seed)
    if args.resume:
        load_checkpoint(net.params, args.resume)
        _log(f"resumed from {args.resume}")
    seg_provider = "oracle"
    if args.structure_checkpoint:
        meta = _read_meta(args.structure_checkpoint)
        seg_net = SegUNet(in_channels=meta["in_channels"], widths=tuple(meta["widths"]),
                          groups=meta["groups"])
        load_checkpoint(seg_net.params, args.structure_checkpoint)
        seg_provider = seg_net
    schedule = make_schedule(cfg.diffusion_steps, cfg.beta_start, cfg.beta_end)
    tcfg = DiffusionTrainConfig(epochs=cfg.denoiser_epochs, batch_size=cfg.denoiser_batch,
                                lr=cfg.denoiser_lr, predict_target=cfg.predict_target,
                                seed=cfg.train_seed)
    try:
        report = train_denoiser(net, records, schedule, tcfg, seg_provider, log=_log)
    except DivergenceError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return 3
    out = Path(args.out or Path(cfg.dataset_dir) / "denoiser.ckpt")
    out.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(net.params, out)
    _write_meta(out, {"kind": "denoiser", "widths": list(cfg.widths("denoiser")),
                      "temb_dim": cfg.temb_dim, "groups": cfg.groups,
                      "parameterization": cfg.predict_target,
                      "diffusion_steps": cfg.diffusion_steps,
                      "beta_start": cfg.beta_start, "beta_end": cfg.beta_end})
    Path(str(out) + ".losses.json").write_text(json.dumps(report.epoch_losses))
    _log(f"saved {out}; loss {report.initial_loss:.5f} -> {report.final_loss:.5f}")
    return 0


def _to_model_batch(img: ImageTensor) -> np.ndarray:
    arr = img.data.transpose(2, 0, 1)
    if arr.shape[0] == 1:
        arr = np.repeat(arr, 3, axis=0)
    return (2.0 * arr - 1.0)[None].astype(np.float32)


def _from_model_batch(arr: np.ndarray, channels: int) -> ImageTensor:
    img = np.clip((arr[0].astype(np.float64) + 1.0) * 0.5, 0.0, 1.0)
    img = img.transpose(1, 2, 0)
    if channels == 1:
        img = img.mean(axis=2, keepdims=True)
    return ImageTensor(img, "unit")


def run_inference(cfg: RunConfig, records, seg_net=None, denoiser_net=None,
                  use_gt_seg=False, oracle_denoiser=False, out_dir=None, log=_log):
    """Restore each record; returns ({id: image}, failures). Writes PNGs when out_dir set."""
    schedule = make_schedule(cfg.diffusion_steps, cfg.beta_start, cfg.beta_end)
    outputs, failures = {}, []
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
    for idx, rec in enumerate(records):
        try:
            rng = np.random.default_rng(np.random.SeedSequence((cfg.sample_seed, idx)))
            c = _to_model_batch(rec.corrupted_image)
            if use_gt_seg:
                seg = rec.intact_segmask.values[None, None].astype(np.float32)
            elif seg_net is not None:
                seg = seg_net.predict(rec.corrupted_image).values[None, None].astype(np.float32)
            else:
                raise ValueError("no segmentation source: pass seg_net or use_gt_seg")
            if oracle_denoiser:
                model = OracleDenoiser(_to_model_batch(rec.intact_image))
            elif denoiser_net is not None:
                model = UNetDenoiser(denoiser_net, schedule, cfg.predict_target)
            else:
                raise ValueError("no denoiser: pass denoiser_net or oracle_denoiser")
            x_init = rng.standard_normal(c.shape).astype(np.float32)
            if cfg.sampler_mode == "markov":
                x_out = sample_markov(model, x_init, c, seg, schedule, rng)
            elif cfg.sampler_mode == "non_markov":
                tau = make_tau(cfg.sampler_steps, schedule.T)
                x_out = sample_non_markov(model, x_init, c, seg, tau)
            elif cfg.sampler_mode == "ddim":
                tau = make_tau(cfg.sampler_steps, schedule.T)
                x_out = sample_ddim(model, x_init, c, seg, schedule, tau)
            else:
                raise ValueError(f"unknown sampler_mode {cfg.sampler_mode!r}")
            restored = _from_model_batch(x_out, rec.intact_image.channels)
            outputs[rec.id] = restored
            if out_dir is not None:
                write_png(out_dir / f"{rec.id}.png", restored)
                seg_img = ImageTensor(seg[0, 0].astype(np.float64)[:, :, None], "unit")
                write_png(out_dir / f"{rec.id}_seg.png", seg_img)
        except Exception as exc:  # per-record isolation, reported at exit
            failures.append((rec.id, str(exc)))
            log(f"  FAILED {rec.id}: {exc}")
    return outputs, failures


def cmd_infer(args) -> int:
    cfg = parse_config(args.config, args.override)
    records = _load_dataset(cfg, args.split)
    seg_net = None
    if args.structure_checkpoint:
        meta = _read_meta(args.structure_checkpoint)
        seg_net = SegUNet(in_channels=meta["in_channels"], widths=tuple(meta["widths"]),
                          groups=meta["groups"])
        load_checkpoint(seg_net.params, args.structure_checkpoint)
    denoiser_net = None
    if args.denoiser_checkpoint:
        meta = _read_meta(args.denoiser_checkpoint)
        denoiser_net = CondUNet(in_channels=9, out_channels=3,
                                widths=tuple(meta["widths"]), temb_dim=meta["temb_dim"],
                                groups=meta["groups"])
        load_checkpoint(denoiser_net.params, args.denoiser_checkpoint)
        cfg.predict_target = meta.get("parameterization", cfg.predict_target)
    t0 = time.time()
    outputs, failures = run_inference(
        cfg, records, seg_net=seg_net, denoiser_net=denoiser_net,
        use_gt_seg=args.use_gt_seg, oracle_denoiser=args.oracle_denoiser,
        out_dir=args.out)
    _log(f"restored {len(outputs)}/{len(records)} records to {args.out} "
         f"in {time.time() - t0:.1f}s")
    return 1 if failures else 0


def cmd_eval(args) -> int:
    cfg = parse_config(args.config, args.override)
    records = _load_dataset(cfg, args.split)
    polarity = "dark" if cfg.ink_level < cfg.background_level else "light"
    recognizer = ToyTemplateRecognizer(ink_polarity=polarity)
    report = evaluate(records, args.predictions, recognizer)
    out_dir = Path(args.out or args.predictions)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(report.to_json())
    (out_dir / "report.txt").write_text(report.to_text_table() + "\n")
    _log(report.to_text_table())
    return 0


def cmd_gradcheck(args) -> int:
    results = run_gradient_suite(seeds=args.seeds, log=_log)
    worst = max(results.values())
    _log(f"worst relative error: {worst:.3e} (tolerance {TOLERANCE:.0e})")
    return 0 if worst <= TOLERANCE else 1


def _add_common(p):
    p.add_argument("--config", help="config file of key = value lines")
    p.add_argument("-o", "--override", action="append", default=[],
                   metavar="KEY=VALUE", help="override a config key")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="textinpaint",
        description="Corroded text image synthesis and structure-guided "
                    "diffusion restoration, desk scale.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a dataset of corroded text records")
    _add_common(p)
    p.add_argument("--out", help="dataset directory (default: config dataset_dir)")
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("corrupt", help="corrode a directory of PNG images")
    _add_common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_corrupt)

    p = sub.add_parser("train-spm", help="train the structure predictor")
    _add_common(p)
    p.add_argument("--out", help="checkpoint path")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.set_defaults(fn=cmd_train_structure)

    p = sub.add_parser("train-rm", help="train the diffusion reconstructor")
    _add_common(p)
    p.add_argument("--out", help="checkpoint path")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--structure-checkpoint",
                   help="condition on this trained structure net instead of "
                        "ground-truth masks")
    p.set_defaults(fn=cmd_train_denoiser)

    p = sub.add_parser("infer", help="restore corrupted records")
    _add_common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--split", default="test", choices=("train", "test", "all"))
    p.add_argument("--structure-checkpoint")
    p.add_argument("--denoiser-checkpoint")
    p.add_argument("--use-gt-seg", action="store_true",
                   help="condition on ground-truth segmentation maps")
    p.add_argument("--oracle-denoiser", action="store_true",
                   help="replace the denoiser with a ground-truth oracle")
    p.set_defaults(fn=cmd_infer)

    p = sub.add_parser("eval", help="score restored images against the dataset")
    _add_common(p)
    p.add_argument("--predictions", required=True)
    p.add_argument("--split", default="test", choices=("train", "test", "all"))
    p.add_argument("--out")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference check of all layers")
    p.add_argument("--seeds", type=int, default=20)
    p.set_defaults(fn=cmd_gradcheck)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, IOError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
