"""Acceptance criteria: one test per criterion, each printing a PASS line.

Criteria 6-8 share one trained pipeline (synthesized dataset, structure
net, diffusion reconstructor) built by the module-scoped fixture; that
fixture is the expensive part of the suite (tens of minutes on CPU).
Run only this file with `pytest tests/test_acceptance.py -v -s`.
"""

import math
import time

import numpy as np
import pytest

from oracles import brute_force_hull
from textinpaint.cli import run_inference, synth_records
from textinpaint.config import RunConfig
from textinpaint.corrosion import (CorrosionForm, CorrosionSpec, FillColor,
                                   corrosion_ratio, graham_convex_hull,
                                   sample_mask_with_ratio)
from textinpaint.datagen import split_records
from textinpaint.diffusion import (CondUNet, DiffusionTrainConfig,
                                   OracleDenoiser, UNetDenoiser,
                                   heldout_reconstruction_loss, make_schedule,
                                   make_tau, mse_loss, sample_markov,
                                   sample_non_markov, train_denoiser)
from textinpaint.evaluate import evaluate
from textinpaint.gradsuite import TOLERANCE, run_gradient_suite
from textinpaint.metrics import SSIM_C1, char_acc, psnr, ssim
from textinpaint.recognizer import ToyTemplateRecognizer
from textinpaint.structure import (SegUNet, StructureTrainConfig, loss_pix,
                                   loss_seg, train_structure)


def _announce(criterion, detail):
    print(f"\n[criterion {criterion}] PASS: {detail}")


# --------------------------------------------------------------------------
# 1. gradient suite


def test_criterion_1_gradient_suite():
    t0 = time.time()
    results = run_gradient_suite(seeds=20, net_seeds=3)
    elapsed = time.time() - t0
    worst = max(results.values())
    assert worst <= TOLERANCE, results
    assert elapsed < 120.0, f"suite took {elapsed:.0f}s"
    _announce(1, f"all {len(results)} checks <= {TOLERANCE:.0e} "
                 f"(worst {worst:.2e}) in {elapsed:.0f}s")


# --------------------------------------------------------------------------
# 2. diffusion oracles


def test_criterion_2_diffusion_oracles():
    rng = np.random.default_rng(0)
    schedule = make_schedule(200, 1e-4, 0.2)

    # (a) one-step accelerated sampling with the oracle is bit-exact
    x0 = rng.uniform(-0.9, 0.9, size=(1, 3, 32, 128))
    oracle = OracleDenoiser(x0)
    seg = np.zeros((1, 1, 32, 128))
    out = sample_non_markov(oracle, rng.standard_normal(x0.shape), x0, seg,
                            make_tau(1, schedule.T))
    assert np.array_equal(out, x0)

    # (b) full ancestral run with the oracle exceeds 40 dB
    x = rng.standard_normal(x0.shape)
    recovered = sample_markov(oracle, x, x0, seg, schedule, rng)
    a = (np.clip(recovered[0], -1, 1).transpose(1, 2, 0) + 1) / 2
    b = (x0[0].transpose(1, 2, 0) + 1) / 2
    markov_psnr = psnr(a, b)
    assert markov_psnr > 40.0

    # (c) schedule identities exact in float64
    for T, b0, b1 in ((200, 1e-4, 0.2), (2000, 1e-4, 0.02), (7, 0.05, 0.3)):
        s = make_schedule(T, b0, b1)
        assert s.alpha_bar[0] == 1.0
        for t in range(1, T + 1):
            assert s.alpha_bar[t] == s.alpha_bar[t - 1] * s.alpha[t]
            assert s.alpha[t] == 1.0 - s.beta[t]
        assert np.all(np.diff(s.alpha_bar) < 0)
    _announce(2, f"one-step oracle bit-exact; {schedule.T}-step ancestral oracle "
                 f"{markov_psnr:.1f} dB; schedule identities exact")


# --------------------------------------------------------------------------
# 3. loss closed forms


def test_criterion_3_loss_closed_forms():
    ones = np.ones((8, 8))
    zeros = np.zeros((8, 8))
    half = np.full((8, 8), 0.5)
    assert loss_seg(ones, half) == pytest.approx(2 * math.log(2), abs=1e-9)
    assert loss_seg(zeros, half) == pytest.approx(math.log(2), abs=1e-9)

    rng = np.random.default_rng(1)
    base = rng.random((8, 8)) * 0.8
    assert loss_pix(base, base + 0.1) == pytest.approx(0.1, abs=1e-9)
    x = rng.normal(size=(2, 3, 8, 8))
    assert mse_loss(x, x + 0.3) == pytest.approx(0.09, abs=1e-9)
    _announce(3, "weighted-BCE 2ln2 / ln2, MAE offset, and MSE offset-squared "
                 "forms all within 1e-9")


# --------------------------------------------------------------------------
# 4. metric oracles


def test_criterion_4_metric_oracles():
    a = np.full((16, 16, 1), 0.2)
    b = np.full((16, 16, 1), 0.3)
    assert psnr(a, b) == pytest.approx(20.0, abs=1e-9)
    const_ssim = ssim(np.zeros((16, 16)), np.ones((16, 16)))
    assert const_ssim == pytest.approx(SSIM_C1 / (1 + SSIM_C1), abs=1e-9)
    assert char_acc(["kitten"], ["sitting"]) == pytest.approx(4 / 7, abs=1e-12)
    _announce(4, "PSNR 20.0 dB, SSIM C1/(1+C1), char accuracy 4/7 all exact")


# --------------------------------------------------------------------------
# 5. geometry


def test_criterion_5_geometry():
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        n = int(rng.integers(5, 21))
        pts = [tuple(p) for p in rng.random((n, 2)) * 100]
        hull = list(graham_convex_hull(pts).vertices)
        start = min(range(len(hull)), key=lambda i: (hull[i][1], hull[i][0]))
        assert hull[start:] + hull[:start] == brute_force_hull(pts)

    forms = list(CorrosionForm)
    in_band = 0
    for i in range(500):
        sub = np.random.default_rng(i)
        lo = float(sub.uniform(0.05, 0.50))
        hi = float(min(lo + sub.uniform(0.05, 0.25), 0.60))
        spec = CorrosionSpec(forms[i % 3], lo, hi, FillColor.BLACK)
        h, w = (64, 256) if i % 2 else (32, 128)
        mask = sample_mask_with_ratio(spec, h, w, sub)
        assert lo <= corrosion_ratio(mask) <= hi
        in_band += 1
    assert in_band == 500
    _announce(5, "1000 hulls equal the O(n^3) oracle; 500 fuzzed masks all "
                 "inside their ratio bands")


# --------------------------------------------------------------------------
# 6-8. trained pipeline


SPM_BUDGET_S = 600.0
RM_BUDGET_S = 1800.0


@pytest.fixture(scope="module")
def pipeline():
    cfg = RunConfig(n_records=500, canvas_h=32, canvas_w=128, diffusion_steps=200,
                    beta_end=0.2, test_fraction=0.2, sampler_steps=1)
    records = synth_records(cfg)
    train, test = split_records(records, cfg.test_fraction, cfg.data_seed)

    t0 = time.time()
    seg_net = SegUNet(in_channels=3, widths=(8, 16, 32), groups=4, seed=cfg.train_seed)
    train_structure(seg_net, train,
                    StructureTrainConfig(epochs=24, batch_size=8, lr=1e-3))
    spm_time = time.time() - t0

    schedule = make_schedule(cfg.diffusion_steps, cfg.beta_start, cfg.beta_end)
    t0 = time.time()
    rm = CondUNet(widths=(16, 32, 64, 64, 64), seed=cfg.train_seed)
    train_denoiser(rm, train, schedule,
                   DiffusionTrainConfig(epochs=26, batch_size=4, lr=1e-3),
                   seg_provider=seg_net)
    rm_time = time.time() - t0

    outputs, failures = run_inference(cfg, test, seg_net=seg_net, denoiser_net=rm)
    assert not failures
    return {
        "cfg": cfg, "test": test, "seg_net": seg_net, "rm": rm,
        "schedule": schedule, "outputs": outputs,
        "spm_time": spm_time, "rm_time": rm_time,
    }


def test_criterion_6_end_to_end_improvement(pipeline):
    assert pipeline["spm_time"] <= SPM_BUDGET_S, \
        f"structure training took {pipeline['spm_time']:.0f}s"
    assert pipeline["rm_time"] <= RM_BUDGET_S, \
        f"denoiser training took {pipeline['rm_time']:.0f}s"
    test = pipeline["test"]
    recognizer = ToyTemplateRecognizer()
    inpainted = evaluate(test, pipeline["outputs"], recognizer)
    corrupted = evaluate(test, {r.id: r.corrupted_image for r in test}, recognizer)
    d_psnr = inpainted.psnr_mean - corrupted.psnr_mean
    d_ssim = inpainted.ssim_mean - corrupted.ssim_mean
    d_word = inpainted.word_acc - corrupted.word_acc
    assert d_psnr >= 3.0, f"PSNR gain {d_psnr:.2f} dB"
    assert d_ssim > 0.0, f"SSIM gain {d_ssim:.4f}"
    assert d_word >= 10.0, f"word accuracy gain {d_word:.1f} pp"
    _announce(6, f"restored vs corrupted on {len(test)} held-out records: "
                 f"PSNR +{d_psnr:.2f} dB ({corrupted.psnr_mean:.2f} -> "
                 f"{inpainted.psnr_mean:.2f}), SSIM +{d_ssim:.4f}, "
                 f"word accuracy +{d_word:.1f} pp ({corrupted.word_acc:.1f} -> "
                 f"{inpainted.word_acc:.1f}); training {pipeline['spm_time']:.0f}s + "
                 f"{pipeline['rm_time']:.0f}s within budgets")


def test_criterion_6b_step_sweep_valid_range(pipeline):
    # more sampling steps must still yield valid images; quality is logged
    import dataclasses
    cfg, test = pipeline["cfg"], pipeline["test"]
    lines = []
    for steps in (1, 5, 10):
        sweep_cfg = dataclasses.replace(cfg, sampler_steps=steps)
        outputs, failures = run_inference(sweep_cfg, test[:12],
                                          seg_net=pipeline["seg_net"],
                                          denoiser_net=pipeline["rm"])
        assert not failures
        values = [psnr(r.intact_image, outputs[r.id]) for r in test[:12]]
        for img in outputs.values():
            assert img.data.min() >= 0.0 and img.data.max() <= 1.0
        lines.append(f"S={steps}: {np.mean(values):.2f} dB")
    _announce("6b", "all step counts produce valid-range images; " + ", ".join(lines))


def test_criterion_7_ablation_directions(pipeline):
    # (a) x-prediction beats noise-prediction at an equal step budget
    from textinpaint.cli import synth_one_record
    small = RunConfig(n_records=40, canvas_h=16, canvas_w=64,
                      ratio_lo=0.1, ratio_hi=0.5)
    train = [synth_one_record(small, i) for i in range(40)]
    held_cfg = RunConfig(n_records=12, canvas_h=16, canvas_w=64,
                         ratio_lo=0.1, ratio_hi=0.5, data_seed=99)
    held = [synth_one_record(held_cfg, i) for i in range(12)]
    sched = make_schedule(50, 1e-3, 0.3)
    heldout = {}
    for target in ("x", "eps"):
        net = CondUNet(widths=(8, 16), temb_dim=16, groups=4, seed=0)
        train_denoiser(net, train, sched,
                       DiffusionTrainConfig(epochs=12, batch_size=4, lr=1e-3,
                                            predict_target=target))
        heldout[target] = heldout_reconstruction_loss(
            UNetDenoiser(net, sched, target), held, sched, seed=5)
    assert heldout["x"] < heldout["eps"]

    # (b) structure guidance helps: rerunning the trained model with the
    # segmap forced to zeros must not beat the guided pipeline
    cfg, test = pipeline["cfg"], pipeline["test"]
    subset = test[:20]
    guided = [psnr(r.intact_image, pipeline["outputs"][r.id]) for r in subset]
    schedule = pipeline["schedule"]
    model = UNetDenoiser(pipeline["rm"], schedule)
    unguided = []
    for idx, rec in enumerate(subset):
        rng = np.random.default_rng(np.random.SeedSequence((cfg.sample_seed, idx)))
        c = (2.0 * rec.corrupted_image.data.transpose(2, 0, 1) - 1.0)[None].astype(np.float32)
        seg = np.zeros((1, 1, cfg.canvas_h, cfg.canvas_w), dtype=np.float32)
        x_init = rng.standard_normal(c.shape).astype(np.float32)
        out = sample_non_markov(model, x_init, c, seg, make_tau(1, schedule.T))
        restored = np.clip((out[0].astype(np.float64) + 1) / 2, 0, 1).transpose(1, 2, 0)
        unguided.append(psnr(rec.intact_image.data, restored))
    assert np.mean(guided) >= np.mean(unguided)
    _announce(7, f"held-out reconstruction MSE x {heldout['x']:.3f} < eps "
                 f"{heldout['eps']:.1f}; guided {np.mean(guided):.2f} dB >= "
                 f"unguided {np.mean(unguided):.2f} dB")


def test_criterion_8_efficiency_ordering(pipeline):
    cfg, test = pipeline["cfg"], pipeline["test"]
    rec = test[0]
    schedule_100 = make_schedule(100, 1e-3, 0.2)
    model = UNetDenoiser(pipeline["rm"], pipeline["schedule"])
    c = (2.0 * rec.corrupted_image.data.transpose(2, 0, 1) - 1.0)[None].astype(np.float32)
    seg = pipeline["seg_net"].predict(rec.corrupted_image).values[None, None].astype(np.float32)
    rng = np.random.default_rng(0)
    x_init = rng.standard_normal(c.shape).astype(np.float32)

    fast_times = []
    for _ in range(3):
        t0 = time.perf_counter()
        sample_non_markov(model, x_init, c, seg, make_tau(1, pipeline["schedule"].T))
        fast_times.append(time.perf_counter() - t0)
    fast = min(fast_times)

    t0 = time.perf_counter()
    sample_markov(model, x_init, c, seg, schedule_100, rng)
    slow = time.perf_counter() - t0

    assert fast < slow / 20.0, f"one-step {fast:.3f}s vs 100-step {slow:.3f}s"
    _announce(8, f"one-step {fast * 1000:.0f} ms vs 100-step ancestral "
                 f"{slow * 1000:.0f} ms ({slow / fast:.0f}x)")
