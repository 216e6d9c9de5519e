import math

import numpy as np
import pytest

from oracles import naive_conv2d, naive_elu
from textinpaint import nnkit
from textinpaint.structure import (FeatureExtractor, IdentityFeatures, SegUNet,
                                   combined_loss_and_grad, gram, loss_cha,
                                   loss_combined, loss_pix, loss_seg, loss_sty)


class TestLossPix:
    def test_equal_inputs_zero(self, rng):
        s = rng.random((8, 10))
        assert loss_pix(s, s) == 0.0

    def test_constant_offset(self, rng):
        s = rng.random((8, 10)) * 0.8
        assert loss_pix(s, s + 0.1) == pytest.approx(0.1, abs=1e-9)

    def test_symmetry(self, rng):
        a, b = rng.random((6, 6)), rng.random((6, 6))
        assert loss_pix(a, b) == pytest.approx(loss_pix(b, a), abs=1e-15)


class TestLossSeg:
    def test_perfect_positive_fit_near_zero(self):
        ones = np.ones((4, 4))
        assert loss_seg(ones, ones) == pytest.approx(0.0, abs=1e-5)

    def test_positive_class_counts_double(self):
        ones = np.ones((4, 4))
        half = np.full((4, 4), 0.5)
        assert loss_seg(ones, half) == pytest.approx(2 * math.log(2), abs=1e-9)

    def test_negative_class_single_weight(self):
        zeros = np.zeros((4, 4))
        half = np.full((4, 4), 0.5)
        assert loss_seg(zeros, half) == pytest.approx(math.log(2), abs=1e-9)

    def test_standard_bce_flag(self):
        ones = np.ones((4, 4))
        half = np.full((4, 4), 0.5)
        assert loss_seg(ones, half, positive_weight=1.0) == pytest.approx(
            math.log(2), abs=1e-9)

    def test_nonnegative_on_binary_truth(self, rng):
        for _ in range(20):
            s = (rng.random((6, 6)) < 0.5).astype(float)
            v = rng.random((6, 6))
            assert loss_seg(s, v) >= 0.0

    def test_constant_prediction_argmin_matches_derivative_zero(self, rng):
        # minimizing over a constant prediction v: d/dv = 0 at v* = 2p/(1+p)
        s = (rng.random((16, 16)) < 0.3).astype(float)
        p = s.mean()
        grid = np.linspace(0.01, 0.99, 981)
        values = [loss_seg(s, np.full_like(s, v)) for v in grid]
        v_star = grid[int(np.argmin(values))]
        assert v_star == pytest.approx(2 * p / (1 + p), abs=2e-3)


class TestLossCha:
    def test_equal_inputs_zero(self, rng):
        phi = FeatureExtractor(seed=0, dtype=np.float64)
        s = rng.random((8, 16))
        assert loss_cha(s, s, phi) == 0.0

    def test_identity_extractor_reduces_to_pixel_loss(self, rng):
        a, b = rng.random((8, 16)), rng.random((8, 16))
        assert loss_cha(a, b, IdentityFeatures()) == pytest.approx(
            loss_pix(a, b), abs=1e-12)

    def test_matches_independent_forward_recomputation(self, rng):
        # recompute the frozen stack with naive convolution + ELU oracles
        phi = FeatureExtractor(seed=0, dtype=np.float64)
        a, b = rng.random((8, 16)), rng.random((8, 16))

        def naive_phi(x):
            h = x[None, None]
            convs = [phi.chain.layers[0], phi.chain.layers[2], phi.chain.layers[4]]
            h = naive_conv2d(h, convs[0].w.value, convs[0].b.value, padding=1)
            h = naive_elu(h)
            h = naive_conv2d(h, convs[1].w.value, convs[1].b.value, stride=2, padding=1)
            h = naive_elu(h)
            return naive_conv2d(h, convs[2].w.value, convs[2].b.value, padding=1)

        expected = np.abs(naive_phi(a) - naive_phi(b)).mean()
        assert loss_cha(a, b, phi) == pytest.approx(expected, rel=1e-10)


class TestGram:
    def test_zero_features_zero_gram(self):
        f = np.zeros((3, 4, 5))
        assert not gram(f).any()

    def test_single_channel_closed_form(self, rng):
        f = rng.normal(size=(1, 4, 6))
        expected = (f ** 2).sum() / (1 * 4 * 6)
        assert gram(f)[0, 0] == pytest.approx(expected, rel=1e-12)

    def test_spatial_permutation_invariance(self, rng):
        f = rng.normal(size=(3, 4, 5))
        perm = rng.permutation(20)
        flat = f.reshape(3, 20)[:, perm]
        assert np.allclose(gram(f), gram(flat.reshape(3, 4, 5)), atol=1e-12)

    def test_style_loss_invariant_under_shared_permutation(self, rng):
        a, b = rng.random((8, 16)), rng.random((8, 16))
        phi = IdentityFeatures()
        base = loss_sty(a, b, phi)
        perm = rng.permutation(a.size)
        pa = a.ravel()[perm].reshape(a.shape)
        pb = b.ravel()[perm].reshape(b.shape)
        assert loss_sty(pa, pb, phi) == pytest.approx(base, rel=1e-10)


class TestCombined:
    def test_zero_when_equal(self, rng):
        phi = FeatureExtractor(seed=0, dtype=np.float64)
        s = (rng.random((8, 16)) < 0.4).astype(float)
        assert loss_combined(s, s, phi) == pytest.approx(0.0, abs=1e-5)

    def test_projection_to_pixel_loss(self, rng):
        a = (rng.random((8, 16)) < 0.4).astype(float)
        b = rng.random((8, 16))
        assert loss_combined(a, b, None, weights=(1, 0, 0, 0)) == pytest.approx(
            loss_pix(a, b), abs=1e-12)

    def test_additivity(self, rng):
        phi = FeatureExtractor(seed=0, dtype=np.float64)
        a = (rng.random((8, 16)) < 0.4).astype(float)
        b = np.clip(rng.random((8, 16)), 1e-6, 1 - 1e-6)
        total = loss_combined(a, b, phi)
        parts = (loss_pix(a, b) + loss_seg(a, b) + loss_cha(a, b, phi)
                 + loss_sty(a, b, phi))
        assert total == pytest.approx(parts, rel=1e-9)

    def test_grad_matches_scalar_losses(self, rng):
        phi = FeatureExtractor(seed=1, dtype=np.float64)
        s = (rng.random((1, 1, 8, 16)) < 0.4).astype(float)
        v = np.clip(rng.random((1, 1, 8, 16)), 0.05, 0.95)
        total, parts, _ = combined_loss_and_grad(s, v, phi)
        assert parts["pix"] == pytest.approx(loss_pix(s[0, 0], v[0, 0]), rel=1e-9)
        assert parts["seg"] == pytest.approx(loss_seg(s[0, 0], v[0, 0]), rel=1e-9)
        assert parts["cha"] == pytest.approx(loss_cha(s[0, 0], v[0, 0], phi), rel=1e-9)
        assert parts["sty"] == pytest.approx(loss_sty(s[0, 0], v[0, 0], phi), rel=1e-9)
        assert total == pytest.approx(sum(parts.values()), rel=1e-9)

    def test_grad_against_finite_differences(self, rng):
        phi = FeatureExtractor(seed=2, dtype=np.float64)
        s = (rng.random((1, 1, 6, 8)) < 0.4).astype(float)
        store = nnkit.ParamStore()
        v = store.add("v", np.clip(rng.random((1, 1, 6, 8)), 0.05, 0.95))

        def loss_fn(want):
            total, _, grad = combined_loss_and_grad(s, v.value, phi)
            if want:
                v.grad += grad
            return total

        assert nnkit.finite_diff_gradcheck(loss_fn, store) <= 1e-4

    def test_full_structure_net_objective_gradcheck(self, rng):
        # the whole training objective through the tiny U-Net
        phi = FeatureExtractor(seed=0, dtype=np.float64)
        net = SegUNet(in_channels=1, widths=(2, 4, 4), groups=2, seed=3,
                      dtype=np.float64)
        x = net.params.add("__input__", rng.normal(size=(1, 1, 8, 16)))
        target = (rng.random((1, 1, 8, 16)) < 0.4).astype(float)

        def loss_fn(want):
            y, cache = net.forward(x.value)
            total, _, grad = combined_loss_and_grad(target, y, phi)
            if want:
                x.grad += net.backward(cache, grad)
            return total

        assert nnkit.finite_diff_gradcheck(loss_fn, net.params, eps=1e-5) <= 1e-4
