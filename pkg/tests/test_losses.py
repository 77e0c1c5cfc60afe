import math

import numpy as np
import pytest
import torch

from mammopos.losses import (
    LawWeights,
    WingParams,
    law_grad,
    law_loss,
    law_loss_torch,
    wing,
    wing_torch,
)

DEFAULTS = WingParams()
ONES = LawWeights()


class TestWingParams:
    def test_defaults(self):
        assert DEFAULTS.w == 3.0 and DEFAULTS.epsilon == 1.5

    def test_continuity_constant(self):
        p = WingParams(w=2.0, epsilon=0.7)
        assert p.c == pytest.approx(2.0 - 2.0 * math.log(1.0 + 2.0 / 0.7), abs=0)

    def test_rejects_nonpositive(self):
        with pytest.raises(Exception):
            WingParams(w=0.0, epsilon=1.0)
        with pytest.raises(Exception):
            WingParams(w=1.0, epsilon=-1.0)


class TestWing:
    def test_zero(self):
        assert wing(0.0, DEFAULTS) == 0.0

    def test_log_branch_closed_form(self):
        assert abs(wing(1.5, DEFAULTS) - 3.0 * math.log(2.0)) < 1e-12

    def test_branch_point_from_both_sides(self):
        target = 3.0 * math.log(3.0)
        assert abs(wing(3.0, DEFAULTS) - target) < 1e-12
        log_branch = DEFAULTS.w * math.log1p(3.0 / DEFAULTS.epsilon)
        linear_branch = 3.0 - DEFAULTS.c
        assert abs(log_branch - target) < 1e-12
        assert abs(linear_branch - target) < 1e-12

    def test_continuity_over_random_params(self):
        rng = np.random.default_rng(201)
        for _ in range(100):
            p = WingParams(w=float(rng.uniform(0.1, 10)), epsilon=float(rng.uniform(0.1, 10)))
            below = wing(p.w * (1 - 1e-9), p)
            above = wing(p.w * (1 + 1e-9), p)
            assert abs(below - above) < 1e-6

    def test_strictly_increasing(self):
        rng = np.random.default_rng(202)
        for _ in range(50):
            p = WingParams(w=float(rng.uniform(0.5, 5)), epsilon=float(rng.uniform(0.2, 4)))
            ys = np.sort(rng.uniform(0, 4 * p.w, size=200))
            vals = wing(ys, p)
            assert np.all(np.diff(vals) > 0)

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            wing(-0.1, DEFAULTS)

    def test_matches_torch_route(self):
        rng = np.random.default_rng(203)
        ys = rng.uniform(0, 10, size=1000)
        a = wing(ys, DEFAULTS)
        b = wing_torch(torch.from_numpy(ys), DEFAULTS).numpy()
        np.testing.assert_allclose(a, b, atol=1e-12)


class TestLawLoss:
    def test_zero_at_equality(self):
        v = np.arange(6.0)
        assert law_loss(v, v, DEFAULTS, ONES) == 0.0

    def test_hand_composed_value(self):
        # every landmark off by (1.5, 0): per-landmark mean is 3 ln 2 / 2
        pred = np.array([1.5, 0, 1.5, 0, 1.5, 0]) + np.zeros(6)
        target = np.zeros(6)
        expect = 3.0 * (3.0 * math.log(2.0)) / 2.0
        assert law_loss(pred, target, DEFAULTS, ONES) == pytest.approx(expect, abs=1e-12)

    def test_weight_masking(self):
        pred = np.array([1.0, 2.0, 5.0, 5.0, -3.0, 4.0])
        target = np.zeros(6)
        only_first = law_loss(pred, target, DEFAULTS, LawWeights(1, 0, 0))
        expect = float(np.mean(wing(np.abs(pred[:2]), DEFAULTS)))
        assert only_first == pytest.approx(expect, abs=1e-12)

    def test_symmetry(self):
        rng = np.random.default_rng(204)
        for _ in range(200):
            a, b = rng.normal(size=6) * 5, rng.normal(size=6) * 5
            assert law_loss(a, b, DEFAULTS, ONES) == pytest.approx(
                law_loss(b, a, DEFAULTS, ONES), abs=1e-12
            )

    def test_weight_homogeneity(self):
        rng = np.random.default_rng(205)
        w1 = LawWeights(0.3, 1.1, 2.0)
        w2 = LawWeights(0.6, 2.2, 4.0)
        for _ in range(100):
            a, b = rng.normal(size=6) * 5, rng.normal(size=6) * 5
            assert law_loss(a, b, DEFAULTS, w2) == pytest.approx(
                2.0 * law_loss(a, b, DEFAULTS, w1), rel=1e-12
            )

    def test_weights_validation(self):
        with pytest.raises(Exception):
            LawWeights(0, 0, 0)
        with pytest.raises(Exception):
            LawWeights(-1, 1, 1)


class TestLawGrad:
    def test_zero_at_equality(self):
        v = np.arange(6.0)
        np.testing.assert_array_equal(law_grad(v, v, DEFAULTS, ONES), np.zeros(6))

    def test_single_coordinate_log_branch(self):
        pred = np.zeros(6)
        pred[0] = 1.5
        g = law_grad(pred, np.zeros(6), DEFAULTS, ONES)
        # (alpha/2) * w/(eps+y) = 0.5 * 3/3 = 0.5
        assert g[0] == pytest.approx(0.5, abs=1e-12)
        np.testing.assert_array_equal(g[1:], np.zeros(5))

    def test_finite_difference_agreement(self):
        rng = np.random.default_rng(206)
        h = 1e-5
        checked = 0
        while checked < 1000:
            pred = rng.normal(size=6) * 4
            target = rng.normal(size=6) * 4
            mags = np.abs(pred - target)
            # stay away from the branch point and the |.| kink at zero
            if np.any(np.abs(mags - DEFAULTS.w) < 0.01) or np.any(mags < 0.01):
                continue
            weights = LawWeights(*rng.uniform(0.1, 2.0, size=3))
            an = law_grad(pred, target, DEFAULTS, weights)
            for i in range(6):
                up, down = pred.copy(), pred.copy()
                up[i] += h
                down[i] -= h
                fd = (
                    law_loss(up, target, DEFAULTS, weights)
                    - law_loss(down, target, DEFAULTS, weights)
                ) / (2 * h)
                assert abs(fd - an[i]) <= 1e-6 * max(1.0, abs(an[i]))
            checked += 1

    def test_branch_point_uses_linear_slope(self):
        pred = np.zeros(6)
        pred[2] = DEFAULTS.w  # exactly at the boundary
        g = law_grad(pred, np.zeros(6), DEFAULTS, ONES)
        assert g[2] == pytest.approx(0.5, abs=1e-12)  # (beta/2) * 1


class TestTorchRoute:
    def test_batch_mean_matches_singles(self):
        rng = np.random.default_rng(207)
        pred = rng.normal(size=(8, 6)) * 5
        target = rng.normal(size=(8, 6)) * 5
        batched = float(
            law_loss_torch(torch.from_numpy(pred), torch.from_numpy(target), DEFAULTS, ONES)
        )
        singles = np.mean([law_loss(p, t, DEFAULTS, ONES) for p, t in zip(pred, target)])
        assert batched == pytest.approx(float(singles), abs=1e-12)

    def test_autograd_matches_analytic(self):
        rng = np.random.default_rng(208)
        for _ in range(100):
            pred_np = rng.normal(size=6) * 4
            target_np = rng.normal(size=6) * 4
            if np.any(np.abs(np.abs(pred_np - target_np) - DEFAULTS.w) < 1e-6):
                continue
            weights = LawWeights(*rng.uniform(0.1, 2.0, size=3))
            pred = torch.from_numpy(pred_np.copy()).reshape(1, 6).requires_grad_(True)
            loss = law_loss_torch(pred, torch.from_numpy(target_np).reshape(1, 6), DEFAULTS, weights)
            loss.backward()
            an = law_grad(pred_np, target_np, DEFAULTS, weights)
            np.testing.assert_allclose(pred.grad.numpy().ravel(), an, atol=1e-9)

    def test_shape_validation(self):
        with pytest.raises(ValueError):
            law_loss_torch(torch.zeros(2, 5), torch.zeros(2, 5), DEFAULTS, ONES)
        with pytest.raises(ValueError):
            law_loss_torch(torch.zeros(2, 6), torch.zeros(3, 6), DEFAULTS, ONES)
