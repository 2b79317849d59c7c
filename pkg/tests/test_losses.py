"""Dice losses, the analytic gradient vs finite differences, and DSC."""

import numpy as np
import pytest

from clickseg.errors import DegenerateWeights, ShapeMismatch
from clickseg.losses import (DiceVariant, LossConfig, WeightingMode, binarize,
                             dice_loss, dsc, loss_gradient, weighted_dice_loss)

AS_PRINTED = LossConfig(dice_variant=DiceVariant.AS_PRINTED)
SCALAR = LossConfig(weighting_mode=WeightingMode.SCALAR)


def fd_gradient(p, g, w, config, step=1e-4):
    """Central finite differences of weighted_dice_loss at every pixel."""
    out = np.zeros_like(p)
    for idx in np.ndindex(p.shape):
        hi = p.copy()
        lo = p.copy()
        hi[idx] += step
        lo[idx] -= step
        out[idx] = (weighted_dice_loss(hi, g, w, config)
                    - weighted_dice_loss(lo, g, w, config)) / (2 * step)
    return out


class TestDiceLoss:
    def test_perfect_overlap(self, rng):
        g = (rng.random((16, 16)) < 0.5).astype(float)
        assert dice_loss(g, g) == pytest.approx(0.0, abs=1e-5)

    def test_disjoint(self):
        p = np.zeros((8, 8))
        g = np.zeros((8, 8))
        p[:4] = 1.0
        g[4:] = 1.0
        assert dice_loss(p, g) == pytest.approx(1.0, abs=1e-5)

    def test_hand_case(self):
        p = np.array([[1.0, 0.0], [0.0, 0.0]])
        g = np.array([[1.0, 1.0], [0.0, 0.0]])
        # standard: 1 - 2*1/(1+2) = 1/3
        assert dice_loss(p, g) == pytest.approx(1 / 3, abs=1e-5)

    def test_as_printed_drops_factor_two(self):
        p = np.array([[1.0, 0.0], [0.0, 0.0]])
        g = np.array([[1.0, 1.0], [0.0, 0.0]])
        assert dice_loss(p, g, AS_PRINTED) == pytest.approx(1 - 1 / 3, abs=1e-5)

    def test_as_printed_perfect_overlap_is_half(self):
        g = np.ones((4, 4))
        assert dice_loss(g, g, AS_PRINTED) == pytest.approx(0.5, abs=1e-5)

    def test_bounds(self, rng):
        for _ in range(50):
            p = rng.random((8, 8))
            g = (rng.random((8, 8)) < 0.5).astype(float)
            v = dice_loss(p, g)
            assert 0.0 <= v <= 1.0

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            dice_loss(np.zeros((4, 4)), np.zeros((4, 5)))


class TestWeightedDiceLoss:
    def test_unit_weights_reduce_to_dice(self, rng):
        for _ in range(100):
            p = rng.random((16, 16))
            g = (rng.random((16, 16)) < 0.5).astype(float)
            w = np.ones((16, 16))
            assert weighted_dice_loss(p, g, w) == \
                pytest.approx(dice_loss(p, g), abs=1e-9)
            assert weighted_dice_loss(p, g, w, SCALAR) == \
                pytest.approx(dice_loss(p, g), abs=1e-9)

    def test_perfect_overlap_any_weights(self, rng):
        g = (rng.random((12, 12)) < 0.4).astype(float)
        w = rng.random((12, 12)) * 10 + 0.1
        assert weighted_dice_loss(g, g, w) == pytest.approx(0.0, abs=1e-5)

    def test_hand_case(self):
        p = np.array([[1.0, 0.0], [0.0, 0.0]])
        g = np.array([[1.0, 1.0], [0.0, 0.0]])
        w = np.array([[10.0, 1.0], [1.0, 1.0]])
        # 1 - 2*10/(10*1 + 10*1 + 1*1) = 1 - 20/21
        assert weighted_dice_loss(p, g, w) == pytest.approx(1 - 20 / 21,
                                                            abs=1e-5)

    def test_scalar_mode_is_mean_weight_times_dice(self, rng):
        p = rng.random((8, 8))
        g = (rng.random((8, 8)) < 0.5).astype(float)
        w = rng.random((8, 8)) * 10
        assert weighted_dice_loss(p, g, w, SCALAR) == \
            pytest.approx(float(w.mean()) * dice_loss(p, g), abs=1e-12)

    def test_weight_monotonicity_on_errors(self):
        p = np.zeros((4, 4))
        g = np.zeros((4, 4))
        p[0, 0] = 1.0  # false positive
        p[1, 1] = 1.0
        g[1, 1] = 1.0  # true positive
        w = np.ones((4, 4))
        base = weighted_dice_loss(p, g, w)
        w_fp = w.copy()
        w_fp[0, 0] = 10.0
        assert weighted_dice_loss(p, g, w_fp) >= base
        w_tp = w.copy()
        w_tp[1, 1] = 10.0
        assert weighted_dice_loss(p, g, w_tp) <= base

    def test_degenerate_weights(self):
        with pytest.raises(DegenerateWeights):
            weighted_dice_loss(np.ones((4, 4)), np.ones((4, 4)),
                               np.zeros((4, 4)))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            weighted_dice_loss(np.zeros((4, 4)), np.zeros((4, 4)),
                               np.zeros((5, 4)))


class TestLossGradient:
    def test_matches_finite_differences(self, rng):
        worst = 0.0
        for _ in range(100):
            p = rng.uniform(0.05, 0.95, (8, 8))
            g = (rng.random((8, 8)) < 0.5).astype(float)
            w = rng.random((8, 8)) * 10 + 0.05
            analytic = loss_gradient(p, g, w)
            numeric = fd_gradient(p, g, w, LossConfig())
            denom = np.maximum(np.abs(numeric), 1e-8)
            rel = np.abs(analytic - numeric) / denom
            worst = max(worst, float(rel.max()))
        assert worst < 1e-4

    def test_as_printed_variant_gradient(self, rng):
        p = rng.uniform(0.05, 0.95, (8, 8))
        g = (rng.random((8, 8)) < 0.5).astype(float)
        w = rng.random((8, 8)) * 10 + 0.05
        analytic = loss_gradient(p, g, w, AS_PRINTED)
        numeric = fd_gradient(p, g, w, AS_PRINTED)
        np.testing.assert_allclose(analytic, numeric, rtol=2e-4, atol=1e-9)

    def test_scalar_mode_gradient(self, rng):
        p = rng.uniform(0.05, 0.95, (6, 6))
        g = (rng.random((6, 6)) < 0.5).astype(float)
        w = rng.random((6, 6)) * 10 + 0.05
        analytic = loss_gradient(p, g, w, SCALAR)
        numeric = fd_gradient(p, g, w, SCALAR)
        np.testing.assert_allclose(analytic, numeric, rtol=2e-4, atol=1e-9)

    def test_uniform_weights_match_unweighted_gradient(self, rng):
        p = rng.uniform(0.05, 0.95, (8, 8))
        g = (rng.random((8, 8)) < 0.5).astype(float)
        analytic = loss_gradient(p, g, np.ones((8, 8)))

        def plain_dice_fd(idx, step=1e-4):
            hi, lo = p.copy(), p.copy()
            hi[idx] += step
            lo[idx] -= step
            return (dice_loss(hi, g) - dice_loss(lo, g)) / (2 * step)

        numeric = np.array([[plain_dice_fd((r, c)) for c in range(8)]
                            for r in range(8)])
        np.testing.assert_allclose(analytic, numeric, rtol=2e-4, atol=1e-9)

    def test_degenerate_weights(self):
        with pytest.raises(DegenerateWeights):
            loss_gradient(np.ones((4, 4)), np.ones((4, 4)), np.zeros((4, 4)))


class TestDsc:
    def test_identical(self, rng):
        g = rng.random((16, 16)) < 0.5
        assert dsc(g, g) == 100.0

    def test_disjoint(self):
        p = np.zeros((8, 8), bool)
        g = np.zeros((8, 8), bool)
        p[0, 0] = True
        g[7, 7] = True
        assert dsc(p, g) == 0.0

    def test_hand_counts(self):
        # |P| = 100, |G| = 200, overlap 100 -> 2*100/300 = 66.67
        p = np.zeros((20, 20), bool)
        g = np.zeros((20, 20), bool)
        p.ravel()[:100] = True
        g.ravel()[:200] = True
        assert dsc(p, g) == pytest.approx(200 / 3, abs=1e-9)

    def test_both_empty_convention(self):
        z = np.zeros((8, 8), bool)
        assert dsc(z, z) == 100.0

    def test_one_empty(self):
        p = np.zeros((8, 8), bool)
        g = np.zeros((8, 8), bool)
        g[0, 0] = True
        assert dsc(p, g) == 0.0

    def test_symmetry(self, rng):
        a = rng.random((10, 10)) < 0.3
        b = rng.random((10, 10)) < 0.3
        assert dsc(a, b) == dsc(b, a)

    def test_range(self, rng):
        for _ in range(30):
            a = rng.random((9, 9)) < rng.random()
            b = rng.random((9, 9)) < rng.random()
            assert 0.0 <= dsc(a, b) <= 100.0


class TestBinarize:
    def test_threshold_inclusive(self):
        probs = np.array([[0.49, 0.5], [0.51, 0.0]])
        out = binarize(probs)
        assert out.tolist() == [[False, True], [True, False]]

    def test_custom_threshold(self):
        probs = np.array([0.3, 0.7])
        assert binarize(probs, 0.25).all()


class TestLossConfig:
    def test_factor(self):
        assert LossConfig().factor == 2.0
        assert AS_PRINTED.factor == 1.0

    def test_eps_validation(self):
        with pytest.raises(ValueError):
            LossConfig(smooth_eps=0.0)

    def test_string_coercion(self):
        c = LossConfig(dice_variant="as_printed", weighting_mode="scalar")
        assert c.dice_variant is DiceVariant.AS_PRINTED
        assert c.weighting_mode is WeightingMode.SCALAR
