"""Kernel correctness against brute-force oracles, and native/fallback parity."""

import math

import numpy as np
import pytest

from clickseg import kernels
from clickseg.kernels import fallback

try:
    from clickseg.kernels import _native as native
except ImportError:
    native = None

BACKENDS = [pytest.param(fallback, id="fallback")]
if native is not None:
    BACKENDS.append(pytest.param(native, id="native"))


def oracle_disk_union(h, w, clicks):
    """Direct per-pixel evaluation of the disk rule: integer radius s // 2."""
    out = np.zeros((h, w), dtype=np.uint8)
    for (r0, c0, s) in clicks:
        rad = s // 2
        for r in range(h):
            for c in range(w):
                if (r - r0) ** 2 + (c - c0) ** 2 <= rad * rad:
                    out[r, c] = 1
    return out


def oracle_sq_edt(mask):
    """O(n^2 m^2) exact squared distance to the nearest True pixel."""
    mask = np.asarray(mask, dtype=bool)
    h, w = mask.shape
    pts = np.argwhere(mask)
    out = np.full((h, w), np.inf)
    for r in range(h):
        for c in range(w):
            for (tr, tc) in pts:
                d = (r - tr) ** 2 + (c - tc) ** 2
                if d < out[r, c]:
                    out[r, c] = d
    return out


def oracle_loss(p, g, w, factor, eps):
    """Pure-Python weighted dice loss, no numpy reductions."""
    num = eps
    den = eps
    for pi, gi, wi in zip(p.ravel().tolist(), g.ravel().tolist(),
                          w.ravel().tolist()):
        num += factor * wi * pi * gi
        den += wi * (pi + gi)
    return 1.0 - num / den


@pytest.mark.parametrize("backend", BACKENDS)
class TestDiskUnion:
    def test_single_pixel_disk(self, backend):
        out = backend.disk_union(9, 9, np.array([4]), np.array([4]),
                                 np.array([1]))
        assert out.sum() == 1 and out[4, 4] == 1

    def test_size5_area_is_13(self, backend):
        out = backend.disk_union(64, 64, np.array([32]), np.array([32]),
                                 np.array([5]))
        assert out.sum() == 13

    def test_matches_oracle_random(self, backend, rng):
        for _ in range(25):
            h, w = int(rng.integers(6, 20)), int(rng.integers(6, 20))
            n = int(rng.integers(1, 4))
            clicks = [(int(rng.integers(h)), int(rng.integers(w)),
                       int(rng.integers(1, 9))) for _ in range(n)]
            rows = np.array([c[0] for c in clicks])
            cols = np.array([c[1] for c in clicks])
            sizes = np.array([c[2] for c in clicks])
            got = backend.disk_union(h, w, rows, cols, sizes)
            assert np.array_equal(got, oracle_disk_union(h, w, clicks))

    def test_clipping_at_border(self, backend):
        out = backend.disk_union(8, 8, np.array([0]), np.array([0]),
                                 np.array([7]))
        ref = oracle_disk_union(8, 8, [(0, 0, 7)])
        assert np.array_equal(out, ref)

    def test_reflection_symmetry(self, backend):
        out = backend.disk_union(33, 33, np.array([16]), np.array([16]),
                                 np.array([9]))
        assert np.array_equal(out, out[::-1])
        assert np.array_equal(out, out[:, ::-1])


@pytest.mark.parametrize("backend", BACKENDS)
class TestGaussianDisk:
    def test_center_is_peak(self, backend):
        out = backend.gaussian_disk_max(21, 21, np.array([10]), np.array([10]),
                                        np.array([7]), 10.0)
        assert out[10, 10] == pytest.approx(10.0, abs=1e-12)

    def test_profile_matches_formula(self, backend):
        s = 9
        out = backend.gaussian_disk_max(31, 31, np.array([15]), np.array([15]),
                                        np.array([s]), 10.0)
        for dr in range(-5, 6):
            for dc in range(-5, 6):
                d2 = dr * dr + dc * dc
                expect = (10.0 * math.exp(-8.0 * d2 / (s * s))
                          if d2 <= (s // 2) ** 2 else 0.0)
                assert out[15 + dr, 15 + dc] == pytest.approx(expect, abs=1e-12)

    def test_support_equals_disk(self, backend):
        s = 11
        g = backend.gaussian_disk_max(41, 41, np.array([20]), np.array([20]),
                                      np.array([s]), 10.0)
        d = backend.disk_union(41, 41, np.array([20]), np.array([20]),
                               np.array([s]))
        assert np.array_equal(g > 0, d.astype(bool))

    def test_overlap_takes_max(self, backend):
        out = backend.gaussian_disk_max(21, 21, np.array([10, 10]),
                                        np.array([9, 11]),
                                        np.array([7, 7]), 10.0)
        # Pixel (10, 10) is 1 px from both centers; value is the 1-px profile.
        assert out[10, 10] == pytest.approx(10.0 * math.exp(-8.0 / 49.0),
                                            abs=1e-12)


@pytest.mark.parametrize("backend", BACKENDS)
class TestSquaredDistance:
    def test_matches_brute_force(self, backend, rng):
        for _ in range(20):
            h, w = int(rng.integers(4, 13)), int(rng.integers(4, 13))
            mask = rng.random((h, w)) < 0.2
            if not mask.any():
                mask[int(rng.integers(h)), int(rng.integers(w))] = True
            got = backend.sq_dist_to_true(np.ascontiguousarray(
                mask.astype(np.uint8)))
            assert np.array_equal(got, oracle_sq_edt(mask))

    def test_zero_on_true_pixels(self, backend):
        mask = np.zeros((10, 10), dtype=np.uint8)
        mask[3, 7] = 1
        out = backend.sq_dist_to_true(mask)
        assert out[3, 7] == 0.0
        assert out[0, 0] == 9 + 49

    def test_all_false_gives_inf(self, backend):
        out = backend.sq_dist_to_true(np.zeros((5, 5), dtype=np.uint8))
        assert np.all(np.isinf(out))

    def test_values_are_integers(self, backend, rng):
        mask = (rng.random((30, 30)) < 0.05).astype(np.uint8)
        mask[0, 0] = 1
        out = backend.sq_dist_to_true(mask)
        assert np.array_equal(out, np.round(out))


@pytest.mark.parametrize("backend", BACKENDS)
class TestWeightedDiceKernel:
    def test_matches_pure_python_oracle(self, backend, rng):
        for _ in range(30):
            p = rng.random((7, 9))
            g = (rng.random((7, 9)) < 0.5).astype(np.float64)
            w = rng.random((7, 9)) * 10
            loss, _ = backend.weighted_dice_with_grad(p, g, w, 2.0, 1e-6)
            assert loss == pytest.approx(oracle_loss(p, g, w, 2.0, 1e-6),
                                         abs=1e-12)

    def test_gradient_shape_and_sign(self, backend, rng):
        p = rng.random((6, 6))
        g = np.zeros((6, 6))
        g[2:4, 2:4] = 1.0
        w = np.ones((6, 6))
        _, grad = backend.weighted_dice_with_grad(p, g, w, 2.0, 1e-6)
        assert grad.shape == (6, 6)
        # Raising p on false-positive pixels increases the loss, on true
        # foreground it decreases it.
        assert grad[0, 0] > 0
        assert grad[2, 2] < 0


@pytest.mark.skipif(native is None, reason="compiled extension not built")
class TestBackendParity:
    def test_disk_union_identical(self, rng):
        for _ in range(40):
            h, w = int(rng.integers(5, 40)), int(rng.integers(5, 40))
            n = int(rng.integers(1, 5))
            rows = rng.integers(0, h, n)
            cols = rng.integers(0, w, n)
            sizes = rng.integers(1, 15, n)
            a = native.disk_union(h, w, rows, cols, sizes)
            b = fallback.disk_union(h, w, rows, cols, sizes)
            assert np.array_equal(a, b)

    def test_gaussian_identical(self, rng):
        for _ in range(20):
            h = w = 32
            n = int(rng.integers(1, 4))
            rows = rng.integers(0, h, n)
            cols = rng.integers(0, w, n)
            sizes = rng.integers(1, 13, n)
            a = native.gaussian_disk_max(h, w, rows, cols, sizes, 10.0)
            b = fallback.gaussian_disk_max(h, w, rows, cols, sizes, 10.0)
            np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)

    def test_sq_dist_identical(self, rng):
        for _ in range(20):
            mask = (rng.random((25, 31)) < 0.1).astype(np.uint8)
            a = native.sq_dist_to_true(np.ascontiguousarray(mask))
            b = fallback.sq_dist_to_true(mask)
            assert np.array_equal(a, b)

    def test_loss_identical(self, rng):
        for _ in range(20):
            p = rng.random((16, 16))
            g = (rng.random((16, 16)) < 0.5).astype(np.float64)
            w = rng.random((16, 16)) * 10
            la, ga = native.weighted_dice_with_grad(p, g, w, 2.0, 1e-6)
            lb, gb = fallback.weighted_dice_with_grad(p, g, w, 2.0, 1e-6)
            assert la == pytest.approx(lb, abs=1e-14)
            np.testing.assert_allclose(ga, gb, rtol=1e-13, atol=1e-18)


def test_dispatch_wrappers_coerce_dtypes():
    # The package-level wrappers accept plain lists and python ints.
    out = kernels.disk_union(10, 10, [5], [5], [3])
    assert out.sum() == 5
    sq = kernels.sq_dist_to_true(np.eye(4, dtype=bool))
    assert sq[0, 0] == 0.0


def test_backend_env_selection():
    import subprocess
    import sys

    code = ("import clickseg.kernels as k; print(k.BACKEND)")
    for want in ("fallback", "native") if native is not None else ("fallback",):
        out = subprocess.run(
            [sys.executable, "-c", code], capture_output=True, text=True,
            env={"PATH": "/usr/bin:/bin", "CLICKSEG_KERNELS": want},
            check=True)
        assert out.stdout.strip() == want
