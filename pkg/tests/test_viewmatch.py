import math

import numpy as np
import pytest

from meshmend.errors import DegenerateBoxError, EmptyMaskError, NoCandidateError
from meshmend.geometry import RigidTransform, ScaledPlacement
from meshmend.render import render, sample_view_sphere, virtual_camera
from meshmend.synth import make_primitive
from meshmend.viewmatch import (
    SimilarityConfig,
    edge_score,
    match_view,
    ratio_score,
    ssim_score,
)

FAST = SimilarityConfig(comparison_res=32, patch_grid=4, roll_steps=4,
                        refine_top=4, refine_rounds=2)


# --- independent naive references ---------------------------------------


def naive_patch_ssim(a, b, patch_grid, c1, c2):
    """Direct per-patch evaluation of the structural similarity kernel."""
    res = a.shape[0]
    bounds = [(k * res) // patch_grid for k in range(patch_grid + 1)]
    acc = 0.0
    for gy in range(patch_grid):
        for gx in range(patch_grid):
            pa = a[bounds[gy]:bounds[gy + 1], bounds[gx]:bounds[gx + 1]]
            pb = b[bounds[gy]:bounds[gy + 1], bounds[gx]:bounds[gx + 1]]
            n = pa.size
            mu_a = sum(pa.ravel()) / n
            mu_b = sum(pb.ravel()) / n
            var_a = sum(x * x for x in pa.ravel()) / n - mu_a * mu_a
            var_b = sum(x * x for x in pb.ravel()) / n - mu_b * mu_b
            cov = sum(x * y for x, y in zip(pa.ravel(), pb.ravel())) / n - mu_a * mu_b
            acc += ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / (
                (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
            )
    return acc / (patch_grid * patch_grid)


def naive_edge_image(img, threshold):
    h, w = img.shape
    mag = np.zeros((h, w))
    for y in range(h):
        for x in range(w):
            up = img[y - 1, x] if y > 0 else 0.0
            dn = img[y + 1, x] if y < h - 1 else 0.0
            lf = img[y, x - 1] if x > 0 else 0.0
            rt = img[y, x + 1] if x < w - 1 else 0.0
            mag[y, x] = abs(up + dn + lf + rt - 4.0 * img[y, x])
    m = mag.max()
    if m > 0:
        mag = mag / m
        mag[mag < threshold] = 0.0
    return mag


def naive_edge_score(a, b, threshold):
    ea = naive_edge_image(a, threshold)
    eb = naive_edge_image(b, threshold)
    num = float((ea * eb).sum())
    da = float((ea * ea).sum())
    db = float((eb * eb).sum())
    if da <= 0 or db <= 0:
        return 0.0
    return num / math.sqrt(da * db)


def naive_ratio(wi, hi, wr, hr):
    r_i = wi / hi
    return 1.0 - min(abs(r_i - wr / hr) / r_i, 1.0)


# --- ssim ----------------------------------------------------------------


class TestSsim:
    def test_identical_is_one(self):
        rng = np.random.default_rng(0)
        x = rng.random((32, 32))
        assert abs(ssim_score(x, x, FAST) - 1.0) < 1e-9

    def test_constant_images_formula(self):
        a, b = 0.3, 0.8
        c1 = FAST.ssim_c1
        img_a = np.full((32, 32), a)
        img_b = np.full((32, 32), b)
        expect = (2 * a * b + c1) / (a * a + b * b + c1)
        assert abs(ssim_score(img_a, img_b, FAST) - expect) < 1e-12

    def test_negative_image_scores_low(self):
        rng = np.random.default_rng(1)
        x = rng.random((32, 32))
        assert ssim_score(x, 1.0 - x, FAST) < 0.5

    def test_matches_naive_reference(self):
        rng = np.random.default_rng(2)
        for _ in range(25):
            a = rng.random((32, 32))
            b = rng.random((32, 32))
            got = ssim_score(a, b, FAST)
            want = naive_patch_ssim(a, b, FAST.patch_grid, FAST.ssim_c1, FAST.ssim_c2)
            assert abs(got - want) < 1e-12

    def test_symmetric(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            a = rng.random((32, 32))
            b = rng.random((32, 32))
            assert abs(ssim_score(a, b, FAST) - ssim_score(b, a, FAST)) < 1e-12


class TestEdge:
    def test_identical_nonblank_is_one(self):
        rng = np.random.default_rng(4)
        x = rng.random((32, 32))
        assert abs(edge_score(x, x, FAST) - 1.0) < 1e-9

    def test_blank_vs_any_is_zero(self):
        rng = np.random.default_rng(5)
        assert edge_score(np.zeros((32, 32)), rng.random((32, 32)), FAST) == 0.0

    def test_step_images_match_naive(self):
        v = np.zeros((64, 64))
        v[:, 32:] = 1.0  # vertical step
        h = np.zeros((64, 64))
        h[32:, :] = 1.0  # horizontal step
        cfg = SimilarityConfig(comparison_res=64, patch_grid=4)
        got = edge_score(v, h, cfg)
        want = naive_edge_score(v, h, cfg.edge_threshold)
        assert abs(got - want) < 1e-12

    def test_random_images_match_naive(self):
        rng = np.random.default_rng(6)
        for _ in range(10):
            a = rng.random((32, 32))
            b = rng.random((32, 32))
            assert abs(edge_score(a, b, FAST) - naive_edge_score(a, b, FAST.edge_threshold)) < 1e-12

    def test_symmetric(self):
        rng = np.random.default_rng(7)
        a, b = rng.random((32, 32)), rng.random((32, 32))
        assert abs(edge_score(a, b, FAST) - edge_score(b, a, FAST)) < 1e-12


class TestRatio:
    def test_equal_aspect(self):
        assert ratio_score((10, 20), (30, 60)) == 1.0

    def test_half(self):
        assert ratio_score((20, 10), (10, 10)) == pytest.approx(0.5, abs=1e-12)

    def test_saturates_at_zero(self):
        assert ratio_score((10, 10), (100, 10)) == 0.0

    def test_zero_height_rejected(self):
        with pytest.raises(DegenerateBoxError):
            ratio_score((10, 0), (10, 10))

    def test_matches_naive(self):
        rng = np.random.default_rng(8)
        for _ in range(100):
            wi, hi, wr, hr = rng.integers(1, 200, size=4)
            assert abs(ratio_score((wi, hi), (wr, hr)) - naive_ratio(wi, hi, wr, hr)) < 1e-12


class TestMatchView:
    @pytest.fixture(scope="class")
    def goblet(self):
        return make_primitive("goblet", None, 3)

    def test_self_render_wins_exactly(self, goblet):
        cams = sample_view_sphere(32)
        cam = virtual_camera(256)
        for k in (0, 9, 25):
            view = render(goblet, cam, ScaledPlacement(cams[k], 1.0))
            result = match_view(view.shaded, view.silhouette, goblet, cams, FAST,
                                observed_camera=cam)
            assert result.best.view_index == k
            assert result.best.roll_deg == 0.0
            assert not result.best.refined

    def test_tie_breaks_to_lower_index(self, goblet):
        cams = sample_view_sphere(16)
        dup = [cams[5], cams[5]]  # identical candidates render identical images
        cam = virtual_camera(256)
        view = render(goblet, cam, ScaledPlacement(cams[5], 1.0))
        result = match_view(view.shaded, view.silhouette, goblet, dup, FAST)
        assert result.best.view_index == 0

    def test_weight_rescaling_keeps_argmax(self, goblet):
        cams = sample_view_sphere(24)
        cam = virtual_camera(256)
        view = render(goblet, cam, ScaledPlacement(cams[7], 1.0))
        base = match_view(view.shaded, view.silhouette, goblet, cams, FAST)
        for c in (0.01, 3.0, 250.0):
            cfg = SimilarityConfig(
                alpha=FAST.alpha * c, beta=FAST.beta * c, gamma=FAST.gamma * c,
                comparison_res=FAST.comparison_res, patch_grid=FAST.patch_grid,
                roll_steps=FAST.roll_steps, refine_top=FAST.refine_top,
                refine_rounds=FAST.refine_rounds)
            scaled = match_view(view.shaded, view.silhouette, goblet, cams, cfg)
            assert scaled.best.view_index == base.best.view_index
            assert np.array_equal(scaled.rotation.rotation, base.rotation.rotation)

    def test_deterministic_winner(self, goblet):
        cams = sample_view_sphere(16)
        cam = virtual_camera(128)
        view = render(goblet, cam, ScaledPlacement(cams[3], 1.0))
        a = match_view(view.shaded, view.silhouette, goblet, cams, FAST)
        b = match_view(view.shaded, view.silhouette, goblet, cams, FAST)
        assert a.best == b.best
        assert np.array_equal(a.rotation.rotation, b.rotation.rotation)

    def test_empty_mask_rejected(self, goblet):
        cams = sample_view_sphere(4)
        with pytest.raises(EmptyMaskError):
            match_view(np.zeros((64, 64)), np.zeros((64, 64), dtype=bool),
                       goblet, cams, FAST)

    def test_no_cameras_rejected(self, goblet):
        with pytest.raises(NoCandidateError):
            match_view(np.ones((8, 8)), np.ones((8, 8), dtype=bool), goblet, [], FAST)

    def test_all_empty_renders_rejected(self, goblet):
        behind = RigidTransform(None, [0.0, 0.0, -5.0])
        mask = np.zeros((64, 64), dtype=bool)
        mask[20:40, 20:40] = True
        with pytest.raises(NoCandidateError):
            match_view(mask.astype(float), mask, goblet, [behind], FAST)

    def test_score_entries_cover_grid(self, goblet):
        cams = sample_view_sphere(8)
        cam = virtual_camera(128)
        view = render(goblet, cam, ScaledPlacement(cams[2], 1.0))
        result = match_view(view.shaded, view.silhouette, goblet, cams, FAST)
        grid = [s for s in result.scores if not s.refined]
        assert len(grid) == 8 * FAST.roll_steps
        rescored = [s for s in grid if not np.isnan(s.total)]
        assert len(rescored) >= math.ceil(0.1 * len(grid))
