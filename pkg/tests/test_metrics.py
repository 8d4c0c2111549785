import numpy as np
import pytest

from meshmend.errors import EmptyEvaluationError, InputError
from meshmend.geometry import (
    rotation_about_x,
    rotation_about_y,
    rotation_about_z,
    rotation_angle_deg,
)
from meshmend.keypoints import assemble_placement
from meshmend.metrics import (
    SYM_BOX4_FLIP,
    SYM_NONE,
    SYM_Z_CONTINUOUS,
    depth_metrics,
    placement_error,
    rotation_error_deg,
    symmetry_rotations,
)


def naive_metrics(pred, gt, region, hole_policy):
    """Double-loop reference for RMSE / REL / MAE."""
    errs, rels = [], []
    penalty = None
    if hole_policy == "max_depth":
        vals = [gt[y, x] for y in range(gt.shape[0]) for x in range(gt.shape[1])
                if region[y, x] and gt[y, x] > 0]
        penalty = max(vals) if vals else 0.0
    for y in range(gt.shape[0]):
        for x in range(gt.shape[1]):
            if not region[y, x] or gt[y, x] <= 0:
                continue
            p = pred[y, x]
            if p <= 0:
                if hole_policy == "exclude":
                    continue
                p = penalty
            errs.append(p - gt[y, x])
            rels.append(abs(p - gt[y, x]) / gt[y, x])
    errs = np.array(errs)
    return (
        float(np.sqrt((errs ** 2).mean())),
        float(np.mean(rels)),
        float(np.abs(errs).mean()),
    )


class TestDepthMetrics:
    def test_perfect_prediction(self):
        gt = np.full((8, 8), 1.3)
        m = depth_metrics(gt, gt, np.ones((8, 8), dtype=bool))
        assert m.rmse == 0 and m.rel == 0 and m.mae == 0
        assert m.evaluated_pixel_count == 64

    def test_uniform_offset(self):
        gt = np.full((8, 8), 1.0)
        pred = np.full((8, 8), 1.1)
        m = depth_metrics(pred, gt, np.ones((8, 8), dtype=bool))
        assert m.rmse == pytest.approx(0.1, abs=1e-09)
        assert m.rel == pytest.approx(0.1, abs=1e-09)
        assert m.mae == pytest.approx(0.1, abs=1e-09)

    def test_two_pixel_hand_case(self):
        gt = np.array([[1.0, 2.0]])
        pred = np.array([[1.1, 1.8]])
        m = depth_metrics(pred, gt, np.ones((1, 2), dtype=bool))
        assert m.mae == pytest.approx(0.15, abs=1e-12)
        assert m.rel == pytest.approx(0.1, abs=1e-12)
        assert m.rmse == pytest.approx(np.sqrt(0.025), abs=1e-12)

    @pytest.mark.parametrize("policy", ["max_depth", "exclude"])
    def test_matches_naive_reference(self, policy):
        rng = np.random.default_rng(0)
        for _ in range(20):
            gt = rng.uniform(0.2, 3.0, size=(32, 32))
            gt[rng.random((32, 32)) < 0.05] = 0.0  # invalid GT pixels
            pred = gt + rng.normal(0, 0.05, size=(32, 32))
            pred[rng.random((32, 32)) < 0.07] = 0.0  # holes
            region = rng.random((32, 32)) < 0.8
            if not (region & (gt > 0) & (pred > 0)).any():
                continue
            m = depth_metrics(pred, gt, region, policy)
            want = naive_metrics(pred, gt, region, policy)
            assert abs(m.rmse - want[0]) < 1e-12
            assert abs(m.rel - want[1]) < 1e-12
            assert abs(m.mae - want[2]) < 1e-12
            assert m.rmse >= m.mae - 1e-15

    def test_scaling_law(self):
        rng = np.random.default_rng(1)
        gt = rng.uniform(0.2, 2.0, size=(16, 16))
        pred = gt + rng.normal(0, 0.03, size=(16, 16))
        region = np.ones((16, 16), dtype=bool)
        base = depth_metrics(pred, gt, region)
        for c in (0.5, 3.0):
            scaled = depth_metrics(c * pred, c * gt, region)
            assert scaled.rmse == pytest.approx(c * base.rmse, rel=1e-9)
            assert scaled.mae == pytest.approx(c * base.mae, rel=1e-9)
            assert scaled.rel == pytest.approx(base.rel, rel=1e-9)

    def test_invalid_gt_excluded_and_counted(self):
        gt = np.array([[1.0, 0.0], [2.0, 1.5]])
        pred = np.full((2, 2), 1.0)
        m = depth_metrics(pred, gt, np.ones((2, 2), dtype=bool))
        assert m.evaluated_pixel_count == 3
        assert m.gt_invalid_count == 1

    def test_hole_policies(self):
        gt = np.array([[1.0, 2.0, 3.0]])
        pred = np.array([[1.0, 0.0, 3.0]])
        region = np.ones((1, 3), dtype=bool)
        m_pen = depth_metrics(pred, gt, region, "max_depth")
        # hole scored as the region's max GT depth (3.0): error 1.0 at one of 3 px
        assert m_pen.mae == pytest.approx(1.0 / 3.0, abs=1e-12)
        assert m_pen.pred_invalid_count == 1
        m_ex = depth_metrics(pred, gt, region, "exclude")
        assert m_ex.mae == 0.0
        assert m_ex.evaluated_pixel_count == 2
        assert m_ex.pred_invalid_count == 1

    def test_empty_evaluation(self):
        gt = np.zeros((4, 4))
        with pytest.raises(EmptyEvaluationError):
            depth_metrics(np.ones((4, 4)), gt, np.ones((4, 4), dtype=bool))

    def test_unknown_policy(self):
        with pytest.raises(InputError):
            depth_metrics(np.ones((2, 2)), np.ones((2, 2)), np.ones((2, 2), dtype=bool),
                          "interpolate")


def sampled_symmetry_error(r_est, r_gt, symmetry, samples=720):
    best = 360.0
    if symmetry == SYM_Z_CONTINUOUS:
        group = [rotation_about_z(a) for a in np.linspace(0, 2 * np.pi, samples,
                                                          endpoint=False)]
    else:
        group = symmetry_rotations(symmetry)
    for g in group:
        best = min(best, rotation_angle_deg((r_gt @ g).T @ r_est))
    return best


class TestPlacementError:
    def test_exact_solution(self):
        r = rotation_about_z(0.4)
        sol = assemble_placement(r, [0.1, 0.2, 0.3], 1.5)
        ang, trans, scale = placement_error(sol, r, [0.1, 0.2, 0.3], 1.5, SYM_NONE)
        assert ang < 1e-6 and trans < 1e-12 and scale < 1e-12

    def test_ten_degrees_about_z_no_symmetry(self):
        r_gt = rotation_about_x(0.3)
        r_est = r_gt @ rotation_about_z(np.radians(10.0))
        sol = assemble_placement(r_est, np.zeros(3), 1.0)
        ang, _, _ = placement_error(sol, r_gt, np.zeros(3), 1.0, SYM_NONE)
        assert ang == pytest.approx(10.0, abs=1e-6)

    def test_continuous_z_forgives_any_z_rotation(self):
        rng = np.random.default_rng(2)
        r_gt = rotation_about_x(0.5) @ rotation_about_y(-0.2)
        for _ in range(25):
            r_est = r_gt @ rotation_about_z(rng.uniform(0, 2 * np.pi))
            sol = assemble_placement(r_est, np.zeros(3), 1.0)
            ang, _, _ = placement_error(sol, r_gt, np.zeros(3), 1.0, SYM_Z_CONTINUOUS)
            assert ang < 1e-5

    def test_closed_form_matches_sampled_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            q = rng.normal(size=4)
            from meshmend.geometry import RigidTransform

            r_gt = RigidTransform.from_quaternion(*q).rotation
            q2 = rng.normal(size=4)
            r_est = RigidTransform.from_quaternion(*q2).rotation
            closed = rotation_error_deg(r_est, r_gt, SYM_Z_CONTINUOUS)
            sampled = sampled_symmetry_error(r_est, r_gt, SYM_Z_CONTINUOUS)
            assert closed <= sampled + 1e-9
            assert abs(closed - sampled) < 0.5  # sampling grid resolution

    def test_box_symmetry_forgives_quarter_turns_and_flip(self):
        r_gt = rotation_about_y(0.3)
        for g in symmetry_rotations(SYM_BOX4_FLIP):
            sol = assemble_placement(r_gt @ g, np.zeros(3), 1.0)
            ang, _, _ = placement_error(sol, r_gt, np.zeros(3), 1.0, SYM_BOX4_FLIP)
            assert ang < 1e-6

    def test_scale_and_translation_errors(self):
        sol = assemble_placement(np.eye(3), [0.3, 0.0, 0.4], 1.2)
        ang, trans, scale = placement_error(sol, np.eye(3), [0.0, 0.0, 0.4], 1.0,
                                            SYM_NONE)
        assert trans == pytest.approx(0.3, abs=1e-12)
        assert scale == pytest.approx(0.2, abs=1e-12)
