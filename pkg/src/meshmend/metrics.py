"""Depth-reconstruction metrics (RMSE / REL / MAE) and pose error measures."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyEvaluationError, InputError
from .geometry import rotation_about_x, rotation_about_z, rotation_angle_deg
from .keypoints import PlacementSolution

HOLE_POLICIES = ("max_depth", "exclude")

# Declared symmetry groups for pose-error reduction
SYM_NONE = "none"
SYM_Z_CONTINUOUS = "z_continuous"
SYM_BOX4_FLIP = "box4flip"  # 4-fold about z, times a flip about x


@dataclass(frozen=True)
class DepthMetrics:
    rmse: float  # meters
    rel: float  # unitless
    mae: float  # meters
    evaluated_pixel_count: int
    gt_invalid_count: int = 0  # region pixels excluded for invalid ground truth
    pred_invalid_count: int = 0  # region pixels where the prediction had holes
    hole_policy: str = "max_depth"


def depth_metrics(predicted, ground_truth, region_mask,
                  hole_policy: str = "max_depth") -> DepthMetrics:
    """RMSE, mean absolute relative difference, and MAE over a region.

    Pixels with invalid ground truth are excluded (and counted). Holes
    in the prediction are either scored as the maximum valid ground
    truth depth inside the evaluated region ("max_depth", the default,
    which penalizes holes proportionately to the scene's depth span
    there) or dropped ("exclude"); either way the count is reported.
    """
    if hole_policy not in HOLE_POLICIES:
        raise InputError(f"unknown hole policy {hole_policy!r}")
    predicted = np.asarray(predicted, dtype=np.float64)
    ground_truth = np.asarray(ground_truth, dtype=np.float64)
    region = np.asarray(region_mask, dtype=bool)
    if predicted.shape != ground_truth.shape or predicted.shape != region.shape:
        raise InputError("predicted/ground-truth/region dimensions differ")

    gt_valid = ground_truth > 0
    gt_invalid_count = int((region & ~gt_valid).sum())
    eval_mask = region & gt_valid
    holes = eval_mask & (predicted <= 0)
    pred_invalid_count = int(holes.sum())
    if hole_policy == "exclude":
        eval_mask = eval_mask & (predicted > 0)
    if not eval_mask.any():
        raise EmptyEvaluationError("no pixels left to evaluate")

    pred = predicted.copy()
    if hole_policy == "max_depth":
        pred[holes] = ground_truth[eval_mask].max()

    d = pred[eval_mask] - ground_truth[eval_mask]
    gt = ground_truth[eval_mask]
    return DepthMetrics(
        rmse=float(np.sqrt(np.mean(d * d))),
        rel=float(np.mean(np.abs(d) / gt)),
        mae=float(np.mean(np.abs(d))),
        evaluated_pixel_count=int(eval_mask.sum()),
        gt_invalid_count=gt_invalid_count,
        pred_invalid_count=pred_invalid_count,
        hole_policy=hole_policy,
    )


def symmetry_rotations(symmetry: str, z_samples: int = 720):
    """Rotation matrices of the declared symmetry group.

    Continuous z-symmetry is discretized finely; combined with the
    closed-form twist reduction below this is only used as a fallback
    and in tests.
    """
    if symmetry == SYM_NONE:
        return [np.eye(3)]
    if symmetry == SYM_Z_CONTINUOUS:
        return [rotation_about_z(a) for a in np.linspace(0, 2 * np.pi, z_samples, endpoint=False)]
    if symmetry == SYM_BOX4_FLIP:
        out = []
        flip = rotation_about_x(np.pi)
        for k in range(4):
            rz = rotation_about_z(k * np.pi / 2)
            out.append(rz)
            out.append(rz @ flip)
        return out
    raise InputError(f"unknown symmetry group {symmetry!r}")


def _min_angle_about_z(r_rel) -> float:
    """min over theta of geodesic(r_rel @ Rz(theta)), closed form.

    Uses the swing-twist split of the relative rotation about z: the
    residual swing angle is the symmetry-reduced error.
    """
    # quaternion of r_rel
    m = r_rel
    tr = np.trace(m)
    if tr > 0:
        s = np.sqrt(tr + 1.0) * 2
        w = 0.25 * s
        x = (m[2, 1] - m[1, 2]) / s
        y = (m[0, 2] - m[2, 0]) / s
        z = (m[1, 0] - m[0, 1]) / s
    else:
        i = int(np.argmax(np.diag(m)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = np.sqrt(max(1.0 + m[i, i] - m[j, j] - m[k, k], 0.0)) * 2
        q = [0.0, 0.0, 0.0, 0.0]
        q[0] = (m[k, j] - m[j, k]) / s
        q[1 + i] = 0.25 * s
        q[1 + j] = (m[j, i] + m[i, j]) / s
        q[1 + k] = (m[k, i] + m[i, k]) / s
        w, x, y, z = q
    # twist about z is the (w, z) part; swing is what remains
    twist_norm = np.hypot(w, z)
    if twist_norm < 1e-12:
        return 180.0  # pure swing by pi
    cos_half_swing = min(twist_norm, 1.0)
    return float(np.degrees(2.0 * np.arccos(cos_half_swing)))


def rotation_error_deg(r_est, r_gt, symmetry: str = SYM_NONE) -> float:
    """Geodesic rotation error reduced over the declared symmetry group."""
    r_est = np.asarray(r_est, dtype=np.float64)
    r_gt = np.asarray(r_gt, dtype=np.float64)
    if symmetry == SYM_Z_CONTINUOUS:
        return _min_angle_about_z(r_gt.T @ r_est)
    if symmetry == SYM_BOX4_FLIP:
        candidates = []
        for g in symmetry_rotations(symmetry):
            rel = (r_gt @ g).T @ r_est
            candidates.append(rotation_angle_deg(rel))
        return min(candidates)
    return rotation_angle_deg(r_gt.T @ r_est)


def placement_error(solution: PlacementSolution, gt_rotation, gt_translation,
                    gt_scale: float, symmetry: str = SYM_NONE):
    """(rotation error deg, translation error m, relative scale error)."""
    ang = rotation_error_deg(solution.rotation, gt_rotation, symmetry)
    trans = float(np.linalg.norm(solution.translation - np.asarray(gt_translation)))
    scale = abs(solution.scale / float(gt_scale) - 1.0)
    return ang, trans, scale
