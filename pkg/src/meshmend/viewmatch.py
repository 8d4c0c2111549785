"""Orientation recovery by rendering candidate views and scoring them.

Each candidate view of the canonical mesh is compared against the
observed object crop with three terms: patchwise structural similarity,
Laplacian-edge correlation, and bounding-box aspect-ratio similarity.
The rotation of the highest-scoring candidate is the recovered
orientation.

Candidates are the sphere-sampled viewpoints crossed with a sweep of
in-plane camera rolls. All candidates are first scored with the cheap
edge + ratio terms; the top fraction is re-scored with the structural
term added, and the argmax of the full score wins. Ties break to the
lowest candidate index, so results are identical for any thread count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import DegenerateBoxError, EmptyMaskError, InputError, NoCandidateError
from .geometry import (
    RigidTransform,
    rotation_about_x,
    rotation_about_y,
    rotation_about_z,
)
from .mesh import TriangleMesh
from .render import NEAR_PLANE, crop_to_object, virtual_camera


@dataclass(frozen=True)
class SimilarityConfig:
    """Weights and knobs of the view-similarity score.

    alpha/beta/gamma weight the structural, edge, and ratio terms; the
    comparison runs on crops resampled to comparison_res squared, split
    into patch_grid x patch_grid patches for the structural term.
    """

    alpha: float = 1.0 / 3.0
    beta: float = 1.0 / 3.0
    gamma: float = 1.0 / 3.0
    patch_grid: int = 8
    ssim_c1: float = (0.01) ** 2  # stabilizers for [0,1] images
    ssim_c2: float = (0.03) ** 2
    edge_threshold: float = 0.05
    comparison_res: int = 128
    roll_steps: int = 12  # in-plane roll candidates per view (360/roll_steps deg apart)
    rescore_fraction: float = 0.10
    # local hill-climb around the best fully-scored candidates; the
    # view/roll grid alone is too coarse for edge-heavy objects
    refine_top: int = 12
    refine_rounds: int = 4
    refine_step_deg: float = 10.0  # halved every round
    refine_moves: int = 3  # improvement moves allowed per round

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0 or self.gamma < 0:
            raise InputError("similarity weights must be nonnegative")
        if self.alpha + self.beta + self.gamma <= 0:
            raise InputError("at least one similarity weight must be positive")
        if self.patch_grid < 1:
            raise InputError("patch_grid must be >= 1")
        if self.ssim_c1 <= 0 or self.ssim_c2 <= 0:
            raise InputError("SSIM stabilizers must be positive")
        if self.roll_steps < 1 or self.comparison_res < self.patch_grid:
            raise InputError("bad roll_steps or comparison resolution")


@dataclass(frozen=True)
class ViewScore:
    """Per-candidate similarity breakdown; s_ssim is NaN if pruned early.

    ``refined`` rows come from the local hill-climb; their orientation
    is the base candidate's plus an off-grid perturbation, so roll_deg
    reports the base roll.
    """

    view_index: int
    roll_deg: float
    s_ssim: float
    s_edge: float
    s_ratio: float
    total: float
    refined: bool = False


@dataclass(frozen=True)
class ViewMatchResult:
    rotation: RigidTransform  # camera-from-object pose of the winning candidate
    best: ViewScore
    scores: list[ViewScore] = field(repr=False)


def _resample_full(img, res):
    img = np.ascontiguousarray(np.asarray(img, dtype=np.float64))
    h, w = img.shape
    return _kernels.resample_bilinear(img, 0, 0, w - 1, h - 1, res)


def ssim_score(observed, rendered, config: SimilarityConfig = SimilarityConfig()) -> float:
    """Mean patchwise SSIM between the two crops at the comparison resolution.

    Value is the patch mean (sum / patch count), so it stays in [-1, 1]
    and is comparable across patch-grid settings.
    """
    a = _resample_full(observed, config.comparison_res)
    b = _resample_full(rendered, config.comparison_res)
    return float(_kernels.patch_ssim(a, b, config.patch_grid, config.ssim_c1, config.ssim_c2))


def edge_score(observed, rendered, config: SimilarityConfig = SimilarityConfig()) -> float:
    """Normalized cross-correlation of thresholded Laplacian edge magnitudes.

    Returns 0 when either edge image is entirely blank.
    """
    a = _resample_full(observed, config.comparison_res)
    b = _resample_full(rendered, config.comparison_res)
    ea = _kernels.laplacian_edge(a, config.edge_threshold)
    eb = _kernels.laplacian_edge(b, config.edge_threshold)
    return float(_kernels.ncc(ea, eb))


def ratio_score(observed_box, rendered_box) -> float:
    """Aspect-ratio similarity of two (width, height) boxes in pixels.

    Normalized by the observed ratio, saturating at 0; the observed box
    must always be passed first.
    """
    w_i, h_i = float(observed_box[0]), float(observed_box[1])
    w_r, h_r = float(rendered_box[0]), float(rendered_box[1])
    if h_i <= 0 or h_r <= 0:
        raise DegenerateBoxError("bounding box with zero height")
    if w_i < 1 or w_r < 1:
        raise DegenerateBoxError("bounding box narrower than one pixel")
    return float(_kernels.ratio_similarity(w_i, h_i, w_r, h_r))


def roll_angles_deg(roll_steps: int) -> np.ndarray:
    return np.arange(roll_steps, dtype=np.float64) * (360.0 / roll_steps)


def _pose_neighbors(pose, step_deg: float) -> np.ndarray:
    """Six perturbed poses: +/- step about each camera axis.

    Only the rotation block moves; keeping the translation fixed makes
    x/y perturbations orbit the viewpoint around the object (a real view
    change) and z a pure in-place roll. Rotating the translation too
    would merely pan the camera without changing the viewpoint.
    """
    a = np.radians(step_deg)
    out = np.empty((6, 3, 4))
    i = 0
    for make in (rotation_about_x, rotation_about_y, rotation_about_z):
        for sign in (1.0, -1.0):
            dr = make(sign * a)
            out[i, :, :3] = dr @ pose[:, :3]
            out[i, :, 3] = pose[:, 3]
            i += 1
    return out


def candidate_poses(cameras: list[RigidTransform], roll_steps: int) -> np.ndarray:
    """(n_views * roll_steps, 3, 4) camera-from-object matrices, view-major."""
    rolls = np.radians(roll_angles_deg(roll_steps))
    out = np.empty((len(cameras) * roll_steps, 3, 4))
    k = 0
    for pose in cameras:
        for ang in rolls:
            rz = rotation_about_z(ang)
            out[k, :, :3] = rz @ pose.rotation
            out[k, :, 3] = rz @ pose.translation
            k += 1
    return out


def match_view(observed_gray, observed_mask, mesh: TriangleMesh,
               cameras: list[RigidTransform],
               config: SimilarityConfig = SimilarityConfig(),
               render_res: int = 256,
               observed_camera=None) -> ViewMatchResult:
    """Pick the candidate view that best explains the observed object crop.

    ``cameras`` are camera-from-object poses (from sample_view_sphere);
    each is additionally swept over config.roll_steps in-plane rolls.
    When ``observed_camera`` is given, survivors of the cheap phase are
    re-rendered at a standoff matching the observed angular size, so the
    full score compares images under the same perspective
    foreshortening. Returns the winning pose's rotation (roll included)
    plus the full score table for diagnostics.
    """
    observed_mask = np.asarray(observed_mask, dtype=bool)
    if not observed_mask.any():
        raise EmptyMaskError("observed object mask is empty")
    if not cameras:
        raise NoCandidateError("no candidate views supplied")

    masked = np.asarray(observed_gray, dtype=np.float64) * observed_mask
    obs_crop, (x0, y0, x1, y1) = crop_to_object(masked, observed_mask)
    obs_w = float(x1 - x0 + 1)
    obs_h = float(y1 - y0 + 1)
    obs_img = _resample_full(obs_crop, config.comparison_res)
    obs_edge = _kernels.laplacian_edge(obs_img, config.edge_threshold)

    cam = virtual_camera(render_res)
    poses = candidate_poses(cameras, config.roll_steps)
    tri_albedo = mesh.triangle_albedo()

    def run(pose_subset, want_ssim):
        return _kernels.score_views(
            mesh.vertices, mesh.triangles, tri_albedo, pose_subset,
            cam.fx, cam.fy, cam.cx, cam.cy, cam.width, cam.height, NEAR_PLANE,
            obs_img, obs_edge, obs_w, obs_h,
            config.comparison_res, config.patch_grid,
            config.ssim_c1, config.ssim_c2, config.edge_threshold,
            want_ssim,
        )

    _, s_edge, s_ratio, nonempty, bboxes = run(poses, False)
    live = np.flatnonzero(nonempty)
    if live.size == 0:
        raise NoCandidateError("every candidate view rendered empty")

    # prune: keep the best fraction by the cheap terms, then add SSIM
    cheap = config.beta * s_edge + config.gamma * s_ratio
    order = live[np.lexsort((live, -cheap[live]))]
    keep = order[: max(1, math.ceil(config.rescore_fraction * live.size))]
    keep = np.sort(keep)

    if observed_camera is not None:
        # match each survivor's apparent angular width to the observation's
        obs_ang = obs_w / ((observed_camera.fx + observed_camera.fy) / 2.0)
        widths = (bboxes[keep, 2] - bboxes[keep, 0] + 1).astype(np.float64)
        standoffs = np.linalg.norm(poses[keep, :, 3], axis=1)
        corrected = standoffs * (widths / cam.fx) / obs_ang
        corrected = np.clip(corrected, 1.2, 30.0)
        poses[keep, :, 3] = 0.0
        poses[keep, 2, 3] = corrected

    s_ssim = np.full(len(poses), np.nan)
    s_ssim_k, s_edge_k, s_ratio_k, _, _ = run(np.ascontiguousarray(poses[keep]), True)
    s_ssim[keep] = s_ssim_k
    s_edge[keep] = s_edge_k
    s_ratio[keep] = s_ratio_k

    totals = np.full(len(poses), np.nan)
    totals[keep] = (
        config.alpha * s_ssim[keep]
        + config.beta * s_edge[keep]
        + config.gamma * s_ratio[keep]
    )

    rolls = roll_angles_deg(config.roll_steps)
    n_rolls = config.roll_steps

    def make_score(view_idx, roll_deg, ssim_v, edge_v, ratio_v, total_v, refined=False):
        return ViewScore(int(view_idx), float(roll_deg), float(ssim_v),
                         float(edge_v), float(ratio_v), float(total_v), refined)

    scores = [
        make_score(k // n_rolls, rolls[k % n_rolls],
                   s_ssim[k], s_edge[k], s_ratio[k], totals[k])
        for k in range(len(poses))
    ]

    # rank fully-scored candidates; first-max-wins keeps the lowest index on ties
    best_idx = int(keep[np.argmax(totals[keep])])
    best_pose = poses[best_idx]
    best_score = scores[best_idx]

    if config.refine_rounds > 0 and config.refine_top > 0:
        top = keep[np.lexsort((keep, -totals[keep]))][: config.refine_top]
        for k in sorted(int(i) for i in top):
            pose = poses[k]
            cur_total = float(totals[k])
            step = config.refine_step_deg
            for _ in range(config.refine_rounds):
                for _ in range(config.refine_moves):
                    neigh = _pose_neighbors(pose, step)
                    n_ssim, n_edge, n_ratio, n_live, _ = run(neigh, True)
                    n_total = (config.alpha * n_ssim + config.beta * n_edge
                               + config.gamma * n_ratio)
                    n_total[n_live == 0] = -np.inf
                    j = int(np.argmax(n_total))
                    if not np.isfinite(n_total[j]) or n_total[j] <= cur_total:
                        break
                    pose = neigh[j]
                    cur_total = float(n_total[j])
                    sc = make_score(k // n_rolls, rolls[k % n_rolls],
                                    n_ssim[j], n_edge[j], n_ratio[j], n_total[j],
                                    refined=True)
                    scores.append(sc)
                    if sc.total > best_score.total:  # strict: grid wins ties
                        best_score = sc
                        best_pose = pose
                step /= 2.0

    return ViewMatchResult(
        rotation=RigidTransform(best_pose[:, :3], best_pose[:, 3]),
        best=best_score,
        scores=scores,
    )
