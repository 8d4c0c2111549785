"""Position and scale recovery from contact-edge keypoints.

The object's depth is untrusted, but the opaque support surface it
rests on has valid depth right below the contact edge. Thirty 2D
keypoints are sampled along the mask's bottom edge; three
representatives (left / center / right) are lifted to 3D twice: once
from the observed support-surface depth, once from a render of the
oriented canonical mesh. The distance-sum ratio of the two triples
gives the scale; the mean displacement of the scaled pairs gives the
translation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateContactError,
    DegenerateKeypointsError,
    InputError,
    KeypointOffMeshError,
    MissingSupportDepthError,
)
from .geometry import CameraModel, RigidTransform, ScaledPlacement
from .mesh import TriangleMesh
from .render import render
from .viewmatch import ViewScore

N_EDGE_SAMPLES = 30
_REPRESENTATIVE_SAMPLES = (4, 14, 24)  # 5th/15th/25th of the 30, centers of thirds


@dataclass(frozen=True)
class ContactKeypoints:
    """Contact-edge keypoints: 2D samples plus their two 3D liftings.

    ``mesh_3d`` is expressed in world axes relative to the mesh origin
    of the nominal render placement, so scale acts about 0 and the mean
    displacement from the scaled points to ``scene_3d`` is directly the
    placement translation.
    """

    sampled_2d: np.ndarray  # (30, 2) int pixel (u, v)
    representatives_2d: np.ndarray  # (3, 2) int pixel, strictly increasing u
    scene_3d: np.ndarray | None = None  # (3, 3) world meters
    mesh_3d: np.ndarray | None = None  # (3, 3) world-axis meters, origin at mesh origin


@dataclass(frozen=True)
class PlacementSolution:
    """Recovered object placement plus quality diagnostics."""

    rotation: np.ndarray  # (3, 3) world-from-object
    translation: np.ndarray  # (3,) meters
    scale: float
    transform: RigidTransform  # rotation+translation assembled
    score: ViewScore | None
    residual_m: float
    degraded: bool

    @property
    def placement(self) -> ScaledPlacement:
        return ScaledPlacement(self.transform, self.scale)


def extract_contact_edge(mask) -> ContactKeypoints:
    """Sample 30 bottom-edge pixels of the mask and pick 3 representatives.

    For every mask column the lowest true pixel is the contact-edge
    pixel; 30 of those are sampled evenly across the occupied column
    span. Masks occupying fewer than 3 columns have no usable edge.
    """
    mask = np.asarray(mask, dtype=bool)
    cols = np.flatnonzero(mask.any(axis=0))
    if cols.size < 3:
        raise DegenerateContactError(
            f"mask occupies {cols.size} column(s); need at least 3"
        )
    # lowest true pixel per occupied column
    h = mask.shape[0]
    lowest = h - 1 - np.argmax(mask[::-1, :][:, cols], axis=0)
    pick = np.round(np.linspace(0, cols.size - 1, N_EDGE_SAMPLES)).astype(int)
    sampled = np.stack([cols[pick], lowest[pick]], axis=1)
    reps = sampled[list(_REPRESENTATIVE_SAMPLES)]
    if not (reps[0, 0] < reps[1, 0] < reps[2, 0]):
        raise DegenerateContactError("representative keypoints not strictly ordered")
    return ContactKeypoints(sampled_2d=sampled, representatives_2d=reps)


def lift_scene_keypoints(k_2d, depth, camera: CameraModel, scan_px: int = 10) -> np.ndarray:
    """Lift representative keypoints to 3D using support-surface depth.

    The keypoint pixel itself sits on the object (untrusted depth), so
    the depth is taken from the first valid pixel scanning downward up
    to ``scan_px`` rows; the keypoint ray is then unprojected with it.
    """
    k_2d = np.asarray(k_2d, dtype=np.int64)
    depth = np.asarray(depth)
    h = depth.shape[0]
    out = np.empty((len(k_2d), 3))
    for i, (u, v) in enumerate(k_2d):
        d = 0.0
        for dv in range(1, scan_px + 1):
            vv = v + dv
            if vv >= h:
                break
            if depth[vv, u] > 0:
                d = float(depth[vv, u])
                break
        if d <= 0:
            raise MissingSupportDepthError(
                f"no valid support depth within {scan_px} px below pixel ({u}, {v})"
            )
        out[i] = camera.unproject((u + 0.5, v + 0.5), d)
    return out


def nominal_standoff(camera: CameraModel, mask_width_px: float) -> float:
    """Distance placing the unit mesh at roughly the observed angular size.

    Matching angular size keeps the render's perspective foreshortening
    close to the observation's, which the keypoint correspondence relies
    on.
    """
    f = (camera.fx + camera.fy) / 2.0
    return float(np.clip(f / mask_width_px, 1.0, 50.0))


def lift_mesh_keypoints(k_2d, observed_mask, mesh: TriangleMesh, r_v,
                        camera: CameraModel, snap_px: float = 5.0):
    """Lift the representatives onto the oriented mesh via a nominal render.

    The canonical mesh is rendered at rotation ``r_v``, unit scale, on
    the camera axis at a nominal standoff. The rendered silhouette's
    bounding box is aligned to the observed mask's box by a 2D
    translate+uniform-scale (anchored at the bottom-center so the
    contact edges coincide), keypoints are mapped across, and rendered
    depth is read at the mapped pixels (nearest covered pixel within
    ``snap_px`` observed pixels when the exact pixel is background).

    Returns (mesh_3d, nominal_origin): world-axis keypoints relative to
    the mesh origin, plus the origin's world position.
    """
    k_2d = np.asarray(k_2d, dtype=np.float64)
    observed_mask = np.asarray(observed_mask, dtype=bool)
    if not observed_mask.any():
        raise KeypointOffMeshError("observed mask is empty")
    cols = np.flatnonzero(observed_mask.any(axis=0))
    rows = np.flatnonzero(observed_mask.any(axis=1))
    obs_w = float(cols[-1] - cols[0] + 1)
    obs_h = float(rows[-1] - rows[0] + 1)
    anchor_obs = np.array([cols[0] + obs_w / 2.0, rows[-1] + 1.0])

    # supersample the nominal render so depth reads don't quantize harshly
    up = int(np.clip(np.ceil(256.0 / obs_w), 2, 4))
    cam_hi = camera.with_resolution_scale(up)

    # Iterated standoff: render with a size guess, then re-render at the
    # distance that matches the observed angular size. Matching the
    # angular size matches perspective foreshortening, which the
    # box-aligned keypoint correspondence depends on.
    standoff = nominal_standoff(camera, obs_w)
    for _ in range(3):
        t_nom = camera.extrinsic.inverse().apply(np.array([0.0, 0.0, standoff]))
        view = render(mesh, cam_hi, ScaledPlacement(RigidTransform(r_v, t_nom), 1.0))
        sil = view.silhouette
        if not sil.any():
            raise KeypointOffMeshError(
                "oriented mesh renders empty at the nominal standoff"
            )
        cols_r = np.flatnonzero(sil.any(axis=0))
        w_r = float(cols_r[-1] - cols_r[0] + 1)
        standoff = float(np.clip(standoff * w_r / (obs_w * up), 1.0, 50.0))

    rcols = np.flatnonzero(sil.any(axis=0))
    rrows = np.flatnonzero(sil.any(axis=1))
    ren_w = float(rcols[-1] - rcols[0] + 1)
    anchor_ren = np.array([rcols[0] + ren_w / 2.0, rrows[-1] + 1.0])
    s2d = ren_w / (obs_w * up)

    sil_px = np.argwhere(sil)  # (n, 2) row, col
    radius = snap_px * up
    out = np.empty((len(k_2d), 3))
    for i, (u, v) in enumerate(k_2d):
        q = anchor_ren + s2d * ((np.array([u + 0.5, v + 0.5]) - anchor_obs) * up)
        qx, qy = int(np.floor(q[0])), int(np.floor(q[1]))
        if 0 <= qy < sil.shape[0] and 0 <= qx < sil.shape[1] and sil[qy, qx]:
            d = float(view.depth[qy, qx])
            pt = cam_hi.unproject(q, d)
        else:
            d2 = (sil_px[:, 0] - (q[1] - 0.5)) ** 2 + (sil_px[:, 1] - (q[0] - 0.5)) ** 2
            j = int(np.argmin(d2))  # argmin takes first: deterministic tie-break
            if d2[j] > radius * radius:
                raise KeypointOffMeshError(
                    f"keypoint ({u}, {v}) maps {np.sqrt(d2[j]) / up:.1f} px off the "
                    f"rendered silhouette (limit {snap_px})"
                )
            ry, rx = sil_px[j]
            d = float(view.depth[ry, rx])
            pt = cam_hi.unproject((rx + 0.5, ry + 0.5), d)
        out[i] = pt - t_nom
    return out, t_nom


def _pairwise_distance_sum(pts) -> float:
    d01 = float(np.linalg.norm(pts[0] - pts[1]))
    d02 = float(np.linalg.norm(pts[0] - pts[2]))
    d12 = float(np.linalg.norm(pts[1] - pts[2]))
    for d in (d01, d02, d12):
        if d <= 1e-9:
            raise DegenerateKeypointsError("coincident keypoints in triple")
    return d01 + d02 + d12


def solve_scale(scene_3d, mesh_3d) -> float:
    """Scale = sum of scene pairwise distances / sum of mesh pairwise distances."""
    scene_3d = np.asarray(scene_3d, dtype=np.float64)
    mesh_3d = np.asarray(mesh_3d, dtype=np.float64)
    num = _pairwise_distance_sum(scene_3d)
    den = _pairwise_distance_sum(mesh_3d)
    return num / den


def solve_translation(scene_3d, mesh_3d_scaled) -> np.ndarray:
    """Mean displacement over the three pairs; mesh points must be pre-scaled."""
    scene_3d = np.asarray(scene_3d, dtype=np.float64)
    mesh_3d_scaled = np.asarray(mesh_3d_scaled, dtype=np.float64)
    return (scene_3d - mesh_3d_scaled).mean(axis=0)


def alignment_residual(scene_3d, mesh_3d, scale, translation) -> float:
    """RMS distance between aligned mesh keypoints and scene keypoints."""
    aligned = np.asarray(mesh_3d) * scale + translation
    return float(np.sqrt(np.mean(np.sum((np.asarray(scene_3d) - aligned) ** 2, axis=1))))


def assemble_placement(r_v, t_v, s_v, score: ViewScore | None = None,
                       residual_m: float = 0.0,
                       residual_gate_m: float = 0.015) -> PlacementSolution:
    """Pack rotation/translation/scale into the final placement.

    Solutions whose keypoint residual exceeds the gate are flagged
    degraded but still returned; downstream consumers decide what to do.
    """
    transform = RigidTransform(np.asarray(r_v, dtype=np.float64),
                               np.asarray(t_v, dtype=np.float64))
    if not np.isfinite(residual_m) or residual_m < 0:
        raise InputError(f"residual must be a nonnegative number, got {residual_m}")
    return PlacementSolution(
        rotation=transform.rotation,
        translation=transform.translation,
        scale=float(s_v),
        transform=transform,
        score=score,
        residual_m=float(residual_m),
        degraded=bool(residual_m > residual_gate_m),
    )


def recover_placement(observed_mask, observed_depth, mesh: TriangleMesh, r_v,
                      camera: CameraModel, scan_px: int = 10,
                      snap_px: float = 5.0,
                      residual_gate_m: float = 0.015,
                      score: ViewScore | None = None) -> tuple[PlacementSolution, ContactKeypoints]:
    """Full keypoint stage: contact edge -> lifts -> scale -> translation."""
    kp = extract_contact_edge(observed_mask)
    scene_3d = lift_scene_keypoints(kp.representatives_2d, observed_depth, camera, scan_px)
    mesh_3d, _ = lift_mesh_keypoints(kp.representatives_2d, observed_mask, mesh, r_v,
                                     camera, snap_px)
    s_v = solve_scale(scene_3d, mesh_3d)
    t_v = solve_translation(scene_3d, mesh_3d * s_v)
    residual = alignment_residual(scene_3d, mesh_3d, s_v, t_v)
    solution = assemble_placement(r_v, t_v, s_v, score, residual, residual_gate_m)
    kp = ContactKeypoints(kp.sampled_2d, kp.representatives_2d, scene_3d, mesh_3d)
    return solution, kp
