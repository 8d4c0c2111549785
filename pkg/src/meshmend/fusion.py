"""Depth fusion: composite the placed mesh's render into the observed depth.

Outside the object mask the sensor depth is trusted and passes through
bit-for-bit. Inside the mask the placed mesh is authoritative: covered
pixels take the rendered depth, uncovered ones become invalid rather
than being interpolated.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError
from .geometry import CameraModel
from .keypoints import PlacementSolution
from .mesh import TriangleMesh
from .render import render

PROV_INVALID = 0
PROV_ORIGINAL = 1
PROV_MESH = 2


@dataclass(frozen=True)
class FusedDepth:
    """Reconstructed depth plus a per-pixel provenance label.

    provenance: 0 invalid, 1 original sensor depth, 2 placed-mesh depth.
    """

    depth: np.ndarray  # float32 meters, 0 = invalid
    provenance: np.ndarray  # uint8
    warnings: tuple[str, ...] = field(default=())


def fuse(observed_depth, object_mask, mesh: TriangleMesh,
         placement: PlacementSolution, camera: CameraModel) -> FusedDepth:
    """Replace in-mask depth with the placed mesh's render.

    Attaches a poor-coverage warning (not an error) when the render
    covers less than 25% of the mask area.
    """
    observed_depth = np.asarray(observed_depth, dtype=np.float32)
    object_mask = np.asarray(object_mask, dtype=bool)
    if observed_depth.shape != object_mask.shape:
        raise InputError("depth and mask dimensions differ")
    if (observed_depth.shape[0] != camera.height
            or observed_depth.shape[1] != camera.width):
        raise InputError("camera dimensions do not match the depth image")

    view = render(mesh, camera, placement.placement)
    fused = observed_depth.copy()
    provenance = np.full(observed_depth.shape, PROV_ORIGINAL, dtype=np.uint8)

    covered = object_mask & view.silhouette
    holes = object_mask & ~view.silhouette
    fused[covered] = view.depth[covered]
    fused[holes] = 0.0
    provenance[covered] = PROV_MESH
    provenance[holes] = PROV_INVALID

    warnings = ()
    n_mask = int(object_mask.sum())
    if n_mask > 0 and covered.sum() < 0.25 * n_mask:
        warnings = (
            f"placed mesh covers only {int(covered.sum())}/{n_mask} mask pixels",
        )
    return FusedDepth(depth=fused, provenance=provenance, warnings=warnings)


def to_point_cloud(fused: FusedDepth, camera: CameraModel):
    """Unproject every valid fused pixel into a world-frame point cloud.

    Returns (points (N, 3) float64, provenance (N,) uint8), one entry
    per valid depth pixel in row-major order.
    """
    depth = np.asarray(fused.depth, dtype=np.float64)
    valid = depth > 0
    pts = camera.unproject_grid(depth)
    return pts[valid.ravel()], fused.provenance[valid]
