"""Software rendering: view-sphere sampling, z-buffered mesh rasterization.

The renderer is deterministic across machines and thread counts, which
matters more here than raw speed: candidate-view scoring depends on
reproducing exactly the same images for the same inputs. The per-pixel
work lives in ``meshmend._kernels`` (numba by default, numpy fallback).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import EmptyMaskError, InputError
from .geometry import CameraModel, RigidTransform, ScaledPlacement
from .mesh import TriangleMesh, merge_meshes

# Virtual camera used for candidate views: 256x256, focal length chosen
# so the canonical unit mesh at the 2.5-unit standoff fills ~70% of the
# frame.
VIEW_RENDER_RES = 256
VIEW_SPHERE_RADIUS = 2.5
_VIEW_FOCAL_AT_256 = 248.0
NEAR_PLANE = 1e-6


def virtual_camera(resolution: int = VIEW_RENDER_RES) -> CameraModel:
    """Camera used to render candidate views of the canonical mesh."""
    f = _VIEW_FOCAL_AT_256 * resolution / 256.0
    return CameraModel(
        fx=f, fy=f, cx=resolution / 2.0, cy=resolution / 2.0,
        width=resolution, height=resolution,
    )


@dataclass(frozen=True)
class RenderedView:
    """One rendered candidate: silhouette/depth/shaded images plus the pose."""

    view_index: int
    pose: RigidTransform  # camera-from-object
    silhouette: np.ndarray  # bool (H, W)
    depth: np.ndarray  # float32 meters, 0 = background
    shaded: np.ndarray  # float grayscale in [0, 1]


def look_at_pose(position, target=(0.0, 0.0, 0.0), up_hint=(0.0, 0.0, 1.0)) -> RigidTransform:
    """Camera-from-world pose for a camera at ``position`` looking at ``target``.

    Camera frame is x-right / y-down / z-forward; the world up_hint maps
    to image-up. When the view direction is (anti)parallel to up_hint the
    hint falls back to +y, which pins the roll of top/bottom views.
    """
    position = np.asarray(position, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - position
    norm = np.linalg.norm(forward)
    if norm < 1e-12:
        raise InputError("camera position coincides with its target")
    forward /= norm
    up = np.asarray(up_hint, dtype=np.float64)
    right = np.cross(forward, up)
    if np.linalg.norm(right) < 1e-9:
        right = np.cross(forward, np.array([0.0, 1.0, 0.0]))
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    rot = np.stack([right, down, forward])
    return RigidTransform(rot, -rot @ position)


def sample_view_sphere(n: int, radius: float = VIEW_SPHERE_RADIUS) -> list[RigidTransform]:
    """n camera poses on a Fibonacci spiral sphere, all looking at the origin.

    Deterministic; view 0 for n == 1 sits exactly on the +z pole. Every
    returned pose maps the origin to (0, 0, radius) in its camera frame.
    """
    if n < 1:
        raise InputError(f"need at least one view, got n={n}")
    if radius <= 0:
        raise InputError(f"sphere radius must be positive, got {radius}")
    dirs = view_sphere_directions(n)
    return [look_at_pose(radius * d) for d in dirs]


def view_sphere_directions(n: int) -> np.ndarray:
    """Unit view directions of sample_view_sphere (object -> camera)."""
    if n == 1:
        return np.array([[0.0, 0.0, 1.0]])
    i = np.arange(n, dtype=np.float64)
    z = 1.0 - (2.0 * i + 1.0) / n
    r = np.sqrt(np.clip(1.0 - z * z, 0.0, 1.0))
    theta = np.pi * (3.0 - np.sqrt(5.0)) * i
    return np.stack([r * np.cos(theta), r * np.sin(theta), z], axis=1)


def render_scene(meshes, placements, camera: CameraModel):
    """Rasterize several placed meshes into one z-buffered frame.

    Returns (depth float32, shade float64, mesh-id int32); mesh-id is -1
    on background pixels, else the index into ``meshes`` that won the
    z-test.
    """
    if len(meshes) != len(placements) or not meshes:
        raise InputError("render_scene needs one placement per mesh")
    world = [m.transformed(p) for m, p in zip(meshes, placements)]
    verts, tris, tri_albedo, tri_mesh = merge_meshes(world)
    verts_cam = camera.extrinsic.apply(verts)
    depth, shade, triid = _kernels.rasterize(
        verts_cam, tris, tri_albedo,
        camera.fx, camera.fy, camera.cx, camera.cy,
        camera.width, camera.height, NEAR_PLANE,
    )
    mesh_id = np.where(triid >= 0, tri_mesh[np.clip(triid, 0, None)], np.int32(-1))
    return depth.astype(np.float32), shade, mesh_id.astype(np.int32)


def render(mesh: TriangleMesh, camera: CameraModel, placement: ScaledPlacement,
           view_index: int = 0) -> RenderedView:
    """Render one placed mesh; empty frames are valid (mesh out of frustum)."""
    depth, shade, mesh_id = render_scene([mesh], [placement], camera)
    return RenderedView(
        view_index=view_index,
        pose=camera.extrinsic,
        silhouette=mesh_id >= 0,
        depth=depth,
        shaded=shade,
    )


def crop_to_object(image, silhouette):
    """Tight crop of ``image`` to the true pixels of ``silhouette``.

    Returns (cropped image, (x0, y0, x1, y1) inclusive bbox). The box
    width/height are the per-image dimensions entering the aspect-ratio
    similarity term.
    """
    sil = np.asarray(silhouette, dtype=bool)
    if image.shape[:2] != sil.shape:
        raise InputError("image and silhouette shapes differ")
    if not sil.any():
        raise EmptyMaskError("silhouette has no true pixels")
    rows = np.any(sil, axis=1)
    cols = np.any(sil, axis=0)
    y0 = int(np.argmax(rows))
    y1 = int(len(rows) - 1 - np.argmax(rows[::-1]))
    x0 = int(np.argmax(cols))
    x1 = int(len(cols) - 1 - np.argmax(cols[::-1]))
    return image[y0 : y1 + 1, x0 : x1 + 1], (x0, y0, x1, y1)
