"""Pinhole cameras, rigid transforms, and scaled placements.

Conventions used throughout the package:

* World frame is right-handed with z up; the support plane is z = 0.
* Camera frame is the usual computer-vision one: x right, y down,
  z forward along the viewing direction. Depth images store z-depth
  in meters (not ray length), 0 marks an invalid pixel.
* Image coordinates (u, v) are continuous; pixel (i, j) covers
  [i, i+1) x [j, j+1) with its center at (i + 0.5, j + 0.5).
* ``CameraModel.extrinsic`` maps world points into the camera frame.

Everything here is immutable after construction and safe to share
across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BehindCameraError, InputError, InvalidDepthError

_ORTHO_TOL = 1e-9


def _frozen(a, dtype=np.float64):
    out = np.ascontiguousarray(np.asarray(a, dtype=dtype))
    out.flags.writeable = False
    return out


def orthonormalize_rotation(m) -> np.ndarray:
    """Project an arbitrary 3x3 matrix onto the nearest proper rotation.

    Raises InputError for reflections or rank-deficient input; small
    numerical drift is silently repaired.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.shape != (3, 3):
        raise InputError(f"rotation must be 3x3, got {m.shape}")
    if not np.all(np.isfinite(m)):
        raise InputError("rotation contains non-finite entries")
    u, s, vt = np.linalg.svd(m)
    if s[-1] <= 1e-12 * max(s[0], 1.0):
        raise InputError("rotation matrix is rank deficient")
    r = u @ vt
    if np.linalg.det(r) < 0:
        raise InputError("matrix is a reflection, not a rotation")
    return r


@dataclass(frozen=True)
class RigidTransform:
    """SE(3) element: ``apply(p) = rotation @ p + translation``."""

    rotation: np.ndarray
    translation: np.ndarray

    def __init__(self, rotation=None, translation=None):
        rotation = np.eye(3) if rotation is None else np.asarray(rotation, dtype=np.float64)
        translation = np.zeros(3) if translation is None else np.asarray(translation, dtype=np.float64)
        if translation.shape != (3,):
            raise InputError(f"translation must be a 3-vector, got {translation.shape}")
        if not np.all(np.isfinite(translation)):
            raise InputError("translation contains non-finite entries")
        err = np.abs(rotation.T @ rotation - np.eye(3)).max()
        if err > _ORTHO_TOL or abs(np.linalg.det(rotation) - 1.0) > 1e-6:
            rotation = orthonormalize_rotation(rotation)
        object.__setattr__(self, "rotation", _frozen(rotation))
        object.__setattr__(self, "translation", _frozen(translation))

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform()

    @staticmethod
    def from_matrix(m) -> "RigidTransform":
        m = np.asarray(m, dtype=np.float64)
        if m.shape != (4, 4):
            raise InputError(f"expected 4x4 matrix, got {m.shape}")
        return RigidTransform(m[:3, :3], m[:3, 3])

    @staticmethod
    def from_quaternion(w, x, y, z, translation=None) -> "RigidTransform":
        """Unit quaternion (w, x, y, z) to rotation; normalizes the input."""
        q = np.array([w, x, y, z], dtype=np.float64)
        n = np.linalg.norm(q)
        if n < 1e-12:
            raise InputError("zero quaternion")
        w, x, y, z = q / n
        r = np.array(
            [
                [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
                [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
                [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
            ]
        )
        return RigidTransform(r, translation)

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """self after other: apply(compose(a, b), p) == apply(a, apply(b, p))."""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def inverse(self) -> "RigidTransform":
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)

    def apply(self, points) -> np.ndarray:
        """Transform one point (3,) or a stack (N, 3)."""
        p = np.asarray(points, dtype=np.float64)
        return p @ self.rotation.T + self.translation


def rotation_about_z(angle_rad: float) -> np.ndarray:
    c, s = np.cos(angle_rad), np.sin(angle_rad)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rotation_about_x(angle_rad: float) -> np.ndarray:
    c, s = np.cos(angle_rad), np.sin(angle_rad)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rotation_about_y(angle_rad: float) -> np.ndarray:
    c, s = np.cos(angle_rad), np.sin(angle_rad)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rotation_angle_deg(r) -> float:
    """Geodesic angle of a rotation matrix, in degrees."""
    tr = np.clip((np.trace(np.asarray(r)) - 1.0) / 2.0, -1.0, 1.0)
    return float(np.degrees(np.arccos(tr)))


@dataclass(frozen=True)
class ScaledPlacement:
    """Uniform scale in the object frame followed by a rigid transform.

    ``apply(p) = rotation @ (scale * p) + translation`` -- the scale acts
    before rotation/translation so size estimates stay independent of
    position.
    """

    transform: RigidTransform
    scale: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.scale) and self.scale > 0):
            raise InputError(f"scale must be positive, got {self.scale}")

    @staticmethod
    def identity() -> "ScaledPlacement":
        return ScaledPlacement(RigidTransform.identity(), 1.0)

    @property
    def rotation(self) -> np.ndarray:
        return self.transform.rotation

    @property
    def translation(self) -> np.ndarray:
        return self.transform.translation

    def apply(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=np.float64)
        return (self.scale * p) @ self.rotation.T + self.translation


@dataclass(frozen=True)
class CameraModel:
    """Pinhole intrinsics plus a camera-from-world extrinsic pose."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    extrinsic: RigidTransform = field(default_factory=RigidTransform.identity)

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise InputError(f"focal lengths must be positive, got fx={self.fx} fy={self.fy}")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise InputError(
                f"principal point ({self.cx}, {self.cy}) outside {self.width}x{self.height} image"
            )

    def to_camera(self, points) -> np.ndarray:
        return self.extrinsic.apply(points)

    def to_world(self, points_cam) -> np.ndarray:
        return self.extrinsic.inverse().apply(points_cam)

    def project(self, point) -> tuple[float, float, float]:
        """World point -> (u, v, z-depth). Raises BehindCameraError for z <= 0."""
        x, y, z = self.extrinsic.apply(np.asarray(point, dtype=np.float64))
        if z <= 0:
            raise BehindCameraError(f"point has camera-frame depth {z:.6g} <= 0")
        return (self.fx * x / z + self.cx, self.fy * y / z + self.cy, z)

    def unproject(self, pixel, depth: float) -> np.ndarray:
        """(u, v) pixel plus z-depth in meters -> world point. Inverse of project."""
        if not depth > 0:
            raise InvalidDepthError(f"depth must be positive, got {depth}")
        u, v = float(pixel[0]), float(pixel[1])
        p_cam = np.array(
            [(u - self.cx) * depth / self.fx, (v - self.cy) * depth / self.fy, depth]
        )
        return self.extrinsic.inverse().apply(p_cam)

    def unproject_grid(self, depth_map) -> np.ndarray:
        """Unproject every pixel of a depth map at its center; zeros give zeros.

        Returns an (H, W, 3) array of world points; rows with invalid
        depth are meaningless and must be filtered by the caller.
        """
        d = np.asarray(depth_map, dtype=np.float64)
        h, w = d.shape
        u = np.arange(w, dtype=np.float64) + 0.5
        v = np.arange(h, dtype=np.float64) + 0.5
        uu, vv = np.meshgrid(u, v)
        x = (uu - self.cx) * d / self.fx
        y = (vv - self.cy) * d / self.fy
        pts_cam = np.stack([x, y, d], axis=-1)
        inv = self.extrinsic.inverse()
        return pts_cam.reshape(-1, 3) @ inv.rotation.T.copy() + inv.translation

    def with_resolution_scale(self, factor: float) -> "CameraModel":
        """Same field of view at ``factor`` times the pixel resolution."""
        return CameraModel(
            fx=self.fx * factor,
            fy=self.fy * factor,
            cx=self.cx * factor,
            cy=self.cy * factor,
            width=int(round(self.width * factor)),
            height=int(round(self.height * factor)),
            extrinsic=self.extrinsic,
        )
