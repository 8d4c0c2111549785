"""Synthetic ground-truth scenes: procedural objects on a textured plane.

Each scene stands in for a real RGB-D capture: a procedural object
rests on the z = 0 plane, a tilted camera renders clean depth and a
grayscale shading image, and the depth inside the object mask is then
corrupted to emulate transparent-surface sensing failure. Ground-truth
placement, scale, and the canonical mesh are recorded so recovery can
be scored.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace

import numpy as np

from .config import PipelineConfig
from .errors import FrustumError, InputError, ParameterError, PipelineStageError
from .fusion import FusedDepth, fuse
from .geometry import (
    CameraModel,
    RigidTransform,
    ScaledPlacement,
    rotation_about_x,
    rotation_about_y,
    rotation_about_z,
)
from .keypoints import PlacementSolution, recover_placement
from .mesh import TriangleMesh
from .metrics import (
    SYM_BOX4_FLIP,
    SYM_Z_CONTINUOUS,
    DepthMetrics,
    depth_metrics,
    placement_error,
)
from .render import look_at_pose, render_scene, sample_view_sphere
from .viewmatch import ViewMatchResult, match_view

PRIMITIVE_KINDS = ("box", "cylinder", "cone", "goblet", "bottle", "flask")

KIND_SYMMETRY = {
    "box": SYM_BOX4_FLIP,
    "cylinder": SYM_Z_CONTINUOUS,
    "cone": SYM_Z_CONTINUOUS,
    "goblet": SYM_Z_CONTINUOUS,
    "bottle": SYM_Z_CONTINUOUS,
    "flask": SYM_Z_CONTINUOUS,
}

CORRUPTION_MODES = ("none", "zero", "noise", "refraction")


def substream(seed: int, name: str) -> np.random.Generator:
    """Named, reproducible RNG stream derived from one master seed."""
    digest = hashlib.sha256(name.encode()).digest()
    key = tuple(int.from_bytes(digest[i : i + 4], "little") for i in range(0, 8, 4))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


# ---------------------------------------------------------------------------
# Procedural primitives


def _vertical_albedo_ramp(verts, lo=0.6, hi=0.95):
    """Brighter toward the top: breaks the up/down ambiguity of solids of
    revolution the way real object texture would."""
    z = verts[:, 2]
    zmin, zmax = z.min(), z.max()
    if zmax - zmin < 1e-12:
        return np.full(len(verts), (lo + hi) / 2)
    return lo + (hi - lo) * (z - zmin) / (zmax - zmin)


def _lathe(profile, segments):
    """Solid of revolution around z from an (r, z) profile polyline.

    The profile is closed onto the axis at both ends, so the result is
    watertight.
    """
    verts = []
    rings = []
    for r, z in profile:
        ring = []
        for k in range(segments):
            a = 2 * np.pi * k / segments
            ring.append(len(verts))
            verts.append([r * np.cos(a), r * np.sin(a), z])
        rings.append(ring)
    bottom = len(verts)
    verts.append([0.0, 0.0, profile[0][1]])
    top = len(verts)
    verts.append([0.0, 0.0, profile[-1][1]])

    tris = []
    for i in range(len(rings) - 1):
        for k in range(segments):
            k2 = (k + 1) % segments
            a, b = rings[i][k], rings[i][k2]
            c, d = rings[i + 1][k2], rings[i + 1][k]
            tris.append([a, b, c])
            tris.append([a, c, d])
    for k in range(segments):
        k2 = (k + 1) % segments
        tris.append([rings[0][k2], rings[0][k], bottom])
        tris.append([rings[-1][k], rings[-1][k2], top])
    verts = np.array(verts)
    return TriangleMesh(verts, np.array(tris, dtype=np.int32),
                        _vertical_albedo_ramp(verts))


def _box_mesh(sx, sy, sz):
    hx, hy, hz = sx / 2, sy / 2, sz / 2
    v = np.array(
        [[x, y, z] for x in (-hx, hx) for y in (-hy, hy) for z in (-hz, hz)]
    )
    f = np.array(
        [
            [0, 1, 3], [0, 3, 2],  # -x
            [4, 6, 7], [4, 7, 5],  # +x
            [0, 4, 5], [0, 5, 1],  # -y
            [2, 3, 7], [2, 7, 6],  # +y
            [0, 2, 6], [0, 6, 4],  # -z
            [1, 5, 7], [1, 7, 3],  # +z
        ],
        dtype=np.int32,
    )
    # corner-graded albedo: each face gets a distinct mean brightness
    n = v / np.array([sx, sy, sz])
    albedo = 0.5 + 0.15 * (n[:, 0] + 0.5) + 0.1 * (n[:, 1] + 0.5) + 0.2 * (n[:, 2] + 0.5)
    return TriangleMesh(v, f, albedo)


_PARAM_RANGES = {
    # sampled box extents come from distinct bands (see make_primitive):
    # near-degenerate boxes alias under 90-degree view changes
    "box": {"sx": (0.5, 1.0), "sy": (0.5, 1.0), "sz": (0.5, 1.0)},
    "cylinder": {"r": (0.25, 0.45), "h": (0.8, 1.0)},
    "cone": {"r": (0.3, 0.5), "h": (0.8, 1.0)},
    "goblet": {
        "base_r": (0.22, 0.3), "stem_r": (0.05, 0.09), "bowl_r": (0.26, 0.34),
        "stem_top": (0.45, 0.55), "h": (1.0, 1.0),
    },
    "bottle": {
        "body_r": (0.22, 0.32), "neck_r": (0.07, 0.12), "shoulder": (0.55, 0.7),
        "h": (1.0, 1.0),
    },
    "flask": {"base_r": (0.35, 0.5), "neck_r": (0.07, 0.12), "shoulder": (0.55, 0.7),
              "h": (1.0, 1.0)},
}


def _check(cond, msg):
    if not cond:
        raise ParameterError(msg)


def make_primitive(kind: str, params: dict | None = None, seed: int = 0,
                   segments: int = 48) -> TriangleMesh:
    """Deterministic watertight primitive in the canonical frame.

    Parameters left out of ``params`` are drawn from documented ranges
    using the seed; passing every parameter makes the seed irrelevant.
    The declared symmetry group is KIND_SYMMETRY[kind].
    """
    if kind not in PRIMITIVE_KINDS:
        raise ParameterError(f"unknown primitive kind {kind!r}")
    if segments < 8:
        raise ParameterError("segments must be >= 8")
    rng = substream(seed, f"primitive/{kind}")
    p = {}
    if kind == "box" and not params:
        bands = [rng.uniform(0.5, 0.62), rng.uniform(0.7, 0.82), rng.uniform(0.9, 1.0)]
        order = rng.permutation(3)
        p = {"sx": bands[order[0]], "sy": bands[order[1]], "sz": bands[order[2]]}
    for name, (lo, hi) in _PARAM_RANGES[kind].items():
        if params and name in params:
            p[name] = float(params[name])
        elif name not in p:
            p[name] = float(rng.uniform(lo, hi))

    if kind == "box":
        _check(min(p["sx"], p["sy"], p["sz"]) > 0, "box extents must be positive")
        mesh = _box_mesh(p["sx"], p["sy"], p["sz"])
    elif kind == "cylinder":
        _check(p["r"] > 0 and p["h"] > 0, "cylinder needs positive radius and height")
        mesh = _lathe([(p["r"], 0.0), (p["r"], p["h"])], segments)
    elif kind == "cone":
        _check(p["r"] > 0 and p["h"] > 0,
               "cone apex angle must be positive (r > 0, h > 0)")
        # tip ring at a tiny radius keeps triangles non-degenerate
        mesh = _lathe([(p["r"], 0.0), (p["r"] * 1e-3, p["h"])], segments)
    elif kind == "goblet":
        _check(0 < p["stem_r"] < p["bowl_r"], "goblet stem must be thinner than bowl")
        _check(p["stem_r"] < p["base_r"], "goblet stem must be thinner than base")
        if not (params and "base_r" in params):
            # keep the bowl overhang mild so the contact edge stays on the base
            p["base_r"] = max(p["base_r"], 0.8 * p["bowl_r"])
        h = p["h"]
        mesh = _lathe(
            [
                (p["base_r"], 0.0),
                (p["base_r"], 0.05 * h),
                (p["stem_r"], 0.12 * h),
                (p["stem_r"], p["stem_top"] * h),
                (p["bowl_r"] * 0.8, (p["stem_top"] + 0.12) * h),
                (p["bowl_r"], (p["stem_top"] + 0.3) * h),
                (p["bowl_r"] * 0.95, h),
            ],
            segments,
        )
    elif kind == "bottle":
        _check(0 < p["neck_r"] < p["body_r"], "bottle neck must be thinner than body")
        h = p["h"]
        mesh = _lathe(
            [
                (p["body_r"], 0.0),
                (p["body_r"], p["shoulder"] * h),
                (p["neck_r"], (p["shoulder"] + 0.18) * h),
                (p["neck_r"], h),
            ],
            segments,
        )
    else:  # flask
        _check(0 < p["neck_r"] < p["base_r"], "flask neck must be thinner than base")
        h = p["h"]
        mesh = _lathe(
            [
                (p["base_r"], 0.0),
                (p["base_r"] * 0.96, 0.1 * h),
                (p["neck_r"], p["shoulder"] * h),
                (p["neck_r"], h),
            ],
            segments,
        )
    return mesh.canonicalize()


def checkerboard_plane(extent: float = 2.4, tile: float = 0.15,
                       dark: float = 0.35, light: float = 0.75) -> TriangleMesh:
    """Finite checkered plane at z = 0 built from independent tiles.

    Tiling keeps every triangle small, so near-camera geometry never
    trips the renderer's no-clipping rule, and gives the shading image
    texture for the similarity terms to latch onto.
    """
    n = int(round(2 * extent / tile))
    verts, tris, albedo = [], [], []
    for iy in range(n):
        for ix in range(n):
            x0 = -extent + ix * tile
            y0 = -extent + iy * tile
            a = dark if (ix + iy) % 2 == 0 else light
            base = len(verts)
            verts += [[x0, y0, 0.0], [x0 + tile, y0, 0.0],
                      [x0 + tile, y0 + tile, 0.0], [x0, y0 + tile, 0.0]]
            tris += [[base, base + 1, base + 2], [base, base + 2, base + 3]]
            albedo += [a] * 4
    return TriangleMesh(np.array(verts), np.array(tris, dtype=np.int32), np.array(albedo))


# ---------------------------------------------------------------------------
# Scenes


@dataclass(frozen=True)
class SceneCameraConfig:
    width: int = 320
    height: int = 240
    focal_px: float = 380.0
    distance_m: tuple[float, float] = (0.55, 0.7)
    elevation_deg: tuple[float, float] = (25.0, 55.0)


@dataclass(frozen=True)
class ScenePlacementConfig:
    scale_m: tuple[float, float] = (0.10, 0.17)
    offset_m: float = 0.05
    tip_boxes: bool = True  # boxes may rest on any face, not just upright


@dataclass(frozen=True)
class CorruptionConfig:
    mode: str = "refraction"
    noise_sigma_m: float = 0.02
    dropout: float = 0.4
    refraction_sigma_m: float = 0.005

    def __post_init__(self):
        if self.mode not in CORRUPTION_MODES:
            raise InputError(f"unknown corruption mode {self.mode!r}")


@dataclass(frozen=True)
class ScenePackage:
    """One synthetic observation bundle plus its ground truth."""

    scene_id: str
    rgb: np.ndarray  # grayscale [0, 1] shading of the clean scene
    observed_depth: np.ndarray  # float32 m, corrupted inside the mask
    clean_depth: np.ndarray  # float32 m, ground truth
    mask: np.ndarray  # bool object mask
    camera: CameraModel
    mesh: TriangleMesh  # canonical object mesh (the reconstructor stand-in)
    gt_placement: ScaledPlacement
    symmetry: str
    kind: str
    seed: int
    corruption: CorruptionConfig


def _sample_resting_rotation(kind: str, rng, tip_boxes: bool) -> np.ndarray:
    yaw = rotation_about_z(rng.uniform(0, 2 * np.pi))
    if kind == "box" and tip_boxes:
        face = rng.integers(0, 6)
        flips = [
            np.eye(3),
            rotation_about_x(np.pi / 2), rotation_about_x(-np.pi / 2),
            rotation_about_y(np.pi / 2), rotation_about_y(-np.pi / 2),
            rotation_about_x(np.pi),
        ]
        return yaw @ flips[face]
    return yaw


def make_scene(mesh: TriangleMesh, kind: str, seed: int,
               corruption: CorruptionConfig = CorruptionConfig(),
               camera_cfg: SceneCameraConfig = SceneCameraConfig(),
               placement_cfg: ScenePlacementConfig = ScenePlacementConfig(),
               scene_id: str | None = None,
               max_resamples: int = 20) -> ScenePackage:
    """Place the object on the plane, render, and corrupt the mask region.

    Fully deterministic per (seed, configs). The object always rests on
    z = 0; cameras are sampled on an elevation/azimuth shell looking at
    the object. Raises FrustumError if no sample keeps the object fully
    in frame.
    """
    plane = checkerboard_plane()
    rng = substream(seed, "scene/sample")
    w, h = camera_cfg.width, camera_cfg.height

    for _ in range(max_resamples):
        scale = float(rng.uniform(*placement_cfg.scale_m))
        rot = _sample_resting_rotation(kind, rng, placement_cfg.tip_boxes)
        xy = rng.uniform(-placement_cfg.offset_m, placement_cfg.offset_m, size=2)
        z_lift = -float((mesh.vertices @ rot.T)[:, 2].min()) * scale
        t_star = np.array([xy[0], xy[1], z_lift])
        gt = ScaledPlacement(RigidTransform(rot, t_star), scale)

        elev = np.radians(rng.uniform(*camera_cfg.elevation_deg))
        azim = rng.uniform(0, 2 * np.pi)
        dist = rng.uniform(*camera_cfg.distance_m)
        look = t_star
        cam_pos = look + dist * np.array(
            [np.cos(elev) * np.cos(azim), np.cos(elev) * np.sin(azim), np.sin(elev)]
        )
        camera = CameraModel(
            fx=camera_cfg.focal_px, fy=camera_cfg.focal_px,
            cx=w / 2.0, cy=h / 2.0, width=w, height=h,
            extrinsic=look_at_pose(cam_pos, look),
        )

        depth, shade, mesh_id = render_scene([plane, mesh], [ScaledPlacement.identity(), gt], camera)
        mask = mesh_id == 1
        if mask.sum() < 300:
            continue
        ys, xs = np.where(mask)
        if xs.min() < 2 or ys.min() < 2 or xs.max() > w - 3 or ys.max() > h - 13:
            continue  # touching the frame edge (or no room for the support scan)
        break
    else:
        raise FrustumError(f"object left the frustum in {max_resamples} samples (seed {seed})")

    observed = depth.copy()
    crng = substream(seed, "scene/corruption")
    if corruption.mode == "zero":
        observed[mask] = 0.0
    elif corruption.mode == "noise":
        vals = observed[mask] + crng.normal(0, corruption.noise_sigma_m, mask.sum())
        drop = crng.random(mask.sum()) < corruption.dropout
        vals[drop] = 0.0
        observed[mask] = np.maximum(vals, 0.0)
    elif corruption.mode == "refraction":
        bg_depth, _, _ = render_scene([plane], [ScaledPlacement.identity()], camera)
        vals = bg_depth[mask] + crng.normal(0, corruption.refraction_sigma_m, mask.sum())
        vals[bg_depth[mask] <= 0] = 0.0
        observed[mask] = np.maximum(vals, 0.0).astype(np.float32)

    return ScenePackage(
        scene_id=scene_id or f"scene_{seed:06d}",
        rgb=shade,
        observed_depth=observed.astype(np.float32),
        clean_depth=depth.astype(np.float32),
        mask=mask,
        camera=camera,
        mesh=mesh,
        gt_placement=gt,
        symmetry=KIND_SYMMETRY[kind],
        kind=kind,
        seed=seed,
        corruption=corruption,
    )


def make_random_scene(seed: int, kind: str | None = None,
                      corruption: CorruptionConfig = CorruptionConfig(),
                      camera_cfg: SceneCameraConfig = SceneCameraConfig(),
                      scene_id: str | None = None) -> ScenePackage:
    """Random primitive kind/params + scene, all derived from one seed."""
    if kind is None:
        rng = substream(seed, "scene/kind")
        kind = PRIMITIVE_KINDS[rng.integers(0, len(PRIMITIVE_KINDS))]
    mesh = make_primitive(kind, None, seed)
    return make_scene(mesh, kind, seed, corruption, camera_cfg, scene_id=scene_id)


# ---------------------------------------------------------------------------
# End-to-end runner


@dataclass(frozen=True)
class PipelineResult:
    solution: PlacementSolution
    fused: FusedDepth
    match: ViewMatchResult
    metrics: DepthMetrics | None = None
    corrupted_metrics: DepthMetrics | None = None
    rotation_err_deg: float | None = None
    translation_err_m: float | None = None
    scale_err: float | None = None


def _stage(name):
    class _Ctx:
        def __enter__(self):
            return None

        def __exit__(self, exc_type, exc, tb):
            if exc is not None and not isinstance(exc, PipelineStageError):
                raise PipelineStageError(name, exc) from exc
            return False

    return _Ctx()


def reconstruct_observation(rgb, observed_depth, mask, camera, mesh,
                            config: PipelineConfig | None = None):
    """Ground-truth-free core: observation in, (solution, fused, match) out."""
    config = config or PipelineConfig()
    with _stage("view-matching"):
        cameras = sample_view_sphere(config.n_views, config.sphere_radius)
        match = match_view(rgb, mask, mesh, cameras,
                           config.similarity(), config.render_res,
                           observed_camera=camera)
        r_v_world = camera.extrinsic.rotation.T @ match.rotation.rotation

    with _stage("keypoint-matching"):
        solution, _ = recover_placement(
            mask, observed_depth, mesh, r_v_world, camera,
            scan_px=config.scan_px, snap_px=config.snap_px,
            residual_gate_m=config.residual_gate_m, score=match.best,
        )

    with _stage("fusion"):
        fused = fuse(observed_depth, mask, mesh, solution, camera)
    return solution, fused, match


def run_pipeline(scene: ScenePackage, config: PipelineConfig | None = None,
                 with_metrics: bool = True) -> PipelineResult:
    """view matching -> keypoint matching -> fusion -> metrics, one scene.

    Stage failures re-raise as PipelineStageError tagged with the stage
    name.
    """
    config = config or PipelineConfig()
    solution, fused, match = reconstruct_observation(
        scene.rgb, scene.observed_depth, scene.mask, scene.camera, scene.mesh,
        config)

    metrics = corrupted = None
    ang = trans = sc = None
    if with_metrics:
        with _stage("metrics"):
            metrics = depth_metrics(fused.depth, scene.clean_depth, scene.mask,
                                    config.hole_policy)
            corrupted = depth_metrics(scene.observed_depth, scene.clean_depth,
                                      scene.mask, config.hole_policy)
            ang, trans, sc = placement_error(
                solution, scene.gt_placement.rotation,
                scene.gt_placement.translation, scene.gt_placement.scale,
                scene.symmetry,
            )
    return PipelineResult(
        solution=solution, fused=fused, match=match, metrics=metrics,
        corrupted_metrics=corrupted, rotation_err_deg=ang,
        translation_err_m=trans, scale_err=sc,
    )
