"""File formats: depth/mask PNGs, raw float depth, text records, clouds.

All text records are line-oriented ``key = value`` with units in the
key names, so they diff cleanly and round-trip exactly (floats are
written with repr). Depth PNGs are 16-bit millimeters; lossless float
depth travels in a small raw format with a 16-byte header.
"""

from __future__ import annotations

import io
import os
import struct
import warnings

import numpy as np
from PIL import Image

from .errors import FormatError, InputError
from .geometry import CameraModel, RigidTransform
from .keypoints import PlacementSolution
from .viewmatch import ViewScore

DEPTH_RAW_MAGIC = b"MMDF"


# ---------------------------------------------------------------------------
# images


def write_depth_png(path, depth_m) -> None:
    """Depth in meters -> 16-bit grayscale PNG in millimeters.

    Values above 65.535 m saturate (with a warning); 0 stays 0
    (invalid).
    """
    mm = np.asarray(depth_m, dtype=np.float64) * 1000.0
    over = mm > 65535.0
    if over.any():
        warnings.warn(f"{int(over.sum())} depth pixel(s) saturate 16-bit millimeters")
    mm = np.clip(np.round(mm), 0, 65535).astype(np.uint16)
    Image.fromarray(mm, mode="I;16").save(path)


def read_depth_png(path) -> np.ndarray:
    img = Image.open(path)
    arr = np.asarray(img, dtype=np.float32)
    return arr / 1000.0


def write_gray_png(path, gray01) -> None:
    """Grayscale [0,1] -> 8-bit PNG."""
    arr = np.clip(np.round(np.asarray(gray01, dtype=np.float64) * 255.0), 0, 255)
    Image.fromarray(arr.astype(np.uint8), mode="L").save(path)


def read_gray_png(path) -> np.ndarray:
    return np.asarray(Image.open(path).convert("L"), dtype=np.float64) / 255.0


def write_gray16_png(path, gray01) -> None:
    """Grayscale [0,1] -> 16-bit PNG (debug render dumps)."""
    arr = np.clip(np.round(np.asarray(gray01, dtype=np.float64) * 65535.0), 0, 65535)
    Image.fromarray(arr.astype(np.uint16), mode="I;16").save(path)


def write_mask_png(path, mask) -> None:
    arr = np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8)
    Image.fromarray(arr, mode="L").save(path)


def read_mask_png(path) -> np.ndarray:
    return np.asarray(Image.open(path).convert("L")) >= 128


def write_provenance_png(path, provenance) -> None:
    """Provenance labels -> 8-bit PNG: 0 invalid, 128 original, 255 mesh."""
    lut = np.array([0, 128, 255], dtype=np.uint8)
    Image.fromarray(lut[np.asarray(provenance, dtype=np.uint8)], mode="L").save(path)


def read_provenance_png(path) -> np.ndarray:
    arr = np.asarray(Image.open(path).convert("L"))
    out = np.zeros(arr.shape, dtype=np.uint8)
    out[arr == 128] = 1
    out[arr == 255] = 2
    return out


# ---------------------------------------------------------------------------
# raw float depth: 16-byte header (magic, u32 width, u32 height, u32 zero)


def write_depth_raw(path, depth_m) -> None:
    d = np.ascontiguousarray(np.asarray(depth_m, dtype="<f4"))
    h, w = d.shape
    with open(path, "wb") as f:
        f.write(DEPTH_RAW_MAGIC + struct.pack("<III", w, h, 0))
        f.write(d.tobytes())


def read_depth_raw(path) -> np.ndarray:
    with open(path, "rb") as f:
        header = f.read(16)
        if len(header) < 16 or header[:4] != DEPTH_RAW_MAGIC:
            raise FormatError(f"{path}: not a raw depth file", 0)
        w, h, _ = struct.unpack("<III", header[4:])
        data = np.frombuffer(f.read(4 * w * h), dtype="<f4")
        if data.size != w * h:
            raise FormatError(f"{path}: truncated raw depth payload", 16)
    return data.reshape(h, w).astype(np.float32)


# ---------------------------------------------------------------------------
# key = value records


def _write_record(path, pairs) -> None:
    lines = []
    for key, val in pairs:
        if isinstance(val, np.ndarray):
            val = " ".join(repr(float(x)) for x in val.ravel())
        elif isinstance(val, float):
            val = repr(val)
        lines.append(f"{key} = {val}")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def _read_record(path) -> dict:
    out = {}
    with open(path) as f:
        for ln, raw in enumerate(f, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise FormatError(f"{path}:{ln}: expected 'key = value'", None)
            key, _, val = line.partition("=")
            out[key.strip()] = val.strip()
    return out


def _floats(text, n) -> np.ndarray:
    vals = np.array([float(t) for t in text.split()])
    if vals.size != n:
        raise FormatError(f"expected {n} numbers, got {vals.size}", None)
    return vals


def write_camera(path, camera: CameraModel) -> None:
    _write_record(path, [
        ("fx_px", float(camera.fx)),
        ("fy_px", float(camera.fy)),
        ("cx_px", float(camera.cx)),
        ("cy_px", float(camera.cy)),
        ("width_px", camera.width),
        ("height_px", camera.height),
        ("extrinsic_4x4", camera.extrinsic.matrix()),
    ])


def read_camera(path) -> CameraModel:
    rec = _read_record(path)
    try:
        m = _floats(rec["extrinsic_4x4"], 16).reshape(4, 4)
        return CameraModel(
            fx=float(rec["fx_px"]), fy=float(rec["fy_px"]),
            cx=float(rec["cx_px"]), cy=float(rec["cy_px"]),
            width=int(rec["width_px"]), height=int(rec["height_px"]),
            extrinsic=RigidTransform.from_matrix(m),
        )
    except KeyError as e:
        raise FormatError(f"{path}: missing camera key {e}", None)


def write_solution(path, solution: PlacementSolution) -> None:
    score = solution.score
    pairs = [
        ("r_v_3x3", solution.rotation),
        ("t_v_m", solution.translation),
        ("s_v", float(solution.scale)),
        ("t_v_4x4", solution.transform.matrix()),
        ("residual_m", float(solution.residual_m)),
        ("degraded", int(solution.degraded)),
    ]
    if score is not None:
        pairs += [
            ("view_index", score.view_index),
            ("roll_deg", float(score.roll_deg)),
            ("s_ssim", float(score.s_ssim)),
            ("s_edge", float(score.s_edge)),
            ("s_ratio", float(score.s_ratio)),
            ("score_total", float(score.total)),
        ]
    _write_record(path, pairs)


def read_solution(path) -> PlacementSolution:
    rec = _read_record(path)
    rotation = _floats(rec["r_v_3x3"], 9).reshape(3, 3)
    translation = _floats(rec["t_v_m"], 3)
    score = None
    if "view_index" in rec:
        score = ViewScore(
            view_index=int(rec["view_index"]),
            roll_deg=float(rec["roll_deg"]),
            s_ssim=float(rec["s_ssim"]),
            s_edge=float(rec["s_edge"]),
            s_ratio=float(rec["s_ratio"]),
            total=float(rec["score_total"]),
        )
    transform = RigidTransform(rotation, translation)
    residual = float(rec["residual_m"])
    return PlacementSolution(
        rotation=transform.rotation,
        translation=transform.translation,
        scale=float(rec["s_v"]),
        transform=transform,
        score=score,
        residual_m=residual,
        degraded=bool(int(rec["degraded"])),
    )


def write_gt(path, rotation, translation, scale, symmetry, kind) -> None:
    _write_record(path, [
        ("r_star_3x3", np.asarray(rotation, dtype=np.float64)),
        ("t_star_m", np.asarray(translation, dtype=np.float64)),
        ("s_star", float(scale)),
        ("symmetry", symmetry),
        ("kind", kind),
    ])


def read_gt(path) -> dict:
    rec = _read_record(path)
    return {
        "rotation": _floats(rec["r_star_3x3"], 9).reshape(3, 3),
        "translation": _floats(rec["t_star_m"], 3),
        "scale": float(rec["s_star"]),
        "symmetry": rec["symmetry"],
        "kind": rec.get("kind", "unknown"),
    }


# ---------------------------------------------------------------------------
# point clouds and CSV tables


def cloud_to_ply_ascii(points, provenance) -> bytes:
    """World points + provenance labels -> ascii PLY bytes."""
    buf = io.StringIO()
    buf.write(
        "ply\nformat ascii 1.0\n"
        f"element vertex {len(points)}\n"
        "property float x\nproperty float y\nproperty float z\n"
        "property uchar provenance\nend_header\n"
    )
    for p, lab in zip(points, provenance):
        buf.write(f"{p[0]:.6f} {p[1]:.6f} {p[2]:.6f} {int(lab)}\n")
    return buf.getvalue().encode("ascii")


def write_score_csv(path, scores: list[ViewScore], view_dirs) -> None:
    """Per-candidate score table; yaw/pitch derive from the view direction."""
    def fmt(x):
        return "" if np.isnan(x) else repr(float(x))

    with open(path, "w") as f:
        f.write("view_index,yaw_deg,pitch_deg,roll_deg,s_ssim,s_edge,s_ratio,total,refined\n")
        for s in scores:
            d = view_dirs[s.view_index]
            yaw = np.degrees(np.arctan2(d[1], d[0]))
            pitch = np.degrees(np.arcsin(np.clip(d[2], -1.0, 1.0)))
            f.write(
                f"{s.view_index},{yaw:.3f},{pitch:.3f},{s.roll_deg:.3f},"
                f"{fmt(s.s_ssim)},{fmt(s.s_edge)},{fmt(s.s_ratio)},{fmt(s.total)},"
                f"{int(s.refined)}\n"
            )


METRICS_CSV_HEADER = (
    "scene_id,rmse_m,rel,mae_m,n_pixels,hole_policy,ang_err_deg,trans_err_m,scale_err,status\n"
)


def metrics_csv_row(scene_id, metrics=None, ang=None, trans=None, scale=None,
                    status="ok") -> str:
    def fmt(x):
        return "" if x is None else repr(float(x))

    if metrics is None:
        return f"{scene_id},,,,,,,,,{status}\n"
    return (
        f"{scene_id},{fmt(metrics.rmse)},{fmt(metrics.rel)},{fmt(metrics.mae)},"
        f"{metrics.evaluated_pixel_count},{metrics.hole_policy},"
        f"{fmt(ang)},{fmt(trans)},{fmt(scale)},{status}\n"
    )


# ---------------------------------------------------------------------------
# scene packages on disk


def write_scene_dir(scene, out_dir) -> None:
    """One directory per scene: images, camera, mesh, ground truth, seed."""
    from .mesh import mesh_to_ply_bytes  # local import to avoid cycle

    os.makedirs(out_dir, exist_ok=True)
    write_gray_png(os.path.join(out_dir, "rgb.png"), scene.rgb)
    write_depth_png(os.path.join(out_dir, "depth_observed.png"), scene.observed_depth)
    write_depth_png(os.path.join(out_dir, "depth_clean.png"), scene.clean_depth)
    write_mask_png(os.path.join(out_dir, "mask.png"), scene.mask)
    write_camera(os.path.join(out_dir, "camera.txt"), scene.camera)
    with open(os.path.join(out_dir, "mesh.ply"), "wb") as f:
        f.write(mesh_to_ply_bytes(scene.mesh, binary=True))
    write_gt(os.path.join(out_dir, "gt.txt"), scene.gt_placement.rotation,
             scene.gt_placement.translation, scene.gt_placement.scale,
             scene.symmetry, scene.kind)
    with open(os.path.join(out_dir, "seed.txt"), "w") as f:
        f.write(f"{scene.seed}\n")


def read_scene_dir(scene_dir):
    """Load a scene directory back; ground truth is optional.

    Returns a dict with the observation arrays, camera, mesh, and (when
    gt.txt exists) the ground-truth placement fields.
    """
    from .mesh import load_mesh  # local import to avoid cycle

    def need(name):
        p = os.path.join(scene_dir, name)
        if not os.path.exists(p):
            raise InputError(f"scene directory {scene_dir} lacks {name}")
        return p

    out = {
        "scene_id": os.path.basename(os.path.normpath(scene_dir)),
        "rgb": read_gray_png(need("rgb.png")),
        "observed_depth": read_depth_png(need("depth_observed.png")),
        "mask": read_mask_png(need("mask.png")),
        "camera": read_camera(need("camera.txt")),
    }
    with open(need("mesh.ply"), "rb") as f:
        out["mesh"] = load_mesh(f.read(), "ply")
    clean = os.path.join(scene_dir, "depth_clean.png")
    out["clean_depth"] = read_depth_png(clean) if os.path.exists(clean) else None
    gt_path = os.path.join(scene_dir, "gt.txt")
    out["gt"] = read_gt(gt_path) if os.path.exists(gt_path) else None
    return out
