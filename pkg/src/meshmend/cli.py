"""Command-line interface: reconstruct, synth, eval, render-views.

stdout carries exactly one summary line per invocation; diagnostics go
to stderr. Exit codes are stable:

    0  success
    1  unexpected failure
    2  input error (missing/inconsistent files, bad parameters)
    3  matching error (view or keypoint stage could not solve)
    4  degenerate geometry (empty masks/meshes, collapsed keypoints)
    5  output/write error
    6  empty evaluation (no scenes or no pixels)

The default output root comes from $MESHMEND_OUT_ROOT when --out is
omitted.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import fields

import numpy as np

from . import fileio
from .config import ENV_OUT_ROOT, PipelineConfig
from .errors import (
    DegenerateGeometryError,
    EmptyEvaluationError,
    InputError,
    MatchingError,
    MeshMendError,
    OutputError,
    PipelineStageError,
)
from .fusion import to_point_cloud
from .geometry import ScaledPlacement
from .mesh import load_mesh
from .metrics import placement_error
from .render import render, sample_view_sphere, view_sphere_directions, virtual_camera
from .synth import (
    CORRUPTION_MODES,
    PRIMITIVE_KINDS,
    CorruptionConfig,
    ScenePackage,
    make_random_scene,
    reconstruct_observation,
    run_pipeline,
    substream,
)

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_INPUT = 2
EXIT_MATCHING = 3
EXIT_DEGENERATE = 4
EXIT_OUTPUT = 5
EXIT_EMPTY_EVAL = 6


def _exit_code_for(exc) -> int:
    if isinstance(exc, PipelineStageError):
        exc = exc.cause
    if isinstance(exc, EmptyEvaluationError):
        return EXIT_EMPTY_EVAL
    if isinstance(exc, DegenerateGeometryError):
        return EXIT_DEGENERATE
    if isinstance(exc, MatchingError):
        return EXIT_MATCHING
    if isinstance(exc, InputError):
        return EXIT_INPUT
    if isinstance(exc, (OutputError, OSError)):
        return EXIT_OUTPUT
    if isinstance(exc, MeshMendError):
        return EXIT_UNEXPECTED
    return EXIT_UNEXPECTED


_CONFIG_CASTS = {"int": int, "float": float, "str": str}


def _add_config_flags(parser) -> None:
    for f in fields(PipelineConfig):
        if f.name == "out_dir":
            continue
        flag = "--" + f.name.replace("_", "-")
        parser.add_argument(flag, type=_CONFIG_CASTS[f.type], default=None,
                            help=f"pipeline config field {f.name}")
    parser.add_argument("--config", default=None,
                        help="config file (key = value); flags override it")


def _config_from_args(args) -> PipelineConfig:
    if args.config:
        if not os.path.exists(args.config):
            raise InputError(f"config file not found: {args.config}")
        with open(args.config) as f:
            cfg = PipelineConfig.from_text(f.read())
    else:
        cfg = PipelineConfig()
    for f in fields(PipelineConfig):
        if f.name == "out_dir":
            continue
        val = getattr(args, f.name, None)
        if val is not None:
            setattr(cfg, f.name, val)
    return cfg


def _resolve_out(args, default_name) -> str:
    if args.out:
        return args.out
    root = os.environ.get(ENV_OUT_ROOT, "")
    if not root:
        raise InputError(f"--out not given and ${ENV_OUT_ROOT} unset")
    return os.path.join(root, default_name)


def _load_observation(args):
    """Fail-fast input loading for reconstruct/render-views."""
    if args.scene_dir:
        if not os.path.isdir(args.scene_dir):
            raise InputError(f"scene directory not found: {args.scene_dir}")
        return fileio.read_scene_dir(args.scene_dir)
    needed = {"rgb": args.rgb, "depth": args.depth, "mask": args.mask,
              "camera": args.camera, "mesh": args.mesh}
    for name, path in needed.items():
        if not path:
            raise InputError(f"--{name} required when --scene-dir is not given")
        if not os.path.exists(path):
            raise InputError(f"{name} file not found: {path}")
    with open(args.mesh, "rb") as f:
        mesh = load_mesh(f.read(), os.path.splitext(args.mesh)[1].lstrip("."))
    return {
        "scene_id": os.path.splitext(os.path.basename(args.rgb))[0],
        "rgb": fileio.read_gray_png(args.rgb),
        "observed_depth": fileio.read_depth_png(args.depth),
        "mask": fileio.read_mask_png(args.mask),
        "camera": fileio.read_camera(args.camera),
        "mesh": mesh,
        "clean_depth": None,
        "gt": None,
    }


def _validate_observation(obs) -> None:
    shape = obs["observed_depth"].shape
    if obs["rgb"].shape != shape or obs["mask"].shape != shape:
        raise InputError(
            f"image dimensions disagree: rgb {obs['rgb'].shape}, "
            f"depth {shape}, mask {obs['mask'].shape}"
        )
    cam = obs["camera"]
    if (cam.height, cam.width) != shape:
        raise InputError(
            f"camera is {cam.width}x{cam.height} but images are "
            f"{shape[1]}x{shape[0]}"
        )


def cmd_reconstruct(args) -> int:
    obs = _load_observation(args)
    _validate_observation(obs)
    config = _config_from_args(args)
    out = _resolve_out(args, f"reconstruct_{obs['scene_id']}")
    os.makedirs(out, exist_ok=True)

    solution, fused, match = reconstruct_observation(
        obs["rgb"], obs["observed_depth"], obs["mask"], obs["camera"],
        obs["mesh"], config)

    fileio.write_solution(os.path.join(out, "solution.txt"), solution)
    fileio.write_depth_png(os.path.join(out, "fused_depth.png"), fused.depth)
    fileio.write_depth_raw(os.path.join(out, "fused_depth.f32"), fused.depth)
    fileio.write_provenance_png(os.path.join(out, "provenance.png"), fused.provenance)
    pts, prov = to_point_cloud(fused, obs["camera"])
    with open(os.path.join(out, "cloud.ply"), "wb") as f:
        f.write(fileio.cloud_to_ply_ascii(pts, prov))
    fileio.write_score_csv(os.path.join(out, "view_scores.csv"), match.scores,
                           view_sphere_directions(config.n_views))
    for w in fused.warnings:
        print(f"warning: {w}", file=sys.stderr)
    print(f"ok {out} view={match.best.view_index} "
          f"residual_mm={solution.residual_m * 1000:.2f} "
          f"degraded={int(solution.degraded)}")
    return EXIT_OK


def cmd_synth(args) -> int:
    config = _config_from_args(args)
    out = _resolve_out(args, "scenes")
    os.makedirs(out, exist_ok=True)
    kinds = None
    if args.kinds != "mix":
        kinds = [k.strip() for k in args.kinds.split(",") if k.strip()]
        for k in kinds:
            if k not in PRIMITIVE_KINDS:
                raise InputError(f"unknown primitive kind {k!r}")
    corruption = CorruptionConfig(
        mode=args.corruption,
        noise_sigma_m=args.noise_sigma_m,
        dropout=args.dropout,
        refraction_sigma_m=args.refraction_sigma_m,
    )
    rows = []
    for i in range(args.count):
        seed_i = config.seed * 1_000_003 + i
        kind = kinds[i % len(kinds)] if kinds else None
        scene_id = f"scene_{i:04d}"
        scene = make_random_scene(seed_i, kind=kind, corruption=corruption,
                                  scene_id=scene_id)
        scene_dir = os.path.join(out, scene_id)
        fileio.write_scene_dir(scene, scene_dir)
        rows.append(f"{scene_id},{scene_dir},{scene.kind},{corruption.mode},{seed_i}\n")
    with open(os.path.join(out, "manifest.csv"), "w") as f:
        f.write("scene_id,dir,kind,corruption,seed\n")
        f.writelines(rows)
    print(f"ok {args.count} scene(s) -> {out}")
    return EXIT_OK


def _scene_from_obs(obs) -> ScenePackage:
    gt = obs["gt"]
    from .geometry import RigidTransform  # local: keep module import light

    placement = ScaledPlacement(
        RigidTransform(gt["rotation"], gt["translation"]), gt["scale"]
    ) if gt else ScaledPlacement.identity()
    return ScenePackage(
        scene_id=obs["scene_id"],
        rgb=obs["rgb"],
        observed_depth=obs["observed_depth"],
        clean_depth=obs["clean_depth"],
        mask=obs["mask"],
        camera=obs["camera"],
        mesh=obs["mesh"],
        gt_placement=placement,
        symmetry=gt["symmetry"] if gt else "none",
        kind=gt["kind"] if gt else "unknown",
        seed=0,
        corruption=CorruptionConfig(mode="none"),
    )


def _eval_one(scene_dir: str, config_text: str) -> tuple[str, str]:
    """Worker for cmd_eval; returns (scene_id, metrics CSV row)."""
    config = PipelineConfig.from_text(config_text)
    scene_id = os.path.basename(os.path.normpath(scene_dir))
    try:
        obs = fileio.read_scene_dir(scene_dir)
        scene_id = obs["scene_id"]
        if obs["gt"] is None or obs["clean_depth"] is None:
            return scene_id, fileio.metrics_csv_row(scene_id, status="skipped_no_gt")
        _validate_observation(obs)
        scene = _scene_from_obs(obs)
        result = run_pipeline(scene, config)
    except PipelineStageError as e:
        return scene_id, fileio.metrics_csv_row(scene_id, status=f"error:{e.stage}")
    except MeshMendError as e:
        return scene_id, fileio.metrics_csv_row(scene_id, status=f"error:{type(e).__name__}")
    return scene_id, fileio.metrics_csv_row(
        scene_id, result.metrics, result.rotation_err_deg,
        result.translation_err_m, result.scale_err)


def cmd_eval(args) -> int:
    config = _config_from_args(args)
    if args.scenes:
        scene_dirs = list(args.scenes)
    else:
        root = args.scene_root
        if not root or not os.path.isdir(root):
            raise InputError(f"scene root not found: {root}")
        scene_dirs = sorted(
            os.path.join(root, d) for d in os.listdir(root)
            if os.path.isdir(os.path.join(root, d))
        )
    if not scene_dirs:
        raise EmptyEvaluationError("no scenes to evaluate")
    out = _resolve_out(args, "eval")
    os.makedirs(out, exist_ok=True)

    cfg_text = config.to_text()
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_eval_one, scene_dirs, [cfg_text] * len(scene_dirs)))
    else:
        results = [_eval_one(d, cfg_text) for d in scene_dirs]

    rows = [row for _, row in results]
    # aggregate over scenes that produced metrics
    vals = []
    for row in rows:
        parts = row.strip().split(",")
        if parts[-1] == "ok":
            vals.append([float(parts[1]), float(parts[2]), float(parts[3])])
    with open(os.path.join(out, "metrics.csv"), "w") as f:
        f.write(fileio.METRICS_CSV_HEADER)
        f.writelines(rows)
        if vals:
            m = np.mean(np.array(vals), axis=0)
            f.write(f"mean,{float(m[0])!r},{float(m[1])!r},{float(m[2])!r},,,,,,summary\n")
    n_ok = len(vals)
    if vals:
        m = np.mean(np.array(vals), axis=0)
        print(f"ok {n_ok}/{len(scene_dirs)} scenes mean_rmse_m={m[0]:.6f} "
              f"mean_rel={m[1]:.6f} mean_mae_m={m[2]:.6f} -> {out}")
    else:
        print(f"ok 0/{len(scene_dirs)} scenes produced metrics -> {out}")
    for scene_id, row in results:
        status = row.strip().split(",")[-1]
        if status != "ok":
            print(f"note: {scene_id}: {status}", file=sys.stderr)
    return EXIT_OK


def cmd_render_views(args) -> int:
    obs = _load_observation(args)
    _validate_observation(obs)
    config = _config_from_args(args)
    out = _resolve_out(args, f"views_{obs['scene_id']}")
    os.makedirs(out, exist_ok=True)

    from .viewmatch import match_view

    cameras = sample_view_sphere(config.n_views, config.sphere_radius)
    match = match_view(obs["rgb"], obs["mask"], obs["mesh"], cameras,
                       config.similarity(), config.render_res,
                       observed_camera=obs["camera"])
    fileio.write_score_csv(os.path.join(out, "view_scores.csv"), match.scores,
                           view_sphere_directions(config.n_views))
    cam = virtual_camera(config.render_res)
    for i, pose in enumerate(cameras):
        view = render(obs["mesh"], cam, ScaledPlacement(pose, 1.0), view_index=i)
        fileio.write_gray16_png(os.path.join(out, f"view_{i:03d}_shade.png"), view.shaded)
        fileio.write_depth_png(os.path.join(out, f"view_{i:03d}_depth.png"), view.depth)
    print(f"ok {config.n_views} views -> {out} best={match.best.view_index}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="meshmend",
        description="Recover pose/scale of a canonical object mesh from one "
                    "RGB-D view and fuse it back into the depth map.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    pr = sub.add_parser("reconstruct", help="run the full pipeline on one observation")
    pr.add_argument("--scene-dir", default=None, help="scene directory (synth layout)")
    pr.add_argument("--rgb")
    pr.add_argument("--depth")
    pr.add_argument("--mask")
    pr.add_argument("--camera")
    pr.add_argument("--mesh")
    pr.add_argument("--out", default=None)
    _add_config_flags(pr)
    pr.set_defaults(func=cmd_reconstruct)

    ps = sub.add_parser("synth", help="generate ground-truth scene packages")
    ps.add_argument("--count", type=int, required=True)
    ps.add_argument("--kinds", default="mix",
                    help=f"comma list of {','.join(PRIMITIVE_KINDS)} or 'mix'")
    ps.add_argument("--corruption", default="refraction", choices=CORRUPTION_MODES)
    ps.add_argument("--noise-sigma-m", type=float, default=0.02)
    ps.add_argument("--dropout", type=float, default=0.4)
    ps.add_argument("--refraction-sigma-m", type=float, default=0.005)
    ps.add_argument("--out", default=None)
    _add_config_flags(ps)
    ps.set_defaults(func=cmd_synth)

    pe = sub.add_parser("eval", help="run the pipeline over scene packages and score")
    pe.add_argument("--scene-root", default=None, help="directory of scene directories")
    pe.add_argument("--scenes", nargs="*", default=None, help="explicit scene dirs")
    pe.add_argument("--jobs", type=int, default=1)
    pe.add_argument("--out", default=None)
    _add_config_flags(pe)
    pe.set_defaults(func=cmd_eval)

    pv = sub.add_parser("render-views", help="dump candidate renders and the score table")
    pv.add_argument("--scene-dir", default=None)
    pv.add_argument("--rgb")
    pv.add_argument("--depth")
    pv.add_argument("--mask")
    pv.add_argument("--camera")
    pv.add_argument("--mesh")
    pv.add_argument("--out", default=None)
    _add_config_flags(pv)
    pv.set_defaults(func=cmd_render_views)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except MeshMendError as e:
        print(f"error: {e}", file=sys.stderr)
        return _exit_code_for(e)
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_OUTPUT


if __name__ == "__main__":
    sys.exit(main())
