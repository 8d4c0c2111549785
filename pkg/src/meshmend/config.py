"""Pipeline configuration shared by the CLI and the harness runner."""

from __future__ import annotations

import os
from dataclasses import dataclass, fields

from .errors import InputError
from .viewmatch import SimilarityConfig

ENV_OUT_ROOT = "MESHMEND_OUT_ROOT"


@dataclass
class PipelineConfig:
    """Every knob of the reconstruction pipeline, CLI-settable.

    Serializes to line-oriented ``key = value`` text and round-trips
    losslessly.
    """

    n_views: int = 128
    roll_steps: int = 12
    alpha: float = 1.0 / 3.0
    beta: float = 1.0 / 3.0
    gamma: float = 1.0 / 3.0
    patch_grid: int = 8
    ssim_c1: float = 1e-4
    ssim_c2: float = 9e-4
    edge_threshold: float = 0.05
    comparison_res: int = 128
    rescore_fraction: float = 0.10
    render_res: int = 256
    sphere_radius: float = 2.5
    scan_px: int = 10
    snap_px: float = 5.0
    residual_gate_m: float = 0.015
    hole_policy: str = "max_depth"
    seed: int = 0
    out_dir: str = ""

    def __post_init__(self):
        if self.n_views < 1:
            raise InputError("n_views must be >= 1")
        if not self.out_dir:
            self.out_dir = os.environ.get(ENV_OUT_ROOT, "")
        self.similarity()  # validates the similarity fields

    def similarity(self) -> SimilarityConfig:
        return SimilarityConfig(
            alpha=self.alpha,
            beta=self.beta,
            gamma=self.gamma,
            patch_grid=self.patch_grid,
            ssim_c1=self.ssim_c1,
            ssim_c2=self.ssim_c2,
            edge_threshold=self.edge_threshold,
            comparison_res=self.comparison_res,
            roll_steps=self.roll_steps,
            rescore_fraction=self.rescore_fraction,
        )

    def to_text(self) -> str:
        lines = [f"{f.name} = {getattr(self, f.name)!r}" for f in fields(self)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "PipelineConfig":
        values = {}
        types = {f.name: f.type for f in fields(cls)}
        casts = {"int": int, "float": float, "str": lambda s: str(s).strip("'\"")}
        for ln, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise InputError(f"config line {ln} is not 'key = value': {raw!r}")
            key, _, val = line.partition("=")
            key = key.strip()
            if key not in types:
                raise InputError(f"unknown config key {key!r} on line {ln}")
            values[key] = casts[types[key]](val.strip())
        return cls(**values)
