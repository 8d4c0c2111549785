"""meshmend: single-view depth repair by mesh replacement.

Recovers the orientation, position, and scale that place a canonical
object mesh back into an RGB-D scene whose depth is corrupted on the
object (transparent/specular surfaces), then fuses the placed mesh into
the depth map.
"""

from .config import PipelineConfig
from .fusion import FusedDepth, fuse, to_point_cloud
from .geometry import CameraModel, RigidTransform, ScaledPlacement
from .keypoints import ContactKeypoints, PlacementSolution
from .mesh import TriangleMesh, load_mesh
from .metrics import DepthMetrics, depth_metrics, placement_error
from .render import RenderedView, crop_to_object, render, sample_view_sphere
from .synth import (
    CorruptionConfig,
    ScenePackage,
    make_primitive,
    make_random_scene,
    make_scene,
    reconstruct_observation,
    run_pipeline,
)
from .viewmatch import (
    SimilarityConfig,
    ViewMatchResult,
    ViewScore,
    edge_score,
    match_view,
    ratio_score,
    ssim_score,
)

__version__ = "0.1.0"

__all__ = [
    "CameraModel", "RigidTransform", "ScaledPlacement", "TriangleMesh",
    "RenderedView", "SimilarityConfig", "ViewScore", "ViewMatchResult",
    "ContactKeypoints", "PlacementSolution", "FusedDepth", "DepthMetrics",
    "ScenePackage", "CorruptionConfig", "PipelineConfig",
    "load_mesh", "render", "sample_view_sphere", "crop_to_object",
    "ssim_score", "edge_score", "ratio_score", "match_view",
    "fuse", "to_point_cloud", "depth_metrics", "placement_error",
    "make_primitive", "make_scene", "make_random_scene",
    "reconstruct_observation", "run_pipeline",
]
