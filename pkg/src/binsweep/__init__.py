"""Multi-view stereo depth estimation by binary subdivision of depth bins.

Instead of scoring hundreds of depth hypotheses per pixel at once, the
search covers the range with a few equal bins, classifies which bin holds
the true depth from a plane-sweep correlation volume, and subdivides that
bin stage after stage. Each stage halves the bin width and keeps padding
bins around the choice so a wrong stage can be corrected later, while only
one small volume is ever alive.
"""

from .config import Settings
from .costvol import (AllocationCounter, CostVolume, build_fused_volume,
                      build_two_view_volume, compute_view_weight, fuse_volumes)
from .features import crop_pyramid, extract_features, feature_pyramid
from .fusion import FusedView, depth_to_points, fuse_depth_maps, photometric_consistency
from .geometry import CameraModel, RelativePose, relative_pose, scale_camera, warp_pixel
from .search import (DepthRange, SearchConfig, SearchResult, bin_centers,
                     bin_labels, initial_bins, neutral_params, run_search,
                     scene_features, stage_bin_width, stage_level, update_bins)
from .strategies import (ComparisonResult, Metrics, compare_strategies,
                         dense_linear_search, default_thresholds, evaluate_depth)
from .synthetic import SceneData, load_scene, make_scene, save_scene
from .training import (RegularizerParams, TrainRecord, build_occupancy,
                       epoch_mean_losses, masked_cross_entropy, regularize,
                       train_stagewise)

__version__ = "0.1.0"

__all__ = [
    "AllocationCounter",
    "CameraModel",
    "ComparisonResult",
    "CostVolume",
    "DepthRange",
    "FusedView",
    "Metrics",
    "RegularizerParams",
    "RelativePose",
    "SceneData",
    "SearchConfig",
    "SearchResult",
    "Settings",
    "TrainRecord",
    "bin_centers",
    "bin_labels",
    "build_fused_volume",
    "build_occupancy",
    "build_two_view_volume",
    "compare_strategies",
    "compute_view_weight",
    "crop_pyramid",
    "default_thresholds",
    "dense_linear_search",
    "depth_to_points",
    "epoch_mean_losses",
    "evaluate_depth",
    "extract_features",
    "feature_pyramid",
    "fuse_depth_maps",
    "fuse_volumes",
    "initial_bins",
    "load_scene",
    "make_scene",
    "masked_cross_entropy",
    "neutral_params",
    "photometric_consistency",
    "regularize",
    "relative_pose",
    "run_search",
    "save_scene",
    "scale_camera",
    "scene_features",
    "stage_bin_width",
    "stage_level",
    "train_stagewise",
    "update_bins",
    "warp_pixel",
    "__version__",
]
