"""Depth estimation by iterative subdivision of hypothesis bins.

The depth range starts as a handful of equal half-open bins [e_j, e_{j+1})
per pixel. Each stage scores one hypothesis per bin (the bin center),
classifies which bin holds the true depth, then rebuilds the window around
the chosen bin: the bin splits into two halves and half of the remaining
bins pad each side at the new width. The window width halves per stage, so
after stage k the bin width is span / (n_bins * 2**(k-1)), while the
padding lets a stage recover from an off-by-one decision earlier.

Stages walk a feature pyramid coarse to fine, two stages per level; bin
edges carry across levels by nearest-neighbor upsampling.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .costvol import AllocationCounter, build_fused_volume
from .features import crop_pyramid, feature_pyramid, spline_coeffs
from .fusion import photometric_consistency
from .geometry import CameraModel, RelativePose, relative_pose, scale_camera
from .training import RegularizerParams, predicted_labels, regularize, softmax_probs

__all__ = [
    "DepthRange",
    "SearchConfig",
    "SearchResult",
    "initial_bins",
    "bin_centers",
    "stage_bin_width",
    "bin_labels",
    "update_bins",
    "upsample_edges",
    "upsample_map",
    "stage_level",
    "level_cameras",
    "relative_poses",
    "poses_from_scene",
    "neutral_params",
    "scene_features",
    "run_search",
]


@dataclass(frozen=True)
class DepthRange:
    """Closed search interval along the reference optical axis."""

    d_min: float
    d_max: float

    def __post_init__(self):
        if not (0 < self.d_min < self.d_max):
            raise ValueError(
                f"need 0 < d_min < d_max, got [{self.d_min}, {self.d_max}]")

    @property
    def span(self) -> float:
        return self.d_max - self.d_min


@dataclass(frozen=True)
class SearchConfig:
    """Knobs of the staged search.

    n_bins hypotheses are scored per stage for n_stages stages over an
    n_levels feature pyramid. The photometric consistency averages the
    first conf_stages stages' best-hypothesis probabilities. agg_radius
    gives the spatial aggregation radius of the score regularizer per
    pyramid level, finest level first.
    """

    n_bins: int = 4
    n_stages: int = 8
    n_levels: int = 4
    n_channels: int = 8
    n_groups: int = 4
    conf_stages: int = 6
    threads: int = 1
    agg_radius: tuple = (2, 2, 2, 2)

    def __post_init__(self):
        if self.n_bins < 2 or self.n_bins % 2:
            raise ValueError(f"bin count must be even and >= 2, got {self.n_bins}")
        if self.n_stages < 1:
            raise ValueError(f"need at least one stage, got {self.n_stages}")
        if self.n_levels < 1:
            raise ValueError(f"need at least one level, got {self.n_levels}")
        if self.n_channels % self.n_groups:
            raise ValueError(
                f"{self.n_groups} groups do not divide {self.n_channels} channels")
        if not 1 <= self.conf_stages <= self.n_stages:
            raise ValueError(f"conf_stages {self.conf_stages} out of range")
        if len(self.agg_radius) != self.n_levels:
            raise ValueError(
                f"need one aggregation radius per level, got {self.agg_radius}")
        if any(r < 0 for r in self.agg_radius):
            raise ValueError(f"aggregation radii must be >= 0: {self.agg_radius}")


@dataclass
class SearchResult:
    """Output of one reference view's staged search.

    depth and confidence are full-resolution maps; confidence is the
    photometric consistency over the leading stages. stage_probs holds
    each stage's probability volume at its own resolution.
    stage_valid_fraction is populated when the scene carries true depth:
    the fraction of pixels whose true depth still lies inside the window
    at each stage.
    """

    depth: np.ndarray
    confidence: np.ndarray
    final_prob: np.ndarray
    stage_probs: list = field(default_factory=list)
    stage_valid_fraction: list = field(default_factory=list)
    final_edges: np.ndarray | None = None


# ---------------------------------------------------------------------------
# Bin bookkeeping
# ---------------------------------------------------------------------------

def initial_bins(depth_range: DepthRange, n_bins: int, shape) -> np.ndarray:
    """Equal subdivision of the range at every pixel; (n_bins+1, H, W)."""
    h, w = shape
    edges = np.linspace(depth_range.d_min, depth_range.d_max, n_bins + 1)
    return np.broadcast_to(edges[:, None, None], (n_bins + 1, h, w)).copy()


def bin_centers(edges: np.ndarray) -> np.ndarray:
    """Midpoints of consecutive edges; the stage's depth hypotheses."""
    return 0.5 * (edges[:-1] + edges[1:])


def stage_bin_width(depth_range: DepthRange, n_bins: int, stage: int) -> float:
    """Bin width after stage k: span / (n_bins * 2**(k-1))."""
    if stage < 1:
        raise ValueError(f"stages count from 1, got {stage}")
    return depth_range.span / (n_bins * 2.0 ** (stage - 1))


def bin_labels(edges: np.ndarray, depth: np.ndarray):
    """Index of the bin containing each depth, and the window predicate.

    A pixel is valid when e_first <= depth < e_last. Labels for invalid
    pixels are the clamped edge count and only meaningful under the mask.
    """
    depth = np.asarray(depth, dtype=np.float64)
    valid = (depth >= edges[0]) & (depth < edges[-1])
    labels = np.zeros(depth.shape, dtype=np.intp)
    for j in range(1, edges.shape[0] - 1):
        labels += depth >= edges[j]
    return labels, valid


def update_bins(edges: np.ndarray, labels: np.ndarray,
                positivity_floor: float) -> np.ndarray:
    """Rebuild each pixel's window around its chosen bin at half width.

    The chosen bin [lo, hi) splits in two; (n_bins - 2) / 2 bins of the new
    width extend each side. Windows whose smallest center would drop to or
    below zero shift right until that center sits at positivity_floor / 2,
    preserving all widths.
    """
    d = edges.shape[0] - 1
    if d < 2 or d % 2:
        raise ValueError(f"bin count must be even and >= 2, got {d}")
    pad = (d - 2) // 2
    lo = np.take_along_axis(edges, labels[None], 0)[0]
    hi = np.take_along_axis(edges, labels[None] + 1, 0)[0]
    half = 0.5 * (hi - lo)
    start = lo - pad * half
    new_edges = start[None] + half[None] * np.arange(d + 1)[:, None, None]
    first_center = start + 0.5 * half
    shift = np.where(first_center <= 0.0,
                     0.5 * positivity_floor - first_center, 0.0)
    return new_edges + shift[None]


def upsample_edges(edges: np.ndarray) -> np.ndarray:
    """Carry a window grid to the next finer level by pixel doubling."""
    return np.repeat(np.repeat(edges, 2, axis=1), 2, axis=2)


def upsample_map(arr: np.ndarray, factor: int) -> np.ndarray:
    """Nearest-neighbor upsampling of a 2-D map by an integer factor."""
    if factor == 1:
        return arr
    return np.repeat(np.repeat(arr, factor, axis=0), factor, axis=1)


def stage_level(stage: int, n_levels: int) -> int:
    """Pyramid level for a stage: two stages per level, coarsest first.

    Once the finest level is reached all remaining stages stay there.
    """
    if stage < 1:
        raise ValueError(f"stages count from 1, got {stage}")
    return max(n_levels - 1 - (stage - 1) // 2, 0)


# ---------------------------------------------------------------------------
# Scene plumbing
# ---------------------------------------------------------------------------

def level_cameras(camera: CameraModel, n_levels: int) -> list[CameraModel]:
    """Cameras for every pyramid level, full resolution first."""
    return [scale_camera(camera, l) for l in range(n_levels)]


def relative_poses(rotations, translations, ref_index: int) -> list[RelativePose]:
    """Motion from the reference view to every view (identity at ref)."""
    return [relative_pose(rotations[ref_index], translations[ref_index], r, t)
            for r, t in zip(rotations, translations)]


def poses_from_scene(scene, ref_index: int | None = None) -> list[RelativePose]:
    if ref_index is None:
        ref_index = scene.ref_index
    return relative_poses(scene.rotations, scene.translations, ref_index)


def neutral_params(config: SearchConfig) -> list[RegularizerParams]:
    """Untrained per-level parameters: plain summed correlation scores."""
    return [RegularizerParams.neutral(config.n_groups, config.n_bins)
            for _ in range(config.n_levels)]


def scene_features(scene, config: SearchConfig):
    """Per-view feature pyramids and their spline coefficient stacks.

    Pyramids stay on the full image grids, guard band included, so that
    source-view sampling can reach past the camera frame; crop with the
    scene margin wherever a reference-aligned grid is needed. Computing
    the coefficients here amortizes the spline prefilter over every stage
    and reference choice on the scene.
    """
    pyramids = [feature_pyramid(img, config.n_levels, config.n_channels)
                for img in scene.images]
    coeffs = [[spline_coeffs(level) for level in pyr] for pyr in pyramids]
    return pyramids, coeffs


# ---------------------------------------------------------------------------
# Staged search
# ---------------------------------------------------------------------------

def run_search(scene, params: list[RegularizerParams] | None,
               config: SearchConfig, ref_index: int | None = None,
               oracle: bool = False,
               counter: AllocationCounter | None = None,
               features=None) -> SearchResult:
    """Estimate the reference view's depth map by staged bin subdivision.

    Args:
        scene: record with images, cameras, rotations, translations,
            depth_range, gt_depths and ref_index attributes.
        params: per-level regularizer parameters; None means neutral.
        config: search configuration.
        ref_index: reference view override; defaults to scene.ref_index.
        oracle: classify each stage with the true bin instead of the
            argmax. Requires true depth; pixels outside their window fall
            back to the argmax choice.
        counter: optional allocation counter observing volume lifetimes.
        features: precomputed :func:`scene_features` output, to share
            across calls on the same scene.

    Returns:
        SearchResult with full-resolution depth and confidence maps.
    """
    ref = scene.ref_index if ref_index is None else ref_index
    if params is None:
        params = neutral_params(config)
    if len(params) != config.n_levels:
        raise ValueError(
            f"expected {config.n_levels} per-level parameter sets, got {len(params)}")
    if features is None:
        features = scene_features(scene, config)
    pyramids, coeff_pyrs = features
    ref_pyramid = crop_pyramid(pyramids[ref], getattr(scene, "margin", 0))
    gt = None
    if getattr(scene, "gt_depths", None) is not None:
        gt = scene.gt_depths[ref]
    if oracle and gt is None:
        raise ValueError("oracle labeling needs true depth on the scene")
    cams = [level_cameras(cam, config.n_levels) for cam in scene.cameras]
    poses = poses_from_scene(scene, ref)
    src = [i for i in range(len(scene.images)) if i != ref]
    gt_levels = None
    if gt is not None:
        gt_levels = [gt[::2**l, ::2**l] for l in range(config.n_levels)]

    level = stage_level(1, config.n_levels)
    edges = initial_bins(scene.depth_range, config.n_bins,
                         cams[ref][level].image_size)
    full_size = cams[ref][0].image_size
    stage_probs = []
    stage_valid_fraction = []
    depth = None
    final_prob = None
    for stage in range(1, config.n_stages + 1):
        new_level = stage_level(stage, config.n_levels)
        if new_level != level:
            edges = upsample_edges(edges)
            level = new_level
        centers = bin_centers(edges)
        volume = build_fused_volume(
            ref_pyramid[level], [pyramids[i][level] for i in src],
            cams[ref][level], [cams[i][level] for i in src],
            [poses[i] for i in src], centers, config.n_groups,
            counter, config.threads,
            src_coeffs_list=[coeff_pyrs[i][level] for i in src])
        scores = regularize(volume, params[level], config.agg_radius[level])
        probs = softmax_probs(scores)
        labels = predicted_labels(scores)
        if gt_levels is not None:
            gt_labels, valid = bin_labels(edges, gt_levels[level])
            stage_valid_fraction.append(float(valid.mean()))
            if oracle:
                labels = np.where(valid, gt_labels, labels)
        stage_probs.append(probs)
        if stage == config.n_stages:
            depth = np.take_along_axis(centers, labels[None], 0)[0]
            final_prob = np.take_along_axis(probs, labels[None], 0)[0]
        volume.release(counter)
        edges = update_bins(edges, labels, scene.depth_range.d_min)

    if depth.shape != full_size:
        depth = upsample_map(depth, 2**level)
        final_prob = upsample_map(final_prob, 2**level)
    confidence = photometric_consistency(stage_probs, config.conf_stages)
    if confidence.shape != full_size:
        confidence = upsample_map(confidence,
                                  full_size[0] // confidence.shape[0])
    return SearchResult(depth=depth, confidence=confidence,
                        final_prob=final_prob,
                        stage_probs=stage_probs,
                        stage_valid_fraction=stage_valid_fraction,
                        final_edges=edges)
