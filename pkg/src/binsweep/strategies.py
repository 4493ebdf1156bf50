"""Reference search strategies and evaluation.

The staged subdivision search is benchmarked against a dense linear
search: score the centers of every bin of one fine, equal subdivision of
the whole depth range in a single full-resolution volume and take the
argmax. Both searches place hypotheses on the same dyadic grid, so their
outputs are directly comparable, and the volume element counts expose the
memory advantage of subdivision. A plain binary search (two bins per
stage, no tolerance padding) runs alongside as the recovery-free
baseline; its window loses the true depth for good after a single wrong
stage, which the per-stage valid fractions make visible.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .costvol import AllocationCounter, build_fused_volume
from .features import crop_pyramid, feature_pyramid
from .search import (SearchConfig, bin_centers, initial_bins, poses_from_scene,
                     run_search, scene_features, stage_bin_width)
from .training import RegularizerParams, predicted_labels, regularize, softmax_probs

__all__ = [
    "DenseResult",
    "dense_linear_search",
    "Metrics",
    "THRESHOLD_SCALES",
    "default_thresholds",
    "evaluate_depth",
    "ComparisonResult",
    "compare_strategies",
]


@dataclass
class DenseResult:
    """Output of the dense one-shot search."""

    depth: np.ndarray
    confidence: np.ndarray
    step: float
    n_hypotheses: int


def dense_linear_search(scene, n_hypotheses: int = 512,
                        ref_index: int | None = None,
                        n_channels: int = 8, n_groups: int = 4,
                        counter: AllocationCounter | None = None,
                        threads: int = 1, agg_radius: int = 2) -> DenseResult:
    """Score every center of one fine subdivision of the depth range.

    Works at full image resolution with neutral scoring parameters; the
    depth estimate is the best-scoring hypothesis per pixel (ties to the
    lowest index).
    """
    ref = scene.ref_index if ref_index is None else ref_index
    margin = getattr(scene, "margin", 0)
    feats = [feature_pyramid(img, 1, n_channels)[0] for img in scene.images]
    ref_feats = crop_pyramid([feats[ref]], margin)[0]
    poses = poses_from_scene(scene, ref)
    src = [i for i in range(len(scene.images)) if i != ref]
    edges = initial_bins(scene.depth_range, n_hypotheses,
                         scene.cameras[ref].image_size)
    centers = bin_centers(edges)
    volume = build_fused_volume(
        ref_feats, [feats[i] for i in src], scene.cameras[ref],
        [scene.cameras[i] for i in src], [poses[i] for i in src],
        centers, n_groups, counter, threads)
    params = RegularizerParams.neutral(n_groups, n_hypotheses)
    scores = regularize(volume, params, agg_radius)
    labels = predicted_labels(scores)
    probs = softmax_probs(scores)
    depth = np.take_along_axis(centers, labels[None], 0)[0]
    confidence = np.take_along_axis(probs, labels[None], 0)[0]
    volume.release(counter)
    return DenseResult(depth=depth, confidence=confidence,
                       step=scene.depth_range.span / n_hypotheses,
                       n_hypotheses=n_hypotheses)


@dataclass
class Metrics:
    """Depth error statistics over the evaluated pixels."""

    n_pixels: int
    mae: float
    rmse: float
    median_ae: float
    max_ae: float
    frac_within: dict = field(default_factory=dict)

    def rows(self):
        out = [("n_pixels", self.n_pixels), ("mae", self.mae),
               ("rmse", self.rmse), ("median_ae", self.median_ae),
               ("max_ae", self.max_ae)]
        out.extend((f"frac_within_{t:g}", v)
                   for t, v in sorted(self.frac_within.items()))
        return out


THRESHOLD_SCALES = (0.25, 0.5, 1.0, 2.0)


def default_thresholds(final_bin_width: float) -> tuple:
    """Accuracy thresholds as multiples of the search's final bin width."""
    return tuple(s * final_bin_width for s in THRESHOLD_SCALES)


def evaluate_depth(pred: np.ndarray, gt: np.ndarray,
                   mask: np.ndarray | None = None,
                   thresholds=None,
                   final_bin_width: float | None = None) -> Metrics:
    """Error statistics of a depth map against the true depths.

    thresholds defaults to final-bin-width multiples when final_bin_width
    is given and to absolute depth units (0.05, 0.1, 0.5) otherwise.
    """
    if thresholds is None:
        thresholds = (default_thresholds(final_bin_width)
                      if final_bin_width is not None else (0.05, 0.1, 0.5))
    err = np.abs(np.asarray(pred, dtype=np.float64) -
                 np.asarray(gt, dtype=np.float64))
    if mask is not None:
        err = err[mask]
    err = err.ravel()
    if err.size == 0:
        raise ValueError("no valid pixels to evaluate")
    return Metrics(
        n_pixels=int(err.size),
        mae=float(err.mean()),
        rmse=float(np.sqrt((err * err).mean())),
        median_ae=float(np.median(err)),
        max_ae=float(err.max()),
        frac_within={t: float((err <= t).mean()) for t in thresholds},
    )


@dataclass
class ComparisonResult:
    """Staged subdivision vs plain binary vs dense linear search."""

    staged_depth: np.ndarray
    dense_depth: np.ndarray
    binet_depth: np.ndarray
    agreement: float
    agreement_tol: float
    staged_hypotheses_per_pixel: int
    dense_hypotheses_per_pixel: int
    binet_hypotheses_per_pixel: int
    staged_peak_elements: int
    dense_peak_elements: int
    binet_peak_elements: int
    element_reduction: float
    staged_metrics: Metrics | None
    dense_metrics: Metrics | None
    binet_metrics: Metrics | None
    stage_valid_fraction: list
    binet_valid_fraction: list

    def rows(self):
        """Per-strategy CSV rows: name, evaluations, peak elements, errors."""
        out = []
        for name, evals, peak, metrics, final in (
                ("staged", self.staged_hypotheses_per_pixel,
                 self.staged_peak_elements, self.staged_metrics,
                 self.stage_valid_fraction[-1] if self.stage_valid_fraction else ""),
                ("binary", self.binet_hypotheses_per_pixel,
                 self.binet_peak_elements, self.binet_metrics,
                 self.binet_valid_fraction[-1] if self.binet_valid_fraction else ""),
                ("dense", self.dense_hypotheses_per_pixel,
                 self.dense_peak_elements, self.dense_metrics, "")):
            row = {"strategy": name, "hypotheses_per_pixel": evals,
                   "peak_elements": peak, "final_valid_fraction": final}
            if metrics is not None:
                row.update(metrics.rows())
            out.append(row)
        return out


def compare_strategies(scene, config: SearchConfig | None = None,
                       params=None, dense_hypotheses: int = 512,
                       ref_index: int | None = None) -> ComparisonResult:
    """Run the three strategies on one scene and collect the comparison.

    All strategies score the same features. The staged search uses the
    given per-level params (None means neutral); the binary and dense
    searches always score neutrally since bias vectors are tied to a bin
    count. Agreement counts pixels whose staged and dense estimates
    differ by at most one dense step; both draw hypotheses from the same
    dyadic grid, so exact ties are the expected case.
    """
    config = SearchConfig() if config is None else config
    ref = scene.ref_index if ref_index is None else ref_index
    staged_counter = AllocationCounter()
    binet_counter = AllocationCounter()
    dense_counter = AllocationCounter()
    features = scene_features(scene, config)
    staged = run_search(scene, params, config, ref_index=ref,
                        counter=staged_counter, features=features)
    binet = run_search(scene, None, replace(config, n_bins=2),
                       ref_index=ref, counter=binet_counter,
                       features=features)
    dense = dense_linear_search(scene, dense_hypotheses, ref_index=ref,
                                n_channels=config.n_channels,
                                n_groups=config.n_groups,
                                counter=dense_counter,
                                threads=config.threads,
                                agg_radius=config.agg_radius[0])
    tol = dense.step + 1e-9
    agreement = float((np.abs(staged.depth - dense.depth) <= tol).mean())
    gt = scene.gt_depths[ref] if scene.gt_depths is not None else None
    fbw = stage_bin_width(scene.depth_range, config.n_bins, config.n_stages)

    def metrics(depth):
        if gt is None:
            return None
        return evaluate_depth(depth, gt, final_bin_width=fbw)

    return ComparisonResult(
        staged_depth=staged.depth,
        dense_depth=dense.depth,
        binet_depth=binet.depth,
        agreement=agreement,
        agreement_tol=tol,
        staged_hypotheses_per_pixel=config.n_bins * config.n_stages,
        dense_hypotheses_per_pixel=dense_hypotheses,
        binet_hypotheses_per_pixel=2 * config.n_stages,
        staged_peak_elements=staged_counter.peak,
        dense_peak_elements=dense_counter.peak,
        binet_peak_elements=binet_counter.peak,
        element_reduction=dense_counter.peak / staged_counter.peak,
        staged_metrics=metrics(staged.depth),
        dense_metrics=metrics(dense.depth),
        binet_metrics=metrics(binet.depth),
        stage_valid_fraction=staged.stage_valid_fraction,
        binet_valid_fraction=binet.stage_valid_fraction,
    )
