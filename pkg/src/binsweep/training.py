"""Score regularization and classification training.

The regularizer is a tiny linear head per pyramid level over spatially
aggregated correlation: a weight per feature group and a bias per
hypothesis index. Covered volume cells score sum_g w_g * agg(v)_g + b_j,
where agg box-averages each hypothesis map over covered neighbors;
uncovered cells are pinned to a constant low score and contribute no
parameter gradient. Probabilities are a softmax over the hypothesis axis.

Training treats each search stage as a D-way classification of the bin
containing the true depth. Pixels whose true depth has left the current
window are masked out of the loss. Parameters are updated by plain
gradient descent immediately after each stage, so only that stage's volume
is alive during the update.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .costvol import AllocationCounter, CostVolume, build_fused_volume
from .features import box_mean

__all__ = [
    "UNCOVERED_SCORE",
    "AGG_RADIUS",
    "RegularizerParams",
    "TrainRecord",
    "aggregated_groups",
    "build_occupancy",
    "regularize",
    "softmax_probs",
    "predicted_labels",
    "masked_cross_entropy",
    "loss_gradients",
    "train_stagewise",
    "epoch_mean_losses",
]

UNCOVERED_SCORE = -10.0
AGG_RADIUS = 2
PROB_FLOOR = 1e-12


@dataclass
class RegularizerParams:
    """Per-level score head: one weight per group, one bias per hypothesis."""

    group_weights: np.ndarray
    hypothesis_biases: np.ndarray

    def __post_init__(self):
        self.group_weights = np.asarray(self.group_weights, dtype=np.float64)
        self.hypothesis_biases = np.asarray(self.hypothesis_biases,
                                            dtype=np.float64)

    @staticmethod
    def neutral(n_groups: int, n_bins: int) -> "RegularizerParams":
        """Unit group weights and zero biases; scores equal summed correlation."""
        return RegularizerParams(np.ones(n_groups), np.zeros(n_bins))

    def copy(self) -> "RegularizerParams":
        return RegularizerParams(self.group_weights.copy(),
                                 self.hypothesis_biases.copy())


@dataclass(frozen=True)
class TrainRecord:
    """One stage of one epoch: mean loss and valid fraction over scenes.

    loss is None when the stage was skipped everywhere (no valid pixels),
    so skips stay visible instead of polluting the mean as zeros.
    """

    epoch: int
    stage: int
    loss: float | None
    valid_fraction: float


def epoch_mean_losses(records: list) -> list:
    """Mean stage loss per epoch; None for epochs with no computed loss."""
    by_epoch: dict[int, list] = {}
    for rec in records:
        if rec.loss is not None:
            by_epoch.setdefault(rec.epoch, []).append(rec.loss)
    n_epochs = max((rec.epoch for rec in records), default=0)
    return [float(np.mean(by_epoch[e])) if by_epoch.get(e) else None
            for e in range(1, n_epochs + 1)]


def _aggregate(slices: np.ndarray, covered: np.ndarray,
               radius: int) -> np.ndarray:
    """Box-average the per-hypothesis maps over covered neighbors.

    Spatial aggregation is what turns per-pixel matching scores into a
    usable cost: isolated texture-poor pixels borrow evidence from their
    neighborhood. Uncovered cells contribute nothing and their own output
    is meaningless (callers pin it afterwards). radius 0 disables.
    """
    if radius == 0:
        return np.asarray(slices, dtype=np.float64)
    cov = covered.astype(np.float64)
    out = np.empty_like(slices, dtype=np.float64)
    for j in range(slices.shape[0]):
        den = box_mean(cov[j], radius)
        num = box_mean(slices[j] * cov[j], radius)
        out[j] = num / np.maximum(den, 1e-12)
    return out


def aggregated_groups(volume: CostVolume,
                      radius: int = AGG_RADIUS) -> np.ndarray:
    """Per-group aggregated correlation, shape (D, H, W, G) float64.

    The linear score head commutes with aggregation, so these are the
    effective per-parameter inputs: regularize(volume, params) equals
    the group-weighted sum of these maps plus biases on covered cells.
    """
    d, h, w, g = volume.data.shape
    data = volume.data.astype(np.float64)
    out = np.empty((d, h, w, g), dtype=np.float64)
    for k in range(g):
        out[..., k] = _aggregate(data[..., k], volume.covered, radius)
    return out


def regularize(volume: CostVolume, params: RegularizerParams,
               radius: int = AGG_RADIUS) -> np.ndarray:
    """Map a volume to per-hypothesis scores, shape (D, H, W) float64.

    Covered cells score the spatially aggregated group correlation under
    the level's weights plus the hypothesis bias; uncovered cells are
    pinned to a constant low score.
    """
    scores = np.einsum("dhwg,g->dhw", volume.data.astype(np.float64),
                       params.group_weights)
    scores = _aggregate(scores, volume.covered, radius)
    scores += params.hypothesis_biases[:, None, None]
    return np.where(volume.covered, scores, UNCOVERED_SCORE)


def softmax_probs(scores: np.ndarray) -> np.ndarray:
    """Softmax over the hypothesis axis (axis 0), numerically shifted."""
    shifted = scores - scores.max(axis=0, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=0, keepdims=True)


def predicted_labels(scores: np.ndarray) -> np.ndarray:
    """Highest-scoring hypothesis per pixel; ties go to the lowest index."""
    return np.argmax(scores, axis=0)


def build_occupancy(edges: np.ndarray, gt_depth: np.ndarray):
    """One-hot volume of the bin holding the true depth, plus valid mask.

    Rows of pixels whose true depth has left the window are all zero and
    masked false.
    """
    from .search import bin_labels

    labels, valid = bin_labels(edges, gt_depth)
    d = edges.shape[0] - 1
    occupancy = np.zeros((d,) + labels.shape, dtype=np.float64)
    np.put_along_axis(occupancy, np.clip(labels, 0, d - 1)[None], 1.0, axis=0)
    return occupancy * valid[None], valid


def _as_labels(target: np.ndarray) -> np.ndarray:
    """Bin indices from either a label map or a one-hot occupancy volume."""
    target = np.asarray(target)
    if target.ndim == 3:
        return target.argmax(axis=0)
    return target


def masked_cross_entropy(probs: np.ndarray, target: np.ndarray,
                         valid: np.ndarray) -> float | None:
    """Mean negative log-probability of the true bin over valid pixels.

    target is an integer label map or a one-hot occupancy volume. Returns
    None when no pixel is valid, which callers treat as a skipped stage
    rather than a zero loss.
    """
    if not valid.any():
        return None
    d = probs.shape[0]
    labels = _as_labels(target)
    picked = np.take_along_axis(probs, np.clip(labels, 0, d - 1)[None], 0)[0]
    logs = np.log(np.maximum(picked[valid], PROB_FLOOR))
    return float(-logs.mean())


def loss_gradients(volume: CostVolume, params: RegularizerParams,
                   target: np.ndarray, valid: np.ndarray,
                   radius: int = AGG_RADIUS):
    """Analytic loss gradients for one stage.

    Returns (loss, d_weights, d_biases); (None, zeros, zeros) when no pixel
    is valid. The softmax/cross-entropy composition gives d_loss/d_score =
    (P - onehot) / n_valid at valid pixels; uncovered cells hold a constant
    score so their parameter gradient is zero.
    """
    d = volume.data.shape[0]
    d_w = np.zeros_like(params.group_weights)
    d_b = np.zeros_like(params.hypothesis_biases)
    if not valid.any():
        return None, d_w, d_b
    scores = regularize(volume, params, radius)
    probs = softmax_probs(scores)
    labels = _as_labels(target)
    loss = masked_cross_entropy(probs, labels, valid)
    labels = np.clip(labels, 0, d - 1)
    onehot = np.zeros_like(probs)
    np.put_along_axis(onehot, labels[None], 1.0, axis=0)
    ds = (probs - onehot) * (valid[None] / valid.sum())
    ds = np.where(volume.covered, ds, 0.0)
    d_w = np.einsum("dhw,dhwg->g", ds, aggregated_groups(volume, radius))
    d_b = ds.sum(axis=(1, 2))
    return loss, d_w, d_b


def train_stagewise(scenes, config, epochs: int = 10, learning_rate: float = 0.05,
                    stage_ramp: int = 0, accumulate: bool = False,
                    counter: AllocationCounter | None = None,
                    params: list[RegularizerParams] | None = None):
    """Fit per-level regularizer parameters on synthetic scenes.

    Every stage of the search is a classification problem whose target is
    the bin containing the true depth; bins advance with the true label
    (teacher forcing) so stages stay on distribution. With stage_ramp > 0
    the schedule starts with the two coarsest stages and admits two more
    every stage_ramp epochs.

    Args:
        scenes: sequence of scene records (images, cameras, poses, true
            reference depth, depth range).
        config: search configuration (bin count, stages, levels, groups).
        accumulate: retain every stage volume of a scene and apply the
            updates only at scene end; exists to measure the memory cost of
            not releasing stage volumes. Results are identical for a
            single-stage schedule only.
        counter: optional allocation counter observing volume lifetimes.

    Returns:
        (params, records): fitted per-level parameters and one TrainRecord
        per (epoch, stage), aggregated over the scenes.

    Raises:
        FloatingPointError: a stage produced a non-finite loss.
    """
    from . import search as _search
    from .features import crop_pyramid

    if params is None:
        params = [RegularizerParams.neutral(config.n_groups, config.n_bins)
                  for _ in range(config.n_levels)]
    feat_cache: dict[int, tuple] = {}
    records = []
    for epoch in range(1, epochs + 1):
        if stage_ramp > 0:
            cap = min(2 + 2 * ((epoch - 1) // stage_ramp), config.n_stages)
        else:
            cap = config.n_stages
        stage_losses: dict[int, list] = {s: [] for s in range(1, cap + 1)}
        stage_fracs: dict[int, list] = {s: [] for s in range(1, cap + 1)}

        def apply(stage, lvl, volume, labels, valid):
            loss, d_w, d_b = loss_gradients(volume, params[lvl], labels,
                                            valid, config.agg_radius[lvl])
            stage_fracs[stage].append(float(valid.mean()))
            if loss is not None:
                if not np.isfinite(loss):
                    raise FloatingPointError(
                        f"non-finite loss {loss} at epoch {epoch} stage {stage}")
                stage_losses[stage].append(loss)
                params[lvl].group_weights -= learning_rate * d_w
                params[lvl].hypothesis_biases -= learning_rate * d_b
            volume.release(counter)

        for si, scene in enumerate(scenes):
            if si not in feat_cache:
                feat_cache[si] = _search.scene_features(scene, config)
            pyramids, coeff_pyrs = feat_cache[si]
            ref_pyramid = crop_pyramid(pyramids[scene.ref_index],
                                       getattr(scene, "margin", 0))
            pending = []
            gt_levels = [scene.gt_depths[scene.ref_index][::2**l, ::2**l]
                         for l in range(config.n_levels)]
            cams = [_search.level_cameras(cam, config.n_levels)
                    for cam in scene.cameras]
            poses = _search.poses_from_scene(scene)
            level = _search.stage_level(1, config.n_levels)
            h, w = cams[scene.ref_index][level].image_size
            edges = _search.initial_bins(scene.depth_range, config.n_bins, (h, w))
            for stage in range(1, cap + 1):
                new_level = _search.stage_level(stage, config.n_levels)
                if new_level != level:
                    edges = _search.upsample_edges(edges)
                    level = new_level
                centers = _search.bin_centers(edges)
                src = [i for i in range(len(scene.images)) if i != scene.ref_index]
                volume = build_fused_volume(
                    ref_pyramid[level],
                    [pyramids[i][level] for i in src],
                    cams[scene.ref_index][level],
                    [cams[i][level] for i in src],
                    [poses[i] for i in src],
                    centers, config.n_groups, counter, config.threads,
                    src_coeffs_list=[coeff_pyrs[i][level] for i in src])
                labels, valid = _search.bin_labels(edges, gt_levels[level])
                if accumulate:
                    pending.append((stage, level, volume, labels, valid))
                else:
                    apply(stage, level, volume, labels, valid)
                edges = _search.update_bins(edges, labels,
                                            scene.depth_range.d_min)
            for stage, lvl, volume, labels, valid in pending:
                apply(stage, lvl, volume, labels, valid)
        for stage in range(1, cap + 1):
            losses = stage_losses[stage]
            records.append(TrainRecord(
                epoch=epoch, stage=stage,
                loss=float(np.mean(losses)) if losses else None,
                valid_fraction=float(np.mean(stage_fracs[stage]))))
    return params, records
