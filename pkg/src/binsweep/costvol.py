"""Plane-sweep cost volumes from group-wise feature correlation.

A volume scores D depth hypotheses per reference pixel. Feature channels
are split into G groups; the score for hypothesis j, pixel p and group g is
the inner product of the reference group with the source group sampled at
the warped location, scaled by G over the channel count. Per-view volumes
are blended into one fused volume with per-pixel view weights.

Volume payloads are the unit of the memory accounting: every constructed
CostVolume registers its element count (D*H*W*G) with an optional
AllocationCounter, and the fused builder streams one hypothesis slice at a
time so that only the output volume is ever registered.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np

from .features import sample_spline, spline_coeffs
from .geometry import CameraModel, RelativePose, warp_grid
from .parallel import slice_map

__all__ = [
    "AllocationCounter",
    "CostVolume",
    "correlation_slice",
    "build_two_view_volume",
    "compute_view_weight",
    "fuse_volumes",
    "build_fused_volume",
]

MIN_VIEW_WEIGHT = 1e-3


class AllocationCounter:
    """Thread-safe tally of live cost-volume elements.

    current is the number of elements registered and not yet released;
    peak is the highest value current has reached.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self.current = 0
        self.peak = 0

    def acquire(self, n: int) -> None:
        with self._lock:
            self.current += int(n)
            if self.current > self.peak:
                self.peak = self.current

    def release(self, n: int) -> None:
        with self._lock:
            self.current -= int(n)
            if self.current < 0:
                raise RuntimeError("released more volume elements than acquired")


@dataclass
class CostVolume:
    """Correlation scores with a per-cell coverage mask.

    Attributes:
        data: float32 scores, shape (D, H, W, G).
        covered: bool mask, shape (D, H, W); False where no source view
            provided a sample for that hypothesis.
    """

    data: np.ndarray
    covered: np.ndarray

    @property
    def element_count(self) -> int:
        return self.data.size

    def release(self, counter: AllocationCounter | None) -> None:
        if counter is not None:
            counter.release(self.element_count)


def _register(volume: CostVolume, counter: AllocationCounter | None) -> CostVolume:
    if counter is not None:
        counter.acquire(volume.element_count)
    return volume


def _src_margin(src_feats: np.ndarray, src_camera: CameraModel) -> int:
    # source feature grids may extend past the camera frame by a uniform band
    sh, sw = src_camera.image_size
    margin = (src_feats.shape[1] - sh) // 2
    if (src_feats.shape[1] != sh + 2 * margin
            or src_feats.shape[2] != sw + 2 * margin or margin < 0):
        raise ValueError(
            f"source features {src_feats.shape[1:]} do not wrap camera grid "
            f"({sh}, {sw}) in a symmetric band")
    return margin


def correlation_slice(ref_feats: np.ndarray, src_feats: np.ndarray,
                      ref_camera: CameraModel, src_camera: CameraModel,
                      pose: RelativePose, depth_slice: np.ndarray,
                      n_groups: int, src_coeffs: np.ndarray | None = None):
    """Group correlation for a single depth hypothesis map.

    Args:
        ref_feats: reference features, (C, H, W) on the reference grid.
        src_feats: source features, (C, H + 2m, W + 2m) for a guard band
            of m pixels per side beyond the source camera frame (m may
            be 0); warps just outside the frame then still sample real
            content instead of going uncovered.
        depth_slice: per-pixel hypothesized depth, (H, W).
        n_groups: number of channel groups; must divide C.
        src_coeffs: optional spline_coeffs(src_feats), to amortize the
            prefilter across the slices of a volume.

    Returns:
        (scores, covered): scores is (H, W, n_groups) float32, zero where
        not covered; covered marks pixels whose warped location lands in
        front of the source camera and inside the source feature grid.
    """
    c, h, w = ref_feats.shape
    if c % n_groups:
        raise ValueError(f"{n_groups} groups do not divide {c} channels")
    margin = _src_margin(src_feats, src_camera)
    if src_coeffs is None:
        src_coeffs = spline_coeffs(src_feats)
    xs, ys, front = warp_grid(ref_camera, src_camera, pose,
                              np.asarray(depth_slice, dtype=np.float64)[None])
    xs, ys, front = xs[0] + margin, ys[0] + margin, front[0]
    gh, gw = src_feats.shape[1:]
    covered = front & (xs >= 0) & (xs <= gw - 1) & (ys >= 0) & (ys <= gh - 1)
    per_group = c // n_groups
    sampled = sample_spline(src_coeffs, xs, ys)
    prod = (ref_feats.astype(np.float64) * sampled).reshape(n_groups, per_group, h, w)
    scores = prod.sum(axis=1) * (n_groups / c)
    scores = np.where(covered[None], scores, 0.0)
    return scores.transpose(1, 2, 0).astype(np.float32), covered


def build_two_view_volume(ref_feats, src_feats, ref_camera, src_camera, pose,
                          depths: np.ndarray, n_groups: int,
                          counter: AllocationCounter | None = None,
                          threads: int = 1) -> CostVolume:
    """Correlation volume between the reference and one source view.

    depths is the (D, H, W) hypothesis stack; the result is registered
    with counter if one is given.
    """
    depths = np.asarray(depths, dtype=np.float64)
    d, h, w = depths.shape
    data = np.zeros((d, h, w, n_groups), dtype=np.float32)
    covered = np.zeros((d, h, w), dtype=bool)
    volume = _register(CostVolume(data, covered), counter)
    coeffs = spline_coeffs(src_feats)

    def fill(j):
        scores, cov = correlation_slice(ref_feats, src_feats, ref_camera,
                                        src_camera, pose, depths[j], n_groups,
                                        src_coeffs=coeffs)
        data[j] = scores
        covered[j] = cov

    slice_map(fill, d, threads)
    return volume


def compute_view_weight(volume: CostVolume) -> np.ndarray:
    """Per-pixel blending weight for one view's volume.

    The weight is the pixel's best covered correlation over hypotheses and
    groups, clamped to [0, 1], with a small floor wherever the view covers
    the pixel at all so that covered cells never lose all weight.
    """
    d, h, w, _ = volume.data.shape
    best = np.where(volume.covered[..., None], volume.data.astype(np.float64),
                    -np.inf).max(axis=(0, 3))
    any_cover = volume.covered.any(axis=0)
    weight = np.clip(np.where(any_cover, best, 0.0), 0.0, 1.0)
    return np.where(any_cover, np.maximum(weight, MIN_VIEW_WEIGHT), 0.0)


def fuse_volumes(volumes: list[CostVolume], weights: list[np.ndarray],
                 counter: AllocationCounter | None = None) -> CostVolume:
    """Weighted per-pixel blend of per-view volumes.

    Each cell's fused value is sum_i w_i * v_i over views covering that
    cell, divided by the summed weight of those views. Cells covered by no
    view fuse to zero and stay uncovered.
    """
    if not volumes:
        raise ValueError("need at least one volume to fuse")
    d, h, w, g = volumes[0].data.shape
    num = np.zeros((d, h, w, g), dtype=np.float64)
    den = np.zeros((d, h, w), dtype=np.float64)
    covered = np.zeros((d, h, w), dtype=bool)
    for vol, weight in zip(volumes, weights):
        wmap = np.broadcast_to(np.asarray(weight, dtype=np.float64), (h, w))
        contrib = vol.covered * wmap[None]
        num += contrib[..., None] * vol.data
        den += contrib
        covered |= vol.covered & (wmap[None] > 0)
    safe = np.where(den > 0, den, 1.0)
    data = (num / safe[..., None]).astype(np.float32)
    data[~covered] = 0.0
    return _register(CostVolume(data, covered), counter)


def build_fused_volume(ref_feats, src_feats_list, ref_camera, src_cameras,
                       poses, depths: np.ndarray, n_groups: int,
                       counter: AllocationCounter | None = None,
                       threads: int = 1,
                       src_coeffs_list: list | None = None) -> CostVolume:
    """Fused volume over all source views, built one slice at a time.

    Equivalent to building every two-view volume and calling
    :func:`fuse_volumes` with :func:`compute_view_weight` weights, but only
    the fused output is ever held (and registered with counter); per-view
    data exists only as single-hypothesis scratch slices.
    """
    depths = np.asarray(depths, dtype=np.float64)
    d, h, w = depths.shape
    if src_coeffs_list is None:
        src_coeffs_list = [spline_coeffs(f) for f in src_feats_list]
    views = list(zip(src_feats_list, src_cameras, poses, src_coeffs_list))
    data = np.zeros((d, h, w, n_groups), dtype=np.float32)
    covered = np.zeros((d, h, w), dtype=bool)
    volume = _register(CostVolume(data, covered), counter)

    weights = []
    for src_feats, src_camera, pose, coeffs in views:
        def slice_best(j, _sf=src_feats, _sc=src_camera, _p=pose, _co=coeffs):
            scores, cov = correlation_slice(ref_feats, _sf, ref_camera, _sc,
                                            _p, depths[j], n_groups,
                                            src_coeffs=_co)
            smax = np.where(cov[..., None], scores.astype(np.float64),
                            -np.inf).max(axis=2)
            return smax, cov

        best = np.full((h, w), -np.inf)
        any_cover = np.zeros((h, w), dtype=bool)
        for smax, cov in slice_map(slice_best, d, threads):
            best = np.maximum(best, np.where(cov, smax, -np.inf))
            any_cover |= cov
        weight = np.clip(np.where(any_cover, best, 0.0), 0.0, 1.0)
        weights.append(np.where(any_cover,
                                np.maximum(weight, MIN_VIEW_WEIGHT), 0.0))

    def fill(j):
        num = np.zeros((h, w, n_groups), dtype=np.float64)
        den = np.zeros((h, w), dtype=np.float64)
        cov_any = np.zeros((h, w), dtype=bool)
        for (src_feats, src_camera, pose, coeffs), weight in zip(views, weights):
            scores, cov = correlation_slice(ref_feats, src_feats, ref_camera,
                                            src_camera, pose, depths[j],
                                            n_groups, src_coeffs=coeffs)
            contrib = cov * weight
            num += contrib[..., None] * scores
            den += contrib
            cov_any |= cov & (weight > 0)
        fused = num / np.where(den > 0, den, 1.0)[..., None]
        fused[~cov_any] = 0.0
        data[j] = fused.astype(np.float32)
        covered[j] = cov_any

    slice_map(fill, d, threads)
    return volume
