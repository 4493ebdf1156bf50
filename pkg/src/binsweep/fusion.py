"""Consistency filtering and fusion of per-view depth maps.

A pixel survives fusion when it is photometrically confident (the staged
search kept assigning its bin a high probability) and geometrically
consistent (enough other views reproject it back onto itself at a matching
depth). Surviving estimates are averaged across the views that agree and
lifted to a world-space point cloud.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import CameraModel, relative_pose

__all__ = [
    "photometric_consistency",
    "reprojection_check",
    "FusedView",
    "fuse_depth_maps",
    "depth_to_points",
]


def photometric_consistency(stage_probs: list, k_prime: int) -> np.ndarray:
    """Mean of the first k_prime stages' best-hypothesis probabilities.

    Each entry of stage_probs is one stage's probability volume with the
    hypothesis axis first. Lower-resolution stages are upsampled to the
    finest stage resolution by nearest neighbor before taking part. The
    average rates how decisively the search classified the pixel during
    refinement; the late stages can be left out (k_prime < len) since
    their hypotheses sit too close together to separate cleanly.
    """
    if not 1 <= k_prime <= len(stage_probs):
        raise ValueError(
            f"k_prime must be in [1, {len(stage_probs)}], got {k_prime}")
    th = max(p.shape[1] for p in stage_probs)
    tw = max(p.shape[2] for p in stage_probs)
    out = np.zeros((th, tw), dtype=np.float64)
    for probs in stage_probs[:k_prime]:
        best = np.asarray(probs, dtype=np.float64).max(axis=0)
        fy, ry = divmod(th, best.shape[0])
        fx, rx = divmod(tw, best.shape[1])
        if ry or rx or fy != fx:
            raise ValueError(
                f"stage resolution {best.shape} does not divide ({th}, {tw})")
        if fy > 1:
            best = np.repeat(np.repeat(best, fy, axis=0), fx, axis=1)
        out += best
    return out / k_prime


def reprojection_check(depth_ref: np.ndarray, camera_ref: CameraModel,
                       depth_src: np.ndarray, camera_src: CameraModel,
                       pose, tau_px: float = 1.0, tau_rel: float = 0.01):
    """Two-view geometric consistency by depth round-tripping.

    Each reference pixel is lifted to its estimated depth, projected into
    the source view, relifted with the source view's estimate at that
    location, and projected back. The pixel passes if it lands within
    tau_px pixels of where it started with a relative depth gap below
    tau_rel.

    Returns:
        (consistent, depth_back): the pass mask and the round-trip depth
        in the reference frame (meaningful only under the mask).
    """
    h, w = depth_ref.shape
    xs, ys = np.meshgrid(np.arange(w, dtype=np.float64),
                         np.arange(h, dtype=np.float64))
    k_inv = np.linalg.inv(camera_ref.intrinsics)
    rays = np.einsum("ij,jhw->ihw", k_inv, np.stack([xs, ys, np.ones_like(xs)]))
    cam = np.einsum("ij,jhw->ihw", pose.rotation, rays) * depth_ref[None]
    cam += pose.translation[:, None, None]
    front = cam[2] > 1e-12
    z = np.where(front, cam[2], 1.0)
    proj = np.einsum("ij,jhw->ihw", camera_src.intrinsics, cam / z[None])
    sx, sy = proj[0], proj[1]
    sh, sw = camera_src.image_size
    inside = front & (sx >= 0) & (sx <= sw - 1) & (sy >= 0) & (sy <= sh - 1)
    xi = np.clip(np.rint(sx), 0, sw - 1).astype(np.intp)
    yi = np.clip(np.rint(sy), 0, sh - 1).astype(np.intp)
    sampled = depth_src[yi, xi]
    k_inv_src = np.linalg.inv(camera_src.intrinsics)
    src_pt = np.einsum("ij,jhw->ihw", k_inv_src,
                       np.stack([sx, sy, np.ones_like(sx)])) * sampled[None]
    back = np.einsum("ij,jhw->ihw", pose.rotation.T,
                     src_pt - pose.translation[:, None, None])
    back_ok = inside & (back[2] > 1e-12) & (sampled > 0)
    bz = np.where(back_ok, back[2], 1.0)
    bproj = np.einsum("ij,jhw->ihw", camera_ref.intrinsics, back / bz[None])
    err_px = np.hypot(bproj[0] - xs, bproj[1] - ys)
    err_rel = np.abs(back[2] - depth_ref) / np.maximum(depth_ref, 1e-12)
    consistent = back_ok & (err_px < tau_px) & (err_rel < tau_rel)
    return consistent, np.where(consistent, back[2], 0.0)


@dataclass
class FusedView:
    """Fusion output for one view used as reference.

    depth averages the view's estimate with the round-trip depths of the
    views that agreed; mask combines the photometric and geometric gates.
    """

    depth: np.ndarray
    mask: np.ndarray
    votes: np.ndarray
    photometric: np.ndarray


def fuse_depth_maps(scene, results: list, tau_ph: float = 0.4,
                    tau_px: float = 1.0, tau_rel: float = 0.01,
                    min_consistent: int = 2) -> list[FusedView]:
    """Filter and blend per-view depth estimates.

    Args:
        scene: record with cameras, rotations and translations per view.
        results: one staged-search result per view, each produced with
            that view as reference.
        tau_ph: photometric confidence gate.
        tau_px / tau_rel: reprojection gates, pixels and relative depth.
        min_consistent: how many other views must agree geometrically.

    Returns:
        One FusedView per view.
    """
    n = len(results)
    fused = []
    for r in range(n):
        depth_r = results[r].depth
        votes = np.zeros(depth_r.shape, dtype=np.intp)
        acc = depth_r.copy()
        for k in range(n):
            if k == r:
                continue
            pose = relative_pose(scene.rotations[r], scene.translations[r],
                                 scene.rotations[k], scene.translations[k])
            ok, back = reprojection_check(depth_r, scene.cameras[r],
                                          results[k].depth, scene.cameras[k],
                                          pose, tau_px, tau_rel)
            votes += ok
            acc += back
        photometric = results[r].confidence >= tau_ph
        mask = photometric & (votes >= min_consistent)
        depth = np.where(mask, acc / (votes + 1), depth_r)
        fused.append(FusedView(depth=depth, mask=mask, votes=votes,
                               photometric=photometric))
    return fused


def depth_to_points(depth: np.ndarray, camera: CameraModel, rotation,
                    translation, mask: np.ndarray | None = None,
                    image: np.ndarray | None = None):
    """Lift a depth map to world-space points.

    Returns (points, gray): an (N, 3) array for the pixels kept by mask,
    and their image intensities or None when no image is given.
    """
    h, w = depth.shape
    if mask is None:
        mask = np.ones((h, w), dtype=bool)
    xs, ys = np.meshgrid(np.arange(w, dtype=np.float64),
                         np.arange(h, dtype=np.float64))
    k_inv = np.linalg.inv(camera.intrinsics)
    rays = np.einsum("ij,jhw->ihw", k_inv, np.stack([xs, ys, np.ones_like(xs)]))
    cam = rays * depth[None]
    rot = np.asarray(rotation, dtype=np.float64)
    t = np.asarray(translation, dtype=np.float64).reshape(3)
    world = np.einsum("ij,jhw->ihw", rot.T, cam - t[:, None, None])
    pts = world.reshape(3, -1).T[mask.ravel()]
    gray = None
    if image is not None:
        gray = np.asarray(image, dtype=np.float64).ravel()[mask.ravel()]
    return pts, gray
