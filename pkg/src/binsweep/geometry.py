"""Pinhole camera geometry for plane-sweep matching.

Cameras are world-to-camera: a world point X maps to R X + t in camera
coordinates and to K (R X + t) in homogeneous pixels. Depth hypotheses are
expressed along the reference camera's optical axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "CameraModel",
    "RelativePose",
    "relative_pose",
    "scale_camera",
    "warp_pixel",
    "warp_grid",
    "backproject",
]


@dataclass(frozen=True)
class CameraModel:
    """Intrinsics plus the pixel grid they address.

    Attributes:
        intrinsics: 3x3 float64 K matrix.
        image_size: (height, width) of the image plane.
    """

    intrinsics: np.ndarray
    image_size: tuple[int, int]

    def __post_init__(self):
        k = np.asarray(self.intrinsics, dtype=np.float64)
        if k.shape != (3, 3):
            raise ValueError(f"intrinsics must be 3x3, got {k.shape}")
        object.__setattr__(self, "intrinsics", k)
        h, w = self.image_size
        if h <= 0 or w <= 0:
            raise ValueError(f"degenerate image size {self.image_size}")
        object.__setattr__(self, "image_size", (int(h), int(w)))


@dataclass(frozen=True)
class RelativePose:
    """Rigid motion taking reference-camera coordinates to a source camera."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if r.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got {r.shape}")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)


def relative_pose(rotation_ref, translation_ref, rotation_src, translation_src) -> RelativePose:
    """Relative motion between two world-to-camera poses.

    For X_r = R_r X + t_r and X_s = R_s X + t_s the source frame sees
    X_s = (R_s R_r^T) X_r + (t_s - R_s R_r^T t_r).
    """
    r_r = np.asarray(rotation_ref, dtype=np.float64)
    t_r = np.asarray(translation_ref, dtype=np.float64).reshape(3)
    r_s = np.asarray(rotation_src, dtype=np.float64)
    t_s = np.asarray(translation_src, dtype=np.float64).reshape(3)
    rot = r_s @ r_r.T
    return RelativePose(rot, t_s - rot @ t_r)


def scale_camera(camera: CameraModel, level: int) -> CameraModel:
    """Camera for a pyramid level, each level halving both image axes.

    The focal and principal-point rows of K scale by 2**-level; the third
    row is untouched.
    """
    if level < 0:
        raise ValueError(f"negative pyramid level {level}")
    k = camera.intrinsics.copy()
    k[:2] *= 0.5**level
    h, w = camera.image_size
    for _ in range(level):
        h, w = h // 2, w // 2
    if h < 1 or w < 1:
        raise ValueError(f"level {level} collapses image {camera.image_size}")
    return CameraModel(k, (h, w))


def backproject(camera: CameraModel, x, y, depth):
    """Lift pixel (x, y) at a given depth to reference-camera coordinates."""
    k_inv = np.linalg.inv(camera.intrinsics)
    p = np.stack([np.asarray(x, dtype=np.float64),
                  np.asarray(y, dtype=np.float64),
                  np.ones_like(np.asarray(x, dtype=np.float64))])
    return np.tensordot(k_inv, p, axes=1) * np.asarray(depth, dtype=np.float64)


def warp_pixel(camera_ref: CameraModel, camera_src: CameraModel,
               pose: RelativePose, x: float, y: float, depth: float):
    """Project a reference pixel at a depth hypothesis into a source view.

    The reference pixel is lifted along its ray to the hypothesized depth,
    moved by the relative pose and projected through the source intrinsics.
    Raises ValueError if the point lands behind the source camera.
    """
    if depth <= 0:
        raise ValueError(f"depth hypothesis must be positive, got {depth}")
    point = backproject(camera_ref, x, y, depth)
    cam = pose.rotation @ point + pose.translation
    if cam[2] <= 1e-12:
        raise ValueError(
            f"pixel ({x}, {y}) at depth {depth} falls behind the source camera")
    proj = camera_src.intrinsics @ cam
    return proj[0] / proj[2], proj[1] / proj[2]


def warp_grid(camera_ref: CameraModel, camera_src: CameraModel,
              pose: RelativePose, depths: np.ndarray):
    """Project every reference pixel at every hypothesized depth.

    Args:
        camera_ref: reference view camera; its image_size fixes the grid.
        camera_src: source view camera.
        pose: reference-to-source motion.
        depths: per-pixel hypothesis stack, shape (D, H, W).

    Returns:
        (xs, ys, valid): source-pixel coordinates, shape (D, H, W) each, and
        a boolean mask of hypotheses that project in front of the source
        camera. Coordinates of invalid entries are set to -1.
    """
    depths = np.asarray(depths, dtype=np.float64)
    h, w = camera_ref.image_size
    if depths.shape[1:] != (h, w):
        raise ValueError(f"depth stack {depths.shape} does not match image {h}x{w}")
    xs, ys = np.meshgrid(np.arange(w, dtype=np.float64),
                         np.arange(h, dtype=np.float64))
    k_inv = np.linalg.inv(camera_ref.intrinsics)
    rays = np.einsum("ij,jhw->ihw", k_inv,
                     np.stack([xs, ys, np.ones_like(xs)]))
    base = np.einsum("ij,jhw->ihw", pose.rotation, rays)
    cam = base[None] * depths[:, None] + pose.translation[None, :, None, None]
    proj = np.einsum("ij,djhw->dihw", camera_src.intrinsics, cam)
    valid = proj[:, 2] > 1e-12
    z = np.where(valid, proj[:, 2], 1.0)
    out_x = np.where(valid, proj[:, 0] / z, -1.0)
    out_y = np.where(valid, proj[:, 1] / z, -1.0)
    return out_x, out_y, valid
