"""Synthetic multi-view scenes with analytic ground truth.

A scene is a textured surface observed by a small rig of pinhole cameras.
The texture is a band-limited sum of 3-D sinusoids evaluated at the
world-space intersection of each viewing ray with the surface, so every
view renders the same physical pattern exactly, with no resampling error,
and the true depth of every pixel is available in closed form.

Surfaces: a fronto-parallel plane, a plane tilted about the vertical axis,
and a plane with a protruding spherical cap (depth stays continuous across
the cap rim).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .fileio import read_cam_file, read_image, read_pfm, write_cam_file, write_pfm, write_pgm
from .geometry import CameraModel
from .search import DepthRange

__all__ = [
    "WaveTexture",
    "make_texture",
    "SceneData",
    "make_scene",
    "save_scene",
    "load_scene",
    "SCENE_KINDS",
]

SCENE_KINDS = ("plane", "slant", "sphere")


@dataclass(frozen=True)
class WaveTexture:
    """Sum of 3-D sinusoids; values bounded by the summed amplitudes."""

    amplitudes: np.ndarray
    wavevectors: np.ndarray
    phases: np.ndarray

    def __call__(self, points: np.ndarray) -> np.ndarray:
        """Evaluate at world points, shape (3, ...) -> (...)."""
        phase = np.tensordot(self.wavevectors, points, axes=(1, 0))
        phase += self.phases.reshape((-1,) + (1,) * (points.ndim - 1))
        return np.tensordot(self.amplitudes, np.sin(phase), axes=(0, 0))

    @property
    def bound(self) -> float:
        return float(np.abs(self.amplitudes).sum())


def make_texture(rng: np.random.Generator, n_waves: int = 32,
                 wavelength_px=(20.0, 64.0), world_per_px: float = 0.25) -> WaveTexture:
    """Draw a random band-limited texture.

    Wavelengths are log-uniform between the given bounds, stated in pixels
    at the nominal working distance and converted to world units through
    world_per_px. The default band's short end sits above the Nyquist
    wavelength of a level-3 pyramid (16 px), so every level sees the same
    structure cleanly instead of aliased copies of finer waves.
    """
    dirs = rng.normal(size=(n_waves, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    lam_px = np.exp(rng.uniform(np.log(wavelength_px[0]),
                                np.log(wavelength_px[1]), n_waves))
    k = 2.0 * np.pi / (lam_px * world_per_px)
    amps = rng.uniform(0.5, 1.0, n_waves)
    phases = rng.uniform(0.0, 2.0 * np.pi, n_waves)
    return WaveTexture(amps, dirs * k[:, None], phases)


@dataclass
class SceneData:
    """A rendered rig: images, cameras, true depths and the search range.

    Images may carry a guard band of margin extra pixels on every side
    beyond the camera's pixel grid; cameras, depths and all derived maps
    address the core grid only. Feature extraction consumes the band so
    border features come from real content.
    """

    name: str
    images: list = field(default_factory=list)
    cameras: list = field(default_factory=list)
    rotations: list = field(default_factory=list)
    translations: list = field(default_factory=list)
    gt_depths: list | None = None
    depth_range: DepthRange | None = None
    ref_index: int = 0
    margin: int = 0

    def core_image(self, index: int) -> np.ndarray:
        """The image over the camera's own pixel grid, guard band removed."""
        img = self.images[index]
        if self.margin:
            m = self.margin
            return img[m:-m, m:-m]
        return img


def _plane_depth(origin, dirs, z0: float, ax: float = 0.0):
    # plane z - ax * x = z0; rays are origin + s * dirs with dirs[2] == 1
    normal_dot = dirs[2] - ax * dirs[0]
    return (z0 - (origin[2] - ax * origin[0])) / normal_dot


def _sphere_plane_depth(origin, dirs, z0: float, radius: float, cap: float):
    s_plane = _plane_depth(origin, dirs, z0)
    center = np.array([0.0, 0.0, z0 + radius - cap])
    oc = origin - center
    a = np.einsum("ihw,ihw->hw", dirs, dirs)
    b = 2.0 * np.einsum("ihw,i->hw", dirs, oc)
    c = oc @ oc - radius * radius
    disc = b * b - 4.0 * a * c
    hit = disc >= 0.0
    s_sphere = np.where(hit, (-b - np.sqrt(np.where(hit, disc, 0.0))) / (2.0 * a),
                        np.inf)
    use = hit & (s_sphere > 0.0) & (s_sphere < s_plane)
    return np.where(use, s_sphere, s_plane)


def _surface_fn(kind: str, z0: float):
    if kind == "plane":
        return lambda o, d: _plane_depth(o, d, z0)
    if kind == "slant":
        return lambda o, d: _plane_depth(o, d, z0, ax=0.2)
    if kind == "sphere":
        return lambda o, d: _sphere_plane_depth(o, d, z0, radius=215.0, cap=1.45)
    raise ValueError(f"unknown scene kind {kind!r}; choose from {SCENE_KINDS}")


def make_scene(kind: str = "plane", seed: int = 0, size=(128, 160),
               n_views: int = 3, baseline: float = 12.0, focal: float = 800.0,
               z_mid: float = 100.0, n_waves: int = 32,
               margin: int = 48, noise: float = 0.0) -> SceneData:
    """Render a rig of views of one surface.

    The reference camera sits at the world origin looking down +z; source
    cameras are displaced alternately along +x and -x by the baseline. All
    rotations are identity, so every view measures depth as world z and
    the views share a depth convention. Each source camera's principal
    point is offset so its axis pixel verges on the working distance
    z_mid, keeping the views' overlap near total like a converged rig
    while leaving the image planes parallel.

    Images are rendered with a guard band of margin pixels per side; the
    cameras and true depths address the central size grid. The search
    range is [0.8 * min, 1.2 * max] of the true depths over all views.
    noise adds zero-mean Gaussian intensity noise of that sigma per pixel,
    drawn from the scene rng after the geometry so the noiseless portion
    of two scenes differing only in noise is identical.
    """
    if kind not in SCENE_KINDS:
        raise ValueError(f"unknown scene kind {kind!r}; choose from {SCENE_KINDS}")
    h, w = size
    rng = np.random.default_rng(seed)
    texture = make_texture(rng, n_waves=n_waves, world_per_px=z_mid / focal)
    centers = [np.zeros(3)]
    step = 1
    while len(centers) < n_views:
        centers.append(np.array([baseline * step, 0.0, 0.0]))
        if len(centers) < n_views:
            centers.append(np.array([-baseline * step, 0.0, 0.0]))
        step += 1
    surface = _surface_fn(kind, z_mid)
    hm, wm = h + 2 * margin, w + 2 * margin
    xs, ys = np.meshgrid(np.arange(wm, dtype=np.float64) - margin,
                         np.arange(hm, dtype=np.float64) - margin)
    scene = SceneData(name=f"{kind}-{seed}", gt_depths=[], margin=margin)
    core = (slice(margin, margin + h), slice(margin, margin + w)) if margin \
        else (slice(None), slice(None))
    for center in centers:
        k = np.array([[focal, 0.0, (w - 1) / 2.0 + focal * center[0] / z_mid],
                      [0.0, focal, (h - 1) / 2.0 + focal * center[1] / z_mid],
                      [0.0, 0.0, 1.0]])
        k_inv = np.linalg.inv(k)
        dirs = np.einsum("ij,jhw->ihw", k_inv,
                         np.stack([xs, ys, np.ones_like(xs)]))
        origin = center
        depth = surface(origin, dirs)
        points = origin[:, None, None] + dirs * depth[None]
        image = 0.5 + 0.5 * texture(points) / texture.bound
        if noise > 0.0:
            image = image + rng.normal(0.0, noise, image.shape)
        scene.images.append(image)
        scene.cameras.append(CameraModel(k, (h, w)))
        scene.rotations.append(np.eye(3))
        scene.translations.append(-center)
        scene.gt_depths.append(depth[core])
    lo = min(float(d.min()) for d in scene.gt_depths)
    hi = max(float(d.max()) for d in scene.gt_depths)
    scene.depth_range = DepthRange(0.8 * lo, 1.2 * hi)
    return scene


def save_scene(scene: SceneData, root) -> None:
    """Write a scene directory: images/, cams/ and gt/ per view."""
    root = os.fspath(root)
    for sub in ("images", "cams", "gt"):
        os.makedirs(os.path.join(root, sub), exist_ok=True)
    for i, image in enumerate(scene.images):
        write_pgm(os.path.join(root, "images", f"view_{i:04d}.pgm"), image)
        write_cam_file(os.path.join(root, "cams", f"view_{i:04d}.txt"),
                       scene.cameras[i], scene.rotations[i],
                       scene.translations[i], scene.depth_range)
        if scene.gt_depths is not None:
            write_pfm(os.path.join(root, "gt", f"depth_{i:04d}.pfm"),
                      scene.gt_depths[i])


def load_scene(root) -> SceneData:
    """Read a directory written by :func:`save_scene`; gt/ may be absent.

    Any size excess of the images over the camera grid is interpreted as
    a symmetric guard band.
    """
    root = os.fspath(root)
    img_dir = os.path.join(root, "images")
    names = sorted(f for f in os.listdir(img_dir)
                   if f.endswith((".pgm", ".png")))
    scene = SceneData(name=os.path.basename(os.path.normpath(root)))
    gt = []
    for fname in names:
        stem = os.path.splitext(fname)[0]
        image = read_image(os.path.join(img_dir, fname))
        camera, (rot, trans), rng = read_cam_file(
            os.path.join(root, "cams", stem + ".txt"))
        margin = (image.shape[0] - camera.image_size[0]) // 2
        if (image.shape[0] - camera.image_size[0] != 2 * margin or
                image.shape[1] - camera.image_size[1] != 2 * margin or
                margin < 0):
            raise ValueError(
                f"{fname}: image {image.shape} does not wrap camera grid "
                f"{camera.image_size} in a symmetric band")
        scene.images.append(image)
        scene.margin = margin
        scene.cameras.append(camera)
        scene.rotations.append(rot)
        scene.translations.append(trans)
        scene.depth_range = rng
        gt_path = os.path.join(root, "gt",
                               stem.replace("view", "depth") + ".pfm")
        if os.path.exists(gt_path):
            gt.append(read_pfm(gt_path).astype(np.float64))
    scene.gt_depths = gt if len(gt) == len(scene.images) else None
    return scene
