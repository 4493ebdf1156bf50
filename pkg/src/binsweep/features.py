"""Dense matching features.

Each pyramid level carries a small bank of zero-DC linear responses of the
grayscale image, normalized by a local RMS so that matching scores are
invariant to local contrast. Channels come in two families:

- oriented gradients: central differences along directions evenly covering
  [0, pi), sampled bilinearly one pixel out on either side
- centered patch taps: the image at a small offset minus its own 3x3 mean

A constant image produces identically zero features; every channel value is
bounded by the square root of the normalization window area.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

__all__ = [
    "box_mean",
    "bilinear_sample",
    "spline_coeffs",
    "sample_spline",
    "downsample2",
    "build_image_pyramid",
    "extract_features",
    "feature_pyramid",
    "crop_pyramid",
]

PATCH_OFFSETS = ((0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0))
RMS_RADIUS = 2
RMS_FLOOR = 1e-6


def box_mean(image: np.ndarray, radius: int) -> np.ndarray:
    """Mean over a (2*radius+1)^2 window with replicate padding."""
    if radius < 1:
        raise ValueError(f"radius must be positive, got {radius}")
    padded = np.pad(np.asarray(image, dtype=np.float64), radius, mode="edge")
    n = 2 * radius + 1
    csum = np.cumsum(padded, axis=0)
    csum = np.vstack([np.zeros((1, csum.shape[1])), csum])
    rows = csum[n:] - csum[:-n]
    csum = np.cumsum(rows, axis=1)
    csum = np.hstack([np.zeros((csum.shape[0], 1)), csum])
    return (csum[:, n:] - csum[:, :-n]) / (n * n)


def bilinear_sample(image: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Sample an image bilinearly with coordinates clamped to the border."""
    image = np.asarray(image, dtype=np.float64)
    h, w = image.shape
    xs = np.clip(np.asarray(xs, dtype=np.float64), 0.0, w - 1.0)
    ys = np.clip(np.asarray(ys, dtype=np.float64), 0.0, h - 1.0)
    x0 = np.floor(xs).astype(np.intp)
    y0 = np.floor(ys).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = xs - x0
    fy = ys - y0
    top = image[y0, x0] * (1 - fx) + image[y0, x1] * fx
    bot = image[y1, x0] * (1 - fx) + image[y1, x1] * fx
    return top * (1 - fy) + bot * fy


def spline_coeffs(stack: np.ndarray) -> np.ndarray:
    """Cubic-spline coefficients for a (C, H, W) feature stack.

    Prefiltering once per stack makes every later :func:`sample_spline`
    call an interpolation through the original values. Cubic interpolation
    passes fine structure through fractional shifts nearly unattenuated,
    where bilinear sampling would dampen it and bias correlation peaks
    toward whole-pixel alignments.
    """
    stack = np.asarray(stack, dtype=np.float64)
    return np.stack([ndimage.spline_filter(ch, order=3, mode="mirror")
                     for ch in stack])


def sample_spline(coeffs: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Evaluate prefiltered coefficients at fractional coordinates.

    coeffs is (C, H, W) from :func:`spline_coeffs`; the result is
    (C,) + xs.shape. At integer grid points the original stack values are
    reproduced.
    """
    coords = [np.asarray(ys, dtype=np.float64), np.asarray(xs, dtype=np.float64)]
    return np.stack([ndimage.map_coordinates(ch, coords, order=3,
                                             prefilter=False, mode="mirror")
                     for ch in coeffs])


def downsample2(image: np.ndarray) -> np.ndarray:
    """Halve both axes by averaging disjoint 2x2 blocks."""
    image = np.asarray(image, dtype=np.float64)
    h, w = image.shape
    if h % 2 or w % 2:
        raise ValueError(f"image size {image.shape} is not divisible by 2")
    return image.reshape(h // 2, 2, w // 2, 2).mean(axis=(1, 3))


def build_image_pyramid(image: np.ndarray, levels: int) -> list[np.ndarray]:
    """Images for each pyramid level, full resolution first."""
    if levels < 1:
        raise ValueError(f"need at least one level, got {levels}")
    out = [np.asarray(image, dtype=np.float64)]
    for _ in range(levels - 1):
        out.append(downsample2(out[-1]))
    return out


def extract_features(image: np.ndarray, n_channels: int = 8) -> np.ndarray:
    """Compute the feature bank for one image.

    Args:
        image: grayscale array, values nominally in [0, 1].
        n_channels: total channel count, even; half oriented gradients and
            half patch taps.

    Returns:
        float32 array of shape (n_channels, H, W).
    """
    if n_channels % 2 or n_channels < 2:
        raise ValueError(f"channel count must be even and >= 2, got {n_channels}")
    n_grad = n_channels // 2
    n_patch = n_channels - n_grad
    if n_patch > len(PATCH_OFFSETS):
        raise ValueError(
            f"at most {2 * len(PATCH_OFFSETS)} channels supported, got {n_channels}")
    image = np.asarray(image, dtype=np.float64)
    h, w = image.shape
    xs, ys = np.meshgrid(np.arange(w, dtype=np.float64),
                         np.arange(h, dtype=np.float64))
    channels = np.empty((n_channels, h, w), dtype=np.float64)
    for i in range(n_grad):
        theta = np.pi * i / n_grad
        ux, uy = np.cos(theta), np.sin(theta)
        forward = bilinear_sample(image, xs + ux, ys + uy)
        backward = bilinear_sample(image, xs - ux, ys - uy)
        channels[i] = 0.5 * (forward - backward)
    local_mean = box_mean(image, 1)
    for i, (dx, dy) in enumerate(PATCH_OFFSETS[:n_patch]):
        channels[n_grad + i] = bilinear_sample(image, xs + dx, ys + dy) - local_mean
    meansq = np.stack([box_mean(c * c, RMS_RADIUS) for c in channels])
    rms = np.sqrt(np.maximum(meansq, RMS_FLOOR))
    return (channels / rms).astype(np.float32)


def feature_pyramid(image: np.ndarray, levels: int = 4,
                    n_channels: int = 8) -> list[np.ndarray]:
    """Feature banks for every pyramid level, full resolution first.

    Features cover the full extent of the given image. When the image
    carries a guard band around the camera's pixel grid, pass the result
    through :func:`crop_pyramid` for grids aligned with the camera, or use
    it whole as a source-view sampling target that extends past the frame.
    """
    return [extract_features(img, n_channels)
            for img in build_image_pyramid(image, levels)]


def crop_pyramid(pyramid: list[np.ndarray], margin: int) -> list[np.ndarray]:
    """Strip a guard band of margin pixels per side, halved per level."""
    levels = len(pyramid)
    if margin < 0 or margin % (1 << (levels - 1)):
        raise ValueError(
            f"margin {margin} must be a non-negative multiple of {1 << (levels - 1)}")
    out = []
    for level, feats in enumerate(pyramid):
        m = margin >> level
        out.append(feats[:, m:-m, m:-m] if m else feats)
    return out
