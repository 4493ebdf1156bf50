"""Brute-force oracles shared between the unit tests and the acceptance
suite.

Everything here is written against scipy / plain matrix arithmetic rather
than the library's own warping and sampling helpers, so a library bug
cannot cancel out of the comparison.
"""

import dataclasses

import numpy as np
from scipy import ndimage

from binsweep import CameraModel, RelativePose, masked_cross_entropy
from binsweep.training import regularize, softmax_probs


def verged_pair(rng, size=(16, 16), n_channels=8, margin=4, focal=50.0,
                baseline=40.0, z_mid=100.0):
    """Random feature pair on a two-camera rig that converges at z_mid.

    The source features carry a guard band of margin pixels per side. The
    baseline is chosen so warps near the image border can leave the source
    grid, exercising the covered mask.
    """
    h, w = size
    ref_feats = rng.normal(size=(n_channels, h, w)).astype(np.float32)
    src_feats = rng.normal(size=(n_channels, h + 2 * margin,
                                 w + 2 * margin)).astype(np.float32)

    def intrinsics(cx_shift):
        return np.array([[focal, 0.0, (w - 1) / 2.0 + cx_shift],
                         [0.0, focal, (h - 1) / 2.0],
                         [0.0, 0.0, 1.0]])

    cam_ref = CameraModel(intrinsics(0.0), size)
    cam_src = CameraModel(intrinsics(focal * baseline / z_mid), size)
    pose = RelativePose(np.eye(3), np.array([-baseline, 0.0, 0.0]))
    depths = rng.uniform(z_mid * 0.8, z_mid * 1.2, size=(4, h, w))
    return ref_feats, src_feats, cam_ref, cam_src, pose, depths


def brute_force_volume(ref_feats, src_feats, cam_ref, cam_src, pose, depths,
                       n_groups):
    """Per-pixel scalar group correlation, one warped sample at a time.

    Projects each reference pixel by explicit matrix arithmetic and samples
    every source channel through scipy's cubic spline at that single point,
    then takes the scaled per-group dot products.
    """
    c, h, w = ref_feats.shape
    d = depths.shape[0]
    per = c // n_groups
    gh, gw = src_feats.shape[1:]
    margin = (gh - cam_src.image_size[0]) // 2
    scores = np.zeros((d, h, w, n_groups))
    covered = np.zeros((d, h, w), dtype=bool)
    k_inv = np.linalg.inv(cam_ref.intrinsics)
    src64 = [src_feats[ch].astype(np.float64) for ch in range(c)]
    for j in range(d):
        for y in range(h):
            for x in range(w):
                ray = k_inv @ np.array([x, y, 1.0])
                p = pose.rotation @ (ray * depths[j, y, x]) + pose.translation
                if p[2] <= 1e-12:
                    continue
                uv = cam_src.intrinsics @ p
                xs = uv[0] / uv[2] + margin
                ys = uv[1] / uv[2] + margin
                if not (0.0 <= xs <= gw - 1 and 0.0 <= ys <= gh - 1):
                    continue
                covered[j, y, x] = True
                sample = np.array([
                    ndimage.map_coordinates(src64[ch], [[ys], [xs]], order=3,
                                            mode="mirror")[0]
                    for ch in range(c)
                ])
                rvec = ref_feats[:, y, x].astype(np.float64)
                for g in range(n_groups):
                    block = slice(g * per, (g + 1) * per)
                    scores[j, y, x, g] = (n_groups / c) * float(
                        rvec[block] @ sample[block])
    return scores, covered


def numeric_loss_gradients(volume, params, labels, valid, radius, step=1e-4):
    """Central finite differences of the stage loss in every parameter."""

    def loss_at(p):
        probs = softmax_probs(regularize(volume, p, radius))
        return masked_cross_entropy(probs, labels, valid)

    d_w = np.zeros_like(params.group_weights)
    for i in range(d_w.size):
        for sign in (1.0, -1.0):
            w = params.group_weights.copy()
            w[i] += sign * step
            d_w[i] += sign * loss_at(dataclasses.replace(params, group_weights=w))
    d_b = np.zeros_like(params.hypothesis_biases)
    for i in range(d_b.size):
        for sign in (1.0, -1.0):
            b = params.hypothesis_biases.copy()
            b[i] += sign * step
            d_b[i] += sign * loss_at(
                dataclasses.replace(params, hypothesis_biases=b))
    return d_w / (2 * step), d_b / (2 * step)


def relative_error(analytic, numeric):
    scale = max(np.abs(analytic).max(), np.abs(numeric).max(), 1e-8)
    return np.abs(analytic - numeric).max() / scale
