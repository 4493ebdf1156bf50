"""File formats used by the toolkit.

Readers and writers for:

- PFM depth / consistency maps (little-endian, scale -1.0, rows bottom-up)
- binary PGM images, 8-bit or 16-bit (16-bit samples are big-endian per
  the netpbm convention); PNG via Pillow
- per-view camera files (intrinsics, rotation, translation, depth range)
- ASCII PLY point clouds with optional per-point gray value
- regularizer parameter files (name=value lines)
- raw cost-volume dumps with a one-line text header
"""

from __future__ import annotations

import os

import numpy as np

__all__ = [
    "read_pfm",
    "write_pfm",
    "read_image",
    "write_pgm",
    "read_cam_file",
    "write_cam_file",
    "write_ply",
    "read_ply",
    "save_params",
    "load_params",
    "dump_volume",
    "load_volume_dump",
]


# ---------------------------------------------------------------------------
# PFM
# ---------------------------------------------------------------------------

def write_pfm(path, data: np.ndarray) -> None:
    """Write a single-channel float32 PFM file (little-endian, scale -1.0).

    Rows are stored bottom-up as the format requires.
    """
    data = np.asarray(data, dtype=np.float32)
    if data.ndim != 2:
        raise ValueError(f"PFM writer expects a 2-D array, got shape {data.shape}")
    h, w = data.shape
    with open(path, "wb") as f:
        f.write(b"Pf\n")
        f.write(f"{w} {h}\n".encode("ascii"))
        f.write(b"-1.0\n")
        np.flipud(data).astype("<f4").tofile(f)


def read_pfm(path) -> np.ndarray:
    """Read a PFM file into a float32 array (top row first)."""
    with open(path, "rb") as f:
        header = f.readline().decode("ascii").rstrip()
        if header not in ("Pf", "PF"):
            raise ValueError(f"{path}: not a PFM file (header {header!r})")
        color = header == "PF"
        dims = f.readline().decode("ascii").strip()
        while dims.startswith("#"):
            dims = f.readline().decode("ascii").strip()
        w, h = map(int, dims.split())
        scale = float(f.readline().decode("ascii").strip())
        dtype = "<f4" if scale < 0 else ">f4"
        count = w * h * (3 if color else 1)
        data = np.fromfile(f, dtype, count)
    if data.size != count:
        raise ValueError(f"{path}: truncated PFM payload")
    shape = (h, w, 3) if color else (h, w)
    return np.flipud(data.reshape(shape)).astype(np.float32)


# ---------------------------------------------------------------------------
# Images
# ---------------------------------------------------------------------------

def write_pgm(path, image: np.ndarray, maxval: int = 65535) -> None:
    """Write a grayscale image in [0, 1] as a binary PGM (P5).

    maxval 255 gives an 8-bit file, anything larger a 16-bit one.
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise ValueError("PGM writer expects a 2-D grayscale image")
    if not (0 < maxval <= 65535):
        raise ValueError(f"invalid maxval {maxval}")
    quant = np.clip(np.rint(image * maxval), 0, maxval)
    h, w = image.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n{maxval}\n".encode("ascii"))
        if maxval < 256:
            quant.astype(np.uint8).tofile(f)
        else:
            quant.astype(">u2").tofile(f)


def _read_pgm(path) -> np.ndarray:
    with open(path, "rb") as f:
        magic = f.read(2)
        if magic != b"P5":
            raise ValueError(f"{path}: only binary (P5) PGM is supported")
        fields = []
        while len(fields) < 3:
            line = f.readline().decode("ascii")
            line = line.split("#", 1)[0]
            fields.extend(line.split())
        w, h, maxval = map(int, fields[:3])
        dtype = np.uint8 if maxval < 256 else np.dtype(">u2")
        data = np.fromfile(f, dtype, w * h)
    if data.size != w * h:
        raise ValueError(f"{path}: truncated PGM payload")
    return data.reshape(h, w).astype(np.float64) / maxval


def read_image(path) -> np.ndarray:
    """Load a grayscale image as float64 in [0, 1].

    Supports binary PGM directly and PNG-class rasters through Pillow;
    color inputs are averaged to gray.
    """
    path = os.fspath(path)
    if path.lower().endswith(".pgm"):
        return _read_pgm(path)
    from PIL import Image

    with Image.open(path) as img:
        arr = np.asarray(img, dtype=np.float64)
        if arr.ndim == 3:
            arr = arr[..., :3].mean(axis=2)
        if img.mode in ("I;16", "I;16B", "I;16L", "I"):
            return arr / 65535.0
        return arr / 255.0


# ---------------------------------------------------------------------------
# Camera files
# ---------------------------------------------------------------------------

def write_cam_file(path, camera, rotation, translation, depth_range) -> None:
    """Write one view's camera record.

    Layout (line-oriented, mirrors common MVS cam.txt files):

        intrinsic
        <3 rows of K>
        extrinsic
        <3 rows of R>
        <t as one row>
        depth_range
        <d_min d_max>
        image_size
        <height width>
    """
    lines = ["intrinsic"]
    for row in np.asarray(camera.intrinsics, dtype=np.float64):
        lines.append(" ".join(f"{v:.17g}" for v in row))
    lines.append("extrinsic")
    for row in np.asarray(rotation, dtype=np.float64):
        lines.append(" ".join(f"{v:.17g}" for v in row))
    lines.append(" ".join(f"{v:.17g}" for v in np.asarray(translation, dtype=np.float64)))
    lines.append("depth_range")
    lines.append(f"{depth_range.d_min:.17g} {depth_range.d_max:.17g}")
    lines.append("image_size")
    lines.append(f"{camera.image_size[0]} {camera.image_size[1]}")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def read_cam_file(path):
    """Read a camera record written by :func:`write_cam_file`.

    Returns (CameraModel, (R, t), DepthRange).
    """
    from .geometry import CameraModel
    from .search import DepthRange

    with open(path) as f:
        tokens = f.read().split()
    def take(n, pos):
        return [float(tokens[pos + i]) for i in range(n)], pos + n

    pos = 0
    if tokens[pos] != "intrinsic":
        raise ValueError(f"{path}: expected 'intrinsic' header")
    vals, pos = take(9, pos + 1)
    k = np.array(vals).reshape(3, 3)
    if tokens[pos] != "extrinsic":
        raise ValueError(f"{path}: expected 'extrinsic' header")
    vals, pos = take(9, pos + 1)
    r = np.array(vals).reshape(3, 3)
    vals, pos = take(3, pos)
    t = np.array(vals)
    if tokens[pos] != "depth_range":
        raise ValueError(f"{path}: expected 'depth_range' header")
    vals, pos = take(2, pos + 1)
    rng = DepthRange(vals[0], vals[1])
    if tokens[pos] != "image_size":
        raise ValueError(f"{path}: expected 'image_size' header")
    h, w = int(tokens[pos + 1]), int(tokens[pos + 2])
    cam = CameraModel(k, (h, w))
    return cam, (r, t), rng


# ---------------------------------------------------------------------------
# PLY
# ---------------------------------------------------------------------------

def write_ply(path, points: np.ndarray, gray: np.ndarray | None = None) -> None:
    """Write an ASCII PLY point cloud: x, y, z and an optional uchar gray."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    with open(path, "w") as f:
        f.write("ply\nformat ascii 1.0\n")
        f.write(f"element vertex {len(points)}\n")
        f.write("property float x\nproperty float y\nproperty float z\n")
        if gray is not None:
            f.write("property uchar gray\n")
        f.write("end_header\n")
        if gray is None:
            for x, y, z in points:
                f.write(f"{x:.6f} {y:.6f} {z:.6f}\n")
        else:
            levels = np.clip(np.rint(np.asarray(gray, dtype=np.float64) * 255), 0, 255)
            for (x, y, z), g in zip(points, levels):
                f.write(f"{x:.6f} {y:.6f} {z:.6f} {int(g)}\n")


def read_ply(path):
    """Read an ASCII PLY written by :func:`write_ply`.

    Returns (points, gray-or-None).
    """
    with open(path) as f:
        if f.readline().strip() != "ply":
            raise ValueError(f"{path}: not a PLY file")
        n = 0
        props = []
        for line in f:
            line = line.strip()
            if line.startswith("element vertex"):
                n = int(line.split()[-1])
            elif line.startswith("property"):
                props.append(line.split()[-1])
            elif line == "end_header":
                break
        has_gray = "gray" in props
        pts = np.empty((n, 3), dtype=np.float64)
        gray = np.empty(n, dtype=np.float64) if has_gray else None
        for i in range(n):
            parts = f.readline().split()
            pts[i] = [float(v) for v in parts[:3]]
            if has_gray:
                gray[i] = float(parts[3]) / 255.0
    return pts, gray


# ---------------------------------------------------------------------------
# Regularizer parameter files
# ---------------------------------------------------------------------------

def save_params(path, params_per_level) -> None:
    """Save per-level regularizer parameters as name=value lines."""
    lines = [f"levels={len(params_per_level)}"]
    for lvl, params in enumerate(params_per_level):
        for g, v in enumerate(params.group_weights):
            lines.append(f"level{lvl}.w{g}={v:.17g}")
        for j, v in enumerate(params.hypothesis_biases):
            lines.append(f"level{lvl}.b{j}={v:.17g}")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def load_params(path):
    """Load parameters written by :func:`save_params`.

    Returns a list of RegularizerParams, one per pyramid level.
    """
    from .training import RegularizerParams

    values = {}
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            name, _, value = line.partition("=")
            values[name.strip()] = value.strip()
    n_levels = int(values.pop("levels"))
    out = []
    for lvl in range(n_levels):
        ws, bs = [], []
        g = 0
        while f"level{lvl}.w{g}" in values:
            ws.append(float(values[f"level{lvl}.w{g}"]))
            g += 1
        j = 0
        while f"level{lvl}.b{j}" in values:
            bs.append(float(values[f"level{lvl}.b{j}"]))
            j += 1
        out.append(RegularizerParams(np.array(ws), np.array(bs)))
    return out


# ---------------------------------------------------------------------------
# Cost-volume debug dumps
# ---------------------------------------------------------------------------

def dump_volume(path, volume) -> None:
    """Dump correlation scores as raw little-endian float32 with a text header.

    The header is a single line "D H W G" giving the axis sizes in storage
    order; the payload follows in C order.
    """
    data = np.asarray(volume.data, dtype="<f4")
    d, h, w, g = data.shape
    with open(path, "wb") as f:
        f.write(f"{d} {h} {w} {g}\n".encode("ascii"))
        data.tofile(f)


def load_volume_dump(path) -> np.ndarray:
    """Read a dump written by :func:`dump_volume` into a D,H,W,G array."""
    with open(path, "rb") as f:
        d, h, w, g = map(int, f.readline().split())
        data = np.fromfile(f, "<f4", d * h * w * g)
    if data.size != d * h * w * g:
        raise ValueError(f"{path}: truncated volume dump")
    return data.reshape(d, h, w, g)
