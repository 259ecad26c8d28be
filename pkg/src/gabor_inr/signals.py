"""Coordinate grids, synthetic test signals and file I/O.

Grids are row-major: the first axis varies slowest, so an [H, W] image
flattens to rows ordered (row 0, col 0), (row 0, col 1), ...  Column d of the
coordinate array is the position along axis d.
"""
from __future__ import annotations

import csv
import re
import struct
from pathlib import Path
from typing import Iterable

import numpy as np

TENSOR_MAGIC = b"INRTENS\x00"
TENSOR_VERSION = 1
_DTYPE_F64 = 1


class FormatError(ValueError):
    pass


def axis_samples(n: int) -> np.ndarray:
    if n < 1:
        raise ValueError(f"grid dimensions must be >= 1, got {n}")
    return np.zeros(1) if n == 1 else np.linspace(-1.0, 1.0, n)


def make_grid(dims: Iterable[int]) -> np.ndarray:
    """Coordinates [prod(dims), len(dims)] spanning [-1, 1] along each axis."""
    dims = tuple(int(d) for d in dims)
    if not dims:
        raise ValueError("at least one dimension is required")
    axes = [axis_samples(n) for n in dims]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=1)


def to_samples(signal: np.ndarray, spatial_ndim: int) -> np.ndarray:
    """[*dims, C] (or [*dims]) array -> [N, C] rows in grid order."""
    signal = np.asarray(signal)
    if signal.ndim == spatial_ndim:
        signal = signal[..., None]
    return signal.reshape(-1, signal.shape[-1])


# --------------------------------------------------------------------------
# PGM / PPM


_HEADER = re.compile(rb"(P[56])\s+(?:#.*\s+)*(\d+)\s+(?:#.*\s+)*(\d+)\s+(?:#.*\s+)*(\d+)\s")


def load_image(path) -> np.ndarray:
    """Read an 8-bit binary PGM (P5) or PPM (P6) as floats in [0, 1], shape [H, W, C]."""
    raw = Path(path).read_bytes()
    m = _HEADER.match(raw)
    if m is None:
        raise FormatError(f"{path}: malformed PGM/PPM header")
    magic, w, h, maxval = m.group(1), int(m.group(2)), int(m.group(3)), int(m.group(4))
    if maxval != 255:
        raise FormatError(f"{path}: unsupported maxval {maxval} (only 8-bit images are read)")
    channels = 1 if magic == b"P5" else 3
    payload = raw[m.end():]
    need = w * h * channels
    if len(payload) < need:
        raise FormatError(f"{path}: truncated pixel data ({len(payload)} of {need} bytes)")
    pix = np.frombuffer(payload[:need], dtype=np.uint8).reshape(h, w, channels)
    return pix.astype(np.float64) / 255.0


def quantize(img) -> np.ndarray:
    """[0, 1] floats -> uint8 with round-half-up, clipping out-of-range values."""
    img = np.asarray(img, dtype=np.float64)
    return np.clip(np.floor(img * 255.0 + 0.5), 0, 255).astype(np.uint8)


def save_image(img, path) -> None:
    img = np.asarray(img)
    if img.ndim == 2:
        img = img[..., None]
    h, w, c = img.shape
    if c not in (1, 3):
        raise ValueError(f"cannot save {c}-channel image as PGM/PPM")
    magic = "P5" if c == 1 else "P6"
    header = f"{magic}\n{w} {h}\n255\n".encode("ascii")
    Path(path).write_bytes(header + quantize(img).tobytes())


# --------------------------------------------------------------------------
# tensor container


def save_tensor(arr, path) -> None:
    """Versioned binary container: magic, u32 version, u32 dtype code (1 = f64),
    u32 rank, u64 dims, then the row-major little-endian float64 payload."""
    arr = np.asarray(arr, dtype=np.float64)
    header = TENSOR_MAGIC + struct.pack("<III", TENSOR_VERSION, _DTYPE_F64, arr.ndim)
    header += struct.pack(f"<{arr.ndim}Q", *arr.shape)
    Path(path).write_bytes(header + np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_tensor(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:8] != TENSOR_MAGIC:
        raise FormatError(f"{path}: bad magic, not a tensor container")
    if len(raw) < 20:
        raise FormatError(f"{path}: truncated header")
    version, dtype, ndim = struct.unpack_from("<III", raw, 8)
    if version != TENSOR_VERSION:
        raise FormatError(f"{path}: unsupported container version {version}")
    if dtype != _DTYPE_F64:
        raise FormatError(f"{path}: unsupported dtype code {dtype}")
    off = 20 + 8 * ndim
    if len(raw) < off:
        raise FormatError(f"{path}: truncated header")
    shape = struct.unpack_from(f"<{ndim}Q", raw, 20)
    count = int(np.prod(shape, dtype=np.int64))
    if len(raw) - off != 8 * count:
        raise FormatError(f"{path}: payload holds {len(raw) - off} bytes, expected {8 * count}")
    return np.frombuffer(raw, dtype="<f8", count=count, offset=off).reshape(shape).astype(np.float64)


def write_csv(rows: list[dict], path, columns: list[str] | None = None) -> None:
    columns = columns or (list(rows[0]) if rows else [])
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=columns, extrasaction="ignore", lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: ("" if row.get(k) is None else row[k]) for k in columns})


# --------------------------------------------------------------------------
# synthetic signals

# modified Shepp-Logan ellipses: intensity, semi-axes (a, b), centre (x, y), angle in degrees
_SHEPP_LOGAN = [
    (1.0, 0.69, 0.92, 0.0, 0.0, 0),
    (-0.8, 0.6624, 0.8740, 0.0, -0.0184, 0),
    (-0.2, 0.1100, 0.3100, 0.22, 0.0, -18),
    (-0.2, 0.1600, 0.4100, -0.22, 0.0, 18),
    (0.1, 0.2100, 0.2500, 0.0, 0.35, 0),
    (0.1, 0.0460, 0.0460, 0.0, 0.1, 0),
    (0.1, 0.0460, 0.0460, 0.0, -0.1, 0),
    (0.1, 0.0460, 0.0230, -0.08, -0.605, 0),
    (0.1, 0.0230, 0.0230, 0.0, -0.606, 0),
    (0.1, 0.0230, 0.0460, 0.06, -0.605, 0),
]


def _plane(dims):
    if len(dims) != 2:
        raise ValueError(f"this signal is two-dimensional, got dims {dims}")
    g = make_grid(dims)
    # image convention: x to the right, y up
    return g[:, 1].reshape(dims), -g[:, 0].reshape(dims)


def siemens_star(dims, spokes: int = 16, radius: float = 0.9) -> np.ndarray:
    x, y = _plane(dims)
    theta = np.arctan2(y, x)
    r = np.hypot(x, y)
    star = (np.sin(spokes * theta) >= 0).astype(np.float64)
    return np.where(r <= radius, star, 0.5)[..., None]


def point_field(dims, count: int, rng) -> np.ndarray:
    dims = tuple(dims)
    n = int(np.prod(dims))
    if not 0 <= count <= n:
        raise ValueError(f"cannot place {count} points on {n} samples")
    flat = np.zeros(n)
    flat[rng.choice(n, size=count, replace=False)] = 1.0
    return flat.reshape(dims)[..., None]


def sphere_occupancy(dims, radius: float) -> np.ndarray:
    g = make_grid(dims)
    inside = np.linalg.norm(g, axis=1) < radius
    return inside.astype(np.float64).reshape(tuple(dims))[..., None]


def shepp_logan(dims) -> np.ndarray:
    x, y = _plane(dims)
    img = np.zeros_like(x)
    for value, a, b, x0, y0, deg in _SHEPP_LOGAN:
        t = np.deg2rad(deg)
        dx, dy = x - x0, y - y0
        u = dx * np.cos(t) + dy * np.sin(t)
        v = -dx * np.sin(t) + dy * np.cos(t)
        img[(u / a) ** 2 + (v / b) ** 2 <= 1.0] += value
    return np.clip(img, 0.0, 1.0)[..., None]


def gaussian_noise_field(dims, rng, mean: float = 0.5, sigma: float = 0.1) -> np.ndarray:
    return np.clip(mean + sigma * rng.standard_normal(tuple(dims)), 0.0, 1.0)[..., None]


SYNTH_KINDS = ("siemens_star", "point_field", "sphere_occupancy", "shepp_logan", "gaussian_noise_field")


def synth_signal(kind: str, dims, params: dict | None = None, seed: int = 0) -> np.ndarray:
    """Deterministic synthetic signal of shape [*dims, 1] with values in [0, 1]."""
    params = dict(params or {})
    dims = tuple(int(d) for d in dims)
    rng = np.random.default_rng(seed)
    if kind == "siemens_star":
        return siemens_star(dims, **params)
    if kind == "point_field":
        return point_field(dims, rng=rng, **params)
    if kind == "sphere_occupancy":
        return sphere_occupancy(dims, **params)
    if kind == "shepp_logan":
        return shepp_logan(dims, **params)
    if kind == "gaussian_noise_field":
        return gaussian_noise_field(dims, rng, **params)
    raise ValueError(f"unknown signal kind {kind!r}; known: {', '.join(SYNTH_KINDS)}")
