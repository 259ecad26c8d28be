"""Linear measurement operators and noise models.

Every operator acts on images of shape [H, W, C] channel by channel and is
materialized as a sparse matrix over the flattened (row-major) pixels, so the
same object serves direct application and the fixed linear map inside the
training graph.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True)
class NoiseModel:
    kind: str = "none"          # none | gaussian | photon
    sigma: float = 0.0          # intensity units
    max_photons: float = 1.0    # photons at unit intensity
    readout: float = 0.0        # read-noise std in photon counts

    def __post_init__(self):
        if self.kind not in ("none", "gaussian", "photon"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.sigma < 0 or self.readout < 0:
            raise ValueError("sigma and readout must be non-negative")
        if self.kind == "photon" and self.max_photons < 1:
            raise ValueError("max_photons must be >= 1")


NO_NOISE = NoiseModel()


def apply_noise(clean, noise: NoiseModel, seed: int) -> np.ndarray:
    """Gaussian: x + N(0, sigma^2).  Photon: (Poisson(p x) + N(0, r^2)) / p.

    Photon output is not clipped.
    """
    clean = np.asarray(clean, dtype=np.float64)
    if noise.kind == "none":
        return clean.copy()
    rng = np.random.default_rng(seed)
    if noise.kind == "gaussian":
        return clean + noise.sigma * rng.standard_normal(clean.shape)
    if np.any(clean < 0):
        raise ValueError("photon noise needs non-negative intensities")
    p = noise.max_photons
    counts = rng.poisson(p * clean) + noise.readout * rng.standard_normal(clean.shape)
    return counts / p


# --------------------------------------------------------------------------
# sparse builders


def bilinear_matrix(rows: np.ndarray, cols: np.ndarray, shape: tuple[int, int],
                    mode: str = "zero", out_index: np.ndarray | None = None,
                    n_out: int | None = None) -> sp.csr_matrix:
    """Sparse matrix sampling an [H, W] image at fractional (row, col) points.

    ``mode='clamp'`` clamps sample positions to the image; ``mode='zero'``
    treats the outside as zero.  ``out_index`` maps each sample to an output
    row (samples sharing a row are summed).
    """
    h, w = shape
    rows = np.asarray(rows, dtype=np.float64).ravel()
    cols = np.asarray(cols, dtype=np.float64).ravel()
    if mode == "clamp":
        rows = np.clip(rows, 0, h - 1)
        cols = np.clip(cols, 0, w - 1)
    r0 = np.floor(rows)
    c0 = np.floor(cols)
    fr = rows - r0
    fc = cols - c0
    r0 = r0.astype(np.int64)
    c0 = c0.astype(np.int64)
    if out_index is None:
        out_index = np.arange(rows.size)
        n_out = rows.size
    entries_r, entries_c, entries_v = [], [], []
    for dr, dc, wt in ((0, 0, (1 - fr) * (1 - fc)), (0, 1, (1 - fr) * fc),
                       (1, 0, fr * (1 - fc)), (1, 1, fr * fc)):
        rr, cc = r0 + dr, c0 + dc
        ok = (rr >= 0) & (rr < h) & (cc >= 0) & (cc < w) & (wt != 0)
        entries_r.append(out_index[ok])
        entries_c.append(rr[ok] * w + cc[ok])
        entries_v.append(wt[ok])
    m = sp.coo_matrix((np.concatenate(entries_v), (np.concatenate(entries_r), np.concatenate(entries_c))),
                      shape=(n_out, h * w)).tocsr()
    m.sum_duplicates()
    return m


def downsample_matrix(shape, factor: int) -> sp.csr_matrix:
    """Area averaging over factor x factor blocks, then decimation."""
    h, w = shape
    if factor < 1 or h % factor or w % factor:
        raise ValueError(f"image {h}x{w} is not divisible by factor {factor}")
    ho, wo = h // factor, w // factor
    r, c = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    out = (r // factor) * wo + (c // factor)
    vals = np.full(h * w, 1.0 / (factor * factor))
    return sp.csr_matrix((vals, (out.ravel(), np.arange(h * w))), shape=(ho * wo, h * w))


def warp_matrix(shape, shift_xy=(0.0, 0.0), rotation: float = 0.0) -> sp.csr_matrix:
    """Rigid motion about the image centre: rotate by ``rotation`` then translate
    by ``shift_xy`` (x = columns, y = rows, in pixels).  Output pixel p samples
    the input at R(-rotation)(p - c - shift) + c, clamped to the edge."""
    h, w = shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    r, c = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    dx = c - cx - shift_xy[0]
    dy = r - cy - shift_xy[1]
    cos, sin = math.cos(rotation), math.sin(rotation)
    src_c = cos * dx + sin * dy + cx
    src_r = -sin * dx + cos * dy + cy
    return bilinear_matrix(src_r, src_c, shape, mode="clamp")


def inverse_warp(shift_xy, rotation):
    """Parameters of the warp undoing ``warp(shift_xy, rotation)``."""
    cos, sin = math.cos(-rotation), math.sin(-rotation)
    sx, sy = shift_xy
    return (-(cos * sx - sin * sy), -(sin * sx + cos * sy)), -rotation


def radon_matrix(size: int, angles, detector_count: int | None = None) -> sp.csr_matrix:
    """Parallel-beam projections of a [size, size] image.

    For angle t, detector offset u and ray position v (pixels from the
    centre), the sample point is x = u cos t - v sin t, y = u sin t + v cos t
    with x along columns and y along rows.  Each bin sums ``size`` unit-spaced
    bilinear samples (zero outside the image).  Detectors are spaced
    size/detector_count pixels apart.
    """
    angles = np.asarray(angles, dtype=np.float64)
    if angles.size == 0:
        raise ValueError("radon needs at least one angle")
    detector_count = detector_count or size
    c = (size - 1) / 2.0
    pitch = size / detector_count
    u = (np.arange(detector_count) - (detector_count - 1) / 2.0) * pitch
    v = np.arange(size) - c
    t = angles[:, None, None]
    uu = u[None, :, None]
    vv = v[None, None, :]
    x = uu * np.cos(t) - vv * np.sin(t) + c
    y = uu * np.sin(t) + vv * np.cos(t) + c
    bins = np.broadcast_to(np.arange(angles.size * detector_count).reshape(angles.size, detector_count, 1),
                           x.shape)
    return bilinear_matrix(y, x, (size, size), mode="zero", out_index=bins.ravel(),
                           n_out=angles.size * detector_count)


def bilinear_upsample_matrix(shape_low, factor: int) -> sp.csr_matrix:
    """Bilinear upsampling consistent with block-average downsampling
    (low-res pixel i sits at high-res position (i + 0.5) * factor - 0.5)."""
    hl, wl = shape_low
    h, w = hl * factor, wl * factor
    r, c = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    return bilinear_matrix((r + 0.5) / factor - 0.5, (c + 0.5) / factor - 0.5, (hl, wl), mode="clamp")


def _apply_matrix(m, img: np.ndarray) -> np.ndarray:
    flat = img.reshape(-1, img.shape[-1])
    return np.asarray(m @ flat)


def _as_image(img) -> tuple[np.ndarray, bool]:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        return img[..., None], True
    return img, False


def downsample(img, factor: int) -> np.ndarray:
    img, squeeze = _as_image(img)
    h, w, ch = img.shape
    out = _apply_matrix(downsample_matrix((h, w), factor), img).reshape(h // factor, w // factor, ch)
    return out[..., 0] if squeeze else out


def warp(img, shift_xy=(0.0, 0.0), rotation: float = 0.0) -> np.ndarray:
    img, squeeze = _as_image(img)
    h, w, ch = img.shape
    out = _apply_matrix(warp_matrix((h, w), shift_xy, rotation), img).reshape(h, w, ch)
    return out[..., 0] if squeeze else out


def radon(img, angles, detector_count: int | None = None) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 3:
        if img.shape[2] != 1:
            raise ValueError("radon works on single-channel images")
        img = img[..., 0]
    if img.ndim != 2 or img.shape[0] != img.shape[1]:
        raise ValueError(f"radon needs a square image, got {img.shape}")
    m = radon_matrix(img.shape[0], angles, detector_count)
    return np.asarray(m @ img.reshape(-1)).reshape(len(angles), -1)


def bilinear_upsample(img, factor: int) -> np.ndarray:
    img, squeeze = _as_image(img)
    h, w, ch = img.shape
    out = _apply_matrix(bilinear_upsample_matrix((h, w), factor), img).reshape(h * factor, w * factor, ch)
    return out[..., 0] if squeeze else out


# --------------------------------------------------------------------------
# forward operators


@dataclass(frozen=True)
class Warp:
    shift_xy: tuple[float, float] = (0.0, 0.0)
    rotation: float = 0.0


@dataclass(frozen=True)
class ForwardOperator:
    """kind: identity | downsample | warp_downsample | radon."""

    kind: str = "identity"
    factor: int = 1
    warps: tuple[Warp, ...] = ()
    angles: tuple[float, ...] = ()
    detector_count: int | None = None
    noise: NoiseModel = field(default_factory=NoiseModel)

    def __post_init__(self):
        if self.kind not in ("identity", "downsample", "warp_downsample", "radon"):
            raise ValueError(f"unknown operator kind {self.kind!r}")
        if int(self.factor) != self.factor or self.factor < 1:
            raise ValueError("factor must be an integer >= 1")
        if self.kind == "warp_downsample" and not self.warps:
            raise ValueError("warp_downsample needs at least one warp")
        if self.kind == "radon":
            if not self.angles:
                raise ValueError("radon needs at least one angle")
            if any(not 0 <= a < math.pi for a in self.angles):
                raise ValueError("radon angles must lie in [0, pi)")
            if self.detector_count is not None and self.detector_count < 1:
                raise ValueError("detector_count must be >= 1")

    @classmethod
    def identity(cls, noise=NO_NOISE):
        return cls("identity", noise=noise)

    @classmethod
    def downsample(cls, factor, noise=NO_NOISE):
        return cls("downsample", factor=factor, noise=noise)

    @classmethod
    def warp_downsample(cls, warps, factor, noise=NO_NOISE):
        warps = tuple(w if isinstance(w, Warp) else Warp(tuple(w[0]), float(w[1])) for w in warps)
        return cls("warp_downsample", factor=factor, warps=warps, noise=noise)

    @classmethod
    def radon(cls, angles, detector_count=None, noise=NO_NOISE):
        return cls("radon", angles=tuple(float(a) for a in angles), detector_count=detector_count, noise=noise)

    def without_noise(self) -> "ForwardOperator":
        return ForwardOperator(self.kind, self.factor, self.warps, self.angles, self.detector_count, NO_NOISE)

    def output_shape(self, shape) -> tuple[int, ...]:
        h, w = shape[:2]
        ch = shape[2] if len(shape) > 2 else 1
        if self.kind == "identity":
            return (h, w, ch)
        if self.kind == "downsample":
            return (h // self.factor, w // self.factor, ch)
        if self.kind == "warp_downsample":
            return (len(self.warps), h // self.factor, w // self.factor, ch)
        return (len(self.angles), self.detector_count or h, ch)

    def matrix(self, shape):
        """Sparse matrix over flattened [H*W] pixels, or None for the identity."""
        return _operator_matrix(self.kind, self.factor, self.warps, self.angles, self.detector_count,
                                tuple(int(s) for s in shape[:2]))

    def forward(self, img) -> np.ndarray:
        """Noise-free measurements."""
        img, _ = _as_image(img)
        if self.kind == "radon" and img.shape[0] != img.shape[1]:
            raise ValueError(f"radon needs a square image, got {img.shape[:2]}")
        m = self.matrix(img.shape)
        out = img.copy() if m is None else _apply_matrix(m, img)
        return out.reshape(self.output_shape(img.shape))

    def apply(self, img, seed: int = 0) -> np.ndarray:
        """Measurements including the configured noise (deterministic given ``seed``)."""
        return apply_noise(self.forward(img), self.noise, seed)


@lru_cache(maxsize=32)
def _operator_matrix(kind, factor, warps, angles, detector_count, shape):
    if kind == "identity":
        return None
    if kind == "downsample":
        return downsample_matrix(shape, factor)
    if kind == "warp_downsample":
        d = downsample_matrix(shape, factor)
        return sp.vstack([d @ warp_matrix(shape, w.shift_xy, w.rotation) for w in warps]).tocsr()
    if shape[0] != shape[1]:
        raise ValueError(f"radon needs a square image, got {shape}")
    return radon_matrix(shape[0], angles, detector_count)


def superposition_check(op: ForwardOperator, a, b, alpha: float, tol: float = 1e-9) -> bool:
    """True when A(alpha a + b) = alpha A(a) + A(b) with noise disabled.

    The tolerance is absolute, scaled by max(1, largest |value|).
    """
    clean = op.without_noise()
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    lhs = clean.forward(alpha * a + b)
    rhs = alpha * clean.forward(a) + clean.forward(b)
    scale = max(1.0, float(np.max(np.abs(rhs))) if rhs.size else 1.0)
    return bool(np.max(np.abs(lhs - rhs)) <= tol * scale)


def default_warps(count: int = 4, seed: int = 0) -> tuple[Warp, ...]:
    """First frame unmoved; the rest get sub-pixel shifts up to 2 px and rotations up to 2 degrees."""
    rng = np.random.default_rng(seed)
    warps = [Warp((0.0, 0.0), 0.0)]
    for _ in range(count - 1):
        shift = tuple(float(v) for v in rng.uniform(-2.0, 2.0, size=2))
        warps.append(Warp(shift, float(np.deg2rad(rng.uniform(-2.0, 2.0)))))
    return tuple(warps)
