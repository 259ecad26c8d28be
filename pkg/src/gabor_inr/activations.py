"""Activation nonlinearities and the positional-encoding lift.

The numpy functions here are the single source of the forward maps; the
differentiable versions registered in :mod:`gabor_inr.autodiff` call them.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# envelopes below exp(-FLUSH_EXPONENT) ~ 1e-30 are set to exactly zero; left
# alone they drift into the subnormal range, which slows BLAS by orders of magnitude
FLUSH_EXPONENT = 69.0

KINDS = ("wire", "wire_real", "wire2d", "constant_q", "siren", "gauss", "relu_pe")
COMPLEX_KINDS = frozenset({"wire", "wire2d", "constant_q"})


def envelope(arg):
    """``exp(arg)`` with results under exp(-FLUSH_EXPONENT) flushed to zero."""
    arg = np.asarray(arg)
    if arg.ndim == 0:
        return np.where(arg < -FLUSH_EXPONENT, 0.0, np.exp(arg))[()]
    out = np.exp(arg)
    out[arg < -FLUSH_EXPONENT] = 0
    return out


def gabor(z, omega0: float, s0: float):
    """Complex Gabor wavelet ``exp(j*omega0*z) * exp(-|s0*z|^2)``.

    For ``z = a + jb`` this is ``exp(-omega0*b - s0^2 (a^2+b^2)) * exp(j*omega0*a)``.
    Real input gives a complex result.
    """
    z = np.asarray(z)
    if np.iscomplexobj(z):
        a, b = z.real, z.imag
        env = envelope(-omega0 * b - (s0 * s0) * (a * a + b * b))
        out = np.empty(z.shape, dtype=z.dtype)
    else:
        a = z
        env = envelope(-(s0 * s0) * (a * a))
        out = np.empty(z.shape, dtype=np.result_type(z.dtype, np.complex64))
    phase = omega0 * a
    out.real = env * np.cos(phase)
    out.imag = env * np.sin(phase)
    return out


def gaussian_window(z, s0: float):
    """Real window ``exp(-|s0*z|^2)`` used by the extra 2D WIRE terms."""
    z = np.asarray(z)
    if np.iscomplexobj(z):
        return envelope(-(s0 * s0) * (z.real * z.real + z.imag * z.imag))
    return envelope(-(s0 * s0) * (z * z))


def wire_real(x, omega0: float, s0: float):
    x = np.asarray(x)
    if np.iscomplexobj(x):
        raise TypeError("wire_real is defined for real inputs only")
    return np.sin(omega0 * x) * envelope(-(s0 * s0) * (x * x))


def siren(x, omega0: float):
    return np.sin(omega0 * np.asarray(x))


def gauss(x, s0: float):
    # same rounding as the Gaussian factor inside gabor, so the two agree bit for bit
    x = np.asarray(x)
    return envelope(-(s0 * s0) * (x * x))


def relu(x):
    x = np.asarray(x)
    return np.maximum(x, 0)


def positional_encoding(coords, frequencies: int) -> np.ndarray:
    """Lift coordinates with sin/cos at frequencies ``2^l * pi``, l < ``frequencies``.

    Column layout for input dimension d and octave l:
    ``out[:, 2*(l*D + d)] = sin(2^l pi x_d)`` and the following column holds
    the cosine.  Output width is ``2 * frequencies * D``.
    """
    coords = np.asarray(coords)
    n, d = coords.shape
    out = np.empty((n, 2 * frequencies * d), dtype=coords.dtype)
    for level in range(frequencies):
        arg = (2.0 ** level) * math.pi * coords
        cols = 2 * (level * d + np.arange(d))
        out[:, cols] = np.sin(arg)
        out[:, cols + 1] = np.cos(arg)
    return out


@dataclass(frozen=True)
class Activation:
    """An activation family with its parameters.

    ``omega0`` is the oscillation frequency, ``s0`` the Gaussian spread,
    ``q`` the constant-Q product, ``windows`` the 2D WIRE window count and
    ``frequencies`` the positional-encoding octave count (0 = raw coordinates).
    """

    kind: str
    omega0: float = 0.0
    s0: float = 0.0
    q: float = 0.0
    windows: int = 2
    frequencies: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown activation kind {self.kind!r}")
        if self.omega0 < 0 or self.s0 < 0 or self.frequencies < 0:
            raise ValueError("omega0, s0 and frequencies must be non-negative")
        if self.kind == "constant_q":
            if self.q <= 0:
                raise ValueError("constant_q needs q > 0")
            if self.omega0 <= 0:
                raise ValueError("constant_q needs omega0 > 0 to derive s0 = q/omega0")
        if self.kind == "wire2d" and self.windows < 2:
            raise ValueError(f"wire2d needs at least 2 windows, got {self.windows}")

    @classmethod
    def wire(cls, omega0=20.0, s0=10.0):
        return cls("wire", omega0=omega0, s0=s0)

    @classmethod
    def wire_real_kind(cls, omega0=20.0, s0=10.0):
        return cls("wire_real", omega0=omega0, s0=s0)

    @classmethod
    def wire2d(cls, omega0=20.0, s0=10.0, windows=2):
        return cls("wire2d", omega0=omega0, s0=s0, windows=windows)

    @classmethod
    def constant_q(cls, q, omega0):
        return cls("constant_q", omega0=omega0, q=q)

    @classmethod
    def siren_kind(cls, omega0=40.0):
        return cls("siren", omega0=omega0)

    @classmethod
    def gauss_kind(cls, s0=30.0):
        return cls("gauss", s0=s0)

    @classmethod
    def relu_pe(cls, frequencies=6):
        return cls("relu_pe", frequencies=frequencies)

    @property
    def is_complex(self) -> bool:
        return self.kind in COMPLEX_KINDS

    @property
    def spread(self) -> float:
        """Gaussian spread actually used (derived for constant-Q)."""
        return self.q / self.omega0 if self.kind == "constant_q" else self.s0

    @property
    def window_count(self) -> int:
        return self.windows if self.kind == "wire2d" else 1

    def pointwise(self) -> tuple[str, dict]:
        """Registered pointwise map name and parameters for the main term."""
        if self.kind in ("wire", "wire2d", "constant_q"):
            return "gabor", {"omega0": self.omega0, "s0": self.spread}
        if self.kind == "wire_real":
            return "wire_real", {"omega0": self.omega0, "s0": self.s0}
        if self.kind == "siren":
            return "siren", {"omega0": self.omega0}
        if self.kind == "gauss":
            return "gauss", {"s0": self.s0}
        return "relu", {}

    def __call__(self, x):
        """Evaluate the main-term map on a numpy array."""
        name, params = self.pointwise()
        return {"gabor": gabor, "wire_real": wire_real, "siren": siren,
                "gauss": gauss, "relu": relu}[name](x, **params)

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind in ("wire", "wire_real", "wire2d", "siren", "constant_q"):
            d["omega0"] = self.omega0
        if self.kind in ("wire", "wire_real", "wire2d", "gauss"):
            d["s0"] = self.s0
        if self.kind == "constant_q":
            d["q"] = self.q
        if self.kind == "wire2d":
            d["windows"] = self.windows
        if self.kind == "relu_pe":
            d["frequencies"] = self.frequencies
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Activation":
        return cls(**d)


def sweep_alias(omega0: float, s0: float, frequencies: int = 0) -> Activation:
    """Map an (omega0, s0) grid cell to the activation it stands for.

    omega0 = 0 selects the Gaussian, s0 = 0 the sine and both zero a plain
    ReLU; every other cell is complex WIRE.
    """
    if omega0 == 0 and s0 == 0:
        return Activation.relu_pe(frequencies)
    if omega0 == 0:
        return Activation.gauss_kind(s0)
    if s0 == 0:
        return Activation.siren_kind(omega0)
    return Activation.wire(omega0, s0)
