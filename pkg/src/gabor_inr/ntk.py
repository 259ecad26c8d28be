"""Empirical neural tangent kernels and the linearized gradient-flow predictor.

Rows of the kernel are indexed coordinate-major, channel-minor: entry
``i * C + c`` is output channel ``c`` at coordinate ``i``.  Complex
parameters contribute their real and imaginary parts as separate coordinates
of the parameter gradient.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import metrics
from .model import InrModel, forward, forward_tensor

DEFAULT_CAP = 4096
SYMMETRY_TOL = 1e-8
PSD_TOL = 1e-8
RANK_THRESHOLD = 1e-6


class KernelSizeError(ValueError):
    pass


class KernelNotPSD(ValueError):
    pass


@dataclass
class NtkMatrix:
    K: np.ndarray
    coords: np.ndarray
    fingerprint: dict = field(default_factory=dict)

    @property
    def size(self) -> int:
        return self.K.shape[0]


def fingerprint(model: InrModel) -> dict:
    return {"activation": model.activation.to_dict(), "hidden_layers": model.hidden_layers,
            "hidden_features": model.hidden_features, "init": model.init,
            "parameters": model.real_parameter_count()}


def _flat_grad(params: list[ad.Tensor]) -> np.ndarray:
    parts = []
    for p in params:
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        parts.append(np.ravel(g.real))
        if p.is_complex:
            parts.append(np.ravel(g.imag))
    return np.concatenate(parts).astype(np.float64)


def jacobian(model: InrModel, coords, cap: int = DEFAULT_CAP) -> np.ndarray:
    """[P, R] matrix of output derivatives w.r.t. the R real parameter coordinates."""
    coords = np.asarray(coords, dtype=np.float64)
    channels = model.output_dim
    rows = coords.shape[0] * channels
    if rows > cap:
        raise KernelSizeError(f"kernel would have {rows} rows, above the cap of {cap}")
    params = model.parameters()
    jac = np.empty((rows, model.real_parameter_count()))
    for i in range(coords.shape[0]):
        for c in range(channels):
            model.zero_grad()
            out = forward_tensor(model, coords[i:i + 1])
            pick = np.zeros(out.shape)
            pick[0, c] = 1.0
            ad.weighted_sum(out, pick).backward()
            jac[i * channels + c] = _flat_grad(params)
    model.zero_grad()
    return jac


def empirical_ntk(model: InrModel, coords, cap: int = DEFAULT_CAP) -> NtkMatrix:
    """Gram matrix of per-output parameter gradients at the current parameters."""
    jac = jacobian(model, coords, cap)
    K = jac @ jac.T
    K = 0.5 * (K + K.T)  # exact symmetry; the product is symmetric up to rounding
    return NtkMatrix(K, np.asarray(coords, dtype=np.float64), fingerprint(model))


def _kernel_array(K) -> np.ndarray:
    return np.asarray(K.K if isinstance(K, NtkMatrix) else K, dtype=np.float64)


class KernelFlow:
    """Gradient-flow predictor ``U (I - exp(-t Lambda)) U^T g`` for a fixed kernel.

    The eigendecomposition is done once; calling with different times reuses it.
    """

    def __init__(self, K):
        K = _kernel_array(K)
        if K.ndim != 2 or K.shape[0] != K.shape[1]:
            raise ValueError(f"kernel must be square, got {K.shape}")
        scale = max(float(np.max(np.abs(K))), 1e-300) if K.size else 1.0
        if np.max(np.abs(K - K.T), initial=0.0) > SYMMETRY_TOL * scale:
            raise KernelNotPSD("kernel is not symmetric; recompute it in double precision")
        evals, evecs = np.linalg.eigh(K)
        top = max(float(evals[-1]), 0.0) if evals.size else 0.0
        if evals.size and evals[0] < -PSD_TOL * top:
            raise KernelNotPSD(f"kernel has eigenvalue {evals[0]:.3e} below -{PSD_TOL:g} * {top:.3e}; "
                               "recompute it in double precision")
        self.eigenvalues = np.clip(evals, 0.0, None)
        self.eigenvectors = evecs

    def __call__(self, g, t: float) -> np.ndarray:
        if t < 0:
            raise ValueError("time must be non-negative")
        g = np.asarray(g, dtype=np.float64)
        flat = g.reshape(-1)
        if flat.shape[0] != self.eigenvalues.shape[0]:
            raise ValueError(f"target has {flat.shape[0]} entries, kernel is {self.eigenvalues.shape[0]}")
        gain = -np.expm1(-t * self.eigenvalues)  # 1 - exp(-t lambda), accurate for small t
        coeff = self.eigenvectors.T @ flat
        return (self.eigenvectors @ (gain * coeff)).reshape(g.shape)

    def effective_rank(self, threshold: float = RANK_THRESHOLD) -> int:
        top = self.eigenvalues[-1] if self.eigenvalues.size else 0.0
        return int(np.sum(self.eigenvalues > threshold * top))


def ntk_flow(K, g, t: float) -> np.ndarray:
    return KernelFlow(K)(g, t)


def denoising_trajectory(model: InrModel, clean, noisy, coords, times, kernel=None) -> list[dict]:
    """PSNR against ``clean`` of the gradient-flow fit to ``noisy`` at each time."""
    K = kernel if kernel is not None else empirical_ntk(model, coords)
    flow = KernelFlow(K)
    clean = np.asarray(clean, dtype=np.float64)
    noisy = np.asarray(noisy, dtype=np.float64)
    rows = []
    for t in times:
        pred = flow(noisy, float(t))
        rows.append({"t": float(t), "psnr": metrics.psnr(pred, clean)})
    return rows


def gradient_descent_outputs(model: InrModel, coords, target, lr: float, steps: int) -> list[np.ndarray]:
    """Model outputs after each of ``steps`` plain gradient-descent updates.

    The loss is ``0.5 * sum((F - g)^2)`` so that one step of size ``lr``
    advances gradient-flow time by ``lr``.  Index 0 holds the initial output.
    """
    target = np.asarray(target, dtype=np.float64).reshape(-1, model.output_dim)
    params = model.parameters()
    outputs = [forward(model, coords)]
    half_sum = 0.5 * target.size
    for _ in range(steps):
        model.zero_grad()
        loss = ad.scale(ad.l2_loss(forward_tensor(model, coords), target), half_sum)
        loss.backward()
        for p in params:
            p.data = p.data - lr * p.grad.astype(p.data.dtype, copy=False)
        outputs.append(forward(model, coords))
    model.zero_grad()
    return outputs


def lazy_training_error(model: InrModel, coords, target, lr: float, steps: int,
                        kernel=None) -> float:
    """Relative L2 gap between gradient-descent and kernel-flow output changes.

    Compares ``F_step - F_0`` with ``flow(g - F_0, lr * step)`` over steps
    1..``steps``; both trajectories start from the same initial output.
    Trains ``model`` in place.
    """
    K = kernel if kernel is not None else empirical_ntk(model, coords)
    flow = KernelFlow(K)
    outputs = gradient_descent_outputs(model, coords, target, lr, steps)
    start = outputs[0]
    residual = np.asarray(target, dtype=np.float64).reshape(start.shape) - start
    num = den = 0.0
    for step in range(1, steps + 1):
        actual = outputs[step] - start
        predicted = flow(residual, lr * step)
        num += float(np.sum((actual - predicted) ** 2))
        den += float(np.sum(actual ** 2))
    return float(np.sqrt(num / den)) if den > 0 else 0.0
