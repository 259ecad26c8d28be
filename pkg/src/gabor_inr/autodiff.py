"""Define-by-run reverse-mode differentiation over dense real and complex arrays.

A complex leaf ``w = a + jb`` is differentiated as the two real parameters
``a`` and ``b``: after :meth:`Tensor.backward` its ``grad`` holds
``dL/da + j dL/db``.  With that convention every op's backward rule maps the
incoming gradient ``G`` of its output to the gradient of each input; for a
holomorphic map ``f`` this is ``conj(f'(z)) * G``.

Only the operations the coordinate MLPs need are provided.
"""
from __future__ import annotations

import contextlib
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from . import activations as act


class ShapeError(ValueError):
    pass


class GraphError(RuntimeError):
    pass


_recording = True


@contextlib.contextmanager
def no_grad():
    """Evaluate without recording any graph nodes."""
    global _recording
    prev = _recording
    _recording = False
    try:
        yield
    finally:
        _recording = prev


class Tensor:
    """Dense array plus the graph link to the op that produced it.

    ``data`` is a real floating array for real tensors and a complex array
    otherwise; ``re``/``im`` expose the pair view (``im`` is all zeros for
    real tensors).
    """

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward", "_op", "_released")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data)
        if not (np.issubdtype(arr.dtype, np.floating) or np.issubdtype(arr.dtype, np.complexfloating)):
            arr = arr.astype(np.float64)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None
        self._op: str | None = None
        self._released = False

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.data)

    @property
    def re(self) -> np.ndarray:
        return self.data.real

    @property
    def im(self) -> np.ndarray:
        return self.data.imag if self.is_complex else np.zeros_like(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        kind = "complex" if self.is_complex else "real"
        tag = f" {self.name}" if self.name else ""
        return f"Tensor({kind}{tag}, shape={self.shape}, op={self._op})"

    def backward(self) -> None:
        """Populate ``grad`` on every leaf that requires it.

        The graph is released afterwards; calling ``backward`` again on the
        same result raises :class:`GraphError`.
        """
        if self._released:
            raise GraphError("backward called twice on the same graph; rebuild it with a new forward pass")
        if self.data.size != 1 or self.is_complex:
            raise GraphError(f"backward needs a real scalar loss, got shape {self.shape} "
                             f"({'complex' if self.is_complex else 'real'})")
        order = _topological(self)
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is None:
                continue
            g = node.grad
            parent_grads = node._backward(g)
            for parent, pg in zip(node._parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                if not parent.is_complex and np.iscomplexobj(pg):
                    pg = pg.real
                parent.grad = pg if parent.grad is None else parent.grad + pg
            # intermediate state is dropped as soon as it has been consumed
            node.grad = None
            node._backward = None
            node._parents = ()
            node._released = True
        self._released = True


def _topological(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def _make(data: np.ndarray, parents: Sequence[Tensor], backward: Callable, op: str) -> Tensor:
    out = Tensor(data)
    if _recording and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
        out._op = op
    return out


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# --------------------------------------------------------------------------
# operations


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product ``a @ b``; saves both operands."""
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    A, B = a.data, b.data

    def backward(g):
        ga = g @ B.conj().T if a.requires_grad else None
        gb = A.conj().T @ g if b.requires_grad else None
        return ga, gb

    return _make(A @ B, (a, b), backward, "matmul")


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError(f"transpose expects a matrix, got {a.shape}")
    return _make(a.data.T, (a,), lambda g: (g.T,), "transpose")


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """Row-broadcast ``x + b`` for ``x`` of shape [M, N] and ``b`` of shape [N]."""
    if x.data.ndim != 2 or b.data.ndim != 1 or x.shape[1] != b.shape[0]:
        raise ShapeError(f"add_bias: cannot add bias {b.shape} to {x.shape}")

    def backward(g):
        return g, g.sum(axis=0)

    return _make(x.data + b.data, (x, b), backward, "add_bias")


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """``x @ weight.T + bias`` with ``weight`` stored as [out, in]."""
    return add_bias(matmul(x, transpose(weight)), bias)


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product of equally shaped tensors."""
    if a.shape != b.shape:
        raise ShapeError(f"mul: shapes {a.shape} and {b.shape} differ")
    A, B = a.data, b.data

    def backward(g):
        return (g * B.conj() if a.requires_grad else None,
                g * A.conj() if b.requires_grad else None)

    return _make(_product(A, B), (a, b), backward, "mul")


def _product(A, B):
    # complex * real scales both planes, so multiplying by exactly 1 is bit-exact
    if np.iscomplexobj(A) and not np.iscomplexobj(B):
        A, B = B, A
    if np.iscomplexobj(B) and not np.iscomplexobj(A):
        out = np.empty(B.shape, dtype=np.result_type(A, B))
        np.multiply(B.real, A, out=out.real)
        np.multiply(B.imag, A, out=out.imag)
        return out
    return A * B


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"add: shapes {a.shape} and {b.shape} differ")
    return _make(a.data + b.data, (a, b), lambda g: (g, g), "add")


def real_part(x: Tensor) -> Tensor:
    """Real part; the incoming (real) gradient lands in the re slot only."""
    if not x.is_complex:
        return x

    def backward(g):
        return (g.astype(x.data.dtype),)

    return _make(np.ascontiguousarray(x.data.real), (x,), backward, "real_part")


def elementwise(x: Tensor, fn: str, **params) -> Tensor:
    """Apply a registered pointwise map.  See :data:`POINTWISE`."""
    try:
        rule = POINTWISE[fn]
    except KeyError:
        raise ValueError(f"unregistered pointwise function {fn!r}; known: {sorted(POINTWISE)}") from None
    if rule.real_only and x.is_complex:
        raise TypeError(f"{fn} is defined for real inputs only")
    out, saved = rule.forward(x.data, **params)

    def backward(g):
        return (rule.backward(g, saved, **params),)

    return _make(out, (x,), backward, fn)


def linear_map(x: Tensor, matrix) -> Tensor:
    """Apply a fixed real matrix (dense or scipy sparse) to the rows of ``x``.

    ``x`` has shape [N, C]; the result has shape [M, C].  The backward rule
    applies the transpose.
    """
    if matrix.shape[1] != x.shape[0]:
        raise ShapeError(f"linear_map: operator {matrix.shape} cannot act on {x.shape}")
    adjoint = matrix.T

    def backward(g):
        return (np.asarray(adjoint @ g),)

    return _make(np.asarray(matrix @ x.data), (x,), backward, "linear_map")


def l2_loss(pred: Tensor, target) -> Tensor:
    """Mean squared difference between a real prediction and a real target."""
    t = np.asarray(target.data if isinstance(target, Tensor) else target)
    if pred.shape != t.shape:
        raise ShapeError(f"l2_loss: prediction {pred.shape} vs target {t.shape}")
    if pred.is_complex:
        raise TypeError("l2_loss expects a real prediction; take real_part first")
    diff = pred.data - t
    n = diff.size

    def backward(g):
        return ((2.0 / n) * g * diff,)

    return _make(np.asarray(np.mean(diff * diff)), (pred,), backward, "l2_loss")


def weighted_sum(x: Tensor, weights) -> Tensor:
    """Real scalar ``sum(x * weights)``; with a one-hot ``weights`` it selects one entry."""
    w = np.asarray(weights)
    if w.shape != x.shape:
        raise ShapeError(f"weighted_sum: weights {w.shape} vs input {x.shape}")
    if x.is_complex:
        raise TypeError("weighted_sum expects a real input")

    def backward(g):
        return (g * w,)

    return _make(np.asarray(np.sum(x.data * w)), (x,), backward, "weighted_sum")


def scale(x: Tensor, alpha: float) -> Tensor:
    return elementwise(x, "scale", alpha=alpha)


# --------------------------------------------------------------------------
# pointwise registry


@dataclass(frozen=True)
class Pointwise:
    forward: Callable
    backward: Callable
    real_only: bool = False


def _exp_fwd(z):
    out = np.exp(z)
    return out, out


def _sqmag_fwd(z):
    if np.iscomplexobj(z):
        return z.real * z.real + z.imag * z.imag, z
    return z * z, z


def _sin_fwd(z):
    return np.sin(z), z


def _cos_fwd(z):
    return np.cos(z), z


def _relu_fwd(x):
    mask = x > 0
    return np.where(mask, x, 0).astype(x.dtype), mask


def _scale_fwd(z, alpha):
    return z * alpha, None


def _gabor_fwd(z, omega0, s0):
    out = act.gabor(z, omega0, s0)
    return out, (z, out)


def _flush_subnormal(arr):
    """Zero out subnormal entries in place; they make later BLAS calls crawl."""
    flat = arr.reshape(-1).view(arr.real.dtype) if np.iscomplexobj(arr) else arr.reshape(-1)
    flat[np.abs(flat) < np.finfo(flat.dtype).tiny] = 0
    return arr


def _gabor_bwd(g, saved, omega0, s0):
    z, out = saved
    # P = conj(G) * psi; d psi/d re = psi (j w0 - 2 s0^2 a), d psi/d im = psi (-w0 - 2 s0^2 b)
    p = np.conj(g) * out
    k = 2.0 * s0 * s0
    if not np.iscomplexobj(z):
        return -omega0 * p.imag - k * z * p.real
    pr = np.array(p.real)
    gr = np.multiply(p.imag, -omega0)
    tmp = np.multiply(z.real, k)   # fresh array: z may share memory with a parameter
    tmp *= pr
    gr -= tmp
    np.multiply(z.imag, k, out=tmp)
    tmp += omega0
    tmp *= pr
    gz = np.empty_like(out)
    gz.real = gr
    np.negative(tmp, out=gz.imag)
    return _flush_subnormal(gz)


def _window_fwd(z, s0):
    out = act.gaussian_window(z, s0)
    return out, (z, out)


def _window_bwd(g, saved, s0):
    z, out = saved
    return _flush_subnormal((-2.0 * s0 * s0) * (g * out) * z)


def _siren_fwd(x, omega0):
    return act.siren(x, omega0), x


def _gauss_fwd(x, s0):
    out = act.gauss(x, s0)
    return out, (x, out)


def _wire_real_fwd(x, omega0, s0):
    return act.wire_real(x, omega0, s0), x


def _wire_real_bwd(g, x, omega0, s0):
    env = act.envelope(-(s0 * s0) * (x * x))
    return g * env * (omega0 * np.cos(omega0 * x) - 2.0 * s0 * s0 * x * np.sin(omega0 * x))


POINTWISE: dict[str, Pointwise] = {
    "exp": Pointwise(_exp_fwd, lambda g, out: g * np.conj(out)),
    "square_magnitude": Pointwise(_sqmag_fwd, lambda g, z: 2.0 * g * z),
    "sin": Pointwise(_sin_fwd, lambda g, z: g * np.conj(np.cos(z))),
    "cos": Pointwise(_cos_fwd, lambda g, z: -g * np.conj(np.sin(z))),
    "relu": Pointwise(_relu_fwd, lambda g, mask: g * mask, real_only=True),
    "scale": Pointwise(_scale_fwd, lambda g, _, alpha: g * alpha),
    "gabor": Pointwise(_gabor_fwd, _gabor_bwd),
    "gaussian_window": Pointwise(_window_fwd, _window_bwd),
    "siren": Pointwise(_siren_fwd, lambda g, x, omega0: g * omega0 * np.cos(omega0 * x), real_only=True),
    "gauss": Pointwise(_gauss_fwd, lambda g, s, s0: g * (-2.0 * s0 * s0) * s[0] * s[1], real_only=True),
    "wire_real": Pointwise(_wire_real_fwd, _wire_real_bwd, real_only=True),
}


# --------------------------------------------------------------------------
# finite-difference checking


def numerical_grad(loss_fn: Callable[[], Tensor], leaf: Tensor, step: float = 1e-5) -> np.ndarray:
    """Central differences of ``loss_fn()`` w.r.t. every real scalar of ``leaf``.

    Returns an array shaped like ``leaf`` using the same ``dL/da + j dL/db``
    packing as :meth:`Tensor.backward`.
    """
    data = leaf.data
    parts = [data.real, data.imag] if leaf.is_complex else [data]
    grads = []
    for part in parts:
        # .real/.imag of a complex array are writable views into it
        g = np.zeros(data.shape)
        for idx in np.ndindex(data.shape):
            orig = part[idx]
            part[idx] = orig + step
            with no_grad():
                up = float(loss_fn().data)
            part[idx] = orig - step
            with no_grad():
                down = float(loss_fn().data)
            part[idx] = orig
            g[idx] = (up - down) / (2 * step)
        grads.append(g)
    return grads[0] + 1j * grads[1] if leaf.is_complex else grads[0]


def gradient_check(loss_fn: Callable[[], Tensor], leaves: Iterable[Tensor], step: float = 1e-5) -> dict[str, float]:
    """Relative error ``||g_auto - g_fd|| / ||g_fd||`` for each leaf.

    Leaves are keyed by ``name`` (or position).  A leaf whose numerical
    gradient is exactly zero reports the absolute error instead.
    """
    leaves = list(leaves)
    for leaf in leaves:
        leaf.zero_grad()
    loss_fn().backward()
    report = {}
    for i, leaf in enumerate(leaves):
        auto = leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data)
        fd = numerical_grad(loss_fn, leaf, step)
        denom = np.linalg.norm(fd)
        err = np.linalg.norm(auto - fd)
        report[leaf.name or str(i)] = float(err / denom) if denom > 0 else float(err)
    return report
