"""Adam, the decaying learning-rate schedule and the two fitting loops."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import metrics
from ._alloc import tune_allocator
from .model import InrModel, forward_tensor
from .operators import ForwardOperator

FULL_BATCH_LIMIT = 128 * 128
TRACE_COLUMNS = ["step", "wall_time_s", "lr", "loss", "psnr", "ssim"]


class TrainingDiverged(FloatingPointError):
    def __init__(self, step: int, last_finite_step: int | None):
        self.step = step
        self.last_finite_step = last_finite_step
        super().__init__(f"loss became non-finite at step {step}; last finite step: {last_finite_step}")


@dataclass
class TrainConfig:
    lr: float = 5e-3
    steps: int = 2000
    lr_final_factor: float = 0.1
    batch_size: int | None = None     # None: full batch up to 128^2 coordinates
    seed: int = 0
    track_best: bool = True
    eval_every: int = 1

    def __post_init__(self):
        if not 0 < self.lr_final_factor <= 1:
            raise ValueError("lr_final_factor must be in (0, 1]")
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if self.eval_every < 1:
            raise ValueError("eval_every must be >= 1")


def lr_at(step: float, config: TrainConfig) -> float:
    """Geometric decay from ``lr`` at step 0 to ``lr * lr_final_factor`` at ``steps``."""
    if config.steps == 0:
        return config.lr
    return config.lr * config.lr_final_factor ** (step / config.steps)


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


def _real_view(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    return arr.view(arr.real.dtype) if np.iscomplexobj(arr) else arr


def adam_step(params: list[ad.Tensor], state: AdamState, lr: float) -> AdamState:
    """One bias-corrected Adam update; real and imaginary parts are separate scalars.

    Raises FloatingPointError naming the parameter when a gradient is not finite.
    """
    if not state.m:
        state.m = [np.zeros(_real_view(p.data).shape, _real_view(p.data).dtype) for p in params]
        state.v = [np.zeros_like(m) for m in state.m]
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for i, p in enumerate(params):
        if p.grad is None:
            raise ValueError(f"parameter {p.name or i} has no gradient")
        g = _real_view(p.grad.astype(p.data.dtype, copy=False))
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient in {p.name or f'parameter {i}'}")
        m, v = state.m[i], state.v[i]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        update = (lr / c1) * m / (np.sqrt(v / c2) + state.eps)
        data = np.ascontiguousarray(p.data)
        real = _real_view(data)
        real -= update.astype(real.dtype, copy=False)
        p.data = data
    return state


@dataclass
class FitResult:
    model: InrModel
    trace: list[dict]
    best_step: int | None = None
    best_value: float | None = None
    final_output: np.ndarray | None = None


def _metrics_row(pred_rows, target, dims):
    if target is None:
        return None, None
    img = pred_rows.reshape(target.shape)
    p = metrics.psnr(img, target)
    s = None
    if dims is not None and len(dims) == 2 and min(dims) >= metrics.SSIM_WINDOW:
        s = metrics.ssim(img, target)
    return p, s


def _optimize(model: InrModel, coords, config: TrainConfig, loss_of, eval_target, dims, sample_batches=False):
    """Shared loop.  ``loss_of(pred_tensor, rows)`` builds the loss for a batch
    of coordinate rows (None = every row)."""
    tune_allocator()
    coords = np.asarray(coords, dtype=model.real_dtype)
    n = coords.shape[0]
    batch = config.batch_size
    if sample_batches and batch is None and n > FULL_BATCH_LIMIT:
        batch = FULL_BATCH_LIMIT
    minibatch = sample_batches and batch is not None and batch < n
    rng = np.random.default_rng(config.seed)
    params = model.parameters()
    state = AdamState()
    trace: list[dict] = []
    best = (-math.inf, None, None)  # (score, step, state)
    t0 = time.perf_counter()
    last_finite = None

    def record(step, lr, loss_value, pred_rows):
        psnr, ssim = _metrics_row(pred_rows, eval_target, dims) if pred_rows is not None else (None, None)
        trace.append({"step": step, "wall_time_s": round(time.perf_counter() - t0, 6), "lr": lr,
                      "loss": loss_value, "psnr": psnr, "ssim": ssim})
        return psnr

    def consider(step, psnr, loss_value):
        nonlocal best
        if not config.track_best:
            return
        score = psnr if eval_target is not None else -loss_value
        if score is not None and score > best[0]:
            best = (score, step, model.state())

    def full_eval():
        with ad.no_grad():
            pred = forward_tensor(model, coords)
            loss = loss_of(pred, None)
        return pred.data, float(loss.data)

    for step in range(config.steps + 1):
        lr = lr_at(step, config)
        evaluate = step % config.eval_every == 0 or step == config.steps
        if step == config.steps:
            pred_rows, loss_value = full_eval()
        elif minibatch:
            rows = rng.choice(n, size=batch, replace=False)
            model.zero_grad()
            loss = loss_of(forward_tensor(model, coords[rows]), rows)
            loss_value = float(loss.data)
            pred_rows = None
        else:
            model.zero_grad()
            pred = forward_tensor(model, coords)
            loss = loss_of(pred, None)
            loss_value = float(loss.data)
            pred_rows = pred.data
        if not math.isfinite(loss_value):
            raise TrainingDiverged(step, last_finite)
        last_finite = step
        if evaluate:
            if minibatch and step != config.steps:
                pred_rows_eval, _ = full_eval()
            else:
                pred_rows_eval = pred_rows
            psnr = record(step, lr, loss_value, pred_rows_eval)
            consider(step, psnr, loss_value)
        if step == config.steps:
            break
        loss.backward()
        adam_step(params, state, lr)

    final = pred_rows
    result = FitResult(model, trace, final_output=final)
    if config.track_best and best[1] is not None:
        result.best_value = best[0] if eval_target is not None else -best[0]
        result.best_step = best[1]
        model.load_state(best[2])
        if best[1] != config.steps:
            result.final_output, _ = full_eval()
    return result


def fit_signal(model: InrModel, coords, values, config: TrainConfig, dims=None) -> FitResult:
    """Fit ``model(coords) ~ values`` under the mean squared error.

    ``values`` is [N, C].  When ``dims`` is given the trace carries PSNR and
    (for 2D grids) SSIM of the rendered signal.  With ``track_best`` the
    returned model holds the best-PSNR parameters.
    """
    values = np.asarray(values, dtype=np.float64)
    coords = np.asarray(coords)
    if values.ndim != 2 or values.shape[0] != coords.shape[0]:
        raise ValueError(f"values {values.shape} do not match coordinates {coords.shape}")
    target_cast = values.astype(model.real_dtype)
    eval_target = values.reshape(tuple(dims) + (values.shape[1],)) if dims is not None else values

    def loss_of(pred, rows):
        return ad.l2_loss(pred, target_cast if rows is None else target_cast[rows])

    return _optimize(model, coords, config, loss_of, eval_target, dims, sample_batches=True)


def fit_inverse(model: InrModel, operator: ForwardOperator, measurements, dims, config: TrainConfig,
                eval_target=None) -> FitResult:
    """Fit so that ``operator(model(grid))`` matches ``measurements``.

    The model is rendered on the full grid ``dims`` every step.  With
    ``eval_target`` ([*dims, C]) the trace carries reconstruction PSNR/SSIM and
    ``track_best`` keeps the best-reconstruction parameters (early stopping).
    """
    from .signals import make_grid

    dims = tuple(dims)
    coords = make_grid(dims)
    channels = model.output_dim
    shape = dims + (channels,)
    expected = operator.output_shape(shape)
    measurements = np.asarray(measurements, dtype=np.float64)
    if measurements.shape != expected:
        raise ValueError(f"measurements {measurements.shape} do not match operator output {expected}")
    matrix = operator.matrix(shape)
    if matrix is not None and model.real_dtype != np.float64:
        matrix = matrix.astype(model.real_dtype)
    target = measurements.reshape(-1, channels).astype(model.real_dtype)
    if eval_target is not None:
        eval_target = np.asarray(eval_target, dtype=np.float64).reshape(shape)

    def loss_of(pred, rows):
        measured = pred if matrix is None else ad.linear_map(pred, matrix)
        return ad.l2_loss(measured, target)

    return _optimize(model, coords, config, loss_of, eval_target, dims)
