"""Coordinate MLPs: construction, initialization, evaluation and checkpoints."""
from __future__ import annotations

import base64
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .activations import Activation, positional_encoding

CHECKPOINT_FORMAT = "gabor-inr-checkpoint"
CHECKPOINT_VERSION = 1

PRECISIONS = {"double": (np.float64, np.complex128), "single": (np.float32, np.complex64)}


def parity_width(features: int, activation: Activation) -> int:
    """Hidden width giving roughly the parameter budget of a real model of width ``features``.

    Complex layers hold two reals per weight, so the width shrinks by sqrt(2);
    2D WIRE layers additionally hold ``windows`` weight sets.
    """
    if not activation.is_complex:
        return features
    return max(1, round(features / math.sqrt(2 * activation.window_count)))


@dataclass
class Layer:
    weights: list[ad.Tensor]
    biases: list[ad.Tensor]

    @property
    def in_features(self) -> int:
        return self.weights[0].shape[1]

    @property
    def out_features(self) -> int:
        return self.weights[0].shape[0]


@dataclass
class InrModel:
    input_dim: int
    output_dim: int
    hidden_layers: int
    hidden_features: int
    activation: Activation
    init: str = "standard"
    precision: str = "double"
    layers: list[Layer] = field(default_factory=list)

    @property
    def complex_weights(self) -> bool:
        return self.activation.is_complex

    @property
    def dtype(self):
        real, cplx = PRECISIONS[self.precision]
        return cplx if self.complex_weights else real

    @property
    def real_dtype(self):
        return PRECISIONS[self.precision][0]

    @property
    def encoded_dim(self) -> int:
        if self.activation.kind == "relu_pe" and self.activation.frequencies > 0:
            return 2 * self.activation.frequencies * self.input_dim
        return self.input_dim

    def named_parameters(self) -> list[tuple[str, ad.Tensor]]:
        out = []
        for i, layer in enumerate(self.layers):
            for k, (w, b) in enumerate(zip(layer.weights, layer.biases)):
                suffix = "" if k == 0 else f".window{k}"
                out.append((f"layers.{i}.weight{suffix}", w))
                out.append((f"layers.{i}.bias{suffix}", b))
        return out

    def parameters(self) -> list[ad.Tensor]:
        return [p for _, p in self.named_parameters()]

    def parameter_count(self) -> int:
        """Number of (possibly complex) scalars across all parameters."""
        return sum(p.data.size for p in self.parameters())

    def real_parameter_count(self) -> int:
        return self.parameter_count() * (2 if self.complex_weights else 1)

    def state(self) -> list[np.ndarray]:
        return [p.data.copy() for p in self.parameters()]

    def load_state(self, state: list[np.ndarray]) -> None:
        for p, arr in zip(self.parameters(), state):
            p.data = arr.copy()

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def spec(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "output_dim": self.output_dim,
            "hidden_layers": self.hidden_layers,
            "hidden_features": self.hidden_features,
            "activation": self.activation.to_dict(),
            "init": self.init,
            "precision": self.precision,
        }


def build(input_dim: int, output_dim: int, hidden_layers: int, hidden_features: int,
          activation: Activation, init: str | None = None, seed: int = 0,
          precision: str = "double") -> InrModel:
    """Allocate and initialize a model.

    ``hidden_features`` is the width actually used; apply :func:`parity_width`
    beforehand to match a real model's budget.  ``init`` defaults to the
    SIREN-like scheme for sine activations and the standard uniform scheme
    otherwise.
    """
    if min(input_dim, output_dim, hidden_features) < 1 or hidden_layers < 0:
        raise ValueError("widths must be >= 1 and hidden_layers >= 0")
    if precision not in PRECISIONS:
        raise ValueError(f"precision must be one of {sorted(PRECISIONS)}")
    if init is None:
        init = "siren" if activation.kind == "siren" else "standard"
    model = InrModel(input_dim, output_dim, hidden_layers, hidden_features, activation, init, precision)
    widths = [model.encoded_dim] + [hidden_features] * hidden_layers + [output_dim]
    for i in range(len(widths) - 1):
        sets = activation.window_count if i < hidden_layers else 1
        ws, bs = [], []
        for _ in range(sets):
            ws.append(ad.Tensor(np.zeros((widths[i + 1], widths[i]), model.dtype), requires_grad=True))
            bs.append(ad.Tensor(np.zeros(widths[i + 1], model.dtype), requires_grad=True))
        model.layers.append(Layer(ws, bs))
    for name, p in model.named_parameters():
        p.name = name
    init_weights(model, init, seed)
    return model


def init_bound(scheme: str, layer_index: int, fan_in: int, omega0: float) -> float:
    if scheme == "standard":
        return 1.0 / math.sqrt(fan_in)
    if scheme == "siren":
        if omega0 <= 0:
            raise ValueError("SIREN-like init needs omega0 > 0")
        if layer_index == 0:
            return 1.0 / fan_in
        return math.sqrt(6.0 / (omega0 * fan_in))
    raise ValueError(f"unknown init scheme {scheme!r}")


def init_weights(model: InrModel, scheme: str, seed: int) -> InrModel:
    """Uniform init U(-c, c) per layer, biases drawn like their layer's weights.

    standard: c = 1/sqrt(N) everywhere.  siren: c = 1/N for the first layer,
    sqrt(6/(omega0 N)) after it.  N is the fan-in.  Complex parameters get
    independent draws for re and im.
    """
    rng = np.random.default_rng(seed)
    omega0 = model.activation.omega0
    for i, layer in enumerate(model.layers):
        c = init_bound(scheme, i, layer.in_features, omega0)
        for p in layer.weights + layer.biases:
            shape = p.shape
            real = rng.uniform(-c, c, size=shape)
            if model.complex_weights:
                arr = real + 1j * rng.uniform(-c, c, size=shape)
            else:
                arr = real
            p.data = np.ascontiguousarray(arr.astype(model.dtype))
    model.init = scheme
    return model


def _encode(model: InrModel, coords) -> np.ndarray:
    coords = np.asarray(coords, dtype=model.real_dtype)
    if coords.ndim != 2 or coords.shape[1] != model.input_dim:
        raise ad.ShapeError(f"coordinates of shape {coords.shape} do not match input_dim={model.input_dim}")
    if model.activation.kind == "relu_pe" and model.activation.frequencies > 0:
        coords = positional_encoding(coords, model.activation.frequencies)
    return coords


def wire2d_layer(x: ad.Tensor, weights, biases, omega0: float, s0: float) -> ad.Tensor:
    """Gabor response of the first affine map times Gaussian windows of the rest.

    All maps share ``s0``.  With every extra weight and bias zero the windows
    are exactly 1 and the layer equals the plain WIRE layer.
    """
    if len(weights) != len(biases) or len(weights) < 2:
        raise ValueError("wire2d_layer needs matching weight/bias lists with at least 2 entries")
    for w, b in zip(weights[1:], biases[1:]):
        if w.shape != weights[0].shape or b.shape != biases[0].shape:
            raise ad.ShapeError(f"window shapes {w.shape}/{b.shape} differ from "
                                f"{weights[0].shape}/{biases[0].shape}")
    y = ad.elementwise(ad.linear(x, weights[0], biases[0]), "gabor", omega0=omega0, s0=s0)
    for w, b in zip(weights[1:], biases[1:]):
        y = ad.mul(y, ad.elementwise(ad.linear(x, w, b), "gaussian_window", s0=s0))
    return y


def _hidden(model: InrModel, layer: Layer, x: ad.Tensor) -> ad.Tensor:
    act = model.activation
    if act.kind == "wire2d":
        return wire2d_layer(x, layer.weights, layer.biases, act.omega0, act.s0)
    name, params = act.pointwise()
    return ad.elementwise(ad.linear(x, layer.weights[0], layer.biases[0]), name, **params)


def forward_tensor(model: InrModel, coords, keep_hidden: bool = False):
    """Differentiable forward pass; returns a real [N, output_dim] tensor."""
    x = ad.Tensor(_encode(model, coords))
    hidden = []
    for layer in model.layers[:-1]:
        x = _hidden(model, layer, x)
        if keep_hidden:
            hidden.append(x)
    last = model.layers[-1]
    out = ad.real_part(ad.linear(x, last.weights[0], last.biases[0]))
    return (out, hidden) if keep_hidden else out


def forward(model: InrModel, coords) -> np.ndarray:
    with ad.no_grad():
        return forward_tensor(model, coords).data


def hidden_activations(model: InrModel, coords) -> list[np.ndarray]:
    """Post-activation values of every hidden layer, each [N, width]."""
    with ad.no_grad():
        _, hidden = forward_tensor(model, coords, keep_hidden=True)
    return [h.data for h in hidden]


# --------------------------------------------------------------------------
# checkpoints


def _pack(arr: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(arr, dtype="<f8").tobytes()).decode("ascii")


def _unpack(text: str, shape) -> np.ndarray:
    return np.frombuffer(base64.b64decode(text), dtype="<f8").reshape(shape).astype(np.float64)


def save_checkpoint(model: InrModel, path) -> None:
    """JSON container: format tag, version, model spec and base64 little-endian
    float64 re/im payloads for each parameter."""
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "model": model.spec(),
        "parameters": [
            {"name": n, "shape": list(p.shape), "re": _pack(p.re), "im": _pack(p.im)}
            for n, p in model.named_parameters()
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=1))


class CheckpointError(ValueError):
    pass


def load_checkpoint(path) -> InrModel:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != CHECKPOINT_FORMAT or doc.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: not a version {CHECKPOINT_VERSION} {CHECKPOINT_FORMAT} file")
    spec = dict(doc["model"])
    spec["activation"] = Activation.from_dict(spec["activation"])
    model = build(**spec)
    params = model.named_parameters()
    if len(params) != len(doc["parameters"]):
        raise CheckpointError(f"{path}: parameter count does not match the model spec")
    for (name, p), entry in zip(params, doc["parameters"]):
        if entry["name"] != name or tuple(entry["shape"]) != p.shape:
            raise CheckpointError(f"{path}: parameter {entry['name']} {entry['shape']} does not match {name} {p.shape}")
        re = _unpack(entry["re"], p.shape)
        arr = re + 1j * _unpack(entry["im"], p.shape) if model.complex_weights else re
        p.data = np.ascontiguousarray(arr.astype(model.dtype))
    return model
