"""Experiment configuration: strict, versioned, JSON-compatible.

Unknown keys anywhere are rejected.  Command-line ``--set a.b=value``
overrides are applied to the raw mapping before validation, so they go
through exactly the same checks as file values.
"""
from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .activations import KINDS, Activation
from .operators import ForwardOperator, NoiseModel, Warp, default_warps
from .optim import TrainConfig

CONFIG_VERSION = 1
TASKS = ("fit", "denoise", "superres", "multisr", "ct", "ntk", "sweep", "dump-activations")

# defaults used when a kind's own parameters are left unset
KIND_DEFAULTS = {
    "wire": {"omega0": 20.0, "s0": 10.0},
    "wire_real": {"omega0": 20.0, "s0": 10.0},
    "wire2d": {"omega0": 20.0, "s0": 10.0, "windows": 2},
    "constant_q": {"omega0": 20.0, "q": 200.0},
    "siren": {"omega0": 40.0},
    "gauss": {"s0": 30.0},
    "relu_pe": {"frequencies": 6},
}


class ConfigError(ValueError):
    pass


class Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ActivationBlock(Strict):
    kind: Literal[KINDS] = "wire"  # type: ignore[valid-type]
    omega0: Optional[float] = Field(None, ge=0)
    s0: Optional[float] = Field(None, ge=0)
    q: Optional[float] = Field(None, gt=0)
    windows: Optional[int] = Field(None, ge=2)
    frequencies: Optional[int] = Field(None, ge=0)

    @model_validator(mode="after")
    def _fill_defaults(self):
        for key, value in KIND_DEFAULTS[self.kind].items():
            if getattr(self, key) is None:
                setattr(self, key, value)
        return self

    def build(self) -> Activation:
        fields = {k: v for k, v in self.model_dump().items() if v is not None}
        return Activation(**fields)


class ModelBlock(Strict):
    activation: ActivationBlock = Field(default_factory=ActivationBlock)
    hidden_layers: int = Field(3, ge=1)
    hidden_features: int = Field(256, ge=1)
    parity: bool = True      # shrink complex widths to match the real parameter budget
    init: Optional[Literal["standard", "siren"]] = None
    precision: Literal["double", "single"] = "double"


class TrainBlock(Strict):
    lr: float = Field(5e-3, gt=0)
    steps: int = Field(2000, ge=0)
    lr_final_factor: float = Field(0.1, gt=0, le=1)
    batch_size: Optional[int] = Field(None, ge=1)
    seed: int = 0
    track_best: bool = True
    eval_every: int = Field(1, ge=1)

    def build(self) -> TrainConfig:
        return TrainConfig(**self.model_dump())


class NoiseBlock(Strict):
    kind: Literal["none", "gaussian", "photon"] = "none"
    sigma: float = Field(0.0, ge=0)
    max_photons: float = Field(50.0, gt=0)
    readout: float = Field(0.0, ge=0)

    def build(self) -> NoiseModel:
        return NoiseModel(**self.model_dump())


class WarpBlock(Strict):
    shift: tuple[float, float] = (0.0, 0.0)
    rotation: float = 0.0     # radians


class OperatorBlock(Strict):
    noise: NoiseBlock = Field(default_factory=NoiseBlock)
    factor: int = Field(4, ge=1)
    frames: int = Field(4, ge=1)
    warps: Optional[list[WarpBlock]] = None     # None: seeded defaults, first frame unwarped
    angles: int = Field(50, ge=1)
    detectors: Optional[int] = Field(None, ge=1)   # None: image side

    def noise_model(self) -> NoiseModel:
        return self.noise.build()

    def warp_list(self, seed: int) -> list[Warp]:
        if self.warps is not None:
            return [Warp(tuple(w.shift), w.rotation) for w in self.warps]
        return default_warps(self.frames, seed)

    def build(self, task: str, side: int, seed: int) -> ForwardOperator:
        noise = self.noise_model()
        if task in ("fit", "denoise"):
            return ForwardOperator.identity(noise)
        if task == "superres":
            return ForwardOperator.downsample(self.factor, noise)
        if task == "multisr":
            return ForwardOperator.warp_downsample(self.warp_list(seed), self.factor, noise)
        if task == "ct":
            angles = np.arange(self.angles) * (math.pi / self.angles)
            return ForwardOperator.radon(angles, self.detectors or side, noise)
        raise ConfigError(f"task {task!r} has no forward operator")


class SynthBlock(Strict):
    kind: str
    dims: list[int]
    params: dict[str, Any] = Field(default_factory=dict)


class IoBlock(Strict):
    input: Optional[str] = None
    synth: Optional[SynthBlock] = None
    out: str = "out"

    @model_validator(mode="after")
    def _one_source(self):
        if self.input is not None and self.synth is not None:
            raise ValueError("give either io.input or io.synth, not both")
        return self


class NtkBlock(Strict):
    dims: list[int] = Field(default_factory=lambda: [16, 16])
    activations: list[ActivationBlock] = Field(default_factory=lambda: [
        ActivationBlock(kind="wire"), ActivationBlock(kind="siren"),
        ActivationBlock(kind="gauss"), ActivationBlock(kind="relu_pe")])
    noise_sigma: float = Field(0.05, ge=0)
    times: list[float] = Field(default_factory=lambda: [0.0] + [10.0 ** k for k in range(-4, 3)])
    cap: int = Field(4096, ge=1)


SWEEP_AXES = ("omega0", "s0", "lr", "hidden_layers", "hidden_features", "angles")


class SweepBlock(Strict):
    task: Literal["fit", "denoise", "ct"] = "fit"
    axes: dict[str, list[float]] = Field(default_factory=lambda: {
        "omega0": [0.0, 10.0, 20.0, 30.0, 40.0], "s0": [0.0, 10.0, 20.0, 30.0, 40.0]})
    jobs: int = Field(1, ge=1)

    @model_validator(mode="after")
    def _check_axes(self):
        if not self.axes:
            raise ValueError("sweep.axes must name at least one axis")
        for name, values in self.axes.items():
            if name not in SWEEP_AXES:
                raise ValueError(f"unknown sweep axis {name!r}; known: {', '.join(SWEEP_AXES)}")
            if not values:
                raise ValueError(f"sweep axis {name!r} has no values")
        return self


class DumpBlock(Strict):
    checkpoint: Optional[str] = None
    dims: list[int] = Field(default_factory=lambda: [32, 32])


UNUSED_BLOCKS = {
    **{t: ("ntk", "sweep", "dump") for t in ("fit", "denoise", "superres", "multisr", "ct")},
    "ntk": ("operator", "sweep", "dump"),
    "sweep": ("ntk", "dump"),
    "dump-activations": ("model", "train", "operator", "ntk", "sweep"),
}


class ExperimentConfig(Strict):
    version: Literal[1] = CONFIG_VERSION
    task: Literal[TASKS]  # type: ignore[valid-type]
    model: ModelBlock = Field(default_factory=ModelBlock)
    train: TrainBlock = Field(default_factory=TrainBlock)
    operator: OperatorBlock = Field(default_factory=OperatorBlock)
    io: IoBlock = Field(default_factory=IoBlock)
    ntk: NtkBlock = Field(default_factory=NtkBlock)
    sweep: SweepBlock = Field(default_factory=SweepBlock)
    dump: DumpBlock = Field(default_factory=DumpBlock)

    @model_validator(mode="after")
    def _task_inputs(self):
        signal_tasks = ("fit", "denoise", "superres", "multisr", "ct", "sweep")
        if self.task in signal_tasks and self.io.input is None and self.io.synth is None:
            raise ValueError(f"task {self.task!r} needs io.input or io.synth")
        if self.task == "dump-activations" and not self.dump.checkpoint:
            raise ValueError("task 'dump-activations' needs dump.checkpoint")
        return self

    def resolved(self) -> dict:
        """Full config with defaults filled, minus the output directory and
        the blocks this task never reads."""
        data = self.model_dump(mode="json")
        data["io"].pop("out", None)
        for block in UNUSED_BLOCKS[self.task]:
            data.pop(block, None)
        return data


def _set_path(data: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    node = data
    for key in keys[:-1]:
        child = node.get(key)
        if child is None:
            child = node[key] = {}
        if not isinstance(child, dict):
            raise ConfigError(f"--set {dotted}: {key!r} is not a section")
        node = child
    node[keys[-1]] = value


def parse_override(text: str) -> tuple[str, Any]:
    """``a.b=value``; the value is read as JSON when possible, else as a string."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    key, raw = text.split("=", 1)
    key = key.strip()
    if not key:
        raise ConfigError(f"override {text!r} has an empty key")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key, value


def _format_errors(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        loc = ".".join(str(p) for p in e["loc"]) or "<root>"
        lines.append(f"  {loc}: {e['msg']}")
    return "invalid config:\n" + "\n".join(lines)


def load_config(path=None, overrides: list[str] | None = None, seed: int | None = None,
                out: str | None = None, base: dict | None = None) -> ExperimentConfig:
    """Read, override and validate a config.  Raises ConfigError with field diagnostics."""
    data: dict = dict(base or {})
    if path is not None:
        text = Path(path).read_text()
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: line {e.lineno}, column {e.colno}: {e.msg}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be an object")
    for item in overrides or []:
        _set_path(data, *parse_override(item))
    if seed is not None:
        _set_path(data, "train.seed", seed)
    if out is not None:
        _set_path(data, "io.out", out)
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(_format_errors(e)) from None
