"""Task runners behind the command-line interface.

Each runner takes a validated :class:`ExperimentConfig`, computes everything
in memory and only then writes its artifacts, ending with ``report.json``.
Reports hold no timings, so repeated runs with one config produce identical
bytes; wall-clock time goes to ``trace.csv``.
"""
from __future__ import annotations

import itertools
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import metrics, ntk
from .activations import Activation, sweep_alias
from .config import ActivationBlock, ConfigError, ExperimentConfig
from .model import InrModel, build, hidden_activations, load_checkpoint, parity_width, save_checkpoint
from .operators import bilinear_upsample
from .optim import TRACE_COLUMNS, FitResult, fit_inverse, fit_signal
from .signals import load_image, make_grid, save_image, save_tensor, synth_signal, to_samples, write_csv

SIGNAL_TASKS = ("fit", "denoise", "superres", "multisr", "ct")
SPARSITY_LEVEL = 0.01
DENOISE_SWEEP_PHOTONS = 50.0


def _json_value(v):
    if isinstance(v, float) and not math.isfinite(v):
        return "inf" if v > 0 else ("-inf" if v < 0 else "nan")
    if isinstance(v, dict):
        return {k: _json_value(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_json_value(x) for x in v]
    if isinstance(v, np.generic):
        return _json_value(v.item())
    return v


def write_report(out: Path, report: dict) -> None:
    text = json.dumps(_json_value(report), sort_keys=True, indent=2)
    (out / "report.json").write_text(text + "\n")


def load_signal(cfg: ExperimentConfig) -> np.ndarray:
    """Ground-truth signal [*dims, C] from io.input or io.synth."""
    if cfg.io.input is not None:
        return load_image(cfg.io.input)
    s = cfg.io.synth
    return synth_signal(s.kind, s.dims, s.params, seed=cfg.train.seed)


def build_model(cfg: ExperimentConfig, input_dim: int, output_dim: int,
                activation: Activation | None = None) -> InrModel:
    act = activation or cfg.model.activation.build()
    m = cfg.model
    width = parity_width(m.hidden_features, act) if m.parity else m.hidden_features
    return build(input_dim, output_dim, m.hidden_layers, width, act, init=m.init,
                 seed=cfg.train.seed, precision=m.precision)


def _quality(recon: np.ndarray, truth: np.ndarray) -> dict:
    spatial = truth.ndim - 1
    q = {"psnr_db": metrics.psnr(recon, truth)}
    if spatial == 2 and min(truth.shape[:2]) >= metrics.SSIM_WINDOW:
        q["ssim"] = metrics.ssim(recon, truth)
    if spatial == 3:
        q["iou"] = metrics.iou(recon, truth)
    return q


def _model_summary(model: InrModel) -> dict:
    return {"width": model.hidden_features, "real_parameters": model.real_parameter_count(),
            "activation": model.activation.to_dict()}


def _write_fit_artifacts(out: Path, result: FitResult, recon: np.ndarray, report: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    write_csv(result.trace, out / "trace.csv", TRACE_COLUMNS)
    save_tensor(recon, out / "recon.tensor")
    if recon.ndim == 3 and recon.shape[-1] in (1, 3):
        save_image(recon, out / ("recon.pgm" if recon.shape[-1] == 1 else "recon.ppm"))
    save_checkpoint(result.model, out / "checkpoint.json")
    write_report(out, report)


def _base_report(cfg: ExperimentConfig, model: InrModel, result: FitResult, recon, truth) -> dict:
    return {
        "task": cfg.task,
        "config": cfg.resolved(),
        "model": _model_summary(model),
        "best_step": result.best_step,
        "final_loss": result.trace[-1]["loss"] if result.trace else None,
        "quality": _quality(recon, truth),
    }


def run_fit(cfg: ExperimentConfig) -> dict:
    truth = load_signal(cfg)
    dims = truth.shape[:-1]
    model = build_model(cfg, len(dims), truth.shape[-1])
    coords = make_grid(dims)
    result = fit_signal(model, coords, to_samples(truth, len(dims)), cfg.train.build(), dims=dims)
    recon = result.final_output.reshape(truth.shape).astype(np.float64)
    report = _base_report(cfg, model, result, recon, truth)
    _write_fit_artifacts(Path(cfg.io.out), result, recon, report)
    return report


def _run_inverse(cfg: ExperimentConfig, baseline=None) -> dict:
    truth = load_signal(cfg)
    if truth.ndim != 3:
        raise ConfigError(f"task {cfg.task!r} needs a 2D image, got signal shape {truth.shape}")
    dims = truth.shape[:2]
    operator = cfg.operator.build(cfg.task, dims[0], cfg.train.seed)
    measurements = operator.apply(truth, seed=cfg.train.seed)
    model = build_model(cfg, 2, truth.shape[-1])
    result = fit_inverse(model, operator, measurements, dims, cfg.train.build(), eval_target=truth)
    recon = result.final_output.reshape(truth.shape).astype(np.float64)
    report = _base_report(cfg, model, result, recon, truth)
    report["measurement_shape"] = list(measurements.shape)
    if baseline is not None:
        name, image = baseline(measurements, operator)
        report["baseline"] = {"method": name, **_quality(image, truth)}
        report["gain_db"] = report["quality"]["psnr_db"] - report["baseline"]["psnr_db"]
    out = Path(cfg.io.out)
    _write_fit_artifacts(out, result, recon, report)
    save_tensor(measurements, out / "measurements.tensor")
    return report


def run_denoise(cfg: ExperimentConfig) -> dict:
    return _run_inverse(cfg, baseline=lambda y, op: ("noisy_input", y))


def run_superres(cfg: ExperimentConfig) -> dict:
    return _run_inverse(cfg, baseline=lambda y, op: ("bilinear", bilinear_upsample(y, op.factor)))


def run_multisr(cfg: ExperimentConfig) -> dict:
    # frame 0 is the reference frame, so single-frame upsampling aligns with the truth
    return _run_inverse(cfg, baseline=lambda y, op: ("bilinear_single_frame", bilinear_upsample(y[0], op.factor)))


def run_ct(cfg: ExperimentConfig) -> dict:
    return _run_inverse(cfg)


def _ntk_signal(cfg: ExperimentConfig) -> np.ndarray:
    if cfg.io.input is None and cfg.io.synth is None:
        return synth_signal("shepp_logan", cfg.ntk.dims, seed=cfg.train.seed)
    truth = load_signal(cfg)
    if list(truth.shape[:-1]) != list(cfg.ntk.dims):
        raise ConfigError(f"ntk.dims {cfg.ntk.dims} do not match the input signal {list(truth.shape[:-1])}")
    return truth


def run_ntk(cfg: ExperimentConfig) -> dict:
    clean = _ntk_signal(cfg)
    dims = clean.shape[:-1]
    coords = make_grid(dims)
    rows = np.prod(dims) * clean.shape[-1]
    if rows > cfg.ntk.cap:
        raise ntk.KernelSizeError(f"kernel would have {rows} rows, above the cap of {cfg.ntk.cap}")
    rng = np.random.default_rng(cfg.train.seed)
    noisy = clean + cfg.ntk.noise_sigma * rng.standard_normal(clean.shape)
    g_clean, g_noisy = to_samples(clean, len(dims)), to_samples(noisy, len(dims))
    kernels, spectra, trajectory, summary = {}, {}, [], {}
    for block in cfg.ntk.activations:
        act = block.build()
        label = act.kind
        n = 2
        while label in kernels:  # repeated kinds (e.g. two WIRE settings) get numbered labels
            label = f"{act.kind}_{n}"
            n += 1
        model = build_model(cfg, len(dims), clean.shape[-1], act)
        K = ntk.empirical_ntk(model, coords, cap=cfg.ntk.cap)
        flow = ntk.KernelFlow(K)
        kernels[label] = K.K
        spectra[label] = flow.eigenvalues[::-1]
        best = -math.inf
        for t in cfg.ntk.times:
            p = metrics.psnr(flow(g_noisy, t), g_clean)
            trajectory.append({"activation": label, "t": t, "psnr": p})
            best = max(best, p)
        summary[label] = {"effective_rank": flow.effective_rank(), "max_eigenvalue": float(flow.eigenvalues[-1]),
                          "best_psnr_db": best, "model": _model_summary(model)}
    out = Path(cfg.io.out)
    out.mkdir(parents=True, exist_ok=True)
    for label, K in kernels.items():
        save_tensor(K, out / f"ntk_{label}.tensor")
    labels = list(spectra)
    write_csv([{"index": i, **{k: spectra[k][i] for k in labels}} for i in range(len(spectra[labels[0]]))],
              out / "eigenvalues.csv", ["index"] + labels)
    write_csv(trajectory, out / "trajectory.csv", ["activation", "t", "psnr"])
    report = {"task": "ntk", "config": cfg.resolved(), "noisy_psnr_db": metrics.psnr(noisy, clean),
              "kernels": summary}
    write_report(out, report)
    return report


def _cell_config(cfg: ExperimentConfig, cell: dict) -> ExperimentConfig:
    data = cfg.model_dump(mode="json")
    data["task"] = cfg.sweep.task
    for block in ("sweep", "ntk", "dump"):
        data.pop(block)
    act = cfg.model.activation
    if "omega0" in cell or "s0" in cell:
        omega0 = cell.get("omega0", act.omega0 or 0.0)
        s0 = cell.get("s0", act.s0 or 0.0)
        alias = sweep_alias(float(omega0), float(s0))
        data["model"]["activation"] = ActivationBlock(**alias.to_dict()).model_dump(mode="json")
    if "lr" in cell:
        data["train"]["lr"] = float(cell["lr"])
    for key in ("hidden_layers", "hidden_features"):
        if key in cell:
            data["model"][key] = int(cell[key])
    if "angles" in cell:
        data["operator"]["angles"] = int(cell["angles"])
    if data["task"] == "denoise" and data["operator"]["noise"]["kind"] == "none":
        # a denoising sweep without noise is meaningless; use the photon-limited default
        data["operator"]["noise"] = {"kind": "photon", "sigma": 0.0, "max_photons": DENOISE_SWEEP_PHOTONS,
                                     "readout": 0.0}
    name = "_".join(f"{k}{cell[k]:g}" for k in cell)
    data["io"]["out"] = str(Path(cfg.io.out) / "cells" / name)
    return ExperimentConfig.model_validate(data)


def _run_cell(cell_cfg: ExperimentConfig) -> tuple[dict, float]:
    t0 = time.perf_counter()
    report = RUNNERS[cell_cfg.task](cell_cfg)
    return report, time.perf_counter() - t0


def run_sweep(cfg: ExperimentConfig) -> dict:
    axes = cfg.sweep.axes
    names = list(axes)
    cells = [dict(zip(names, values)) for values in itertools.product(*(axes[n] for n in names))]
    cell_cfgs = [_cell_config(cfg, c) for c in cells]
    if cfg.sweep.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.sweep.jobs) as pool:
            results = list(pool.map(_run_cell, cell_cfgs))
    else:
        results = [_run_cell(c) for c in cell_cfgs]
    rows = []
    for cell, cell_cfg, (report, wall) in zip(cells, cell_cfgs, results):
        rows.append({**cell, "activation": cell_cfg.model.activation.kind,
                     "best_psnr_db": report["quality"]["psnr_db"], "best_step": report["best_step"],
                     "wall_time_s": round(wall, 3)})
    out = Path(cfg.io.out)
    write_csv(rows, out / "sweep.csv", names + ["activation", "best_psnr_db", "best_step", "wall_time_s"])
    report = {"task": "sweep", "config": cfg.resolved(),
              "cells": [{k: v for k, v in r.items() if k != "wall_time_s"} for r in rows]}
    write_report(out, report)
    return report


def _normalized(plane: np.ndarray) -> np.ndarray:
    lo, hi = float(plane.min()), float(plane.max())
    if hi == lo:
        return np.full(plane.shape, 0.5)
    return (plane - lo) / (hi - lo)


def run_dump_activations(cfg: ExperimentConfig) -> dict:
    model = load_checkpoint(cfg.dump.checkpoint)
    dims = tuple(cfg.dump.dims)
    if len(dims) != 2:
        raise ConfigError(f"dump.dims must be two-dimensional, got {list(dims)}")
    if model.input_dim != 2:
        raise ConfigError(f"checkpoint expects {model.input_dim}-D coordinates; activation maps need 2-D")
    layers = hidden_activations(model, make_grid(dims))
    out = Path(cfg.io.out)
    out.mkdir(parents=True, exist_ok=True)
    sparsity = []
    for li, act in enumerate(layers):
        act = np.asarray(act)
        for u in range(act.shape[1]):
            unit = act[:, u].reshape(dims)
            save_image(_normalized(unit.real), out / f"layer{li + 1}_unit{u:03d}_re.pgm")
            save_image(_normalized(np.imag(unit)), out / f"layer{li + 1}_unit{u:03d}_im.pgm")
        mag = np.abs(act)
        peak = float(mag.max())
        sparsity.append(float(np.mean(mag < SPARSITY_LEVEL * peak)) if peak > 0 else 1.0)
    report = {"task": "dump-activations", "config": cfg.resolved(), "layers": len(layers),
              "units": [int(np.asarray(a).shape[1]) for a in layers], "sparsity": sparsity,
              "sparsity_level": SPARSITY_LEVEL}
    write_report(out, report)
    return report


RUNNERS = {
    "fit": run_fit,
    "denoise": run_denoise,
    "superres": run_superres,
    "multisr": run_multisr,
    "ct": run_ct,
    "ntk": run_ntk,
    "sweep": run_sweep,
    "dump-activations": run_dump_activations,
}


def run(cfg: ExperimentConfig) -> dict:
    return RUNNERS[cfg.task](cfg)
