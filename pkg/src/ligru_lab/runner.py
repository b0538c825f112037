"""Experiment orchestration: one training run per config, the five-variant
comparison matrix, and the per-epoch metrics CSV.

Metrics format (one row per completed epoch, header always written):

    epoch,mse,eta,gamma1,uz_norm,uh_norm,grad_ratio,exploded

A gradient or activation explosion is a recorded outcome, not an error: the
run writes its final row with exploded=1 and stops gracefully.  Files are
byte-identical across runs for a fixed config and seed.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from typing import Dict, Optional, Tuple

import numpy as np

from . import adding_task
from .backprop import bptt, clip_global_norm
from .cells import (CellParams, VariantConfig, cell_forward, init_cell_params)
from .diagnostics import (StabilityReport, detect_explosion, empirical_ratios,
                          eta_for_variant, gamma1, trace_sigmas)
from .linalg import spectral_norm
from .optimizer import adam_step, init_adam
from .stabilizers import StabilizerConfig, sor_penalty

INPUT_WIDTH = 2  # adding-task channels

METRICS_HEADER = "epoch,mse,eta,gamma1,uz_norm,uh_norm,grad_ratio,exploded"

# Hyperparameter presets.  "paper" is the full-scale setting (hours of
# compute and tens of GB of trace memory); "desk" runs the whole variant
# matrix in minutes on a laptop while still showing the standard cell's eta
# drift.
PRESETS: Dict[str, Dict[str, int | float]] = {
    "paper": dict(T=2000, hidden=1024, batch=256, epochs=1000, lr=1e-3),
    "desk": dict(T=200, hidden=64, batch=64, epochs=300, lr=1e-3),
}

# The five stabilization strategies compared by the experiment matrix.
MATRIX_VARIANTS: Dict[str, Tuple[VariantConfig, StabilizerConfig]] = {
    "standard": (VariantConfig("relu", "none", "batch_norm"), StabilizerConfig()),
    "layer_norm": (VariantConfig("relu", "layer_norm", "batch_norm"), StabilizerConfig()),
    "sine": (VariantConfig("sine", "none", "batch_norm"), StabilizerConfig()),
    "gc_wd": (VariantConfig("relu", "none", "batch_norm"),
              StabilizerConfig(weight_decay=1e-3, clip_threshold=1.0)),
    "sor": (VariantConfig("relu", "none", "batch_norm"),
            StabilizerConfig(sor_lambda=1e-3)),
}

DECAYED_PARAMS = frozenset({"Wz", "Wh", "Uz", "Uh"})


@dataclass
class ExperimentConfig:
    variant: VariantConfig = field(default_factory=lambda: VariantConfig("relu", "layer_norm", "batch_norm"))
    stabilizers: StabilizerConfig = field(default_factory=StabilizerConfig)
    T: int = 200
    hidden: int = 64
    batch: int = 64
    epochs: int = 300
    lr: float = 1e-3
    seed: int = 1
    metrics_path: str = "metrics.csv"

    def __post_init__(self):
        if self.T < 2 or self.T % 2 != 0:
            raise ValueError("T must be even and >= 2")
        for name in ("hidden", "batch"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.lr <= 0:
            raise ValueError("lr must be positive")


def preset_config(name: str, **overrides) -> ExperimentConfig:
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    merged = {**PRESETS[name], **overrides}
    return ExperimentConfig(**merged)


def _fmt(x: float) -> str:
    return repr(float(x))


@dataclass
class _Model:
    """Parameters plus the optimizer-facing flat views of them."""

    params: CellParams
    readout: np.ndarray

    def flat(self) -> Dict[str, np.ndarray]:
        p = self.params
        return {
            "Wz": p.Wz, "Wh": p.Wh, "Uz": p.Uz, "Uh": p.Uh,
            "bn_z.gamma": p.bn_z.gamma, "bn_z.beta": p.bn_z.beta,
            "bn_h.gamma": p.bn_h.gamma, "bn_h.beta": p.bn_h.beta,
            "Wo": self.readout,
        }


def _init_model(cfg: ExperimentConfig, rng) -> _Model:
    params = init_cell_params(INPUT_WIDTH, cfg.hidden, rng)
    bound = 1.0 / np.sqrt(cfg.hidden)
    readout = rng.uniform(-bound, bound, size=(1, cfg.hidden))
    return _Model(params=params, readout=readout)


def run_experiment(cfg: ExperimentConfig) -> StabilityReport:
    """Train one configured variant on the adding task, writing per-epoch
    metrics, and return the final stability report.

    The data stream and the parameter initialization use independent child
    generators of the config seed, so every variant trained with the same
    seed sees identical batches regardless of model size.
    """
    init_ss, data_ss = np.random.SeedSequence(cfg.seed).spawn(2)
    init_rng = np.random.Generator(np.random.PCG64(init_ss))
    data_rng = np.random.Generator(np.random.PCG64(data_ss))

    model = _init_model(cfg, init_rng)
    params = model.params
    flat_params = model.flat()
    adam = init_adam(
        flat_params, lr=cfg.lr,
        weight_decay=cfg.stabilizers.weight_decay,
        decay_params=DECAYED_PARAMS,
    )
    stab = cfg.stabilizers

    warm_z: Optional[np.ndarray] = None
    warm_h: Optional[np.ndarray] = None
    report: Optional[StabilityReport] = None

    directory = os.path.dirname(os.path.abspath(cfg.metrics_path))
    os.makedirs(directory, exist_ok=True)
    with open(cfg.metrics_path, "w", newline="") as metrics:
        metrics.write(METRICS_HEADER + "\n")

        def epoch_pass(epoch: int, update: bool) -> StabilityReport:
            nonlocal warm_z, warm_h
            batch = adding_task.generate(cfg.T, cfg.batch, data_rng)
            h_all, trace = cell_forward(params, cfg.variant, batch.inputs, training=True)

            events = []
            mse_val = float("nan")
            ratio = float("nan")
            grads = None
            if trace.exploded_at is not None:
                events.append((epoch, trace.exploded_at, "hidden", float("nan")))
            else:
                pred = adding_task.readout_forward(h_all[-1], model.readout)
                mse_val = adding_task.mse(pred, batch.targets)
                events.append((epoch, None, "loss", mse_val))
                d_pred = adding_task.mse_backward(pred, batch.targets)
                dWo, dh_last = adding_task.readout_backward(h_all[-1], model.readout, d_pred)
                dH = np.zeros_like(h_all)
                dH[-1] = dh_last
                grads = bptt(params, cfg.variant, trace, dH)
                grads.extras["Wo"] = dWo
                if grads.exploded_at is not None:
                    events.append((epoch, grads.exploded_at, "grad", float("nan")))
            exploded = detect_explosion(events)

            sn_z = spectral_norm(params.Uz, start=warm_z)
            sn_h = spectral_norm(params.Uh, start=warm_h)
            warm_z, warm_h = sn_z.vector, sn_h.vector
            g1 = gamma1(trace)
            sigma_z, sigma_h = trace_sigmas(trace)
            if cfg.variant.recurrent_norm == "layer_norm" and sigma_z is None:
                eta = float("nan")  # exploded before the first step completed
            else:
                eta = eta_for_variant(cfg.variant, g1, sn_z.value, sn_h.value,
                                      sigma_z, sigma_h)

            if exploded is None and grads is not None and update:
                if stab.sor_lambda > 0:
                    _, d_sor_z, d_sor_h = sor_penalty(params.Uz, params.Uh, stab.sor_lambda)
                    grads.dUz += d_sor_z
                    grads.dUh += d_sor_h
                if stab.clip_threshold is not None:
                    grads, scale = clip_global_norm(grads, stab.clip_threshold)
                    if not np.isfinite(scale):
                        exploded = (epoch, None)
                ratio = empirical_ratios(grads.per_step_state_grads)
                if exploded is None:
                    flat_grads = {
                        "Wz": grads.dWz, "Wh": grads.dWh,
                        "Uz": grads.dUz, "Uh": grads.dUh,
                        "bn_z.gamma": grads.d_bn_z_gamma, "bn_z.beta": grads.d_bn_z_beta,
                        "bn_h.gamma": grads.d_bn_h_gamma, "bn_h.beta": grads.d_bn_h_beta,
                        "Wo": grads.extras["Wo"],
                    }
                    adam_step(flat_params, flat_grads, adam)
            elif grads is not None and grads.exploded_at is None:
                ratio = empirical_ratios(grads.per_step_state_grads)

            return StabilityReport(
                epoch=epoch,
                eta=eta,
                gamma1=g1,
                norm_Uz=sn_z.value,
                norm_Uh=sn_h.value,
                mse=mse_val,
                max_adjacent_grad_ratio=ratio,
                sigma_z=sigma_z,
                sigma_h=sigma_h,
                exploded_at=exploded,
                variant=cfg.variant,
            )

        if cfg.epochs == 0:
            # Initial-weights diagnostic: one forward pass, no update, no row.
            return epoch_pass(0, update=False)

        for epoch in range(cfg.epochs):
            report = epoch_pass(epoch, update=True)
            row = ",".join([
                str(epoch), _fmt(report.mse), _fmt(report.eta), _fmt(report.gamma1),
                _fmt(report.norm_Uz), _fmt(report.norm_Uh),
                _fmt(report.max_adjacent_grad_ratio),
                "1" if report.exploded_at is not None else "0",
            ])
            metrics.write(row + "\n")
            if report.exploded_at is not None:
                break
    return report


def run_matrix(base: ExperimentConfig, out_dir) -> Dict[str, StabilityReport]:
    """Train all five stabilization strategies with a shared seed; one
    metrics file per strategy in out_dir."""
    os.makedirs(out_dir, exist_ok=True)
    reports = {}
    for name, (variant, stabilizers) in MATRIX_VARIANTS.items():
        cfg = replace(base, variant=variant, stabilizers=stabilizers,
                      metrics_path=os.path.join(out_dir, f"{name}.csv"))
        reports[name] = run_experiment(cfg)
    return reports
