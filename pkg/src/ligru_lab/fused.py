"""Performance-engineered forward step.

Identical contract and (within 1e-12) identical outputs to
:func:`ligru_lab.cells.cell_forward`, but the feed-forward projections for
all timesteps are computed in one large matrix product instead of T small
ones, and the sequential gate loop writes into preallocated workspace
buffers, so per-step work is independent of the sequence length.  Buffer
creation runs through a counting hook that tests use to assert the time loop
allocates nothing.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .cells import (CellParams, ForwardTrace, VariantConfig, _batch_norm_forward,
                    init_cell_params)
from .linalg import make_rng

_alloc_calls = 0


def alloc_calls() -> int:
    """Number of buffer allocations made by fused_forward since import."""
    return _alloc_calls


def _alloc(shape) -> np.ndarray:
    global _alloc_calls
    _alloc_calls += 1
    return np.empty(shape)


def _alloc_zeros(shape) -> np.ndarray:
    global _alloc_calls
    _alloc_calls += 1
    return np.zeros(shape)


def _ln_rows_inplace(rec: np.ndarray, scratch: np.ndarray, stat: np.ndarray,
                     eps: float) -> None:
    """Row-wise gain-free layer norm, in place on rec; stat (B,1) ends as the
    sqrt(var+eps) divisor."""
    np.mean(rec, axis=1, keepdims=True, out=stat)
    np.subtract(rec, stat, out=rec)
    np.multiply(rec, rec, out=scratch)
    np.mean(scratch, axis=1, keepdims=True, out=stat)
    np.add(stat, eps, out=stat)
    np.sqrt(stat, out=stat)
    np.divide(rec, stat, out=rec)


def fused_forward(params: CellParams, cfg: VariantConfig, x: np.ndarray,
                  h0: Optional[np.ndarray] = None, training: bool = True):
    """Drop-in replacement for cell_forward; returns (h_all, trace)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise ValueError(f"x must be (T, batch, input), got shape {x.shape}")
    T, B, D = x.shape
    H = params.hidden_size
    if params.input_size != D:
        raise ValueError(f"input size mismatch: params expect {params.input_size}, got {D}")
    if h0 is None:
        h0 = np.zeros((B, H))
    h0 = np.asarray(h0, dtype=np.float64)
    if h0.shape != (B, H):
        raise ValueError(f"h0 must be ({B}, {H}), got {h0.shape}")

    use_ln = cfg.recurrent_norm == "layer_norm"
    use_bn = cfg.feedforward_norm == "batch_norm"
    ln_eps = 1e-5

    with np.errstate(over="ignore", invalid="ignore"):
        # One projection product per gate over the flattened sequence batch.
        x_flat = x.reshape(T * B, D)
        raw_z = _alloc((T * B, H))
        raw_h = _alloc((T * B, H))
        np.matmul(x_flat, params.Wz.T, out=raw_z)
        np.matmul(x_flat, params.Wh.T, out=raw_h)
        if use_bn:
            proj_z_flat, bn_z_xhat, bn_z_std = _batch_norm_forward(raw_z, params.bn_z, training)
            proj_h_flat, bn_h_xhat, bn_h_std = _batch_norm_forward(raw_h, params.bn_h, training)
        else:
            proj_z_flat, bn_z_xhat, bn_z_std = raw_z, None, None
            proj_h_flat, bn_h_xhat, bn_h_std = raw_h, None, None
        proj_z = proj_z_flat.reshape(T, B, H)
        proj_h = proj_h_flat.reshape(T, B, H)

        shape = (T, B, H)
        trace = ForwardTrace(
            cfg=cfg,
            h_init=h0.copy(),
            x=x,
            proj_z=proj_z,
            proj_h=proj_h,
            update_preact=_alloc_zeros(shape),
            cand_preact=_alloc_zeros(shape),
            z=_alloc_zeros(shape),
            h_cand=_alloc_zeros(shape),
            h=_alloc_zeros(shape),
            bn_z_xhat=bn_z_xhat,
            bn_h_xhat=bn_h_xhat,
            bn_z_std=bn_z_std,
            bn_h_std=bn_h_std,
            ln_z_xhat=_alloc_zeros(shape) if use_ln else None,
            ln_h_xhat=_alloc_zeros(shape) if use_ln else None,
            ln_z_std=_alloc_zeros((T, B)) if use_ln else None,
            ln_h_std=_alloc_zeros((T, B)) if use_ln else None,
            training=training,
        )

        # Workspace reused by every timestep; nothing below allocates.
        rec_z = _alloc((B, H))
        rec_h = _alloc((B, H))
        scratch = _alloc((B, H))
        mix = _alloc((B, H))
        stat = _alloc((B, 1))
        finite = _alloc((B, H)).astype(bool)

        h_prev = h0
        for t in range(T):
            np.matmul(h_prev, params.Uz.T, out=rec_z)
            np.matmul(h_prev, params.Uh.T, out=rec_h)
            if use_ln:
                _ln_rows_inplace(rec_z, scratch, stat, ln_eps)
                trace.ln_z_xhat[t] = rec_z
                trace.ln_z_std[t] = stat[:, 0]
                _ln_rows_inplace(rec_h, scratch, stat, ln_eps)
                trace.ln_h_xhat[t] = rec_h
                trace.ln_h_std[t] = stat[:, 0]

            a = trace.update_preact[t]
            np.add(proj_z[t], rec_z, out=a)
            # z = exp(-logaddexp(0, -a)), the saturating sigmoid
            z = trace.z[t]
            np.negative(a, out=scratch)
            np.logaddexp(0.0, scratch, out=scratch)
            np.negative(scratch, out=scratch)
            np.exp(scratch, out=z)

            b = trace.cand_preact[t]
            np.add(proj_h[t], rec_h, out=b)
            c = trace.h_cand[t]
            if cfg.activation == "relu":
                np.maximum(b, 0.0, out=c)
            else:
                np.sin(b, out=c)

            h = trace.h[t]
            np.subtract(1.0, z, out=mix)
            np.multiply(mix, c, out=mix)
            np.multiply(z, h_prev, out=h)
            np.add(h, mix, out=h)

            np.isfinite(h, out=finite)
            if not finite.all():
                # zero the partial step so downstream code never reads it
                trace.update_preact[t] = 0.0
                trace.cand_preact[t] = 0.0
                trace.z[t] = 0.0
                trace.h_cand[t] = 0.0
                trace.h[t] = 0.0
                if use_ln:
                    trace.ln_z_xhat[t] = 0.0
                    trace.ln_h_xhat[t] = 0.0
                    trace.ln_z_std[t] = 1.0
                    trace.ln_h_std[t] = 1.0
                trace.exploded_at = t
                trace.valid_steps = t
                return trace.h, trace
            h_prev = h

    trace.valid_steps = T
    return trace.h, trace


@dataclass
class BenchmarkRow:
    T: int
    batch: int
    hidden: int
    naive_ms: float
    naive_std: float
    fused_ms: float
    fused_std: float

    @property
    def speedup(self) -> float:
        return self.naive_ms / self.fused_ms if self.fused_ms > 0 else float("inf")


@dataclass
class BenchmarkResult:
    rows: List[BenchmarkRow] = field(default_factory=list)
    # time-vs-T least-squares fit quality per implementation (needs >= 3 rows)
    r2: Dict[str, float] = field(default_factory=dict)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["T", "batch", "hidden", "impl", "mean_ms", "std_ms"])
            for row in self.rows:
                writer.writerow([row.T, row.batch, row.hidden, "naive",
                                 f"{row.naive_ms:.6f}", f"{row.naive_std:.6f}"])
                writer.writerow([row.T, row.batch, row.hidden, "fused",
                                 f"{row.fused_ms:.6f}", f"{row.fused_std:.6f}"])


def linear_fit_r2(xs: Sequence[float], ys: Sequence[float]) -> float:
    """R^2 of the least-squares line through (xs, ys)."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.shape[0] < 3:
        raise ValueError("need at least 3 points for a meaningful fit")
    slope, intercept = np.polyfit(xs, ys, 1)
    pred = slope * xs + intercept
    ss_res = float(np.sum((ys - pred) ** 2))
    ss_tot = float(np.sum((ys - ys.mean()) ** 2))
    if ss_tot == 0.0:
        return 1.0
    return 1.0 - ss_res / ss_tot


def _time_call(fn, repetitions: int, warmups: int) -> Tuple[float, float]:
    for _ in range(warmups):
        fn()
    samples = []
    for _ in range(repetitions):
        start = time.perf_counter()
        fn()
        samples.append((time.perf_counter() - start) * 1e3)
    arr = np.asarray(samples)
    return float(arr.mean()), float(arr.std())


def benchmark(grid: Sequence[Tuple[int, int, int]], repetitions: int = 10,
              warmups: int = 3, cfg: Optional[VariantConfig] = None,
              seed: int = 0, csv_path=None) -> BenchmarkResult:
    """Time the naive and fused forward passes over a (T, batch, hidden) grid.

    Input width is set equal to the hidden width so the batched projection
    has real work to do.  Writes the benchmark CSV when csv_path is given and
    fits mean time against T per implementation when the grid has >= 3
    entries.
    """
    from .cells import cell_forward  # local import to keep module load light

    cfg = cfg or VariantConfig("relu", "layer_norm", "batch_norm")
    result = BenchmarkResult()
    for (T, batch, hidden) in grid:
        rng = make_rng(seed)
        params = init_cell_params(hidden, hidden, rng)
        x = rng.standard_normal((T, batch, hidden))
        naive_ms, naive_std = _time_call(
            lambda: cell_forward(params, cfg, x, training=True), repetitions, warmups)
        fused_ms, fused_std = _time_call(
            lambda: fused_forward(params, cfg, x, training=True), repetitions, warmups)
        result.rows.append(BenchmarkRow(T, batch, hidden, naive_ms, naive_std,
                                        fused_ms, fused_std))
    if len(result.rows) >= 3:
        ts = [row.T for row in result.rows]
        result.r2["naive"] = linear_fit_r2(ts, [row.naive_ms for row in result.rows])
        result.r2["fused"] = linear_fit_r2(ts, [row.fused_ms for row in result.rows])
    if csv_path is not None:
        result.write_csv(csv_path)
    return result
