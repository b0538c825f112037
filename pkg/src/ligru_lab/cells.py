"""Forward pass of the light-GRU cell family.

One configurable cell covers three variants: the standard cell (ReLU
candidate, batch-normalized feed-forward projections), the layer-normalized
cell (layer norm without gain/bias on the recurrent contribution of both
gates), and a sine-activated candidate variant.  The update rule is

    z_t = sigmoid(BN(Wz x_t) + [LN](Uz h_{t-1}))
    c_t = act(BN(Wh x_t) + [LN](Uh h_{t-1}))        act in {relu, sine}
    h_t = z_t * h_{t-1} + (1 - z_t) * c_t

There is no reset gate and no bias vector on the projections; batch norm's
beta plays the bias role.  The forward pass records a ForwardTrace with every
intermediate needed by the manual backward pass and by the stability
diagnostics.

Feed-forward projections are computed for all timesteps and batch-normalized
per feature over the flattened (time x batch) axis before the sequential
recurrence loop, so batch norm runs once per call.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .linalg import Rng, as_matrix, load_matrix, orthogonal_init, save_matrix

ACTIVATIONS = ("relu", "sine")
RECURRENT_NORMS = ("none", "layer_norm")
FEEDFORWARD_NORMS = ("batch_norm", "none")


@dataclass(frozen=True)
class VariantConfig:
    """Selects the cell variant.

    (relu, none, batch_norm)       -> standard light-GRU cell
    (relu, layer_norm, batch_norm) -> layer-normalized (stabilized) cell
    (sine, none, batch_norm)       -> sine-candidate variant
    """

    activation: str = "relu"
    recurrent_norm: str = "none"
    feedforward_norm: str = "batch_norm"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.recurrent_norm not in RECURRENT_NORMS:
            raise ValueError(f"unknown recurrent_norm {self.recurrent_norm!r}")
        if self.feedforward_norm not in FEEDFORWARD_NORMS:
            raise ValueError(f"unknown feedforward_norm {self.feedforward_norm!r}")


STANDARD = VariantConfig("relu", "none", "batch_norm")
LAYER_NORMED = VariantConfig("relu", "layer_norm", "batch_norm")
SINE = VariantConfig("sine", "none", "batch_norm")


@dataclass
class BatchNormState:
    """Learnable scale/shift plus running statistics for one batch-norm."""

    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.1
    eps: float = 1e-5

    @classmethod
    def fresh(cls, width: int, momentum: float = 0.1, eps: float = 1e-5) -> "BatchNormState":
        return cls(
            gamma=np.ones(width),
            beta=np.zeros(width),
            running_mean=np.zeros(width),
            running_var=np.ones(width),
            momentum=momentum,
            eps=eps,
        )


@dataclass
class CellParams:
    """All learnable state of one recurrent layer.

    Wz, Wh are (hidden x input) feed-forward weights; Uz, Uh are
    (hidden x hidden) recurrent weights.  The batch-norm states are unused
    when the variant disables feed-forward normalization but are kept so a
    parameter set can serve every variant.
    """

    Wz: np.ndarray
    Wh: np.ndarray
    Uz: np.ndarray
    Uh: np.ndarray
    bn_z: BatchNormState
    bn_h: BatchNormState

    @property
    def hidden_size(self) -> int:
        return self.Wz.shape[0]

    @property
    def input_size(self) -> int:
        return self.Wz.shape[1]


def init_cell_params(input_size: int, hidden_size: int, rng: Rng) -> CellParams:
    """Fresh parameters: Gaussian feed-forward weights scaled by 1/sqrt(input),
    orthogonal recurrent weights, unit-gamma/zero-beta batch norm."""
    scale = 1.0 / np.sqrt(input_size)
    return CellParams(
        Wz=rng.standard_normal((hidden_size, input_size)) * scale,
        Wh=rng.standard_normal((hidden_size, input_size)) * scale,
        Uz=orthogonal_init(hidden_size, hidden_size, rng),
        Uh=orthogonal_init(hidden_size, hidden_size, rng),
        bn_z=BatchNormState.fresh(hidden_size),
        bn_h=BatchNormState.fresh(hidden_size),
    )


def sigmoid(x):
    """Numerically saturating logistic function; never overflows."""
    arr = np.asarray(x, dtype=np.float64)
    out = np.exp(-np.logaddexp(0.0, -arr))
    if np.isscalar(x) or arr.ndim == 0:
        return float(out)
    return out


def layer_norm(v: np.ndarray, eps: float = 1e-5):
    """Normalize a vector to zero mean, unit variance; no gain or bias.

    Returns (normalized, mean, variance); the statistics are what the
    backward pass differentiates through.  Variance is the biased (divide
    by n) convention.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.shape[0] < 2:
        raise ValueError("layer_norm needs a vector of length >= 2")
    if eps <= 0:
        raise ValueError("eps must be positive")
    mean = float(v.mean())
    var = float(v.var())
    out = (v - mean) / np.sqrt(var + eps)
    return out, mean, var


def _layer_norm_rows(x: np.ndarray, eps: float):
    """Row-wise layer norm for a (batch, hidden) matrix.

    Returns (normalized, std) where std = sqrt(var + eps) per row is the
    divisor the backward pass and the sigma diagnostics need.
    """
    mean = x.mean(axis=1, keepdims=True)
    var = x.var(axis=1, keepdims=True)
    std = np.sqrt(var + eps)
    return (x - mean) / std, std[:, 0]


def batch_norm_forward(x: np.ndarray, state: BatchNormState, training: bool) -> np.ndarray:
    """Per-feature batch normalization over the leading axis of a 2-D input.

    Training mode normalizes with biased batch statistics, applies
    gamma/beta, and updates the running statistics (unbiased variance) with
    the state's momentum.  Eval mode normalizes with the running statistics.
    """
    out, _, _ = _batch_norm_forward(x, state, training)
    return out


def _batch_norm_forward(x: np.ndarray, state: BatchNormState, training: bool):
    """Shared implementation; also returns (xhat, std) for the backward pass."""
    x = as_matrix(x)
    if training:
        n = x.shape[0]
        if n < 2:
            raise ValueError("batch norm in training mode needs at least 2 rows")
        mean = x.mean(axis=0)
        var = x.var(axis=0)  # biased, used for normalization
        std = np.sqrt(var + state.eps)
        xhat = (x - mean) / std
        m = state.momentum
        state.running_mean[:] = (1.0 - m) * state.running_mean + m * mean
        state.running_var[:] = (1.0 - m) * state.running_var + m * var * n / (n - 1)
    else:
        mean = state.running_mean
        std = np.sqrt(state.running_var + state.eps)
        xhat = (x - mean) / std
    return state.gamma * xhat + state.beta, xhat, std


@dataclass
class ForwardTrace:
    """Per-timestep activations cached by cell_forward.

    All (T, batch, hidden) unless noted.  The layer-norm and batch-norm
    caches are None for variants that do not use them.  ``exploded_at`` is
    the first timestep at which a non-finite hidden state appeared; the
    arrays are valid for timesteps < ``valid_steps`` only.
    """

    cfg: VariantConfig
    h_init: np.ndarray            # (batch, hidden) state before t=0
    x: np.ndarray                 # (T, batch, input) raw inputs (for dW)
    proj_z: np.ndarray            # normalized feed-forward projections, update gate
    proj_h: np.ndarray            # normalized feed-forward projections, candidate
    update_preact: np.ndarray     # sigmoid input
    cand_preact: np.ndarray       # activation input
    z: np.ndarray
    h_cand: np.ndarray
    h: np.ndarray
    bn_z_xhat: Optional[np.ndarray] = None   # (T*batch, hidden)
    bn_h_xhat: Optional[np.ndarray] = None
    bn_z_std: Optional[np.ndarray] = None    # (hidden,)
    bn_h_std: Optional[np.ndarray] = None
    ln_z_xhat: Optional[np.ndarray] = None   # normalized recurrent term
    ln_h_xhat: Optional[np.ndarray] = None
    ln_z_std: Optional[np.ndarray] = None    # (T, batch) divisors
    ln_h_std: Optional[np.ndarray] = None
    training: bool = True
    exploded_at: Optional[int] = None
    valid_steps: int = 0

    @property
    def seq_len(self) -> int:
        return self.h.shape[0]

    def h_before(self, t: int) -> np.ndarray:
        """Hidden state entering step t (h_init for t=0)."""
        return self.h_init if t == 0 else self.h[t - 1]


def _project_inputs(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Per-step feed-forward products; the fused module batches these."""
    T = x.shape[0]
    out = np.empty((T, x.shape[1], w.shape[0]))
    for t in range(T):
        out[t] = x[t] @ w.T
    return out


def _normalize_projections(raw: np.ndarray, state: BatchNormState, cfg: VariantConfig,
                           training: bool):
    T, B, H = raw.shape
    if cfg.feedforward_norm == "none":
        return raw, None, None
    flat, xhat, std = _batch_norm_forward(raw.reshape(T * B, H), state, training)
    return flat.reshape(T, B, H), xhat, std


def cell_forward(params: CellParams, cfg: VariantConfig, x: np.ndarray,
                 h0: Optional[np.ndarray] = None, training: bool = True):
    """Run the recurrence over a (T, batch, input) sequence batch.

    Returns (h_all, trace) with h_all of shape (T, batch, hidden).  A
    non-finite hidden state does not raise: the trace comes back with
    ``exploded_at`` set to the offending timestep and the remaining steps
    unfilled, so a training loop can record the explosion as a result.
    """
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
    ln_eps = 1e-5

    with np.errstate(over="ignore", invalid="ignore"):
        raw_z = _project_inputs(x, params.Wz)
        raw_h = _project_inputs(x, params.Wh)
        proj_z, bn_z_xhat, bn_z_std = _normalize_projections(raw_z, params.bn_z, cfg, training)
        proj_h, bn_h_xhat, bn_h_std = _normalize_projections(raw_h, params.bn_h, cfg, training)

        shape = (T, B, H)
        trace = ForwardTrace(
            cfg=cfg,
            h_init=h0.copy(),
            x=x,
            proj_z=proj_z,
            proj_h=proj_h,
            update_preact=np.zeros(shape),
            cand_preact=np.zeros(shape),
            z=np.zeros(shape),
            h_cand=np.zeros(shape),
            h=np.zeros(shape),
            bn_z_xhat=bn_z_xhat,
            bn_h_xhat=bn_h_xhat,
            bn_z_std=bn_z_std,
            bn_h_std=bn_h_std,
            ln_z_xhat=np.zeros(shape) if use_ln else None,
            ln_h_xhat=np.zeros(shape) if use_ln else None,
            ln_z_std=np.ones((T, B)) if use_ln else None,
            ln_h_std=np.ones((T, B)) if use_ln else None,
            training=training,
        )

        h_prev = h0
        for t in range(T):
            rec_z = h_prev @ params.Uz.T
            rec_h = h_prev @ params.Uh.T
            if use_ln:
                rec_z, std_z = _layer_norm_rows(rec_z, ln_eps)
                rec_h, std_h = _layer_norm_rows(rec_h, ln_eps)
                trace.ln_z_xhat[t] = rec_z
                trace.ln_h_xhat[t] = rec_h
                trace.ln_z_std[t] = std_z
                trace.ln_h_std[t] = std_h
            a = proj_z[t] + rec_z
            z = sigmoid(a)
            b = proj_h[t] + rec_h
            if cfg.activation == "relu":
                c = np.maximum(b, 0.0)
            else:
                c = np.sin(b)
            h = z * h_prev + (1.0 - z) * c

            if not np.all(np.isfinite(h)):
                trace.exploded_at = t
                trace.valid_steps = t
                return trace.h, trace

            trace.update_preact[t] = a
            trace.cand_preact[t] = b
            trace.z[t] = z
            trace.h_cand[t] = c
            trace.h[t] = h
            h_prev = h

    trace.valid_steps = T
    return trace.h, trace


# ---------------------------------------------------------------------------
# Checkpoint container: a directory with manifest.txt (key=value lines) and
# one binary matrix file per named weight, in the linalg serialization format.
# ---------------------------------------------------------------------------

_CELL_WEIGHTS = ("Wz", "Wh", "Uz", "Uh")
_BN_FIELDS = ("gamma", "beta", "running_mean", "running_var")


def save_checkpoint(directory, params: CellParams, cfg: VariantConfig, seed: int,
                    extras: Optional[dict] = None) -> None:
    """Write params (+ optional extra named matrices) and a manifest."""
    os.makedirs(directory, exist_ok=True)
    names = []
    for name in _CELL_WEIGHTS:
        save_matrix(os.path.join(directory, f"{name}.mat"), getattr(params, name))
        names.append(name)
    for prefix, bn in (("bn_z", params.bn_z), ("bn_h", params.bn_h)):
        for fld in _BN_FIELDS:
            name = f"{prefix}_{fld}"
            save_matrix(os.path.join(directory, f"{name}.mat"),
                        getattr(bn, fld).reshape(1, -1))
            names.append(name)
    extras = extras or {}
    for name, mat in extras.items():
        save_matrix(os.path.join(directory, f"{name}.mat"), as_matrix(mat))
        names.append(name)

    lines = [
        "format_version=1",
        f"activation={cfg.activation}",
        f"recurrent_norm={cfg.recurrent_norm}",
        f"feedforward_norm={cfg.feedforward_norm}",
        f"hidden={params.hidden_size}",
        f"input={params.input_size}",
        f"seed={seed}",
        f"bn_momentum={params.bn_z.momentum!r}",
        f"bn_eps={params.bn_z.eps!r}",
        f"extras={','.join(sorted(extras))}",
        f"weights={','.join(names)}",
    ]
    with open(os.path.join(directory, "manifest.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_checkpoint(directory):
    """Inverse of save_checkpoint: returns (params, cfg, seed, extras)."""
    manifest = {}
    with open(os.path.join(directory, "manifest.txt")) as fh:
        for line in fh:
            line = line.strip()
            if line:
                key, _, value = line.partition("=")
                manifest[key] = value
    cfg = VariantConfig(
        activation=manifest["activation"],
        recurrent_norm=manifest["recurrent_norm"],
        feedforward_norm=manifest["feedforward_norm"],
    )

    def mat(name):
        return load_matrix(os.path.join(directory, f"{name}.mat"))

    def bn(prefix):
        return BatchNormState(
            gamma=mat(f"{prefix}_gamma").ravel(),
            beta=mat(f"{prefix}_beta").ravel(),
            running_mean=mat(f"{prefix}_running_mean").ravel(),
            running_var=mat(f"{prefix}_running_var").ravel(),
            momentum=float(manifest["bn_momentum"]),
            eps=float(manifest["bn_eps"]),
        )

    params = CellParams(Wz=mat("Wz"), Wh=mat("Wh"), Uz=mat("Uz"), Uh=mat("Uh"),
                        bn_z=bn("bn_z"), bn_h=bn("bn_h"))
    extras = {}
    if manifest.get("extras"):
        for name in manifest["extras"].split(","):
            if name:
                extras[name] = mat(name)
    return params, cfg, int(manifest["seed"]), extras
