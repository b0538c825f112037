"""Manual backpropagation through time for every cell variant.

The backward pass is hand-derived reverse mode through the gate equations,
including the full statistics paths of batch norm (training mode) and of the
gain-free layer norm.  It is exact up to floating point, which the
finite-difference tests enforce, and it records the norm of the total loss
gradient with respect to every hidden state -- the quantity the stability
diagnostics compare against the analytic amplification bound.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterator, Optional, Tuple

import numpy as np

from .cells import CellParams, ForwardTrace, VariantConfig
from .linalg import l2_norm


@dataclass
class Gradients:
    """Gradients mirroring CellParams, plus per-step diagnostics.

    ``per_step_state_grads[t]`` is the Frobenius norm of dE/dh_t accumulated
    over the whole batch; ``d_h_init`` is dE/dh_{-1}.  ``extras`` carries
    gradients of parameters owned by the caller (e.g. a readout weight) so
    global-norm clipping can cover the entire model.
    """

    dWz: np.ndarray
    dWh: np.ndarray
    dUz: np.ndarray
    dUh: np.ndarray
    d_bn_z_gamma: np.ndarray
    d_bn_z_beta: np.ndarray
    d_bn_h_gamma: np.ndarray
    d_bn_h_beta: np.ndarray
    per_step_state_grads: np.ndarray
    d_h_init: np.ndarray
    extras: Dict[str, np.ndarray] = field(default_factory=dict)
    exploded_at: Optional[int] = None

    def named_parameter_grads(self) -> Iterator[Tuple[str, np.ndarray]]:
        """Parameter gradients only (diagnostic fields excluded)."""
        yield "Wz", self.dWz
        yield "Wh", self.dWh
        yield "Uz", self.dUz
        yield "Uh", self.dUh
        yield "bn_z.gamma", self.d_bn_z_gamma
        yield "bn_z.beta", self.d_bn_z_beta
        yield "bn_h.gamma", self.d_bn_h_gamma
        yield "bn_h.beta", self.d_bn_h_beta
        for name, g in self.extras.items():
            yield name, g

    def global_norm(self) -> float:
        sq = 0.0
        for _, g in self.named_parameter_grads():
            sq += float(np.sum(g * g))
        return float(np.sqrt(sq))


def _layer_norm_backward(d_out: np.ndarray, xhat: np.ndarray, std: np.ndarray) -> np.ndarray:
    """Backward through gain-free row-wise layer norm.

    d_out, xhat: (batch, hidden); std: (batch,) the sqrt(var+eps) divisor.
    """
    g_mean = d_out.mean(axis=1, keepdims=True)
    gx_mean = (d_out * xhat).mean(axis=1, keepdims=True)
    return (d_out - g_mean - xhat * gx_mean) / std[:, None]


def _batch_norm_backward(d_out: np.ndarray, xhat: np.ndarray, std: np.ndarray,
                         gamma: np.ndarray):
    """Backward through per-feature batch norm, training-mode statistics.

    d_out, xhat: (rows, hidden); std, gamma: (hidden,).  Differentiates
    through the batch mean and variance (full Jacobian, not the frozen-stats
    approximation).  Returns (d_input, d_gamma, d_beta).
    """
    d_gamma = (d_out * xhat).sum(axis=0)
    d_beta = d_out.sum(axis=0)
    d_xhat = d_out * gamma
    g_mean = d_xhat.mean(axis=0)
    gx_mean = (d_xhat * xhat).mean(axis=0)
    d_input = (d_xhat - g_mean - xhat * gx_mean) / std
    return d_input, d_gamma, d_beta


def bptt(params: CellParams, cfg: VariantConfig, trace: ForwardTrace,
         dLoss_dH: np.ndarray) -> Gradients:
    """Exact reverse-mode gradients of a scalar loss through the recurrence.

    ``dLoss_dH`` is the direct (external) gradient of the loss with respect
    to each hidden state, shape (T, batch, hidden); the recurrent
    contributions are accumulated here.  The trace must come from
    cell_forward under the same cfg and must not have exploded.

    A non-finite value appearing while walking backwards does not raise; the
    returned Gradients carries ``exploded_at`` with the offending timestep.
    """
    if cfg != trace.cfg:
        raise ValueError("trace was recorded under a different variant config")
    if trace.exploded_at is not None:
        raise ValueError("cannot backpropagate through an exploded trace")
    dLoss_dH = np.asarray(dLoss_dH, dtype=np.float64)
    if dLoss_dH.shape != trace.h.shape:
        raise ValueError(f"dLoss_dH must have shape {trace.h.shape}, got {dLoss_dH.shape}")

    T, B, H = trace.h.shape
    use_ln = cfg.recurrent_norm == "layer_norm"
    use_bn = cfg.feedforward_norm == "batch_norm"

    grads = Gradients(
        dWz=np.zeros_like(params.Wz),
        dWh=np.zeros_like(params.Wh),
        dUz=np.zeros_like(params.Uz),
        dUh=np.zeros_like(params.Uh),
        d_bn_z_gamma=np.zeros_like(params.bn_z.gamma),
        d_bn_z_beta=np.zeros_like(params.bn_z.beta),
        d_bn_h_gamma=np.zeros_like(params.bn_h.gamma),
        d_bn_h_beta=np.zeros_like(params.bn_h.beta),
        per_step_state_grads=np.zeros(T),
        d_h_init=np.zeros((B, H)),
    )

    d_proj_z = np.zeros((T, B, H))
    d_proj_h = np.zeros((T, B, H))
    carry = np.zeros((B, H))

    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(T - 1, -1, -1):
            delta = dLoss_dH[t] + carry
            if not np.all(np.isfinite(delta)):
                grads.exploded_at = t
                return grads
            grads.per_step_state_grads[t] = np.sqrt(np.sum(delta * delta))

            h_prev = trace.h_before(t)
            z = trace.z[t]
            c = trace.h_cand[t]

            d_c = delta * (1.0 - z)
            d_z = delta * (h_prev - c)
            carry = delta * z  # immediate path

            if cfg.activation == "relu":
                d_b = d_c * (trace.cand_preact[t] > 0.0)
            else:
                d_b = d_c * np.cos(trace.cand_preact[t])
            d_a = d_z * z * (1.0 - z)

            d_proj_z[t] = d_a
            d_proj_h[t] = d_b

            if use_ln:
                d_rec_z = _layer_norm_backward(d_a, trace.ln_z_xhat[t], trace.ln_z_std[t])
                d_rec_h = _layer_norm_backward(d_b, trace.ln_h_xhat[t], trace.ln_h_std[t])
            else:
                d_rec_z = d_a
                d_rec_h = d_b

            grads.dUz += d_rec_z.T @ h_prev
            grads.dUh += d_rec_h.T @ h_prev
            carry = carry + d_rec_z @ params.Uz + d_rec_h @ params.Uh

        grads.d_h_init = carry

        # Feed-forward path: through batch norm statistics if enabled, then
        # into the projection weights over the flattened (time x batch) axis.
        x_flat = trace.x.reshape(T * B, -1)
        for d_proj, xhat, std, bn, dW, (dg, db) in (
            (d_proj_z, trace.bn_z_xhat, trace.bn_z_std, params.bn_z, grads.dWz,
             (grads.d_bn_z_gamma, grads.d_bn_z_beta)),
            (d_proj_h, trace.bn_h_xhat, trace.bn_h_std, params.bn_h, grads.dWh,
             (grads.d_bn_h_gamma, grads.d_bn_h_beta)),
        ):
            d_flat = d_proj.reshape(T * B, H)
            if use_bn:
                if trace.training:
                    d_raw, d_gamma, d_beta = _batch_norm_backward(d_flat, xhat, std, bn.gamma)
                else:
                    # eval mode: running stats are constants
                    d_raw = d_flat * (bn.gamma / std)
                    d_gamma = (d_flat * xhat).sum(axis=0)
                    d_beta = d_flat.sum(axis=0)
                dg += d_gamma
                db += d_beta
            else:
                d_raw = d_flat
            dW += d_raw.T @ x_flat

        if grads.exploded_at is None:
            for _, arr in grads.named_parameter_grads():
                if not np.all(np.isfinite(arr)):
                    grads.exploded_at = 0
                    break
    return grads


def clip_global_norm(g: Gradients, threshold: float) -> Tuple[Gradients, float]:
    """Rescale all parameter gradients so the global L2 norm is <= threshold.

    Returns (g, scale).  scale is 1.0 when no rescaling happened and NaN when
    the norm itself is non-finite (an explosion signal; gradients are then
    left untouched for the caller to record).
    """
    if threshold <= 0:
        raise ValueError("clip threshold must be positive")
    norm = g.global_norm()
    if not np.isfinite(norm):
        return g, float("nan")
    if norm <= threshold:
        return g, 1.0
    scale = threshold / norm
    for _, arr in g.named_parameter_grads():
        arr *= scale
    return g, scale
