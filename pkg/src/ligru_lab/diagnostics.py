"""Per-epoch stability diagnostics.

The central quantity is eta, an analytic upper bound on how much the norm of
the loss gradient can grow per backward step through the recurrence.  Runs
stay healthy while eta is close to 1; values persistently above 1 compound
geometrically with sequence length and predict gradient explosion.  Each cell
variant has its own formula:

    standard:    eta = gamma1/4 * ||Uz||_2 + ||Uh||_2
    sine:        eta = gamma1/4 * ||Uz||_2 + cos(||Uh||_2)
    layer norm:  eta = gamma1/(4*sigma_z) * ||Uz||_2 + ||Uh||_2 / sigma_h

gamma1 is the largest absolute hidden-state activation seen in the trace; the
sigmas are the standard deviations of the recurrent pre-activations (the
divisors layer norm applies), averaged over batch and time for reporting.
The sine formula takes the cosine of the spectral norm as printed in its
derivation, oddity included; see the repo notes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Tuple

import numpy as np

from .cells import ForwardTrace, VariantConfig

# Loss values above this count as a runaway run even while still finite.
LOSS_EXPLOSION_THRESHOLD = 1e6

# Denominators below this are treated as dead gradient signal, not ratios.
RATIO_FLOOR = 1e-30


@dataclass
class StabilityReport:
    """One epoch's stability snapshot, the row behind the metrics CSV."""

    epoch: int
    eta: float
    gamma1: float
    norm_Uz: float
    norm_Uh: float
    mse: float
    max_adjacent_grad_ratio: float
    sigma_z: Optional[float] = None
    sigma_h: Optional[float] = None
    exploded_at: Optional[Tuple[int, Optional[int]]] = None
    variant: VariantConfig = VariantConfig()

    def recompute_eta(self) -> float:
        """Re-derive eta from the stored fields; must match self.eta."""
        return eta_for_variant(self.variant, self.gamma1, self.norm_Uz,
                               self.norm_Uh, self.sigma_z, self.sigma_h)


def gamma1(trace: ForwardTrace) -> float:
    """Largest |h| over every timestep (including the initial state), batch
    element, and hidden unit of the trace."""
    best = float(np.max(np.abs(trace.h_init))) if trace.h_init.size else 0.0
    if trace.valid_steps > 0:
        best = max(best, float(np.max(np.abs(trace.h[: trace.valid_steps]))))
    return best


def eta_standard(gamma1: float, norm_Uz: float, norm_Uh: float) -> float:
    """Gradient amplification bound for the ReLU cell."""
    return gamma1 / 4.0 * norm_Uz + norm_Uh


def eta_sine(gamma1: float, norm_Uz: float, norm_Uh: float) -> float:
    """Bound for the sine-candidate cell, formula taken verbatim (cosine of
    the spectral norm)."""
    return gamma1 / 4.0 * norm_Uz + math.cos(norm_Uh)


def eta_layernorm(gamma1: float, norm_Uz: float, norm_Uh: float,
                  sigma_z: float, sigma_h: float) -> float:
    """Bound for the layer-normalized cell; the sigmas rescale both terms."""
    if sigma_z <= 0 or sigma_h <= 0:
        raise ValueError("sigma_z and sigma_h must be positive")
    return gamma1 / (4.0 * sigma_z) * norm_Uz + norm_Uh / sigma_h


def eta_for_variant(cfg: VariantConfig, gamma1: float, norm_Uz: float,
                    norm_Uh: float, sigma_z: Optional[float] = None,
                    sigma_h: Optional[float] = None) -> float:
    if cfg.recurrent_norm == "layer_norm":
        if sigma_z is None or sigma_h is None:
            raise ValueError("layer-norm eta needs sigma_z and sigma_h")
        return eta_layernorm(gamma1, norm_Uz, norm_Uh, sigma_z, sigma_h)
    if cfg.activation == "sine":
        return eta_sine(gamma1, norm_Uz, norm_Uh)
    return eta_standard(gamma1, norm_Uz, norm_Uh)


def trace_sigmas(trace: ForwardTrace) -> Tuple[Optional[float], Optional[float]]:
    """Average layer-norm divisor (std of the recurrent pre-activation per
    sample) over batch and valid timesteps; (None, None) without layer norm."""
    if trace.ln_z_std is None:
        return None, None
    n = trace.valid_steps
    if n == 0:
        return None, None
    return (float(trace.ln_z_std[:n].mean()), float(trace.ln_h_std[:n].mean()))


def empirical_ratios(per_step_state_grads: np.ndarray) -> float:
    """Largest adjacent backward amplification ratio g[m-1]/g[m].

    Entries whose denominator is below RATIO_FLOOR are skipped (the gradient
    signal there is numerically dead).  Returns 0.0 if nothing measurable.
    """
    g = np.asarray(per_step_state_grads, dtype=np.float64)
    if g.ndim != 1 or g.shape[0] < 2:
        raise ValueError("need at least two per-step gradient norms")
    if np.any(g < 0):
        raise ValueError("gradient norms must be non-negative")
    best = 0.0
    for m in range(1, g.shape[0]):
        if g[m] < RATIO_FLOOR:
            continue
        best = max(best, g[m - 1] / g[m])
    return best


def detect_explosion(value_stream: Iterable) -> Optional[Tuple[int, Optional[int]]]:
    """Scan (epoch, timestep, kind, value) records for the first explosion.

    kind is one of "hidden", "grad", "loss"; value is a scalar or array.
    Non-finite values always fire; a "loss" record also fires above
    LOSS_EXPLOSION_THRESHOLD.  Returns (epoch, timestep) of the first event,
    else None.  timestep may be None for whole-epoch scalars.
    """
    for epoch, timestep, kind, value in value_stream:
        arr = np.asarray(value, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            return epoch, timestep
        if kind == "loss" and float(np.max(arr)) > LOSS_EXPLOSION_THRESHOLD:
            return epoch, timestep
    return None
