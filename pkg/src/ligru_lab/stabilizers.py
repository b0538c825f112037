"""Training-time stabilizers: soft orthogonal regularization of the recurrent
weights, decoupled weight decay, and the gradient-clipping policy knob."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .cells import CellParams


@dataclass(frozen=True)
class StabilizerConfig:
    """Which interventions a run applies; all off by default."""

    sor_lambda: float = 0.0
    weight_decay: float = 0.0
    clip_threshold: Optional[float] = None

    def __post_init__(self):
        if self.sor_lambda < 0:
            raise ValueError("sor_lambda must be >= 0")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        if self.clip_threshold is not None and self.clip_threshold <= 0:
            raise ValueError("clip_threshold must be positive")


def sor_penalty(Uz: np.ndarray, Uh: np.ndarray, lam: float
                ) -> Tuple[float, np.ndarray, np.ndarray]:
    """Soft orthogonality penalty on the recurrent matrices.

    loss = lam * (||Uz'Uz - I||_F^2 + ||Uh'Uh - I||_F^2), with gradient
    4*lam*U(U'U - I) per matrix, to be added to the task gradients.
    """
    if Uz.shape[0] != Uz.shape[1] or Uh.shape[0] != Uh.shape[1]:
        raise ValueError("sor_penalty expects square recurrent matrices")
    loss = 0.0
    grads = []
    for u in (Uz, Uh):
        defect = u.T @ u - np.eye(u.shape[0])
        loss += float(np.sum(defect * defect))
        grads.append(4.0 * lam * (u @ defect))
    return lam * loss, grads[0], grads[1]


def apply_weight_decay(params: CellParams, wd: float, lr: float) -> CellParams:
    """Decoupled weight decay: shrink the projection and recurrent weights by
    (1 - lr*wd) in place.  Batch-norm gamma/beta are never decayed."""
    if wd < 0:
        raise ValueError("weight decay must be >= 0")
    factor = 1.0 - lr * wd
    for w in (params.Wz, params.Wh, params.Uz, params.Uh):
        w *= factor
    return params
