"""Adam with bias correction and optional decoupled weight decay.

Parameters live in a flat name -> array dict; the moment buffers mirror it.
Weight decay, when configured, multiplies the selected weights by
(1 - lr*wd) at update time, outside the gradient path.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, FrozenSet

import numpy as np


@dataclass
class AdamState:
    m: Dict[str, np.ndarray]
    v: Dict[str, np.ndarray]
    step: int
    lr: float
    beta1: float
    beta2: float
    eps: float
    weight_decay: float = 0.0
    decay_params: FrozenSet[str] = field(default_factory=frozenset)


def init_adam(params: Dict[str, np.ndarray], lr: float = 1e-3, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8, weight_decay: float = 0.0,
              decay_params=()) -> AdamState:
    if not (0.0 <= beta1 < 1.0 and 0.0 <= beta2 < 1.0):
        raise ValueError("betas must lie in [0, 1)")
    if lr < 0 or eps <= 0 or weight_decay < 0:
        raise ValueError("invalid optimizer hyperparameters")
    return AdamState(
        m={k: np.zeros_like(p) for k, p in params.items()},
        v={k: np.zeros_like(p) for k, p in params.items()},
        step=0,
        lr=lr,
        beta1=beta1,
        beta2=beta2,
        eps=eps,
        weight_decay=weight_decay,
        decay_params=frozenset(decay_params),
    )


def adam_step(params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray],
              state: AdamState):
    """One bias-corrected Adam update, in place on the parameter arrays.

    Decay (if any) is applied to the configured parameters before the Adam
    delta is subtracted, so N decay-only steps compose to (1 - lr*wd)^N.
    Returns (params, state) for convenience.
    """
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for name, p in params.items():
        g = grads[name]
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        if state.weight_decay > 0.0 and name in state.decay_params:
            p *= 1.0 - state.lr * state.weight_decay
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params, state
