"""Scratch: finite-difference check of bptt across all variants."""
import numpy as np

from ligru_lab.backprop import bptt
from ligru_lab.cells import CellParams, VariantConfig, cell_forward, init_cell_params
from ligru_lab.linalg import make_rng


def loss_and_grads(params, cfg, x, h0, C):
    h_all, trace = cell_forward(params, cfg, x, h0, training=True)
    assert trace.exploded_at is None
    loss = float(np.sum(C * h_all))
    grads = bptt(params, cfg, trace, C)
    return loss, grads


def forward_loss(params, cfg, x, h0, C):
    h_all, trace = cell_forward(params, cfg, x, h0, training=True)
    return float(np.sum(C * h_all))


def fd_check(cfg, T=5, B=2, D=3, H=4, seed=0, step=1e-5):
    rng = make_rng(seed)
    params = init_cell_params(D, H, rng)
    # make BN gamma/beta non-trivial so their gradients are exercised
    params.bn_z.gamma[:] = rng.uniform(0.5, 1.5, H)
    params.bn_z.beta[:] = rng.uniform(-0.3, 0.3, H)
    params.bn_h.gamma[:] = rng.uniform(0.5, 1.5, H)
    params.bn_h.beta[:] = rng.uniform(-0.3, 0.3, H)
    x = rng.standard_normal((T, B, D))
    h0 = rng.standard_normal((B, H)) * 0.1
    C = rng.standard_normal((T, B, H))

    _, grads = loss_and_grads(params, cfg, x, h0, C)
    analytic = {
        "Wz": grads.dWz, "Wh": grads.dWh, "Uz": grads.dUz, "Uh": grads.dUh,
        "bn_z.gamma": grads.d_bn_z_gamma, "bn_z.beta": grads.d_bn_z_beta,
        "bn_h.gamma": grads.d_bn_h_gamma, "bn_h.beta": grads.d_bn_h_beta,
    }
    arrays = {
        "Wz": params.Wz, "Wh": params.Wh, "Uz": params.Uz, "Uh": params.Uh,
        "bn_z.gamma": params.bn_z.gamma, "bn_z.beta": params.bn_z.beta,
        "bn_h.gamma": params.bn_h.gamma, "bn_h.beta": params.bn_h.beta,
    }
    worst = 0.0
    worst_name = None
    for name, arr in arrays.items():
        g = analytic[name]
        flat = arr.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            lp = forward_loss(params, cfg, x, h0, C)
            flat[i] = orig - step
            lm = forward_loss(params, cfg, x, h0, C)
            flat[i] = orig
            fd = (lp - lm) / (2 * step)
            a = g.ravel()[i]
            denom = max(abs(fd), abs(a), 1e-7 / 1e-4)
            rel = abs(fd - a) / denom
            if rel > worst:
                worst = rel
                worst_name = f"{name}[{i}] fd={fd:.8g} an={a:.8g}"
    return worst, worst_name


for act in ("relu", "sine"):
    for rnorm in ("none", "layer_norm"):
        for ffnorm in ("batch_norm", "none"):
            cfg = VariantConfig(act, rnorm, ffnorm)
            worst, name = fd_check(cfg)
            status = "OK " if worst < 1e-4 else "FAIL"
            print(f"{status} {act:5s}/{rnorm:10s}/{ffnorm:10s} worst rel err {worst:.3e}  ({name})")
