"""Scratch: fused equivalence + explosion pathway sanity."""
import numpy as np

from ligru_lab.cells import VariantConfig, cell_forward, init_cell_params
from ligru_lab.fused import fused_forward, alloc_calls
from ligru_lab.linalg import make_rng
from ligru_lab.runner import ExperimentConfig, MATRIX_VARIANTS, run_experiment
import copy

# equivalence over a few shapes/variants
worst = 0.0
for seed in range(6):
    rng = make_rng(seed)
    T = int(rng.integers(2, 40))
    B = int(rng.integers(2, 9))
    D = int(rng.integers(1, 12))
    H = int(rng.integers(2, 24))
    cfg = VariantConfig(
        ("relu", "sine")[seed % 2],
        ("none", "layer_norm")[(seed // 2) % 2],
        ("batch_norm", "none")[(seed // 3) % 2],
    )
    params = init_cell_params(D, H, rng)
    x = rng.standard_normal((T, B, D))
    p1, p2 = copy.deepcopy(params), copy.deepcopy(params)
    h1, t1 = cell_forward(p1, cfg, x, training=True)
    h2, t2 = fused_forward(p2, cfg, x, training=True)
    dev = float(np.max(np.abs(h1 - h2)))
    rs = float(np.max(np.abs(p1.bn_z.running_var - p2.bn_z.running_var)))
    worst = max(worst, dev, rs)
    print(f"seed {seed} T={T} B={B} D={D} H={H} {cfg.activation}/{cfg.recurrent_norm}/"
          f"{cfg.feedforward_norm}: max|dh|={dev:.3e} max|drun|={rs:.3e}")
print("worst deviation:", worst)

# alloc counter: call count independent of T
rng = make_rng(0)
params = init_cell_params(8, 8, rng)
for T in (8, 64, 512):
    x = make_rng(1).standard_normal((T, 4, 8))
    before = alloc_calls()
    fused_forward(params, VariantConfig("relu", "layer_norm", "batch_norm"), x)
    print(f"T={T}: alloc calls = {alloc_calls() - before}")

# explosion config for runner tests
cfg = ExperimentConfig(
    variant=MATRIX_VARIANTS["standard"][0],
    stabilizers=MATRIX_VARIANTS["standard"][1],
    T=500, hidden=32, batch=4, epochs=60, lr=0.05, seed=3,
    metrics_path="/tmp/explode.csv")
report = run_experiment(cfg)
print("explosion config:", report.exploded_at, "epoch", report.epoch)
with open("/tmp/explode.csv") as fh:
    lines = fh.read().strip().split("\n")
print("rows:", len(lines) - 1, "| last:", lines[-1])
