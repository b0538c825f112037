"""Scratch: criterion-5 scale measurements (T=2000, hidden=256)."""
import sys
import time

from dataclasses import replace

from ligru_lab.runner import ExperimentConfig, MATRIX_VARIANTS, run_experiment

which = sys.argv[1] if len(sys.argv) > 1 else "standard"
epochs = int(sys.argv[2]) if len(sys.argv) > 2 else 5
batch = int(sys.argv[3]) if len(sys.argv) > 3 else 4
seed = int(sys.argv[4]) if len(sys.argv) > 4 else 1

variant, stab = MATRIX_VARIANTS[which]
cfg = ExperimentConfig(variant=variant, stabilizers=stab, T=2000, hidden=256,
                       batch=batch, epochs=epochs, lr=1e-3, seed=seed,
                       metrics_path=f"/tmp/c5_{which}_{seed}.csv")
start = time.perf_counter()
report = run_experiment(cfg)
elapsed = time.perf_counter() - start
print(f"{which} seed={seed} batch={batch}: {report.epoch+1} epochs in {elapsed:.1f}s "
      f"({elapsed/(report.epoch+1):.2f}s/epoch)")
print(f"exploded_at={report.exploded_at} mse={report.mse:.5g} eta={report.eta:.4g} "
      f"gamma1={report.gamma1:.4g} ratio={report.max_adjacent_grad_ratio:.4g}")
with open(cfg.metrics_path) as fh:
    for line in fh.read().strip().split("\n"):
        print(" ", line)
