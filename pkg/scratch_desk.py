"""Scratch: desk-scale SLi-GRU training trajectory + timing."""
import sys
import time

from ligru_lab.runner import ExperimentConfig, preset_config, run_experiment
from ligru_lab.cells import VariantConfig
from ligru_lab.stabilizers import StabilizerConfig

epochs = int(sys.argv[1]) if len(sys.argv) > 1 else 60
cfg = preset_config("desk", epochs=epochs, seed=1,
                    metrics_path="/tmp/desk_ln.csv")
start = time.perf_counter()
report = run_experiment(cfg)
elapsed = time.perf_counter() - start
print(f"desk layer_norm: {epochs} epochs in {elapsed:.1f}s "
      f"({elapsed/max(epochs,1):.2f}s/epoch)")
print(f"final mse={report.mse:.4f} eta={report.eta:.3f} gamma1={report.gamma1:.3f} "
      f"sigma_z={report.sigma_z} sigma_h={report.sigma_h}")
with open("/tmp/desk_ln.csv") as fh:
    lines = fh.read().strip().split("\n")
print("first rows:")
for line in lines[:6]:
    print(" ", line)
print("last rows:")
for line in lines[-5:]:
    print(" ", line)
