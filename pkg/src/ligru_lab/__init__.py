"""Stability laboratory for light gated recurrent units.

Implements the cell family (standard, layer-normalized, sine-candidate),
exact manual backpropagation through time, the per-step gradient
amplification bound eta and its empirical counterpart, the training-time
stabilizers, and the adding-task experiment harness.
"""

from .adding_task import AddingBatch, generate, mse, readout_forward
from .backprop import Gradients, bptt, clip_global_norm
from .cells import (BatchNormState, CellParams, ForwardTrace, LAYER_NORMED,
                    SINE, STANDARD, VariantConfig, batch_norm_forward,
                    cell_forward, init_cell_params, layer_norm,
                    load_checkpoint, save_checkpoint, sigmoid)
from .diagnostics import (StabilityReport, detect_explosion, empirical_ratios,
                          eta_layernorm, eta_sine, eta_standard, gamma1)
from .fused import benchmark, fused_forward
from .linalg import (l2_norm, load_matrix, make_rng, matmul, orthogonal_init,
                     save_matrix, spectral_norm)
from .optimizer import AdamState, adam_step, init_adam
from .runner import (ExperimentConfig, MATRIX_VARIANTS, PRESETS, preset_config,
                     run_experiment, run_matrix)
from .stabilizers import StabilizerConfig, apply_weight_decay, sor_penalty

__version__ = "0.1.0"
