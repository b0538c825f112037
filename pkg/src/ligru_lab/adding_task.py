"""The adding problem: a synthetic long-sequence memory benchmark.

Each sequence has two channels.  Channel 0 carries uniform [0, 1] values at
every step; channel 1 is zero except for exactly two 1.0 markers, one in the
first half of the sequence and one in the second.  The target is the sum of
the channel-0 values at the two marked positions, so targets lie in [0, 2]
and a constant predictor bottoms out at the variance of a sum of two
independent uniforms, about 0.1667.

The readout is a bias-free linear map from the final hidden state, trained
jointly with the cell.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .linalg import Rng


@dataclass
class AddingBatch:
    inputs: np.ndarray            # (T, batch, 2)
    targets: np.ndarray           # (batch,)
    marker_positions: np.ndarray  # (batch, 2) int indices, first < T/2 <= second


def generate(T: int, batch: int, rng: Rng) -> AddingBatch:
    """Sample a fresh batch; deterministic for a given generator state.

    T must be even and >= 2 so the two marker ranges [0, T/2) and [T/2, T)
    are both non-empty.
    """
    if T < 2 or T % 2 != 0:
        raise ValueError("sequence length must be even and >= 2")
    if batch < 1:
        raise ValueError("batch must be >= 1")
    values = rng.random((T, batch))
    first = rng.integers(0, T // 2, size=batch)
    second = rng.integers(T // 2, T, size=batch)
    inputs = np.zeros((T, batch, 2))
    inputs[:, :, 0] = values
    cols = np.arange(batch)
    inputs[first, cols, 1] = 1.0
    inputs[second, cols, 1] = 1.0
    targets = values[first, cols] + values[second, cols]
    return AddingBatch(
        inputs=inputs,
        targets=targets,
        marker_positions=np.stack([first, second], axis=1),
    )


def readout_forward(h_last: np.ndarray, Wo: np.ndarray) -> np.ndarray:
    """Predictions y = Wo @ h for each batch row; Wo is (1, hidden), no bias."""
    if h_last.shape[1] != Wo.shape[1] or Wo.shape[0] != 1:
        raise ValueError(
            f"shape mismatch: h_last {h_last.shape} vs readout {Wo.shape}")
    return h_last @ Wo[0]


def readout_backward(h_last: np.ndarray, Wo: np.ndarray, d_pred: np.ndarray):
    """Gradients of the readout: returns (dWo, dh_last)."""
    dWo = (h_last * d_pred[:, None]).sum(axis=0)[None, :]
    dh_last = d_pred[:, None] * Wo[0][None, :]
    return dWo, dh_last


def mse(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean squared error."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError("prediction/target length mismatch")
    diff = pred - target
    return float(np.mean(diff * diff))


def mse_backward(pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    """d mse / d pred."""
    return 2.0 * (np.asarray(pred) - np.asarray(target)) / pred.shape[0]


def dump_batch_csv(batch: AddingBatch, path) -> None:
    """Inspection dump: one row per timestep, (channel0, channel1) column
    pair per sequence."""
    T, B, _ = batch.inputs.shape
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["t"]
        for i in range(B):
            header += [f"channel0_{i}", f"channel1_{i}"]
        writer.writerow(header)
        for t in range(T):
            row = [t]
            for i in range(B):
                row += [repr(float(batch.inputs[t, i, 0])),
                        repr(float(batch.inputs[t, i, 1]))]
            writer.writerow(row)
