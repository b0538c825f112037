"""Minimal dense linear algebra used by the recurrent cells and diagnostics.

Matrices are plain 2-D float64 numpy arrays in row-major (C) order; that
layout is normative for the on-disk format produced by :func:`save_matrix`.
All randomness flows through :func:`make_rng`, a seeded PCG64 generator, so
every consumer is bit-reproducible from a single integer seed.
"""

from __future__ import annotations

import struct
from typing import NamedTuple, Optional

import numpy as np

Rng = np.random.Generator

# Fixed seed for the default power-iteration start vector, so repeated calls
# on the same matrix return identical results without threading an Rng through
# every diagnostic call site.
_POWER_ITER_SEED = 0x9E3779B97F4A7C15


def make_rng(seed: int) -> Rng:
    """Deterministic random generator (PCG64) for the given seed.

    PCG64 streams are stable across platforms and numpy releases for a fixed
    seed, which is what makes metrics files byte-reproducible.
    """
    return np.random.Generator(np.random.PCG64(seed))


def as_matrix(a) -> np.ndarray:
    """Coerce to a 2-D, C-contiguous float64 array."""
    m = np.ascontiguousarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {m.shape}")
    return m


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product with an explicit shape check.

    Internally a single BLAS call; the reduction order for each output
    element is fixed, so results do not depend on thread count.
    """
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ValueError(
            f"matmul dimension mismatch: ({a.shape[0]}x{a.shape[1]}) @ "
            f"({b.shape[0]}x{b.shape[1]})"
        )
    return a @ b


def l2_norm(v: np.ndarray) -> float:
    """Euclidean norm; defined as 0.0 for an empty vector."""
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0:
        return 0.0
    return float(np.linalg.norm(v.ravel()))


class SpectralNorm(NamedTuple):
    value: float
    converged: bool
    iterations: int
    vector: np.ndarray  # final right-singular-vector estimate, unit norm


def spectral_norm(
    m: np.ndarray,
    tol: float = 1e-6,
    max_iter: int = 100,
    start: Optional[np.ndarray] = None,
) -> SpectralNorm:
    """Largest singular value of ``m`` by power iteration on ``m.T @ m``.

    Converged when the relative change of the estimate between iterations
    drops below ``tol``; otherwise the best estimate is returned with
    ``converged=False``.  ``start`` warm-starts the iteration (the returned
    ``vector`` of a previous call); by default the start vector comes from a
    fixed internal seed so the result is deterministic.

    A zero matrix returns value 0.0 with ``converged=True``.
    """
    m = as_matrix(m)
    if tol <= 0:
        raise ValueError("tol must be positive")
    rng = make_rng(_POWER_ITER_SEED)
    if start is not None:
        v = np.asarray(start, dtype=np.float64).ravel().copy()
        if v.shape[0] != m.shape[1] or not np.all(np.isfinite(v)) or l2_norm(v) == 0.0:
            v = rng.standard_normal(m.shape[1])
    else:
        v = rng.standard_normal(m.shape[1])
    v /= l2_norm(v)

    if not np.any(m):
        return SpectralNorm(0.0, True, 0, v)

    est = 0.0
    for it in range(1, max_iter + 1):
        w = m @ v
        new_est = l2_norm(w)
        u = m.T @ w
        un = l2_norm(u)
        if un == 0.0:
            # v landed in the null space of m; restart from a fresh direction.
            v = rng.standard_normal(m.shape[1])
            v /= l2_norm(v)
            est = new_est
            continue
        v = u / un
        if est > 0.0 and abs(new_est - est) <= tol * new_est:
            return SpectralNorm(new_est, True, it, v)
        est = new_est
    return SpectralNorm(est, False, max_iter, v)


def orthogonal_init(rows: int, cols: int, rng: Rng) -> np.ndarray:
    """Random matrix with orthonormal rows or columns (whichever is fewer).

    A standard-Gaussian matrix is orthonormalized by QR decomposition, with
    the sign of each factor fixed from diag(R) so the result is a unique,
    seed-reproducible draw.  For square shapes the output U satisfies
    ``max|U.T @ U - I| <= 1e-10``.
    """
    if rows <= 0 or cols <= 0:
        raise ValueError("orthogonal_init requires positive dimensions")
    transpose = rows < cols
    n, k = (cols, rows) if transpose else (rows, cols)
    g = rng.standard_normal((n, k))
    q, r = np.linalg.qr(g)
    q = q * np.sign(np.diag(r))
    return np.ascontiguousarray(q.T if transpose else q)


# On-disk matrix container: rows and cols as little-endian uint64, followed by
# rows*cols little-endian float64 values in row-major order.
_HEADER = struct.Struct("<QQ")


def save_matrix(path, m: np.ndarray) -> None:
    """Write one matrix in the flat binary container format."""
    m = as_matrix(m)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(m.shape[0], m.shape[1]))
        fh.write(m.astype("<f8", copy=False).tobytes(order="C"))


def load_matrix(path) -> np.ndarray:
    """Read a matrix written by :func:`save_matrix`."""
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) != _HEADER.size:
            raise ValueError(f"{path}: truncated matrix header")
        rows, cols = _HEADER.unpack(head)
        body = fh.read()
    expected = rows * cols * 8
    if len(body) != expected:
        raise ValueError(
            f"{path}: expected {expected} payload bytes for {rows}x{cols}, got {len(body)}"
        )
    data = np.frombuffer(body, dtype="<f8").astype(np.float64)
    return np.ascontiguousarray(data.reshape(rows, cols))
