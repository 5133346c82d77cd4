"""Dense vector arithmetic shared by every aggregation rule.

Model parameters and gradients travel through the toolkit as flat
float64 arrays of fixed length p ("model vectors").  The two operations
here are the normalization primitive that drives the normalized-gradient
aggregator and the weighted sum used by every averaging rule.

Conventions:
  * all arithmetic is 64-bit; inputs are validated to be finite,
  * a vector whose Euclidean norm falls below ``eps`` normalizes to the
    all-zero vector instead of blowing up (the caller logs the event and
    the client simply contributes nothing that round),
  * weighted sums accumulate in client-index order so repeated runs are
    bit-identical.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

#: Norm threshold below which a vector is treated as a zero gradient.
DEFAULT_EPS = 1e-12


def as_model_vector(v: Sequence[float] | np.ndarray) -> np.ndarray:
    """Coerce ``v`` to a contiguous float64 1-D array without copying when possible."""
    arr = np.ascontiguousarray(v, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"model vector must be 1-D, got shape {arr.shape}")
    return arr


def check_finite(v: np.ndarray, name: str = "vector") -> None:
    """Raise ValueError identifying the first non-finite entry of ``v``, if any."""
    if np.all(np.isfinite(v)):
        return
    bad = int(np.flatnonzero(~np.isfinite(v))[0])
    raise ValueError(f"{name} has non-finite entry at index {bad}: {v[bad]!r}")


def normalize(v: Sequence[float] | np.ndarray, eps: float = DEFAULT_EPS) -> np.ndarray:
    """Return ``v`` scaled to unit Euclidean norm, or the zero vector if ``v`` is degenerate.

    Args:
        v: finite model vector.
        eps: positive threshold; a norm below it yields the all-zero
            vector of the same length (zero-gradient convention).

    Returns:
        A new float64 array with norm 1 (within float rounding) or 0.
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    arr = as_model_vector(v)
    check_finite(arr)
    nrm = float(np.linalg.norm(arr))
    if nrm < eps:
        return np.zeros_like(arr)
    return arr / nrm


def weighted_sum(
    vectors: Sequence[np.ndarray], weights: Sequence[float]
) -> np.ndarray:
    """Component-wise ``sum_m weights[m] * vectors[m]``.

    Accumulates in index order (m = 0, 1, ...) so the result is
    reproducible bit-for-bit across runs.

    Args:
        vectors: non-empty sequence of equal-length model vectors.
        weights: one float per vector.

    Returns:
        The weighted sum as a new float64 array.
    """
    if len(vectors) != len(weights):
        raise ValueError(
            f"got {len(vectors)} vectors but {len(weights)} weights"
        )
    if len(vectors) == 0:
        raise ValueError("weighted_sum needs at least one vector")
    first = as_model_vector(vectors[0])
    out = np.zeros_like(first)
    for m, (vec, wgt) in enumerate(zip(vectors, weights)):
        arr = as_model_vector(vec)
        if arr.shape != first.shape:
            raise ValueError(
                f"vector {m} has length {arr.shape[0]}, expected {first.shape[0]}"
            )
        out += float(wgt) * arr
    return out
