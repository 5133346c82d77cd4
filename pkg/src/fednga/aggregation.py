"""Server-side aggregation rules.

Six rules over one round's uploaded vectors:

  * ``fed_nga``        — weighted average of unit-normalized uploads; the
                         output norm never exceeds 1, which is what makes
                         the rule robust to arbitrarily scaled uploads.
  * ``fedavg``         — plain weighted average, no normalization.
  * ``coordinate_median`` — per-coordinate unweighted median.
  * ``trimmed_mean``   — per-coordinate unweighted mean after dropping the
                         k smallest and k largest values.
  * ``krum``           — selects the single upload with the smallest sum of
                         squared distances to its nearest peers.
  * ``geometric_median`` — smoothed Weiszfeld iteration for the weighted
                         geometric median.

The median, trimmed mean, and Krum deliberately ignore the client weights
(the methods they reproduce are defined on unweighted vector sets); the
other three rules are weight-aware.  All rules are pure functions and safe
to call concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .vecmath import DEFAULT_EPS, check_finite

#: Valid aggregator tags, in the order they are reported.
AGGREGATOR_TAGS = (
    "fed_nga",
    "fedavg",
    "coord_median",
    "trimmed_mean",
    "krum",
    "geom_median",
)

#: Weiszfeld defaults shared by the config layer.
GM_TOL = 1e-10
GM_MAX_ITER = 100
GM_SMOOTHING = 1e-8

#: Tolerance on the weight-sum precondition.
WEIGHT_SUM_TOL = 1e-9


@dataclass(frozen=True)
class AggregatorKind:
    """An aggregation rule plus its rule-specific parameters.

    Exactly the parameters a rule needs must be set: ``trim_k`` for
    trimmed_mean (per-tail trim count, 2k < M), ``krum_b`` for krum
    (assumed Byzantine count, M - b - 2 >= 1), and the Weiszfeld knobs
    for geom_median.
    """

    tag: str
    trim_k: Optional[int] = None
    krum_b: Optional[int] = None
    gm_tol: float = GM_TOL
    gm_max_iter: int = GM_MAX_ITER
    gm_smoothing: float = GM_SMOOTHING

    def __post_init__(self) -> None:
        if self.tag not in AGGREGATOR_TAGS:
            raise ValueError(
                f"unknown aggregator {self.tag!r}; expected one of {AGGREGATOR_TAGS}"
            )
        if self.tag == "trimmed_mean" and self.trim_k is None:
            raise ValueError("trimmed_mean requires trim_k")
        if self.tag != "trimmed_mean" and self.trim_k is not None:
            raise ValueError(f"trim_k is only valid for trimmed_mean, not {self.tag}")
        if self.tag != "krum" and self.krum_b is not None:
            raise ValueError(f"krum_b is only valid for krum, not {self.tag}")
        if self.gm_tol <= 0 or self.gm_max_iter < 1 or self.gm_smoothing <= 0:
            raise ValueError("geom_median parameters must be positive (max_iter >= 1)")


@dataclass
class GeomMedianResult:
    """Weiszfeld output: final iterate plus convergence bookkeeping."""

    point: np.ndarray
    iterations: int
    converged: bool
    objective: float = field(default=float("nan"))


def _stack_uploads(uploads: Sequence[np.ndarray] | np.ndarray) -> np.ndarray:
    """Stack uploads into an (M, p) float64 matrix, validating shape and finiteness."""
    mat = np.asarray(uploads, dtype=np.float64)
    if mat.ndim == 1:
        mat = mat.reshape(1, -1) if mat.size else mat.reshape(0, 0)
    if mat.ndim != 2 or mat.shape[0] == 0:
        raise ValueError(
            f"expected a non-empty sequence of equal-length vectors, got shape {mat.shape}"
        )
    if not np.isfinite(mat).all():
        for m in range(mat.shape[0]):
            check_finite(mat[m], name=f"upload {m}")
    return mat


def _check_weights(weights: Sequence[float], num_uploads: int) -> np.ndarray:
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (num_uploads,):
        raise ValueError(f"expected {num_uploads} weights, got shape {w.shape}")
    if np.any(w <= 0.0) or np.any(w > 1.0):
        raise ValueError("weights must lie in (0, 1]")
    total = float(np.sum(w))
    if abs(total - 1.0) > WEIGHT_SUM_TOL:
        raise ValueError(f"weights must sum to 1 within {WEIGHT_SUM_TOL}, got {total!r}")
    return w


def fed_nga(
    uploads: Sequence[np.ndarray] | np.ndarray,
    weights: Sequence[float],
    eps: float = DEFAULT_EPS,
) -> np.ndarray:
    """Weighted average of unit-normalized uploads.

    Each upload is scaled to unit Euclidean norm before averaging, so the
    result depends only on upload directions; uploads with norm below
    ``eps`` contribute nothing (zero-gradient convention).  The output
    norm is at most 1 for any inputs.

    Args:
        uploads: M equal-length vectors.
        weights: M floats in (0, 1] summing to 1.
        eps: degenerate-norm threshold.

    Returns:
        The aggregated vector, accumulated in client-index order.
    """
    mat = _stack_uploads(uploads)
    w = _check_weights(weights, mat.shape[0])
    norms = np.sqrt(np.einsum("mp,mp->m", mat, mat))
    scale = np.where(norms >= eps, w / np.where(norms >= eps, norms, 1.0), 0.0)
    out = np.zeros(mat.shape[1], dtype=np.float64)
    for m in range(mat.shape[0]):
        if scale[m] != 0.0:
            out += scale[m] * mat[m]
    return out


def fedavg(
    uploads: Sequence[np.ndarray] | np.ndarray, weights: Sequence[float]
) -> np.ndarray:
    """Plain weighted average of the uploads (no normalization)."""
    mat = _stack_uploads(uploads)
    w = _check_weights(weights, mat.shape[0])
    out = np.zeros(mat.shape[1], dtype=np.float64)
    for m in range(mat.shape[0]):
        out += w[m] * mat[m]
    return out


def coordinate_median(uploads: Sequence[np.ndarray] | np.ndarray) -> np.ndarray:
    """Per-coordinate unweighted median; an even count averages the two middle values."""
    mat = _stack_uploads(uploads)
    return np.median(mat, axis=0)


def trimmed_mean(uploads: Sequence[np.ndarray] | np.ndarray, k: int) -> np.ndarray:
    """Per-coordinate mean after dropping the k smallest and k largest values.

    Requires 2k < M so at least one value survives per coordinate.
    """
    mat = _stack_uploads(uploads)
    m_count = mat.shape[0]
    if k < 0:
        raise ValueError(f"trim count must be non-negative, got {k}")
    if 2 * k >= m_count:
        raise ValueError(f"trim count {k} too large for {m_count} uploads (need 2k < M)")
    # sort even when k == 0 and accumulate rows explicitly: the output bits
    # must not depend on upload order or on the matrix memory layout
    # (np.mean picks sequential or blocked summation by array shape)
    kept = np.sort(mat, axis=0)[k : m_count - k]
    total = np.zeros(mat.shape[1])
    for row in kept:
        total += row
    return total / kept.shape[0]


def krum_scores(
    uploads: Sequence[np.ndarray] | np.ndarray, b: int
) -> np.ndarray:
    """Krum score per upload: sum of squared distances to its M - b - 2 nearest peers.

    Pairwise squared distances are formed from the differences directly;
    the Gram-matrix shortcut |u_i|^2 + |u_j|^2 - 2<u_i, u_j> cancels
    catastrophically for nearby uploads, exactly the regime Krum ranks on.
    """
    mat = _stack_uploads(uploads)
    m_count = mat.shape[0]
    if b < 0:
        raise ValueError(f"assumed Byzantine count must be non-negative, got {b}")
    neighbors = m_count - b - 2
    if neighbors < 1:
        raise ValueError(
            f"krum needs M - b - 2 >= 1, got M={m_count}, b={b}"
        )
    dist2 = cdist(mat, mat, "sqeuclidean")
    ordered = np.sort(dist2, axis=1)
    # column 0 is the self-distance (exactly 0); the next `neighbors` columns
    # are the nearest other uploads.
    return ordered[:, 1 : neighbors + 1].sum(axis=1)


def krum(uploads: Sequence[np.ndarray] | np.ndarray, b: int) -> np.ndarray:
    """Return the upload with the minimal Krum score (ties -> lowest index).

    The output is always one of the inputs, never a synthesized vector.
    """
    mat = _stack_uploads(uploads)
    scores = krum_scores(mat, b)
    winner = int(np.argmin(scores))
    return mat[winner].copy()


def geometric_median(
    uploads: Sequence[np.ndarray] | np.ndarray,
    weights: Optional[Sequence[float]] = None,
    tol: float = GM_TOL,
    max_iter: int = GM_MAX_ITER,
    smoothing: float = GM_SMOOTHING,
) -> GeomMedianResult:
    """Weighted geometric median via smoothed Weiszfeld iteration.

    Starting from the weighted mean, repeats
    ``y <- sum_m (w_m / max(|u_m - y|, smoothing)) u_m / sum_m (...)``
    until the step ``|y_next - y|`` drops below ``tol * max(1, |y_next|)``
    or ``max_iter`` iterations elapse.  Non-convergence is reported in the
    result, never raised: the last iterate is still returned.

    Args:
        uploads: M equal-length vectors.
        weights: M floats in (0, 1] summing to 1; equal weights if omitted.
        tol: relative step threshold (> 0).
        max_iter: iteration cap (>= 1).
        smoothing: distance floor that sidesteps the anchor-point
            singularity of the plain Weiszfeld map.

    Returns:
        GeomMedianResult with the final iterate, iteration count,
        convergence flag, and final objective value.
    """
    if tol <= 0.0:
        raise ValueError(f"tol must be positive, got {tol}")
    if max_iter < 1:
        raise ValueError(f"max_iter must be >= 1, got {max_iter}")
    if smoothing <= 0.0:
        raise ValueError(f"smoothing must be positive, got {smoothing}")
    mat = _stack_uploads(uploads)
    m_count = mat.shape[0]
    if weights is None:
        w = np.full(m_count, 1.0 / m_count)
    else:
        w = _check_weights(weights, m_count)

    y = w @ mat
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        diff = mat - y
        dist = np.sqrt(np.einsum("mp,mp->m", diff, diff))
        coef = w / np.maximum(dist, smoothing)
        y_next = (coef @ mat) / coef.sum()
        step = float(np.linalg.norm(y_next - y))
        y = y_next
        if step <= tol * max(1.0, float(np.linalg.norm(y_next))):
            converged = True
            break

    diff = mat - y
    objective = float(w @ np.sqrt(np.einsum("mp,mp->m", diff, diff)))
    return GeomMedianResult(
        point=y, iterations=iterations, converged=converged, objective=objective
    )


def aggregate(
    kind: AggregatorKind,
    uploads: Sequence[np.ndarray] | np.ndarray,
    weights: Sequence[float],
) -> np.ndarray:
    """Dispatch to the rule named by ``kind`` and return the aggregated vector.

    Weight-agnostic rules (median, trimmed mean, Krum) ignore ``weights``.
    """
    if kind.tag == "fed_nga":
        return fed_nga(uploads, weights)
    if kind.tag == "fedavg":
        return fedavg(uploads, weights)
    if kind.tag == "coord_median":
        return coordinate_median(uploads)
    if kind.tag == "trimmed_mean":
        assert kind.trim_k is not None
        return trimmed_mean(uploads, kind.trim_k)
    if kind.tag == "krum":
        b = kind.krum_b if kind.krum_b is not None else 0
        return krum(uploads, b)
    if kind.tag == "geom_median":
        return geometric_median(
            uploads,
            weights,
            tol=kind.gm_tol,
            max_iter=kind.gm_max_iter,
            smoothing=kind.gm_smoothing,
        ).point
    raise ValueError(f"unknown aggregator {kind.tag!r}")
