"""Microbenchmarks for the aggregation rules.

Times a single aggregation call over synthetic Gaussian uploads at a
given (dimension, client count), pinned to one BLAS thread so results
are comparable across machines and runs.  The log-log slope fitter turns
a size sweep into an empirical scaling exponent (1.0 = linear in the
swept size, 2.0 = quadratic, ...).
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from threadpoolctl import threadpool_limits

from .aggregation import AggregatorKind, aggregate

#: Untimed calls before measurement, absorbing allocator and cache warmup.
WARMUP_CALLS = 2

MIN_REPS = 5
MIN_FIT_POINTS = 4


@dataclass(frozen=True)
class BenchResult:
    """Timing summary for one aggregator at one problem size."""

    agg: str
    p: int
    M: int
    reps: int
    median_ns: float
    mean_ns: float
    min_ns: float
    times_ns: Tuple[float, ...]


def bench_aggregator(
    kind: AggregatorKind,
    p: int,
    M: int,
    reps: int = 11,
    rng: Optional[np.random.Generator] = None,
) -> BenchResult:
    """Median/mean/min wall time of one aggregation call, single-threaded.

    Uploads are a standard-normal (M, p) matrix drawn from ``rng`` once,
    outside the timed region, and reused for every repetition; the
    numbers isolate aggregation cost from data generation.  Two warmup
    calls run before timing.

    Args:
        reps: timed repetitions, at least 5.
        rng: source for the upload matrix (fresh default_rng(0) if omitted).
    """
    if p < 1 or M < 1:
        raise ValueError(f"need p >= 1 and M >= 1, got p={p}, M={M}")
    if reps < MIN_REPS:
        raise ValueError(f"reps must be >= {MIN_REPS}, got {reps}")
    if rng is None:
        rng = np.random.default_rng(0)
    uploads = rng.standard_normal((M, p))
    weights = np.full(M, 1.0 / M)
    times = np.empty(reps)
    with threadpool_limits(limits=1):
        for _ in range(WARMUP_CALLS):
            aggregate(kind, uploads, weights)
        for i in range(reps):
            t0 = time.perf_counter_ns()
            aggregate(kind, uploads, weights)
            times[i] = time.perf_counter_ns() - t0
    return BenchResult(
        agg=kind.tag,
        p=p,
        M=M,
        reps=reps,
        median_ns=float(np.median(times)),
        mean_ns=float(times.mean()),
        min_ns=float(times.min()),
        times_ns=tuple(float(t) for t in times),
    )


def fit_loglog_slope(points: Sequence[Tuple[float, float]]) -> float:
    """Least-squares slope of log(time) against log(scale).

    Args:
        points: at least 4 (scale, time) pairs with strictly increasing
            positive scales and positive times.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("points must be a sequence of (scale, time) pairs")
    if pts.shape[0] < MIN_FIT_POINTS:
        raise ValueError(f"need at least {MIN_FIT_POINTS} points, got {pts.shape[0]}")
    scales, times = pts[:, 0], pts[:, 1]
    if np.any(scales <= 0) or np.any(times <= 0):
        raise ValueError("scales and times must be positive")
    if np.any(np.diff(scales) <= 0):
        raise ValueError("scales must be strictly increasing")
    slope, _ = np.polyfit(np.log(scales), np.log(times), 1)
    return float(slope)
