"""Figure builders: convergence curves and aggregation-timing bars.

Everything renders through the object-oriented matplotlib API (no
pyplot, no global figure state) into vector formats only.  Output is
deterministic: embedded timestamps are suppressed and the SVG id salt
is pinned, so re-rendering the same inputs reproduces the same bytes.
"""

import os
from dataclasses import dataclass
from typing import Dict, List, Tuple

import matplotlib as mpl
import numpy as np
from matplotlib.axes import Axes
from matplotlib.figure import Figure

from .readers import BenchRow, SchemaError, read_bench, read_records

Y_FIELDS = ("accuracy", "gap", "grad_norm", "loss")

_Y_AXIS_TEXT = {
    "accuracy": "test accuracy",
    "gap": "squared distance to optimum",
    "grad_norm": "global gradient norm",
    "loss": "global loss",
}

VECTOR_FORMATS = ("svg", "pdf")

#: rc settings applied around every save: keep SVG text as text (labels
#: stay searchable) and pin the id hash salt for reproducible bytes.
_SAVE_RC = {"svg.fonttype": "none", "svg.hashsalt": "fednga-plots"}


@dataclass(frozen=True)
class PlotSpec:
    """What to draw: labelled record CSVs, one y column, scales, output."""

    series: Tuple[Tuple[str, str], ...]  # (csv path, legend label) pairs
    out_path: str
    y_field: str = "loss"
    log_x: bool = False
    log_y: bool = False
    title: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "series", tuple((str(p), str(l)) for p, l in self.series)
        )
        if not self.series:
            raise ValueError("PlotSpec needs at least one (csv, label) series")
        if self.y_field not in Y_FIELDS:
            raise ValueError(
                f"y_field must be one of {Y_FIELDS}, got {self.y_field!r}"
            )
        _check_out_path(self.out_path)


@dataclass(frozen=True)
class CurvesImage:
    """Where a curves figure landed and what it contains."""

    path: str
    labels: Tuple[str, ...]
    legend_entries: int
    points: Tuple[int, ...]  # measured samples drawn per series


@dataclass(frozen=True)
class BenchImage:
    """Where a timing figure landed and what it contains."""

    path: str
    bars: int
    aggregators: Tuple[str, ...]
    sizes: Tuple[str, ...]


def _check_out_path(path: str) -> str:
    ext = os.path.splitext(path)[1].lower().lstrip(".")
    if ext not in VECTOR_FORMATS:
        raise ValueError(
            f"output must be a vector format {VECTOR_FORMATS}, got {path!r}"
        )
    return ext


def _save_vector(fig: Figure, path: str) -> None:
    ext = _check_out_path(path)
    # None suppresses the format's creation-timestamp field
    metadata = {"Date": None} if ext == "svg" else {"CreationDate": None}
    with mpl.rc_context(_SAVE_RC):
        fig.savefig(path, format=ext, metadata=metadata)


def _curves_figure(spec: PlotSpec) -> Tuple[Figure, Axes, Tuple[int, ...]]:
    fig = Figure(figsize=(6.4, 4.2), layout="constrained")
    ax = fig.subplots()
    points: List[int] = []
    for path, label in spec.series:
        cols = read_records(path)
        y = cols[spec.y_field]
        finite = int(np.isfinite(y).sum())
        if finite == 0:
            raise SchemaError(
                f"{path}: column {spec.y_field!r} has no measured values"
            )
        # NaN cells break the polyline: unmeasured rounds show as gaps,
        # never as zeros
        ax.plot(cols["t"], y, label=label, linewidth=1.2)
        points.append(finite)
    if spec.log_x:
        ax.set_xscale("log")
    if spec.log_y:
        ax.set_yscale("log")
    ax.set_xlabel("round")
    ax.set_ylabel(_Y_AXIS_TEXT[spec.y_field])
    ax.set_title(spec.title or _Y_AXIS_TEXT[spec.y_field])
    ax.legend()
    return fig, ax, tuple(points)


def plot_curves(spec: PlotSpec) -> CurvesImage:
    """Render one line per series (x = round, y = the selected column)."""
    fig, ax, points = _curves_figure(spec)
    _save_vector(fig, spec.out_path)
    return CurvesImage(
        path=spec.out_path,
        labels=tuple(label for _, label in spec.series),
        legend_entries=len(ax.get_legend().get_texts()),
        points=points,
    )


def _bench_figure(
    rows: List[BenchRow], log_y: bool
) -> Tuple[Figure, Axes, Tuple[str, ...], Tuple[str, ...], int]:
    aggs = list(dict.fromkeys(r.agg for r in rows))
    sizes = list(dict.fromkeys(r.size_label for r in rows))
    by_point: Dict[Tuple[str, str], BenchRow] = {}
    for r in rows:
        key = (r.agg, r.size_label)
        if key in by_point:
            raise ValueError(f"duplicate timing point {r.agg!r} at {r.size_label}")
        by_point[key] = r
    fig = Figure(figsize=(6.4, 4.2), layout="constrained")
    ax = fig.subplots()
    width = 0.8 / len(sizes)
    bars = 0
    for k, size in enumerate(sizes):
        xs, ys = [], []
        for i, agg in enumerate(aggs):
            row = by_point.get((agg, size))
            if row is None:  # sweep files need not cover every pair
                continue
            xs.append(i - 0.4 + (k + 0.5) * width)
            ys.append(row.median_ns / 1e6)
        if xs:
            ax.bar(xs, ys, width=width, label=size)
            bars += len(xs)
    if log_y:
        ax.set_yscale("log")
    ax.set_xticks(range(len(aggs)), aggs)
    ax.set_ylabel("median aggregation time (ms)")
    ax.set_title("aggregation cost")
    if len(sizes) > 1:
        ax.legend(title="problem size")
    return fig, ax, tuple(aggs), tuple(sizes), bars


def plot_bench(bench_csv: str, out_path: str, log_y: bool = False) -> BenchImage:
    """Render median aggregation time as bars, grouped by problem size."""
    _check_out_path(out_path)
    rows = read_bench(bench_csv)
    fig, _, aggs, sizes, bars = _bench_figure(rows, log_y)
    _save_vector(fig, out_path)
    return BenchImage(path=out_path, bars=bars, aggregators=aggs, sizes=sizes)
