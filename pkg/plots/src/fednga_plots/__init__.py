"""Render figures from fednga CSV logs: convergence curves and timing bars.

Strictly post-hoc — this package reads the documented ``records.csv``
and ``bench.csv`` formats and nothing else, so the simulator never
depends on it and the figures work on logs produced anywhere.
"""

from .figures import (
    VECTOR_FORMATS,
    Y_FIELDS,
    BenchImage,
    CurvesImage,
    PlotSpec,
    plot_bench,
    plot_curves,
)
from .readers import (
    BENCH_COLUMNS,
    RECORD_COLUMNS,
    BenchRow,
    SchemaError,
    read_bench,
    read_records,
)

__version__ = "0.1.0"

__all__ = [
    "BENCH_COLUMNS",
    "BenchImage",
    "BenchRow",
    "CurvesImage",
    "PlotSpec",
    "RECORD_COLUMNS",
    "SchemaError",
    "VECTOR_FORMATS",
    "Y_FIELDS",
    "plot_bench",
    "plot_curves",
    "read_bench",
    "read_records",
    "__version__",
]
