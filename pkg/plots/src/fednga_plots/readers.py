"""Parsers for the two CSV formats the fednga command-line tool writes.

Only the documented file formats are consumed here — ``records.csv``
(one row per round, empty cell = quantity not measured that round) and
``bench.csv`` (one row per aggregator/size point) — so this package
never imports the simulator and stays usable on logs copied from
anywhere.
"""

import csv
from dataclasses import dataclass
from typing import Dict, List

import numpy as np

RECORD_COLUMNS = ("t", "eta", "loss", "grad_norm", "gap", "theta_max", "accuracy", "agg_time_ns")
BENCH_COLUMNS = ("agg", "p", "M", "reps", "median_ns", "mean_ns", "min_ns")


class SchemaError(ValueError):
    """A CSV file does not match the documented column layout."""


def _check_header(header: List[str], expected, path: str) -> None:
    if tuple(header) == expected:
        return
    for i, name in enumerate(expected):
        got = header[i] if i < len(header) else "<missing>"
        if got != name:
            raise SchemaError(
                f"{path}: expected column {i} to be {name!r}, got {got!r}"
            )
    raise SchemaError(
        f"{path}: {len(header) - len(expected)} unexpected trailing column(s), "
        f"first is {header[len(expected)]!r}"
    )


def read_records(path: str) -> Dict[str, np.ndarray]:
    """Parse a round-records CSV into one array per column.

    Returns ``t`` as int64 and every other column as float64 with NaN
    standing in for empty cells, so unmeasured rounds stay visible as
    gaps instead of collapsing to zero.
    """
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, expected header {RECORD_COLUMNS}") from None
        _check_header(header, RECORD_COLUMNS, path)
        raw: List[List[str]] = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(RECORD_COLUMNS):
                raise SchemaError(
                    f"{path}:{lineno}: expected {len(RECORD_COLUMNS)} cells, got {len(row)}"
                )
            raw.append(row)
    if not raw:
        raise SchemaError(f"{path}: no data rows")
    out: Dict[str, np.ndarray] = {}
    for j, name in enumerate(RECORD_COLUMNS):
        cells = [row[j] for row in raw]
        try:
            if name == "t":
                out[name] = np.array([int(c) for c in cells], dtype=np.int64)
            else:
                out[name] = np.array(
                    [np.nan if c == "" else float(c) for c in cells], dtype=np.float64
                )
        except ValueError as exc:
            raise SchemaError(f"{path}: column {name!r}: {exc}") from None
    return out


@dataclass(frozen=True)
class BenchRow:
    """One timed (aggregator, problem size) point from ``bench.csv``."""

    agg: str
    p: int
    m: int
    reps: int
    median_ns: float
    mean_ns: float
    min_ns: float

    @property
    def size_label(self) -> str:
        return f"p={self.p}, M={self.m}"


def read_bench(path: str) -> List[BenchRow]:
    """Parse an aggregator-timing CSV; at least one data row is required."""
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, expected header {BENCH_COLUMNS}") from None
        _check_header(header, BENCH_COLUMNS, path)
        rows: List[BenchRow] = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(BENCH_COLUMNS):
                raise SchemaError(
                    f"{path}:{lineno}: expected {len(BENCH_COLUMNS)} cells, got {len(row)}"
                )
            try:
                rows.append(
                    BenchRow(
                        agg=row[0],
                        p=int(row[1]),
                        m=int(row[2]),
                        reps=int(row[3]),
                        median_ns=float(row[4]),
                        mean_ns=float(row[5]),
                        min_ns=float(row[6]),
                    )
                )
            except ValueError as exc:
                raise SchemaError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    return rows
