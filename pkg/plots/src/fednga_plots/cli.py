"""Command-line figure rendering for fednga CSV logs.

Two subcommands: ``curves`` draws one line per records CSV against the
round index, ``bench`` draws median aggregation-time bars.  Outputs are
vector images (.svg or .pdf) and identical inputs reproduce identical
bytes.
"""

import argparse
import os
import sys
from typing import Optional, Sequence, Tuple

from .figures import Y_FIELDS, PlotSpec, plot_bench, plot_curves

EXIT_OK = 0
EXIT_VALIDATION = 1


class _CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would sys.exit(2)
        raise _CliError(message)


def _parse_series(arg: str) -> Tuple[str, str]:
    """Split ``path[:label]``; the label defaults to the file stem."""
    path, _, label = arg.partition(":")
    if not path:
        raise ValueError(f"empty csv path in {arg!r}")
    if not label:
        label = os.path.splitext(os.path.basename(path))[0]
    return path, label


def _cmd_curves(args: argparse.Namespace) -> int:
    spec = PlotSpec(
        series=tuple(_parse_series(a) for a in args.csv),
        out_path=args.out,
        y_field=args.y,
        log_x=args.log_x,
        log_y=args.log_y,
        title=args.title,
    )
    img = plot_curves(spec)
    print(
        f"curves: wrote {img.path} "
        f"({len(img.labels)} series, {sum(img.points)} points)"
    )
    return EXIT_OK


def _cmd_bench(args: argparse.Namespace) -> int:
    img = plot_bench(args.csv, args.out, log_y=args.log_y)
    print(
        f"bench: wrote {img.path} "
        f"({img.bars} bars, {len(img.aggregators)} aggregators)"
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fednga-plot", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    curves_p = sub.add_parser("curves", help="line plot of a records.csv column per run")
    curves_p.add_argument("--csv", action="append", required=True,
                          metavar="PATH[:LABEL]",
                          help="records CSV with optional legend label; repeatable")
    curves_p.add_argument("--y", choices=Y_FIELDS, default="loss",
                          help="column to draw (default: loss)")
    curves_p.add_argument("--log-x", action="store_true", help="log-scale rounds axis")
    curves_p.add_argument("--log-y", action="store_true", help="log-scale value axis")
    curves_p.add_argument("--title", default="", help="figure title")
    curves_p.add_argument("--out", required=True, help="output image (.svg or .pdf)")
    curves_p.set_defaults(func=_cmd_curves)

    bench_p = sub.add_parser("bench", help="bar chart of median aggregation times")
    bench_p.add_argument("--csv", required=True, help="bench CSV path")
    bench_p.add_argument("--log-y", action="store_true", help="log-scale time axis")
    bench_p.add_argument("--out", required=True, help="output image (.svg or .pdf)")
    bench_p.set_defaults(func=_cmd_bench)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except _CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
