"""Command-line interface: ``plot tradeoff`` and ``plot traces``."""

from __future__ import annotations

import argparse
import sys

from .frames import MissingColumnError
from .render import plot_tradeoff, plot_traces


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plot", description="Render figures from simulator CSV output."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_trade = sub.add_parser("tradeoff", help="communication/regret scatter from a sweep CSV")
    p_trade.add_argument("sweep_csv")
    p_trade.add_argument("-o", "--out", required=True, help="output image path")
    p_trade.add_argument("--title")

    p_traces = sub.add_parser("traces", help="cumulative regret/communication curves")
    p_traces.add_argument("trace_csvs", nargs="+")
    p_traces.add_argument("-o", "--out", required=True, help="output image path")
    p_traces.add_argument("--title")

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "tradeoff":
            summary = plot_tradeoff(args.sweep_csv, args.out, title=args.title)
            print(
                f"wrote {args.out}: {summary.n_points} points in "
                f"{summary.n_series} series"
            )
        else:
            summary = plot_traces(args.trace_csvs, args.out, title=args.title)
            print(f"wrote {args.out}: {summary.n_series} curves")
        return 0
    except (MissingColumnError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
