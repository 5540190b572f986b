"""Standalone progress-figure script.

Usage:
    pmqsopt-plot-progress --csv out/aggregate.csv --out figs/progress.png \
        [--columns objective,feasibility] [--x-column grad_evals]
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .figures import render_progress_figure


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pmqsopt-plot-progress",
        description="objective and feasibility against cumulative stochastic gradients",
    )
    parser.add_argument("--csv", type=Path, action="append", required=True,
                        help="input run CSV (repeatable)")
    parser.add_argument("--out", type=Path, required=True, help="output image path")
    parser.add_argument("--columns", default="objective,feasibility")
    parser.add_argument("--x-column", default="grad_evals")
    parser.add_argument("--linear", action="store_true", help="disable the log x axis")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        out = render_progress_figure(
            csv_paths=args.csv,
            out_path=args.out,
            x_column=args.x_column,
            columns=tuple(c.strip() for c in args.columns.split(",") if c.strip()),
            logx=not args.linear,
        )
    except Exception as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
