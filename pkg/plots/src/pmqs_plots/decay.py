"""Standalone decay-figure script.

Usage:
    pmqsopt-plot-decay --csv out/aggregate.csv --out figs/decay.png \
        --columns r_kkt_sq,r_cons [--x-column t] [--reference-exponent -0.25]
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .figures import FigureSpec, render_decay_figure


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pmqsopt-plot-decay",
        description="log-log residual decay figure with power-law fit and reference curve",
    )
    parser.add_argument("--csv", type=Path, action="append", required=True,
                        help="input run CSV (repeatable)")
    parser.add_argument("--out", type=Path, required=True, help="output image path")
    parser.add_argument("--columns", default="r_kkt_sq",
                        help="comma-separated y columns (default r_kkt_sq)")
    parser.add_argument("--x-column", default="t")
    parser.add_argument("--reference-exponent", type=float, default=-0.25)
    parser.add_argument("--linear", action="store_true", help="disable log-log axes")
    parser.add_argument("--title", default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = FigureSpec(
            csv_paths=args.csv,
            out_path=args.out,
            x_column=args.x_column,
            y_columns=tuple(c.strip() for c in args.columns.split(",") if c.strip()),
            loglog=not args.linear,
            reference_exponent=args.reference_exponent,
            title=args.title,
        )
        result = render_decay_figure(spec)
    except Exception as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    for key, slope in result.slopes.items():
        print(f"{key}: slope {slope:.12g}")
    print(f"wrote {result.out_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
