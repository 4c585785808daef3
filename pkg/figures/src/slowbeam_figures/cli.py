"""Command line: render simulation CSVs into figure presets."""

from __future__ import annotations

import argparse
import sys

from .render import FIGURES, FigureInputError, render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="slowbeam-figures",
        description="Render slowbeam CSV outputs into figure presets")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("render", help="render one figure preset")
    p.add_argument("--figure", required=True, choices=sorted(FIGURES),
                   help="figure preset id")
    p.add_argument("--csv", action="append", required=True,
                   help="input CSV (repeatable; all must share the "
                        "preset's schema)")
    p.add_argument("--out", required=True, help="output image path")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        render(args.figure, args.csv, args.out)
    except FigureInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
