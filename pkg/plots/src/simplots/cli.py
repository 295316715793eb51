"""Command-line entry point.

    plots convergence <csv> [<csv> ...] -o fig.png
    plots sweep <csv> [<csv> ...] -o fig.png
"""

from __future__ import annotations

import argparse
import sys

from .render import FigureSpec, PlotError, plot_convergence, plot_sweep


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="plots", description="Render figures from simstack experiment CSVs.")
    sub = parser.add_subparsers(dest="kind", required=True)
    for kind, help_text in (("convergence", "per-iteration sum-rate traces"),
                            ("sweep", "sum rate against the layer count")):
        cmd = sub.add_parser(kind, help=help_text)
        cmd.add_argument("csv", nargs="+", help="runner CSV output file(s)")
        cmd.add_argument("-o", "--output", required=True, help="output image path")
        cmd.add_argument("--title", default="", help="figure title")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    spec = FigureSpec(csv_paths=tuple(args.csv), kind=args.kind,
                      output=args.output, title=args.title)
    render = plot_convergence if args.kind == "convergence" else plot_sweep
    try:
        path = render(spec)
    except PlotError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
