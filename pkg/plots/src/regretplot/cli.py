"""CLI: render regret curves from an aggregate CSV."""
from __future__ import annotations

import argparse
import sys

from .plotting import PlotSpec, SchemaError, render_regret_plot


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="plot", description=__doc__)
    parser.add_argument("--csv", required=True, help="aggregate CSV written by the simulator")
    parser.add_argument("--out", required=True, help="output image path (png/pdf/svg)")
    parser.add_argument("--y", default="r_over_sqrt_t", choices=("r", "r_over_sqrt_t"),
                        help="plot cumulative regret or regret normalized by sqrt(t)")
    parser.add_argument("--algos", default=None,
                        help="comma-separated algorithms to include (default: all in the CSV)")
    parser.add_argument("--no-band", action="store_true", help="disable the +-1 std band")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    algos = [a.strip() for a in args.algos.split(",") if a.strip()] if args.algos else None
    spec = PlotSpec(csv_path=args.csv, out_path=args.out, algorithms=algos,
                    band=not args.no_band, y_axis=args.y)
    try:
        image, sidecar = render_regret_plot(spec)
    except (SchemaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {image}")
    print(f"wrote {sidecar}")
    return 0


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
