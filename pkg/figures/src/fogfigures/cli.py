"""`figures` command: regenerate plots from a simulation output directory."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .plots import SchemaError, plot_convergence, plot_vs_relays

WHICH = ("all", "convergence", "delivery", "energy", "time")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="figures",
        description="Render plots from fog-relay episodes/summary CSV files")
    parser.add_argument("--in", dest="in_dir", required=True,
                        help="directory holding episodes.csv and summary.csv")
    parser.add_argument("--out", dest="out_dir", required=True,
                        help="directory for SVG/PNG output")
    parser.add_argument("--which", default="all", choices=WHICH)
    args = parser.parse_args(argv)

    in_dir, out_dir = Path(args.in_dir), Path(args.out_dir)
    episodes = in_dir / "episodes.csv"
    summary = in_dir / "summary.csv"
    try:
        written = []
        if args.which in ("all", "convergence"):
            written += plot_convergence(episodes, out_dir / "convergence")
        for metric in ("delivery", "energy", "time"):
            if args.which in ("all", metric):
                written += plot_vs_relays(summary, metric, out_dir / metric)
    except (SchemaError, OSError) as exc:
        print(f"ERROR: {exc}", file=sys.stderr)
        return 2
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
