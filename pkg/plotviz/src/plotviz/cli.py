"""Command-line figure rendering for finished runs."""

from __future__ import annotations

import argparse
from pathlib import Path

from .figures import KINDS, plot


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plotviz", description="Render figures from a finished run directory.")
    parser.add_argument("run_dir", help="run directory with manifest.json")
    parser.add_argument("--kind", required=True, choices=KINDS)
    parser.add_argument("--out", default=None,
                        help="output image path (default: <run_dir>/<kind>.<format>)")
    parser.add_argument("--format", default="png",
                        help="image format when --out is not given")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = Path(args.out) if args.out else Path(args.run_dir) / f"{args.kind}.{args.format}"
    path = plot(args.run_dir, args.kind, out)
    print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
