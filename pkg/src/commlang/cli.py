"""Command-line entry point: run presets, summarize, report, dump datasets."""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from .experiments import PRESETS, ExperimentConfig, run_preset, summarize
from .lang import GrammarSpec, build_dataset, save_dataset


def _sigma(value: str) -> float:
    return math.inf if value.lower() in ("inf", "infinity") else float(value)


def _int_tuple(value: str) -> tuple[int, ...]:
    return tuple(int(x) for x in value.split(","))


def _str_tuple(value: str) -> tuple[str, ...]:
    return tuple(x.strip() for x in value.split(","))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="commlang",
        description="Miniature-language learning and communication games "
                    "between neural agents.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment preset")
    run.add_argument("--preset", required=True, choices=PRESETS)
    run.add_argument("--out", required=True, help="run directory to create")
    run.add_argument("--scale", choices=("desk", "full"), default="desk")
    run.add_argument("--master-seed", type=int, default=1)
    run.add_argument("--sigma", type=_sigma, default=None,
                     help="override the self-play threshold (number or 'inf')")
    run.add_argument("--rounds", type=int, default=None,
                     help="override rounds (or self-play turns) per condition")
    run.add_argument("--groups", type=int, default=None,
                     help="override the number of groups per condition")
    run.add_argument("--sizes", type=_int_tuple, default=None,
                     help="group-size preset: keep only these sizes, e.g. 2,8")
    run.add_argument("--languages", type=_str_tuple, default=None,
                     help="self-play presets: keep only these languages")
    run.add_argument("--workers", type=int, default=1,
                     help="worker processes; groups run independently")
    run.add_argument("--precision", choices=("f64", "f32"), default="f64")

    summ = sub.add_parser("summarize", help="aggregate a finished run")
    summ.add_argument("run_dir")

    report = sub.add_parser("report", help="summarize and, when the plotviz "
                            "package is installed, render figures next to the CSVs")
    report.add_argument("run_dir")
    report.add_argument("--format", default="png", help="figure file format")

    ds = sub.add_parser("dataset", help="build and write one dataset")
    ds.add_argument("--grammar", required=True, help="e.g. 50s+50m")
    ds.add_argument("--seed", type=int, required=True)
    ds.add_argument("--profile", choices=("interactive", "replication"),
                    default="interactive")
    ds.add_argument("--out", required=True)
    return parser


def _cmd_run(args) -> int:
    cfg = ExperimentConfig(preset=args.preset, out_dir=args.out, scale=args.scale,
                           master_seed=args.master_seed, sigma=args.sigma,
                           rounds=args.rounds, n_groups=args.groups,
                           sizes=args.sizes, languages=args.languages,
                           workers=args.workers, precision=args.precision)
    run_dir = run_preset(cfg)
    print(f"run complete: {run_dir}")
    return 0


def _cmd_summarize(args) -> int:
    summary = summarize(args.run_dir)
    print(json.dumps(summary, indent=1, sort_keys=True))
    return 0


def _cmd_report(args) -> int:
    summarize(args.run_dir)
    print(f"wrote {Path(args.run_dir) / 'summary.json'}")
    try:
        import plotviz
    except ImportError:
        print("plotviz is not installed; skipping figures", file=sys.stderr)
        return 0
    for kind in ("success-curve", "preference-scatter", "group-scatter"):
        out = Path(args.run_dir) / f"{kind}.{args.format}"
        plotviz.plot(args.run_dir, kind, out)
        print(f"wrote {out}")
    return 0


def _cmd_dataset(args) -> int:
    d = build_dataset(GrammarSpec.parse(args.grammar), args.seed, args.profile)
    save_dataset(d, args.out)
    print(f"wrote {args.out}: {len(d.sl_train)} supervised pairs, "
          f"{len(d.rl_pool)} pool meanings, {len(d.test)} test meanings")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {"run": _cmd_run, "summarize": _cmd_summarize,
                "report": _cmd_report, "dataset": _cmd_dataset}
    return handlers[args.command](args)


if __name__ == "__main__":
    raise SystemExit(main())
