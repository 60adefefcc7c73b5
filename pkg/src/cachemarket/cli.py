"""Command-line entry point: validate, run, sweep, oracle-geometry."""

from __future__ import annotations

import argparse
import csv
import logging
import sys

from .demand import ConfigurationError
from .experiments import ScenarioConfig, SweepSpec, geometry_oracle, run_scenario, sweep


def _load(path: str) -> ScenarioConfig:
    return ScenarioConfig.load(path).validate()


def cmd_validate(args) -> int:
    cfg = _load(args.config)
    print(f"{args.config}: ok ({cfg.sbs_count} SBSs, K={cfg.contents}, H={cfg.capacity_gb} GB, "
          f"S={cfg.block_size_gb} GB, {cfg.hours} h)")
    return 0


def cmd_run(args) -> int:
    result = run_scenario(_load(args.config), args.out)
    s = result.summary
    for name in ("D_mechanism", "D_nocache", "D_highestpop", "D_greedy"):
        if s[name] is not None:
            print(f"{name:14s} {s[name]:10.3f} ms")
    print(f"{'lambda':14s} {s['lambda']:10.4f}")
    print(f"wrote {args.out}/hours.csv and summary.csv")
    return 0


def _values(text: str) -> tuple:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def cmd_sweep(args) -> int:
    spec = SweepSpec(args.axis, args.values, args.seeds)
    result = sweep(_load(args.config), spec, args.out, workers=args.workers, chart=not args.no_chart)
    for m in result.medians:
        print(f"{spec.axis}={m['value']:g}: D_mechanism={m['D_mechanism']:.3f} lambda={m['lambda']:.4f}")
    print(f"wrote {args.out}/sweep.csv")
    return 0


def cmd_oracle_geometry(args) -> int:
    rows = geometry_oracle(args.radius, args.compress, args.samples, args.seed, args.resolution)
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(rows[0].keys())
    for row in rows:
        writer.writerow(f"{v:.6g}" for v in row.values())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cachemarket", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a scenario file")
    p.add_argument("config")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("run", help="simulate one scenario and write hours.csv / summary.csv")
    p.add_argument("config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="repeat a scenario over one parameter axis")
    p.add_argument("config")
    p.add_argument("--axis", required=True)
    p.add_argument("--values", required=True, type=_values)
    p.add_argument("--seeds", type=int, default=1)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--no-chart", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("oracle-geometry", help="closed-form vs sampled patch areas")
    p.add_argument("--radius", type=float, default=50.0)
    p.add_argument("--compress", type=_values, default=(0.6, 0.7, 0.8, 0.9))
    p.add_argument("--samples", type=int, default=400_000)
    p.add_argument("--resolution", type=float, default=0.25)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_oracle_geometry)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
