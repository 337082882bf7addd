"""Command-line experiment runner.

Exit codes: 0 success, 1 runtime error, 2 configuration error.
"""

from __future__ import annotations

import argparse
import sys

from .config import ConfigError, config_from_sources
from .experiment import run_experiment
from .trace import TraceError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="zonebroker",
        description=(
            "Replay a vehicle GPS trace (or generate a synthetic one), split it "
            "into geohash zones, and evaluate fixed-threshold broker selection "
            "algorithms against the switching ensemble."
        ),
    )
    parser.add_argument("--config", help="flat key=value config file; flags override it")
    source = parser.add_argument_group("input")
    source.add_argument("--trace", help="CSV trace file (optionally .gz)")
    source.add_argument("--synthetic", help="synthetic trace spec file")
    parser.add_argument("--days", type=int, help="replication factor (1, 5, 10, 15, 20, 25)")
    parser.add_argument("--interval-d", type=int, dest="interval_d", help="ensemble switching period, seconds")
    parser.add_argument("--budget-fraction", type=float, dest="budget_fraction",
                        help="selection budget as a fraction of mean vehicles per zone")
    parser.add_argument("--budget", type=int, help="absolute per-zone selection budget (overrides fraction)")
    parser.add_argument("--seed", type=int, help="master random seed")
    parser.add_argument("--accounting", choices=["credited", "truncated"],
                        help="how reported service time credits an accepted vehicle")
    parser.add_argument("--gap-timeout", type=int, dest="gap_timeout",
                        help="seconds of silence after which a vehicle is considered departed")
    parser.add_argument("--out", help="output directory for the report CSVs")
    parser.add_argument("--workers", type=int, help="parallel zone-simulation workers")
    parser.add_argument("--dump-arrivals", action="store_const", const=True, dest="dump_arrivals",
                        help="also write arrivals.csv (zone, vehicle, entry, exit, service)")
    parser.add_argument("--decision-log", action="store_const", const=True, dest="decision_log",
                        help="also write decisions.csv (per-arrival committed-path log)")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {k: v for k, v in vars(args).items() if k != "config"}
    try:
        config = config_from_sources(args.config, overrides)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        result = run_experiment(config)
    except (TraceError, ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(
        f"zones={len(result.outcomes)} budget={result.budget_value} "
        f"mean_vehicles_per_zone={result.mean_vehicles_per_zone:.2f} "
        f"out={result.out_dir}"
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
