"""End-to-end experiment pipeline.

load or generate -> replicate -> zone -> classify -> arrivals -> thresholds
-> simulate the ensemble plus every fixed-threshold baseline on identical
streams -> aggregate -> write report CSVs. Given one seed and one input the
whole run is deterministic down to the output bytes, including when zones
are simulated by parallel workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from multiprocessing import get_context
from pathlib import Path
from typing import Sequence

import numpy as np

from . import events as events_mod
from . import metrics as metrics_mod
from .config import ExperimentConfig
from .events import ZoneArrivalArrays, build_arrival_arrays
from .geozone import TrafficClass, ZoneKey, ZoneStats, classify_zones
from .metrics import ComparisonRow, IntervalRecord, ZoneOutcome, comparison_row, intervals_from_sums
from .selection import (
    CREDITED,
    ThresholdTable,
    ZoneRunResult,
    build_threshold_table,
    run_zone_ensemble_fast,
    run_zone_fixed,
)
from .synth import SyntheticTraceSpec, generate_synthetic, parse_synthetic_spec
from .trace import SECONDS_PER_DAY, TraceSet, load_trace, replicate_trace


@dataclass
class RunResult:
    """In-memory counterpart of the written reports."""

    config: ExperimentConfig
    budget_value: int
    mean_vehicles_per_zone: float
    std_vehicles_per_zone: float
    run_start: int
    run_end: int
    outcomes: list[ZoneOutcome]
    intervals: list[IntervalRecord]
    comparison: ComparisonRow | None
    out_dir: Path | None


def _zone_job(
    za: ZoneArrivalArrays,
    taus: Sequence[int],
    seed: int,
    budget: int,
    interval_d: int,
    run_start: int,
    run_end: int,
    accounting: str,
    capture_decisions: bool,
) -> tuple[ZoneRunResult, list[ZoneRunResult]]:
    ensemble = run_zone_ensemble_fast(
        za,
        taus,
        budget=budget,
        boundary_period=interval_d,
        start_time=run_start,
        run_end=run_end,
        seed=seed,
        accounting=accounting,
        capture_decisions=capture_decisions,
        capture_assignments=False,
    )
    fixed = [
        run_zone_fixed(za, tau, budget=budget, run_end=run_end, accounting=accounting,
                       capture_assignments=False)
        for tau in taus
    ]
    return ensemble, fixed


def _zone_job_star(args) -> tuple[ZoneRunResult, list[ZoneRunResult]]:
    return _zone_job(*args)


def load_input(config: ExperimentConfig) -> TraceSet:
    """Load the trace file or generate the synthetic one-day trace."""
    if config.trace is not None:
        return load_trace(config.trace)
    spec = config.synthetic
    if isinstance(spec, (str, Path)):
        spec = parse_synthetic_spec(spec)
    assert isinstance(spec, SyntheticTraceSpec)
    return generate_synthetic(spec, default_seed=config.seed)


def resolve_budget(config: ExperimentConfig, mean_vehicles_per_zone: float) -> int:
    if config.budget is not None:
        return config.budget
    return math.floor(config.budget_fraction * mean_vehicles_per_zone)


def run_experiment(config: ExperimentConfig) -> RunResult:
    """Run the full pipeline; writes reports to config.out unless it is empty."""
    config.validate()

    trace = load_input(config)
    if config.days > 1:
        trace = replicate_trace(trace, config.days)

    arrays = build_arrival_arrays(trace, gap_timeout=config.gap_timeout, precision=config.precision)
    if not arrays:
        raise RuntimeError("no zone activity found in the input trace")

    counts = events_mod.distinct_vehicle_counts(arrays)
    stats = [ZoneStats(zone, counts[zone]) for zone in arrays]
    classified, mean_nz, std_nz = classify_zones(stats)
    class_of = {s.zone: s.traffic_class for s in classified}

    budget = resolve_budget(config, mean_nz)
    table: ThresholdTable = build_threshold_table(arrays, config.percentiles)

    run_start = trace.start_time
    run_end = run_start + trace.day_count * SECONDS_PER_DAY

    zones = list(arrays)  # already sorted by geohash
    jobs = [
        (
            arrays[zone],
            table.taus[zone],
            config.seed,
            budget,
            config.interval_d,
            run_start,
            run_end,
            config.accounting,
            config.decision_log,
        )
        for zone in zones
    ]
    if config.workers > 1:
        with get_context("fork").Pool(config.workers) as pool:
            results = pool.map(_zone_job_star, jobs, chunksize=max(1, len(jobs) // (4 * config.workers)))
    else:
        results = [_zone_job_star(job) for job in jobs]

    outcomes: list[ZoneOutcome] = []
    intervals: list[IntervalRecord] = []
    decision_log: dict[ZoneKey, list] = {}
    for zone, (ens, fixed) in zip(zones, results):
        outcomes.append(
            ZoneOutcome(
                zone=zone,
                traffic_class=class_of[zone],
                n_z=counts[zone],
                ensemble_credited=ens.credited_total,
                ensemble_truncated=ens.truncated_total,
                ensemble_selections=ens.selections,
                ensemble_broker_switches=ens.broker_switches,
                ensemble_algorithm_switches=ens.algorithm_switches,
                fixed_credited=tuple(f.credited_total for f in fixed),
                fixed_truncated=tuple(f.truncated_total for f in fixed),
                fixed_selections=tuple(f.selections for f in fixed),
                fixed_broker_switches=tuple(f.broker_switches for f in fixed),
            )
        )
        intervals.extend(intervals_from_sums(zone, ens.interval_sums))
        if config.decision_log and ens.decisions is not None:
            decision_log[zone] = ens.decisions

    comparison = comparison_row(
        budget, outcomes, TrafficClass.HIGH, baseline_index=0, accounting=config.accounting
    )

    out_dir: Path | None = None
    if config.out:
        out_dir = Path(config.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        metrics_mod.write_zones_csv(out_dir / "zones.csv", outcomes, config.percentiles)
        metrics_mod.write_intervals_csv(out_dir / "intervals.csv", intervals, config.percentiles)
        metrics_mod.write_summary_csv(
            out_dir / "summary.csv",
            outcomes,
            config.percentiles,
            [comparison] if comparison is not None else [],
            config.accounting,
        )
        _write_manifest(out_dir / "run_manifest.txt", config, budget, mean_nz, std_nz, run_start, run_end, len(zones))
        if config.dump_arrivals:
            events_mod.write_arrivals_csv(
                {zone: arrays[zone].to_events() for zone in zones}, out_dir / "arrivals.csv"
            )
        if config.decision_log:
            metrics_mod.write_decisions_csv(out_dir / "decisions.csv", decision_log)

    return RunResult(
        config=config,
        budget_value=budget,
        mean_vehicles_per_zone=mean_nz,
        std_vehicles_per_zone=std_nz,
        run_start=run_start,
        run_end=run_end,
        outcomes=outcomes,
        intervals=intervals,
        comparison=comparison,
        out_dir=out_dir,
    )


def _write_manifest(
    path: Path,
    config: ExperimentConfig,
    budget: int,
    mean_nz: float,
    std_nz: float,
    run_start: int,
    run_end: int,
    n_zones: int,
) -> None:
    synthetic = config.synthetic if isinstance(config.synthetic, (str, type(None))) else "<inline spec>"
    lines = {
        "trace": config.trace or "",
        "synthetic": synthetic or "",
        "days": config.days,
        "interval_d": config.interval_d,
        "budget_fraction": config.budget_fraction,
        "budget": budget,
        "seed": config.seed,
        "accounting": config.accounting,
        "gap_timeout": config.gap_timeout,
        "percentiles": ",".join(str(x) for x in config.percentiles),
        "out": config.out,
        "workers": config.workers,
        "precision": config.precision,
        "active_zones": n_zones,
        "mean_vehicles_per_zone": repr(mean_nz),
        "std_vehicles_per_zone": repr(std_nz),
        "run_start": run_start,
        "run_end": run_end,
    }
    path.write_text("".join(f"{k} = {v}\n" for k, v in lines.items()), encoding="utf-8")
