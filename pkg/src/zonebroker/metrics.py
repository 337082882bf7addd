"""Aggregate per-zone simulation outcomes into evaluation measures.

Reported measures follow the evaluation protocol: average service time per
zone and average number of selections per zone, broken down by traffic
class, plus per-interval winner series and ensemble-vs-baseline comparison
rows. Service totals are carried in both credited and truncated accounting
so reports never have to guess which one a reader wants.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .geozone import TrafficClass, ZoneKey
from .selection import CREDITED, DecisionRow

ENSEMBLE = "ensemble"


@dataclass(frozen=True)
class ZoneOutcome:
    """Everything one run learned about one zone."""

    zone: ZoneKey
    traffic_class: TrafficClass
    n_z: int
    ensemble_credited: int
    ensemble_truncated: int
    ensemble_selections: int
    ensemble_broker_switches: int
    ensemble_algorithm_switches: int
    fixed_credited: tuple[int, ...]
    fixed_truncated: tuple[int, ...]
    fixed_selections: tuple[int, ...]
    fixed_broker_switches: tuple[int, ...]

    def service(self, series: str | int, accounting: str = CREDITED) -> int:
        if series == ENSEMBLE:
            return self.ensemble_credited if accounting == CREDITED else self.ensemble_truncated
        pool = self.fixed_credited if accounting == CREDITED else self.fixed_truncated
        return pool[series]

    def selections(self, series: str | int) -> int:
        return self.ensemble_selections if series == ENSEMBLE else self.fixed_selections[series]


@dataclass(frozen=True)
class IntervalRecord:
    """Per-zone, per-interval passive service sums and the winning algorithm."""

    zone: ZoneKey
    interval: int
    sums: tuple[int, ...]
    winner: int  # argmax, lowest index on ties


class ComparisonRow(NamedTuple):
    budget: object
    traffic_class: str
    ensemble_service: float
    baseline_service: float
    service_delta_pct: float
    ensemble_selections: float
    baseline_selections: float
    selections_delta_pct: float


def averages_by_class(
    outcomes: Sequence[ZoneOutcome],
    traffic_class: TrafficClass,
    series: str | int = ENSEMBLE,
    accounting: str = CREDITED,
) -> tuple[float, float] | None:
    """Arithmetic mean (service per zone, selections per zone) over one class.

    Returns None when the class holds no zones, as an explicit marker.
    """
    zones = [o for o in outcomes if o.traffic_class == traffic_class]
    if not zones:
        return None
    service = sum(o.service(series, accounting) for o in zones) / len(zones)
    selections = sum(o.selections(series) for o in zones) / len(zones)
    return service, selections


def best_algorithm_zone_counts(
    outcomes: Sequence[ZoneOutcome],
    n_algorithms: int,
    accounting: str = CREDITED,
) -> list[int]:
    """Per fixed algorithm: number of zones where it ties the zone maximum.

    A zone with several algorithms tied at its maximum counts for each of
    them, so the counts can sum to more than the number of zones.
    """
    counts = [0] * n_algorithms
    for o in outcomes:
        pool = o.fixed_credited if accounting == CREDITED else o.fixed_truncated
        best = max(pool)
        for i, v in enumerate(pool):
            if v == best:
                counts[i] += 1
    return counts


def interval_winner_series(
    decision_log: Mapping[ZoneKey, Sequence[DecisionRow]],
    boundary_period: int,
    start_time: int,
    run_length: int,
    n_algorithms: int,
) -> list[IntervalRecord]:
    """Per zone and interval, passive cumulative service and the argmax winner.

    Intervals without arrivals are kept (all-zero sums, winner index 0) so
    series lengths are comparable across zones: ceil(run_length / period).
    """
    n_intervals = -(-run_length // boundary_period)
    records: list[IntervalRecord] = []
    for zone in sorted(decision_log, key=lambda z: z.geohash):
        sums = np.zeros((n_intervals, n_algorithms), dtype=np.int64)
        for row in decision_log[zone]:
            j = (row.time - start_time) // boundary_period
            for i in range(n_algorithms):
                if (row.verdict_mask >> i) & 1:
                    sums[j, i] += row.service_time
        records.extend(intervals_from_sums(zone, sums))
    return records


def intervals_from_sums(zone: ZoneKey, interval_sums: np.ndarray) -> list[IntervalRecord]:
    """Vectorized twin of :func:`interval_winner_series` for precomputed sums."""
    winners = np.argmax(interval_sums, axis=1)  # argmax picks the lowest index on ties
    return [
        IntervalRecord(zone=zone, interval=j, sums=tuple(int(v) for v in interval_sums[j]), winner=int(winners[j]))
        for j in range(interval_sums.shape[0])
    ]


def _delta_pct(value: float, baseline: float) -> float:
    if baseline == 0:
        return math.inf if value > 0 else 0.0
    return (value - baseline) / baseline * 100.0


def comparison_row(
    budget: object,
    outcomes: Sequence[ZoneOutcome],
    traffic_class: TrafficClass,
    baseline_index: int = 0,
    accounting: str = CREDITED,
) -> ComparisonRow | None:
    """Ensemble vs one fixed baseline for a class, as signed percent deltas."""
    ens = averages_by_class(outcomes, traffic_class, ENSEMBLE, accounting)
    base = averages_by_class(outcomes, traffic_class, baseline_index, accounting)
    if ens is None or base is None:
        return None
    return ComparisonRow(
        budget=budget,
        traffic_class=traffic_class.value,
        ensemble_service=ens[0],
        baseline_service=base[0],
        service_delta_pct=_delta_pct(ens[0], base[0]),
        ensemble_selections=ens[1],
        baseline_selections=base[1],
        selections_delta_pct=_delta_pct(ens[1], base[1]),
    )


def comparison_table(
    outcomes_by_budget: Mapping[object, Sequence[ZoneOutcome]],
    traffic_class: TrafficClass,
    baseline_index: int = 0,
    accounting: str = CREDITED,
) -> list[ComparisonRow]:
    """One comparison row per budget setting (runs must share arrival streams)."""
    rows = []
    for budget, outcomes in outcomes_by_budget.items():
        row = comparison_row(budget, outcomes, traffic_class, baseline_index, accounting)
        if row is not None:
            rows.append(row)
    return rows


def _fmt(value: float) -> str:
    if isinstance(value, float):
        if math.isinf(value):
            return "inf"
        return repr(value)
    return str(value)


def _pct(value: float) -> str:
    return "inf" if math.isinf(value) else f"{value:.1f}"


def write_zones_csv(path: str | Path, outcomes: Sequence[ZoneOutcome], percentiles: Sequence[int]) -> None:
    """Per-zone outcome table, one row per zone sorted by geohash."""
    header = [
        "zone", "numeric_id", "n_z", "traffic_class",
        "ensemble_credited", "ensemble_truncated", "ensemble_selections",
        "ensemble_broker_switches", "ensemble_algorithm_switches",
    ]
    for x in percentiles:
        header += [f"tbo_{x}_credited", f"tbo_{x}_truncated", f"tbo_{x}_selections", f"tbo_{x}_broker_switches"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for o in sorted(outcomes, key=lambda o: o.zone.geohash):
            row = [
                o.zone.geohash, o.zone.numeric_id, o.n_z, o.traffic_class.value,
                o.ensemble_credited, o.ensemble_truncated, o.ensemble_selections,
                o.ensemble_broker_switches, o.ensemble_algorithm_switches,
            ]
            for i in range(len(percentiles)):
                row += [o.fixed_credited[i], o.fixed_truncated[i], o.fixed_selections[i], o.fixed_broker_switches[i]]
            writer.writerow(row)


def write_intervals_csv(path: str | Path, records: Sequence[IntervalRecord], percentiles: Sequence[int]) -> None:
    """Winner series: zone, interval, winner index, then per-algorithm sums."""
    header = ["zone", "interval", "winner"] + [f"tbo_{x}_service" for x in percentiles]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for r in records:
            writer.writerow([r.zone.geohash, r.interval, r.winner, *r.sums])


def write_summary_csv(
    path: str | Path,
    outcomes: Sequence[ZoneOutcome],
    percentiles: Sequence[int],
    comparisons: Sequence[ComparisonRow],
    accounting: str = CREDITED,
) -> None:
    """Per-class averages for the ensemble and every fixed algorithm, then
    ensemble-vs-baseline comparison rows. Empty classes keep a zones=0 row
    with blank averages."""
    header = [
        "record_type", "traffic_class", "series", "zones",
        "avg_service_s", "avg_selections",
        "budget", "baseline_service", "service_delta_pct",
        "baseline_selections", "selections_delta_pct",
    ]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for cls in TrafficClass:
            zone_count = sum(1 for o in outcomes if o.traffic_class == cls)
            series_list: list[str | int] = [ENSEMBLE, *range(len(percentiles))]
            for series in series_list:
                label = ENSEMBLE if series == ENSEMBLE else f"tbo_{percentiles[series]}"
                avg = averages_by_class(outcomes, cls, series, accounting)
                if avg is None:
                    writer.writerow(["class_average", cls.value, label, 0, "", "", "", "", "", "", ""])
                else:
                    writer.writerow(
                        ["class_average", cls.value, label, zone_count, _fmt(avg[0]), _fmt(avg[1]), "", "", "", "", ""]
                    )
        for row in comparisons:
            writer.writerow(
                [
                    "comparison", row.traffic_class, ENSEMBLE, "",
                    _fmt(row.ensemble_service), _fmt(row.ensemble_selections),
                    row.budget, _fmt(row.baseline_service), _pct(row.service_delta_pct),
                    _fmt(row.baseline_selections), _pct(row.selections_delta_pct),
                ]
            )


def write_decisions_csv(
    path: str | Path, decision_log: Mapping[ZoneKey, Sequence[DecisionRow]]
) -> None:
    """Full committed-path log, ordered by zone then time."""
    header = ["zone", "time", "vehicle_id", "service", "verdict_mask", "active", "committed", "budget_remaining"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for zone in sorted(decision_log, key=lambda z: z.geohash):
            for r in decision_log[zone]:
                writer.writerow(
                    [zone.geohash, r.time, r.vehicle_id, r.service_time, r.verdict_mask,
                     r.active, int(r.committed), r.budget_remaining]
                )
