"""Turn per-vehicle record streams into per-zone arrival events.

A dwell is a maximal run of consecutive records that map to the same zone,
cut when the zone changes or when the gap between records exceeds the gap
timeout (a silent vehicle is considered departed). Each dwell becomes one
arrival event whose service time is the dwell length read ahead from the
trace, i.e. a clairvoyant estimate of how long the vehicle will stay.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .geozone import DEFAULT_PRECISION, ZoneKey, cell_index, cell_indices, geohash_to_cell
from .trace import TraceRecord, TraceSet, VehicleTrack

DEFAULT_GAP_TIMEOUT = 1800


@dataclass(frozen=True)
class ArrivalEvent:
    """A vehicle entering a zone, carrying its estimated service time."""

    vehicle_id: str
    zone: ZoneKey
    entry_time: int
    service_time: int
    exit_time: int


@dataclass(frozen=True)
class ZoneArrivalArrays:
    """One zone's arrivals as parallel arrays, sorted by (entry, vehicle id)."""

    zone: ZoneKey
    entries: np.ndarray  # int64
    exits: np.ndarray  # int64
    services: np.ndarray  # int64
    vehicle_codes: np.ndarray  # int64 index into vehicle_ids
    vehicle_ids: Sequence[str]  # shared lookup table, lexicographically sorted

    def __len__(self) -> int:
        return len(self.entries)

    def to_events(self) -> list[ArrivalEvent]:
        return [
            ArrivalEvent(
                vehicle_id=self.vehicle_ids[int(v)],
                zone=self.zone,
                entry_time=int(t),
                service_time=int(s),
                exit_time=int(x),
            )
            for t, x, s, v in zip(self.entries, self.exits, self.services, self.vehicle_codes)
        ]

    @classmethod
    def from_events(cls, zone: ZoneKey, events: Sequence[ArrivalEvent]) -> "ZoneArrivalArrays":
        ids = sorted({e.vehicle_id for e in events})
        code = {v: i for i, v in enumerate(ids)}
        return cls(
            zone=zone,
            entries=np.array([e.entry_time for e in events], dtype=np.int64),
            exits=np.array([e.exit_time for e in events], dtype=np.int64),
            services=np.array([e.service_time for e in events], dtype=np.int64),
            vehicle_codes=np.array([code[e.vehicle_id] for e in events], dtype=np.int64),
            vehicle_ids=ids,
        )


def _dwell_bounds(timestamps: np.ndarray, cells: np.ndarray, gap_timeout: int) -> np.ndarray:
    """Indices where a new dwell starts within one vehicle's sorted records."""
    starts = np.ones(len(timestamps), dtype=bool)
    if len(timestamps) > 1:
        starts[1:] = (cells[1:] != cells[:-1]) | (
            timestamps[1:] - timestamps[:-1] > gap_timeout
        )
    return np.flatnonzero(starts)


def _track_dwells(
    track: VehicleTrack, gap_timeout: int, precision: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return (entry, exit, cell) arrays for one vehicle."""
    cells = cell_indices(track.lats, track.lons, precision)
    starts = _dwell_bounds(track.timestamps, cells, gap_timeout)
    ends = np.empty_like(starts)
    ends[:-1] = starts[1:] - 1
    ends[-1] = len(track.timestamps) - 1
    return track.timestamps[starts], track.timestamps[ends], cells[starts]


def detect_zone_changes(
    records: Iterable[TraceRecord],
    gap_timeout: int = DEFAULT_GAP_TIMEOUT,
    precision: int = DEFAULT_PRECISION,
) -> list[tuple[int, ZoneKey, int]]:
    """Split one vehicle's time-sorted records into (entry, zone, exit) dwells."""
    recs = list(records)
    if not recs:
        return []
    ts = np.array([r.timestamp for r in recs], dtype=np.int64)
    cells = np.array([cell_index(r.latitude, r.longitude, precision) for r in recs], dtype=np.int64)
    starts = _dwell_bounds(ts, cells, gap_timeout)
    ends = np.empty_like(starts)
    ends[:-1] = starts[1:] - 1
    ends[-1] = len(recs) - 1
    keys = {c: ZoneKey.from_cell(int(c), precision) for c in np.unique(cells[starts])}
    return [
        (int(ts[s]), keys[int(cells[s])], int(ts[e])) for s, e in zip(starts, ends)
    ]


def _collect_dwells(
    trace: TraceSet, gap_timeout: int, precision: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, list[str]]:
    """All dwells of all vehicles: (entries, exits, cells, vehicle codes, ids)."""
    vehicle_ids = trace.vehicles()  # already lexicographically sorted
    entries, exits, cells, codes = [], [], [], []
    for code, vid in enumerate(vehicle_ids):
        e, x, c = _track_dwells(trace.tracks[vid], gap_timeout, precision)
        entries.append(e)
        exits.append(x)
        cells.append(c)
        codes.append(np.full(len(e), code, dtype=np.int64))
    return (
        np.concatenate(entries),
        np.concatenate(exits),
        np.concatenate(cells),
        np.concatenate(codes),
        vehicle_ids,
    )


def build_arrival_arrays(
    trace: TraceSet,
    zones: Iterable[ZoneKey] | None = None,
    gap_timeout: int = DEFAULT_GAP_TIMEOUT,
    precision: int = DEFAULT_PRECISION,
) -> dict[ZoneKey, ZoneArrivalArrays]:
    """Array-backed variant of :func:`build_arrival_streams` (same ordering)."""
    entries, exits, cells, codes, vehicle_ids = _collect_dwells(trace, gap_timeout, precision)
    # Sort by (zone, entry, vehicle id); vehicle codes follow id lex order.
    order = np.lexsort((codes, entries, cells))
    entries, exits, cells, codes = entries[order], exits[order], cells[order], codes[order]
    services = exits - entries

    wanted: set[int] | None = None
    if zones is not None:
        wanted = {geohash_to_cell(z.geohash) for z in zones}

    out: dict[ZoneKey, ZoneArrivalArrays] = {}
    boundaries = np.flatnonzero(np.r_[True, cells[1:] != cells[:-1]])
    boundaries = np.r_[boundaries, len(cells)]
    for b0, b1 in zip(boundaries[:-1], boundaries[1:]):
        cell = int(cells[b0])
        if wanted is not None and cell not in wanted:
            continue
        zone = ZoneKey.from_cell(cell, precision)
        out[zone] = ZoneArrivalArrays(
            zone=zone,
            entries=entries[b0:b1],
            exits=exits[b0:b1],
            services=services[b0:b1],
            vehicle_codes=codes[b0:b1],
            vehicle_ids=vehicle_ids,
        )
    return dict(sorted(out.items(), key=lambda kv: kv[0].geohash))


def build_arrival_streams(
    trace: TraceSet,
    zones: Iterable[ZoneKey] | None = None,
    gap_timeout: int = DEFAULT_GAP_TIMEOUT,
    precision: int = DEFAULT_PRECISION,
) -> dict[ZoneKey, list[ArrivalEvent]]:
    """Map each zone to its time-ordered arrival events.

    Events are sorted by entry time with ties broken by vehicle id. When
    ``zones`` is given, output is restricted to those (active) zones.
    """
    arrays = build_arrival_arrays(trace, zones, gap_timeout, precision)
    return {zone: za.to_events() for zone, za in arrays.items()}


def distinct_vehicle_counts(arrays: Mapping[ZoneKey, ZoneArrivalArrays]) -> dict[ZoneKey, int]:
    """Number of distinct vehicles that ever arrived in each zone."""
    return {zone: int(len(np.unique(za.vehicle_codes))) for zone, za in arrays.items()}


def with_noisy_estimates(
    streams: Mapping[ZoneKey, list[ArrivalEvent]], noise_std: float, seed: int
) -> dict[ZoneKey, list[ArrivalEvent]]:
    """Optional estimator-noise hook: scale service times multiplicatively.

    Each event's service estimate becomes round(s * max(0, 1 + eps)) with
    eps ~ Normal(0, noise_std), drawn from a stream keyed by (seed, zone).
    The default pipeline does not apply this; exit times are left untouched.
    """
    if noise_std < 0:
        raise ValueError("noise_std must be >= 0")
    out: dict[ZoneKey, list[ArrivalEvent]] = {}
    for zone, events in streams.items():
        rng = np.random.default_rng((seed, zone.numeric_id, 0xE57))
        factors = np.maximum(0.0, 1.0 + rng.normal(0.0, noise_std, size=len(events)))
        out[zone] = [
            replace(e, service_time=int(round(e.service_time * f)))
            for e, f in zip(events, factors)
        ]
    return out


def write_arrivals_csv(
    streams: Mapping[ZoneKey, Sequence[ArrivalEvent]], path: str | Path
) -> None:
    """Dump arrival streams as CSV: zone, vehicle_id, entry, exit, service."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["zone", "vehicle_id", "entry", "exit", "service"])
        for zone in sorted(streams, key=lambda z: z.geohash):
            for e in streams[zone]:
                writer.writerow([zone.geohash, e.vehicle_id, e.entry_time, e.exit_time, e.service_time])
