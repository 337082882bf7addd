"""Vehicle GPS trace loading: parse, validate, canonicalize, replicate.

Input rows are comma separated: vehicle id, unix timestamp (integer seconds),
latitude, longitude, then optional speed (m/s) and heading (degrees). Records
are grouped per vehicle, time sorted, and exact duplicate timestamps are
dropped (first occurrence wins). Bulk storage is one numpy array set per
vehicle so that replicated multi-day streams stay cheap to process.
"""

from __future__ import annotations

import gzip
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

SECONDS_PER_DAY = 86_400


class TraceError(ValueError):
    """Base class for trace input problems."""


class TraceParseError(TraceError):
    """A field could not be parsed; carries the 1-based column number."""

    def __init__(self, message: str, column: int | None = None):
        super().__init__(message)
        self.column = column


class TraceValidationError(TraceError):
    """A parsed field is out of its allowed range."""


class EmptyTraceError(TraceError):
    """The input contained no valid records."""


@dataclass(frozen=True)
class TraceRecord:
    """One timestamped GPS observation of one vehicle."""

    vehicle_id: str
    timestamp: int
    latitude: float
    longitude: float
    speed: float | None = None
    heading: float | None = None


def _parse_float(raw: str, column: int, name: str) -> float:
    try:
        value = float(raw)
    except ValueError:
        raise TraceParseError(f"column {column} ({name}): not a number: {raw!r}", column) from None
    if not math.isfinite(value):
        raise TraceParseError(f"column {column} ({name}): not finite: {raw!r}", column)
    return value


def parse_record(line: str) -> TraceRecord:
    """Parse one CSV row into a validated TraceRecord.

    Raises TraceParseError for malformed fields (naming the column) and
    TraceValidationError for out-of-range values.
    """
    fields = [f.strip() for f in line.strip().split(",")]
    if not 4 <= len(fields) <= 6:
        raise TraceParseError(f"expected 4-6 fields, got {len(fields)}: {line!r}")
    vehicle_id = fields[0]
    if not vehicle_id:
        raise TraceParseError("column 1 (vehicle_id): empty", 1)
    try:
        timestamp = int(fields[1])
    except ValueError:
        raise TraceParseError(f"column 2 (timestamp): not an integer: {fields[1]!r}", 2) from None
    latitude = _parse_float(fields[2], 3, "latitude")
    longitude = _parse_float(fields[3], 4, "longitude")
    if not -90.0 <= latitude <= 90.0:
        raise TraceValidationError(f"latitude out of range [-90, 90]: {latitude}")
    if not -180.0 <= longitude <= 180.0:
        raise TraceValidationError(f"longitude out of range [-180, 180]: {longitude}")

    speed = heading = None
    if len(fields) >= 5 and fields[4] != "":
        speed = _parse_float(fields[4], 5, "speed")
        if speed < 0:
            raise TraceValidationError(f"speed must be non-negative: {speed}")
    if len(fields) == 6 and fields[5] != "":
        heading = _parse_float(fields[5], 6, "heading")
        if not 0.0 <= heading < 360.0:
            raise TraceValidationError(f"heading out of range [0, 360): {heading}")
    return TraceRecord(vehicle_id, timestamp, latitude, longitude, speed, heading)


@dataclass(frozen=True)
class VehicleTrack:
    """All records of one vehicle as parallel arrays, strictly time ordered."""

    vehicle_id: str
    timestamps: np.ndarray  # int64 seconds
    lats: np.ndarray  # float64 degrees
    lons: np.ndarray  # float64 degrees
    speeds: np.ndarray  # float64 m/s, NaN where absent
    headings: np.ndarray  # float64 degrees, NaN where absent

    def __len__(self) -> int:
        return len(self.timestamps)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, VehicleTrack):
            return NotImplemented
        return (
            self.vehicle_id == other.vehicle_id
            and np.array_equal(self.timestamps, other.timestamps)
            and np.array_equal(self.lats, other.lats)
            and np.array_equal(self.lons, other.lons)
            and np.array_equal(self.speeds, other.speeds, equal_nan=True)
            and np.array_equal(self.headings, other.headings, equal_nan=True)
        )

    def iter_records(self) -> Iterator[TraceRecord]:
        for i in range(len(self.timestamps)):
            speed = float(self.speeds[i])
            heading = float(self.headings[i])
            yield TraceRecord(
                self.vehicle_id,
                int(self.timestamps[i]),
                float(self.lats[i]),
                float(self.lons[i]),
                None if math.isnan(speed) else speed,
                None if math.isnan(heading) else heading,
            )


def _track_from_records(vehicle_id: str, records: list[TraceRecord]) -> VehicleTrack:
    ts = np.array([r.timestamp for r in records], dtype=np.int64)
    order = np.argsort(ts, kind="stable")
    ts = ts[order]
    keep = np.ones(len(ts), dtype=bool)
    keep[1:] = ts[1:] != ts[:-1]  # duplicate timestamps: keep first seen
    order = order[keep]
    ts = ts[keep]

    def pick(getter, default=np.nan):
        return np.array(
            [default if getter(records[i]) is None else getter(records[i]) for i in order],
            dtype=np.float64,
        )

    return VehicleTrack(
        vehicle_id=vehicle_id,
        timestamps=ts,
        lats=np.array([records[i].latitude for i in order], dtype=np.float64),
        lons=np.array([records[i].longitude for i in order], dtype=np.float64),
        speeds=pick(lambda r: r.speed),
        headings=pick(lambda r: r.heading),
    )


@dataclass
class TraceSet:
    """Canonical, immutable-by-convention record stream grouped per vehicle."""

    tracks: dict[str, VehicleTrack]
    day_count: int
    skipped_rows: int = 0

    @property
    def vehicle_count(self) -> int:
        return len(self.tracks)

    @property
    def record_count(self) -> int:
        return sum(len(t) for t in self.tracks.values())

    @property
    def start_time(self) -> int:
        return int(min(t.timestamps[0] for t in self.tracks.values()))

    @property
    def end_time(self) -> int:
        return int(max(t.timestamps[-1] for t in self.tracks.values()))

    def vehicles(self) -> list[str]:
        return list(self.tracks)

    def iter_records(self) -> Iterator[TraceRecord]:
        for track in self.tracks.values():
            yield from track.iter_records()

    @classmethod
    def from_records(cls, records: Iterable[TraceRecord], skipped_rows: int = 0) -> "TraceSet":
        by_vehicle: dict[str, list[TraceRecord]] = {}
        for r in records:
            by_vehicle.setdefault(r.vehicle_id, []).append(r)
        if not by_vehicle:
            raise EmptyTraceError("no valid records")
        tracks = {
            vid: _track_from_records(vid, recs) for vid, recs in sorted(by_vehicle.items())
        }
        ts = cls(tracks=tracks, day_count=1, skipped_rows=skipped_rows)
        ts.day_count = (ts.end_time - ts.start_time) // SECONDS_PER_DAY + 1
        return ts

    @classmethod
    def from_tracks(cls, tracks: dict[str, VehicleTrack], day_count: int, skipped_rows: int = 0) -> "TraceSet":
        if not tracks:
            raise EmptyTraceError("no vehicle tracks")
        return cls(tracks=dict(sorted(tracks.items())), day_count=day_count, skipped_rows=skipped_rows)


def load_trace(path: str | Path) -> TraceSet:
    """Load and canonicalize a trace file (plain text or .gz).

    Malformed rows are skipped and counted in ``TraceSet.skipped_rows``;
    an input with zero valid records raises EmptyTraceError.
    """
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    records: list[TraceRecord] = []
    skipped = 0
    with opener(path, "rt", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            try:
                records.append(parse_record(line))
            except TraceError:
                skipped += 1
    if not records:
        raise EmptyTraceError(f"no valid records in {path}")
    return TraceSet.from_records(records, skipped_rows=skipped)


def dump_trace(trace: TraceSet, path: str | Path) -> None:
    """Write a canonical CSV dump; loading it back reproduces the TraceSet."""
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for vid in trace.vehicles():
            for r in trace.tracks[vid].iter_records():
                row = f"{r.vehicle_id},{r.timestamp},{r.latitude!r},{r.longitude!r}"
                if r.heading is not None:
                    row += f",{'' if r.speed is None else repr(r.speed)},{r.heading!r}"
                elif r.speed is not None:
                    row += f",{r.speed!r}"
                fh.write(row + "\n")


def replicate_trace(trace: TraceSet, k: int) -> TraceSet:
    """Concatenate k copies of a one-day trace, copy i shifted by i days."""
    if k < 1:
        raise ValueError(f"replication factor must be >= 1, got {k}")
    if trace.day_count > 1:
        raise ValueError("replicate_trace expects a trace spanning at most one day")
    if k == 1:
        return TraceSet(tracks=dict(trace.tracks), day_count=1, skipped_rows=trace.skipped_rows)
    offsets = np.arange(k, dtype=np.int64) * SECONDS_PER_DAY
    tracks: dict[str, VehicleTrack] = {}
    for vid, t in trace.tracks.items():
        tracks[vid] = VehicleTrack(
            vehicle_id=vid,
            timestamps=(t.timestamps[None, :] + offsets[:, None]).ravel(),
            lats=np.tile(t.lats, k),
            lons=np.tile(t.lons, k),
            speeds=np.tile(t.speeds, k),
            headings=np.tile(t.headings, k),
        )
    return TraceSet(tracks=tracks, day_count=k, skipped_rows=trace.skipped_rows)
