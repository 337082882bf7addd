"""Deterministic synthetic GPS traces over a rectangular zone grid.

The real-world dataset this simulator targets is not redistributable, so the
generator builds format-compatible one-day traces: vehicles hop between grid
cells, dwell for a configurable duration, and emit position pings while
dwelling. A regime schedule assigns each time window its own dwell-time
distribution and vehicle pool, which makes it easy to build traces where
different selection thresholds dominate in different windows.

Dwell distributions per regime:

* ``uniform:LO:HI``   integer seconds, uniform inclusive
* ``const:V``         constant
* ``cycle:V1:V2:...`` deterministic cycle through the listed values
                      (weights via repetition), staggered per vehicle

Zone subsets: ``all``, ``hot`` (the first ``hot_zones`` cells), or ``cold``
(the rest). Walk modes: ``random`` (uniform, never the current zone twice in
a row) or ``scan`` (deterministic sweep, so a vehicle never revisits a zone
within one sweep of the subset).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from .geozone import DEFAULT_PRECISION, _bit_budget, cell_index, geohash_cell_bounds, cell_to_geohash
from .trace import SECONDS_PER_DAY, TraceSet, VehicleTrack

_SCAN_STRIDE = 7919  # prime, spreads per-vehicle scan offsets over the subset


@dataclass(frozen=True)
class DwellRegime:
    """One time window: who drives, where, and how long they dwell."""

    start: int
    end: int
    dwell: str
    vehicles: int
    zones: str = "all"  # all | hot | cold
    walk: str = "random"  # random | scan

    def validate(self) -> None:
        if not 0 <= self.start < self.end <= SECONDS_PER_DAY:
            raise ValueError(f"regime window must satisfy 0 <= start < end <= 86400: {self}")
        if self.vehicles < 0:
            raise ValueError("regime vehicle count must be >= 0")
        if self.zones not in ("all", "hot", "cold"):
            raise ValueError(f"unknown zone subset {self.zones!r}")
        if self.walk not in ("random", "scan"):
            raise ValueError(f"unknown walk mode {self.walk!r}")
        _parse_dwell(self.dwell)


def _parse_dwell(spec: str) -> tuple[str, tuple[int, ...]]:
    parts = spec.split(":")
    kind, args = parts[0], parts[1:]
    try:
        values = tuple(int(a) for a in args)
    except ValueError:
        raise ValueError(f"bad dwell spec {spec!r}") from None
    if kind == "uniform" and len(values) == 2 and 1 <= values[0] <= values[1]:
        return kind, values
    if kind == "const" and len(values) == 1 and values[0] >= 1:
        return kind, values
    if kind == "cycle" and len(values) >= 1 and all(v >= 1 for v in values):
        return kind, values
    raise ValueError(f"bad dwell spec {spec!r}")


@dataclass(frozen=True)
class SyntheticTraceSpec:
    """Grid extent, regime schedule, and generator seed for one synthetic day."""

    grid_rows: int
    grid_cols: int
    regimes: tuple[DwellRegime, ...]
    seed: int | None = None  # None: the experiment seed is used
    origin_lat: float = 31.10
    origin_lon: float = 121.20
    hot_zones: int = 0
    travel_gap: int = 30
    ping_interval: int = 600
    precision: int = DEFAULT_PRECISION
    base_time: int = 1_180_000_000

    @property
    def vehicle_count(self) -> int:
        return sum(r.vehicles for r in self.regimes)

    def validate(self) -> None:
        if self.grid_rows < 1 or self.grid_cols < 1:
            raise ValueError("grid must be at least 1x1")
        if not self.regimes:
            raise ValueError("at least one regime is required")
        for r in self.regimes:
            r.validate()
        if self.vehicle_count < 1:
            raise ValueError("spec generates zero vehicles")
        if not 0 <= self.hot_zones <= self.grid_rows * self.grid_cols:
            raise ValueError("hot_zones out of range")
        if self.hot_zones == 0 and any(r.zones != "all" for r in self.regimes):
            raise ValueError("hot/cold zone subsets need hot_zones > 0")
        if self.travel_gap < 1 or self.ping_interval < 1:
            raise ValueError("travel_gap and ping_interval must be >= 1")


def _grid_centers(spec: SyntheticTraceSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Cell-center latitudes/longitudes of the grid plus cell spans."""
    lon_bits, lat_bits = _bit_budget(spec.precision)
    base = cell_index(spec.origin_lat, spec.origin_lon, spec.precision)
    lat0 = base >> lon_bits
    lon0 = base & ((1 << lon_bits) - 1)
    if lat0 + spec.grid_rows >= (1 << lat_bits) or lon0 + spec.grid_cols >= (1 << lon_bits):
        raise ValueError("grid does not fit next to the origin cell")
    lat_step = 180.0 / (1 << lat_bits)
    lon_step = 360.0 / (1 << lon_bits)
    lats = -90.0 + (lat0 + np.arange(spec.grid_rows) + 0.5) * lat_step
    lons = -180.0 + (lon0 + np.arange(spec.grid_cols) + 0.5) * lon_step
    return lats, lons, np.array([lat_step, lon_step])


def grid_zone_geohashes(spec: SyntheticTraceSpec) -> list[str]:
    """Geohash of every grid cell, row major (index order used by subsets)."""
    lats, lons, _ = _grid_centers(spec)
    return [
        cell_to_geohash(cell_index(float(lat), float(lon), spec.precision), spec.precision)
        for lat in lats
        for lon in lons
    ]


def _zone_subset(spec: SyntheticTraceSpec, which: str) -> np.ndarray:
    total = spec.grid_rows * spec.grid_cols
    if which == "hot":
        return np.arange(spec.hot_zones)
    if which == "cold":
        return np.arange(spec.hot_zones, total)
    return np.arange(total)


def _dwell_iter(kind: str, values: tuple[int, ...], rng: np.random.Generator, offset: int) -> Iterator[int]:
    if kind == "uniform":
        lo, hi = values
        while True:
            yield int(rng.integers(lo, hi + 1))
    elif kind == "const":
        while True:
            yield values[0]
    else:  # cycle
        k = offset % len(values)
        while True:
            yield values[k]
            k = (k + 1) % len(values)


def generate_synthetic(spec: SyntheticTraceSpec, default_seed: int = 0) -> TraceSet:
    """Generate a deterministic one-day TraceSet from the spec.

    All randomness is drawn from streams keyed by (seed, regime, vehicle),
    so the output is reproducible and independent of generation order.
    """
    spec.validate()
    seed = spec.seed if spec.seed is not None else default_seed
    lats, lons, (lat_step, lon_step) = _grid_centers(spec)
    n_cols = spec.grid_cols

    tracks: dict[str, VehicleTrack] = {}
    vehicle_no = 0
    for reg_idx, regime in enumerate(spec.regimes):
        subset = _zone_subset(spec, regime.zones)
        kind, values = _parse_dwell(regime.dwell)
        for vi in range(regime.vehicles):
            vid = f"V{vehicle_no:05d}"
            vehicle_no += 1
            rng = np.random.default_rng((seed, reg_idx, vi))
            dwells = _dwell_iter(kind, values, rng, vi)
            scan_pos = (vi * _SCAN_STRIDE) % len(subset)
            zone = -1
            t = regime.start
            times: list[np.ndarray] = []
            cells: list[np.ndarray] = []
            while True:
                if regime.walk == "scan":
                    zone = int(subset[scan_pos])
                    scan_pos = (scan_pos + 1) % len(subset)
                else:
                    nxt = int(subset[rng.integers(len(subset))])
                    while len(subset) > 1 and nxt == zone:
                        nxt = int(subset[rng.integers(len(subset))])
                    zone = nxt
                dwell = next(dwells)
                if t + dwell > regime.end:
                    break
                pings = np.arange(t, t + dwell, spec.ping_interval, dtype=np.int64)
                pings = np.append(pings, t + dwell)
                times.append(pings)
                cells.append(np.full(len(pings), zone, dtype=np.int64))
                t += dwell + spec.travel_gap
            if not times:
                continue
            ts = np.concatenate(times)
            zs = np.concatenate(cells)
            jitter_lat = rng.uniform(-0.3, 0.3, size=len(ts)) * lat_step
            jitter_lon = rng.uniform(-0.3, 0.3, size=len(ts)) * lon_step
            tracks[vid] = VehicleTrack(
                vehicle_id=vid,
                timestamps=spec.base_time + ts,
                lats=lats[zs // n_cols] + jitter_lat,
                lons=lons[zs % n_cols] + jitter_lon,
                speeds=np.full(len(ts), np.nan),
                headings=np.full(len(ts), np.nan),
            )
    if not tracks:
        raise ValueError("spec generated no records (regime windows too small)")
    return TraceSet.from_tracks(tracks, day_count=1)


def parse_synthetic_spec(path: str | Path) -> SyntheticTraceSpec:
    """Read a spec from a flat key-value file.

    Scalar keys: grid_rows, grid_cols, seed, origin_lat, origin_lon,
    hot_zones, travel_gap, ping_interval, precision, base_time. Regimes are
    ``regime.N = START END ZONES WALK VEHICLES DWELL`` (whitespace separated),
    e.g. ``regime.0 = 0 43200 all random 80 uniform:2400:3600``.
    """
    scalars: dict[str, str] = {}
    regimes: dict[int, DwellRegime] = {}
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"bad spec line (expected key = value): {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key.startswith("regime."):
            try:
                idx = int(key.split(".", 1)[1])
                start, end, zones, walk, vehicles, dwell = value.split()
                regimes[idx] = DwellRegime(
                    start=int(start), end=int(end), dwell=dwell,
                    vehicles=int(vehicles), zones=zones, walk=walk,
                )
            except (ValueError, IndexError):
                raise ValueError(f"bad regime line: {raw!r}") from None
        else:
            scalars[key] = value

    def geti(key: str, default: int) -> int:
        return int(scalars.pop(key)) if key in scalars else default

    def getf(key: str, default: float) -> float:
        return float(scalars.pop(key)) if key in scalars else default

    if "grid_rows" not in scalars or "grid_cols" not in scalars:
        raise ValueError("spec needs grid_rows and grid_cols")
    spec = SyntheticTraceSpec(
        grid_rows=geti("grid_rows", 0),
        grid_cols=geti("grid_cols", 0),
        regimes=tuple(regimes[i] for i in sorted(regimes)),
        seed=geti("seed", None) if "seed" in scalars else None,
        origin_lat=getf("origin_lat", 31.10),
        origin_lon=getf("origin_lon", 121.20),
        hot_zones=geti("hot_zones", 0),
        travel_gap=geti("travel_gap", 30),
        ping_interval=geti("ping_interval", 600),
        precision=geti("precision", DEFAULT_PRECISION),
        base_time=geti("base_time", 1_180_000_000),
    )
    if scalars:
        raise ValueError(f"unknown spec keys: {sorted(scalars)}")
    spec.validate()
    return spec
