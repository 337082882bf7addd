"""Geohash zoning: encode coordinates to fixed-precision cells and classify zones.

A zone is one geohash cell. At the default precision of 7 characters a cell
covers roughly 153 m x 153 m near the equator, which matches the radio
coverage assumed for a vehicle acting as the zone's data broker.

Cell indices are computed against exact boundary tables (every boundary is a
dyadic rational, hence an exact float64), so the scalar encoder and the
vectorized encoder used by the bulk pipeline agree bit-for-bit, including for
points that lie exactly on a cell edge.
"""

from __future__ import annotations

import math
import warnings
from bisect import bisect_right
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

BASE32 = "0123456789bcdefghjkmnpqrstuvwxyz"
_CHAR_VALUE = {c: i for i, c in enumerate(BASE32)}

DEFAULT_PRECISION = 7

# FNV-1a 64-bit parameters, pinned for bit-exact reproducibility.
_FNV_OFFSET_BASIS = 14695981039346656037
_FNV_PRIME = 1099511628211
_U64_MASK = (1 << 64) - 1

# Approximate meters per degree of latitude (and of longitude at the equator).
METERS_PER_DEGREE = 111_320.0


class TrafficClass(Enum):
    LIGHT = "Light"
    MEDIUM = "Medium"
    HIGH = "High"


def _bit_budget(precision: int) -> tuple[int, int]:
    """Return (lon_bits, lat_bits) for a geohash of the given length."""
    if precision < 1:
        raise ValueError(f"precision must be >= 1, got {precision}")
    total = 5 * precision
    return (total + 1) // 2, total // 2


@lru_cache(maxsize=None)
def _boundaries(low: float, span: float, bits: int) -> np.ndarray:
    # low + k * span / 2**bits is exact in float64 for the geographic ranges
    # used here, so comparisons against these edges never round.
    step = span / (1 << bits)
    return low + np.arange((1 << bits) + 1, dtype=np.float64) * step


@lru_cache(maxsize=None)
def _boundaries_list(low: float, span: float, bits: int) -> tuple[float, ...]:
    return tuple(_boundaries(low, span, bits).tolist())


def _check_coords(latitude: float, longitude: float) -> None:
    if not (math.isfinite(latitude) and -90.0 <= latitude <= 90.0):
        raise ValueError(f"latitude out of range [-90, 90]: {latitude}")
    if not (math.isfinite(longitude) and -180.0 <= longitude <= 180.0):
        raise ValueError(f"longitude out of range [-180, 180]: {longitude}")


def _axis_index(value: float, low: float, span: float, bits: int) -> int:
    # bisect_right implements the "midpoint goes to the upper half" rule.
    idx = bisect_right(_boundaries_list(low, span, bits), value) - 1
    return min(idx, (1 << bits) - 1)


def cell_index(latitude: float, longitude: float, precision: int = DEFAULT_PRECISION) -> int:
    """Map a coordinate to a packed integer cell id (lat index, then lon index)."""
    _check_coords(latitude, longitude)
    lon_bits, lat_bits = _bit_budget(precision)
    lat_idx = _axis_index(latitude, -90.0, 180.0, lat_bits)
    lon_idx = _axis_index(longitude, -180.0, 360.0, lon_bits)
    return (lat_idx << lon_bits) | lon_idx


def cell_indices(
    latitudes: np.ndarray, longitudes: np.ndarray, precision: int = DEFAULT_PRECISION
) -> np.ndarray:
    """Vectorized :func:`cell_index` over coordinate arrays."""
    lon_bits, lat_bits = _bit_budget(precision)
    lat_idx = np.searchsorted(_boundaries(-90.0, 180.0, lat_bits), latitudes, side="right") - 1
    lon_idx = np.searchsorted(_boundaries(-180.0, 360.0, lon_bits), longitudes, side="right") - 1
    np.minimum(lat_idx, (1 << lat_bits) - 1, out=lat_idx)
    np.minimum(lon_idx, (1 << lon_bits) - 1, out=lon_idx)
    return (lat_idx.astype(np.int64) << lon_bits) | lon_idx


def cell_to_geohash(cell: int, precision: int = DEFAULT_PRECISION) -> str:
    """Render a packed cell id as its geohash string (bit interleave, lon first)."""
    lon_bits, lat_bits = _bit_budget(precision)
    lat_idx = cell >> lon_bits
    lon_idx = cell & ((1 << lon_bits) - 1)
    interleaved = 0
    li, lo = lat_bits, lon_bits
    for k in range(5 * precision):
        if k % 2 == 0:
            lo -= 1
            bit = (lon_idx >> lo) & 1
        else:
            li -= 1
            bit = (lat_idx >> li) & 1
        interleaved = (interleaved << 1) | bit
    chars = []
    for k in range(precision - 1, -1, -1):
        chars.append(BASE32[(interleaved >> (5 * k)) & 0x1F])
    return "".join(chars)


def geohash_to_cell(geohash: str) -> int:
    """Invert :func:`cell_to_geohash`; raises ValueError on bad characters."""
    if not geohash:
        raise ValueError("empty geohash")
    interleaved = 0
    for c in geohash:
        if c not in _CHAR_VALUE:
            raise ValueError(f"invalid geohash character {c!r} in {geohash!r}")
        interleaved = (interleaved << 5) | _CHAR_VALUE[c]
    precision = len(geohash)
    lon_bits, lat_bits = _bit_budget(precision)
    lat_idx = 0
    lon_idx = 0
    for k in range(5 * precision):
        bit = (interleaved >> (5 * precision - 1 - k)) & 1
        if k % 2 == 0:
            lon_idx = (lon_idx << 1) | bit
        else:
            lat_idx = (lat_idx << 1) | bit
    return (lat_idx << lon_bits) | lon_idx


def geohash_encode(latitude: float, longitude: float, precision: int = DEFAULT_PRECISION) -> str:
    """Encode a coordinate to a geohash string of the requested length."""
    return cell_to_geohash(cell_index(latitude, longitude, precision), precision)


def geohash_cell_bounds(geohash: str) -> tuple[tuple[float, float], tuple[float, float]]:
    """Return ((lat_lo, lat_hi), (lon_lo, lon_hi)) of the half-open cell rectangle."""
    cell = geohash_to_cell(geohash)
    lon_bits, lat_bits = _bit_budget(len(geohash))
    lat_idx = cell >> lon_bits
    lon_idx = cell & ((1 << lon_bits) - 1)
    lat_edges = _boundaries_list(-90.0, 180.0, lat_bits)
    lon_edges = _boundaries_list(-180.0, 360.0, lon_bits)
    return (
        (lat_edges[lat_idx], lat_edges[lat_idx + 1]),
        (lon_edges[lon_idx], lon_edges[lon_idx + 1]),
    )


def cell_dimensions_m(precision: int = DEFAULT_PRECISION, latitude: float = 0.0) -> tuple[float, float]:
    """Approximate (north-south, east-west) cell extent in meters at a latitude."""
    lon_bits, lat_bits = _bit_budget(precision)
    lat_m = 180.0 / (1 << lat_bits) * METERS_PER_DEGREE
    lon_m = 360.0 / (1 << lon_bits) * METERS_PER_DEGREE * math.cos(math.radians(latitude))
    return lat_m, lon_m


def zone_numeric_id(geohash: str) -> int:
    """FNV-1a 64-bit hash of the geohash ASCII bytes (stable numeric zone id)."""
    geohash_to_cell(geohash)  # validates characters
    h = _FNV_OFFSET_BASIS
    for b in geohash.encode("ascii"):
        h ^= b
        h = (h * _FNV_PRIME) & _U64_MASK
    return h


@dataclass(frozen=True)
class ZoneKey:
    """Identity of one zone: the geohash string and its stable numeric id."""

    geohash: str
    numeric_id: int

    @classmethod
    def from_geohash(cls, geohash: str) -> "ZoneKey":
        return cls(geohash=geohash, numeric_id=zone_numeric_id(geohash))

    @classmethod
    def from_cell(cls, cell: int, precision: int = DEFAULT_PRECISION) -> "ZoneKey":
        return cls.from_geohash(cell_to_geohash(cell, precision))


@dataclass(frozen=True)
class ZoneStats:
    """Per-zone traffic summary: distinct vehicle count and traffic class."""

    zone: ZoneKey
    vehicle_count: int
    traffic_class: TrafficClass | None = None


def filter_inactive_zones(stats: Iterable[ZoneStats]) -> list[ZoneStats]:
    """Drop zones that saw no traffic at all."""
    return [s for s in stats if s.vehicle_count > 0]


def classify_traffic(n_z: int, mean: float, std: float) -> TrafficClass:
    """Classify one zone by vehicle count against the fleet mean and std.

    Light when n_z < mean, Medium when mean <= n_z <= std, High when n_z > std.
    The rule presumes std > mean; callers should warn when it does not hold
    (see :func:`classify_zones`), in which case the Medium band is empty and
    the same literal rule is applied in order.
    """
    if n_z < mean:
        return TrafficClass.LIGHT
    if n_z <= std:
        return TrafficClass.MEDIUM
    return TrafficClass.HIGH


def classify_zones(stats: Sequence[ZoneStats]) -> tuple[list[ZoneStats], float, float]:
    """Classify active zones; returns (classified stats, mean, std).

    Mean and population std are computed over the active zones only.
    """
    active = filter_inactive_zones(stats)
    if not active:
        return [], 0.0, 0.0
    counts = np.array([s.vehicle_count for s in active], dtype=np.float64)
    mean = float(counts.mean())
    std = float(counts.std())
    if std < mean:
        warnings.warn(
            f"zone-count std ({std:.2f}) is below the mean ({mean:.2f}); "
            "the Medium traffic band is empty",
            stacklevel=2,
        )
    return (
        [
            ZoneStats(s.zone, s.vehicle_count, classify_traffic(s.vehicle_count, mean, std))
            for s in active
        ],
        mean,
        std,
    )
