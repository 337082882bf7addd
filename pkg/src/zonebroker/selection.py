"""Threshold-based online (TBO) broker selection and the ensemble selector.

A TBO algorithm accepts an arriving vehicle as the zone's broker only when
its estimated service time strictly exceeds a fixed threshold tau, set per
zone as a percentile (nearest-rank) of the zone's service-time list. The
ensemble runs N such algorithms side by side: all of them keep passive
cumulative-service bookkeeping on every arrival, one of them is active and
actually commits accept/reject decisions, and at every boundary (every
``boundary_period`` seconds) the active pointer moves to the algorithm with
the maximum cumulative service, after which all counters reset to zero.

Committed decisions are constrained by a per-zone selection budget and by
rejection permanence: a vehicle rejected in a zone can never be accepted
later in that same zone.

Two implementations are provided and kept in lockstep by tests: a literal
per-event state machine (``ensemble_init`` / ``ensemble_on_arrival`` /
``ensemble_on_boundary`` and the ``run_zone_ensemble`` driver), and
vectorized equivalents (``run_zone_fixed``, ``run_zone_ensemble_fast``) used
by the bulk experiment pipeline. All service arithmetic is integer seconds,
so both routes produce bit-identical totals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .events import ArrivalEvent, ZoneArrivalArrays
from .geozone import ZoneKey

DEFAULT_PERCENTILES = (10, 20, 30, 40, 50, 60, 70, 80, 90)

CREDITED = "credited"
TRUNCATED = "truncated"

REPLACEMENT = "replacement"
DEPARTURE = "departure"
RUN_END = "run_end"


@dataclass(frozen=True)
class AlgorithmSpec:
    """One TBO algorithm slot: ensemble index and its threshold percentile."""

    index: int
    percentile_x: int


def default_algorithms(percentiles: Sequence[int] = DEFAULT_PERCENTILES) -> tuple[AlgorithmSpec, ...]:
    if list(percentiles) != sorted(set(percentiles)):
        raise ValueError("percentiles must be strictly increasing")
    return tuple(AlgorithmSpec(i, int(x)) for i, x in enumerate(percentiles))


def nearest_rank_percentile(sorted_values: Sequence[float], x: float) -> float:
    """Element of a sorted list at nearest rank ceil(x/100 * n), 1-based.

    The result is always an element of the list. x may be 0 (rank clamps to
    1, the minimum) or 100 (the maximum); exact rational arithmetic avoids
    float fuzz at rank boundaries.
    """
    n = len(sorted_values)
    if n == 0:
        raise ValueError("percentile of an empty list")
    if not 0 <= x <= 100:
        raise ValueError(f"percentile x out of range [0, 100]: {x}")
    rank = math.ceil(Fraction(x) * n / 100)
    return sorted_values[max(rank, 1) - 1]


@dataclass(frozen=True)
class ThresholdTable:
    """Per-zone thresholds, one per percentile, derived from the zone's arrivals."""

    percentiles: tuple[int, ...]
    taus: dict[ZoneKey, tuple[int, ...]]


def build_threshold_table(
    arrivals: Mapping[ZoneKey, Sequence[ArrivalEvent] | ZoneArrivalArrays],
    percentiles: Sequence[int] = DEFAULT_PERCENTILES,
) -> ThresholdTable:
    """Two-pass thresholds: per zone, tau[x] = x-th percentile of all service times."""
    specs = default_algorithms(percentiles)
    taus: dict[ZoneKey, tuple[int, ...]] = {}
    for zone, stream in arrivals.items():
        if isinstance(stream, ZoneArrivalArrays):
            services = np.sort(stream.services)
        else:
            services = np.sort(np.array([e.service_time for e in stream], dtype=np.int64))
        if len(services) == 0:
            raise ValueError(f"zone {zone.geohash} has no arrivals")
        taus[zone] = tuple(int(nearest_rank_percentile(services, s.percentile_x)) for s in specs)
    return ThresholdTable(percentiles=tuple(int(x) for x in percentiles), taus=taus)


def tbo_decide(service_time: float, tau: float) -> bool:
    """Accept (True) iff the estimated service time strictly exceeds tau."""
    return service_time > tau


@dataclass(frozen=True)
class ActiveBroker:
    vehicle_id: str
    accept_time: int
    service_time: int

    @property
    def end_time(self) -> int:
        return self.accept_time + self.service_time


@dataclass(frozen=True)
class BrokerAssignment:
    """One completed broker tenure in a zone."""

    zone: ZoneKey
    vehicle_id: str
    accept_time: int
    service_time: int  # full estimated dwell credited at acceptance
    truncated_service: int  # time actually served before the tenure ended
    credited_service: int  # service_time or truncated_service per accounting mode
    ended_by: str  # replacement | departure | run_end


class DecisionRow(NamedTuple):
    """One committed-path log entry per arrival."""

    time: int
    vehicle_id: str
    service_time: int
    verdict_mask: int  # bit i set iff algorithm i's verdict was accept
    active: int
    committed: bool
    budget_remaining: int


@dataclass
class EnsembleState:
    """Mutable per-zone state of the ensemble selector."""

    zone: ZoneKey
    active: int
    cumulative: list[int]
    boundary_period: int
    next_boundary: int
    budget_remaining: int
    current_broker: ActiveBroker | None = None
    rejected: set[str] = field(default_factory=set)
    switch_count: int = 0  # broker replacements (subscriber moves)
    algorithm_switches: int = 0  # active-pointer changes at boundaries


def ensemble_init(
    seed: int,
    zone: ZoneKey,
    budget: int,
    boundary_period: int,
    start_time: int,
    n_algorithms: int = len(DEFAULT_PERCENTILES),
) -> EnsembleState:
    """Fresh ensemble state; the initial active algorithm is a seeded uniform
    draw keyed by (seed, zone numeric id), so zones draw independently and
    the whole run is reproducible."""
    if budget < 0:
        raise ValueError("budget must be >= 0")
    if boundary_period <= 0:
        raise ValueError("boundary_period must be > 0")
    rng = np.random.default_rng((seed, zone.numeric_id))
    return EnsembleState(
        zone=zone,
        active=int(rng.integers(n_algorithms)),
        cumulative=[0] * n_algorithms,
        boundary_period=boundary_period,
        next_boundary=start_time + boundary_period,
        budget_remaining=budget,
    )


def _close_broker(
    state: EnsembleState, end_time: int, ended_by: str, accounting: str
) -> BrokerAssignment:
    b = state.current_broker
    assert b is not None
    if ended_by == REPLACEMENT:
        truncated = min(b.service_time, end_time - b.accept_time)
    else:
        truncated = b.service_time
    state.current_broker = None
    return BrokerAssignment(
        zone=state.zone,
        vehicle_id=b.vehicle_id,
        accept_time=b.accept_time,
        service_time=b.service_time,
        truncated_service=truncated,
        credited_service=b.service_time if accounting == CREDITED else truncated,
        ended_by=ended_by,
    )


def ensemble_on_arrival(
    state: EnsembleState,
    event: ArrivalEvent,
    taus: Sequence[int],
    accounting: str = CREDITED,
) -> tuple[bool, BrokerAssignment | None]:
    """Apply one arrival: passive bookkeeping for every algorithm, committed
    decision for the active one.

    Every algorithm whose verdict is accept adds the service time to its
    cumulative counter, regardless of budget or the rejected set. The
    committed decision follows the active algorithm only, and commits an
    acceptance only when the vehicle was never rejected here and budget
    remains; otherwise the vehicle is rejected permanently. Returns
    (committed acceptance, closed assignment if a broker was replaced).
    """
    s = event.service_time
    for i, tau in enumerate(taus):
        if tbo_decide(s, tau):
            state.cumulative[i] += s

    committed = (
        tbo_decide(s, taus[state.active])
        and event.vehicle_id not in state.rejected
        and state.budget_remaining > 0
    )
    closed = None
    if committed:
        if state.current_broker is not None:
            closed = _close_broker(state, event.entry_time, REPLACEMENT, accounting)
            state.switch_count += 1
        state.current_broker = ActiveBroker(event.vehicle_id, event.entry_time, s)
        state.budget_remaining -= 1
    else:
        state.rejected.add(event.vehicle_id)
    return committed, closed


def ensemble_on_boundary(state: EnsembleState, now: int) -> None:
    """Boundary step: move the active pointer to the cumulative-service argmax
    (keeping the current algorithm on ties, lowest index otherwise) and reset
    every cumulative counter to zero."""
    if now < state.next_boundary:
        raise ValueError("boundary processed before it is due")
    best_value = max(state.cumulative)
    if state.cumulative[state.active] != best_value:
        state.active = state.cumulative.index(best_value)
        state.algorithm_switches += 1
    state.cumulative = [0] * len(state.cumulative)
    state.next_boundary += state.boundary_period


@dataclass
class ZoneRunResult:
    """Outcome of simulating one zone under one committed policy."""

    zone: ZoneKey
    credited_total: int
    truncated_total: int
    selections: int
    broker_switches: int
    algorithm_switches: int
    accept_times: np.ndarray
    accept_services: np.ndarray
    assignments: list[BrokerAssignment]
    interval_sums: np.ndarray | None = None  # [n_intervals, n_algorithms] passive sums
    active_series: np.ndarray | None = None  # active index per interval
    decisions: list[DecisionRow] | None = None
    final_state: EnsembleState | None = None


def _advance(
    state: EnsembleState,
    now: int,
    accounting: str,
    assignments: list[BrokerAssignment],
    snapshots: list[list[int]],
    actives: list[int],
) -> None:
    # Boundaries are clock driven and take precedence over a coincident arrival.
    while state.next_boundary <= now:
        snapshots.append(list(state.cumulative))
        ensemble_on_boundary(state, state.next_boundary)
        actives.append(state.active)
    if state.current_broker is not None and state.current_broker.end_time < now:
        assignments.append(_close_broker(state, state.current_broker.end_time, DEPARTURE, accounting))


def run_zone_ensemble(
    zone: ZoneKey,
    events: Sequence[ArrivalEvent],
    taus: Sequence[int],
    *,
    budget: int,
    boundary_period: int,
    start_time: int,
    run_end: int,
    seed: int | None = None,
    initial_active: int | None = None,
    accounting: str = CREDITED,
    capture_decisions: bool = True,
) -> ZoneRunResult:
    """Literal per-event ensemble simulation of one zone.

    ``events`` must be sorted by (entry time, vehicle id). Either ``seed``
    (for the keyed random initial algorithm) or ``initial_active`` must be
    given. Boundaries up to and including ``run_end`` are processed; a broker
    still seated afterwards is closed as departure or run_end.
    """
    if initial_active is None:
        if seed is None:
            raise ValueError("provide seed or initial_active")
        state = ensemble_init(seed, zone, budget, boundary_period, start_time, len(taus))
    else:
        state = EnsembleState(
            zone=zone,
            active=initial_active,
            cumulative=[0] * len(taus),
            boundary_period=boundary_period,
            next_boundary=start_time + boundary_period,
            budget_remaining=budget,
        )

    assignments: list[BrokerAssignment] = []
    snapshots: list[list[int]] = []
    actives: list[int] = [state.active]
    decisions: list[DecisionRow] | None = [] if capture_decisions else None
    accept_times: list[int] = []
    accept_services: list[int] = []

    for e in events:
        _advance(state, e.entry_time, accounting, assignments, snapshots, actives)
        mask = 0
        for i, tau in enumerate(taus):
            if tbo_decide(e.service_time, tau):
                mask |= 1 << i
        committed, closed = ensemble_on_arrival(state, e, taus, accounting)
        if closed is not None:
            assignments.append(closed)
        if committed:
            accept_times.append(e.entry_time)
            accept_services.append(e.service_time)
        if decisions is not None:
            decisions.append(
                DecisionRow(
                    time=e.entry_time,
                    vehicle_id=e.vehicle_id,
                    service_time=e.service_time,
                    verdict_mask=mask,
                    active=state.active,
                    committed=committed,
                    budget_remaining=state.budget_remaining,
                )
            )

    _advance(state, run_end, accounting, assignments, snapshots, actives)
    if state.current_broker is not None:
        ended_by = DEPARTURE if state.current_broker.end_time < run_end else RUN_END
        assignments.append(_close_broker(state, run_end, ended_by, accounting))

    run_len = run_end - start_time
    n_intervals = -(-run_len // boundary_period)
    interval_sums = np.zeros((n_intervals, len(taus)), dtype=np.int64)
    for j, snap in enumerate(snapshots):
        interval_sums[j] = snap
    if len(snapshots) < n_intervals:
        interval_sums[len(snapshots)] = state.cumulative
    active_series = np.array(actives, dtype=np.int64)

    return ZoneRunResult(
        zone=zone,
        credited_total=sum(accept_services),
        truncated_total=sum(a.truncated_service for a in assignments),
        selections=len(accept_services),
        broker_switches=state.switch_count,
        algorithm_switches=state.algorithm_switches,
        accept_times=np.array(accept_times, dtype=np.int64),
        accept_services=np.array(accept_services, dtype=np.int64),
        assignments=assignments,
        interval_sums=interval_sums,
        active_series=active_series,
        decisions=decisions,
        final_state=state,
    )


def _roll_active_series(
    interval_sums: np.ndarray, initial_active: int, run_len: int, boundary_period: int
) -> np.ndarray:
    """Active index after every boundary implied by per-interval passive sums.

    Entry 0 is the initial algorithm; entry j is the active algorithm right
    after the j-th boundary, i.e. during interval j.
    """
    n_boundaries = run_len // boundary_period
    active = np.empty(n_boundaries + 1, dtype=np.int64)
    active[0] = initial_active
    for j in range(1, n_boundaries + 1):
        sums = interval_sums[j - 1]
        best = int(sums.max())
        prev = int(active[j - 1])
        active[j] = prev if sums[prev] == best else int(np.argmax(sums))
    return active


def _blocked_by_prior_reject(codes: np.ndarray, rejects: np.ndarray) -> np.ndarray:
    """Per arrival: did an earlier arrival of the same vehicle get rejected."""
    if len(codes) == 0:
        return np.zeros(0, dtype=bool)
    order = np.argsort(codes, kind="stable")
    r = rejects[order].astype(np.int64)
    exclusive = np.cumsum(r) - r
    sorted_codes = codes[order]
    group_start = np.flatnonzero(np.r_[True, sorted_codes[1:] != sorted_codes[:-1]])
    sizes = np.diff(np.r_[group_start, len(r)])
    base = np.repeat(exclusive[group_start], sizes)
    blocked = np.empty(len(r), dtype=bool)
    blocked[order] = (exclusive - base) > 0
    return blocked


def _commit_path(
    za: ZoneArrivalArrays,
    committed_verdicts: np.ndarray,
    budget: int,
    run_end: int,
    accounting: str,
    capture_assignments: bool,
) -> tuple[np.ndarray, int, int, int, list[BrokerAssignment]]:
    """Shared committed-path bookkeeping given per-arrival active verdicts.

    Returns (accept indices, credited, truncated, broker switches, assignments).
    """
    blocked = _blocked_by_prior_reject(za.vehicle_codes, ~committed_verdicts)
    eligible = committed_verdicts & ~blocked
    accept_idx = np.flatnonzero(eligible)[: max(budget, 0)]
    entries = za.entries[accept_idx]
    services = za.services[accept_idx]
    credited = int(services.sum())
    n = len(accept_idx)

    # A sitting broker is replaced when the next acceptance lands while it is
    # still serving (dwell intervals are closed, so a same-second arrival
    # replaces it); otherwise it departed at its natural exit.
    replaced = np.zeros(n, dtype=bool)
    truncated = services.copy()
    if n > 1:
        replaced[:-1] = entries[1:] <= entries[:-1] + services[:-1]
        truncated[:-1] = np.where(
            replaced[:-1], np.minimum(services[:-1], entries[1:] - entries[:-1]), services[:-1]
        )
    switches = int(replaced.sum())
    truncated_total = int(truncated.sum())

    assignments: list[BrokerAssignment] = []
    if capture_assignments:
        for k in range(n):
            if replaced[k]:
                ended_by = REPLACEMENT
            else:
                ended_by = DEPARTURE if int(entries[k]) + int(services[k]) < run_end else RUN_END
            assignments.append(
                BrokerAssignment(
                    zone=za.zone,
                    vehicle_id=za.vehicle_ids[int(za.vehicle_codes[accept_idx[k]])],
                    accept_time=int(entries[k]),
                    service_time=int(services[k]),
                    truncated_service=int(truncated[k]),
                    credited_service=int(services[k]) if accounting == CREDITED else int(truncated[k]),
                    ended_by=ended_by,
                )
            )
    return accept_idx, credited, truncated_total, switches, assignments


def run_zone_fixed(
    za: ZoneArrivalArrays,
    tau: int,
    *,
    budget: int,
    run_end: int,
    accounting: str = CREDITED,
    capture_assignments: bool = True,
) -> ZoneRunResult:
    """Vectorized standalone run of one fixed-threshold algorithm in one zone."""
    verdicts = za.services > tau
    accept_idx, credited, truncated, switches, assignments = _commit_path(
        za, verdicts, budget, run_end, accounting, capture_assignments
    )
    return ZoneRunResult(
        zone=za.zone,
        credited_total=credited,
        truncated_total=truncated,
        selections=len(accept_idx),
        broker_switches=switches,
        algorithm_switches=0,
        accept_times=za.entries[accept_idx],
        accept_services=za.services[accept_idx],
        assignments=assignments,
    )


def verdict_masks(services: np.ndarray, taus: Sequence[int]) -> np.ndarray:
    """Bitmask per arrival: bit i set iff services > taus[i]."""
    masks = np.zeros(len(services), dtype=np.int64)
    for i, tau in enumerate(taus):
        masks |= (services > tau).astype(np.int64) << i
    return masks


def passive_interval_sums(
    za: ZoneArrivalArrays,
    taus: Sequence[int],
    start_time: int,
    run_end: int,
    boundary_period: int,
) -> np.ndarray:
    """Per-interval passive cumulative service for every algorithm (int64)."""
    run_len = run_end - start_time
    n_intervals = -(-run_len // boundary_period)
    sums = np.zeros((n_intervals, len(taus)), dtype=np.int64)
    idx = (za.entries - start_time) // boundary_period
    for i, tau in enumerate(taus):
        sel = za.services > tau
        np.add.at(sums[:, i], idx[sel], za.services[sel])
    return sums


def run_zone_ensemble_fast(
    za: ZoneArrivalArrays,
    taus: Sequence[int],
    *,
    budget: int,
    boundary_period: int,
    start_time: int,
    run_end: int,
    seed: int | None = None,
    initial_active: int | None = None,
    accounting: str = CREDITED,
    capture_decisions: bool = False,
    capture_assignments: bool = True,
) -> ZoneRunResult:
    """Vectorized ensemble run; bit-identical to :func:`run_zone_ensemble`."""
    if initial_active is None:
        if seed is None:
            raise ValueError("provide seed or initial_active")
        initial_active = ensemble_init(
            seed, za.zone, budget, boundary_period, start_time, len(taus)
        ).active

    run_len = run_end - start_time
    sums = passive_interval_sums(za, taus, start_time, run_end, boundary_period)
    active = _roll_active_series(sums, initial_active, run_len, boundary_period)
    algorithm_switches = int(np.count_nonzero(np.diff(active[: run_len // boundary_period + 1])))

    idx = (za.entries - start_time) // boundary_period
    act_per_arrival = active[np.minimum(idx, len(active) - 1)]
    masks = verdict_masks(za.services, taus)
    committed_verdicts = ((masks >> act_per_arrival) & 1).astype(bool)
    accept_idx, credited, truncated, switches, assignments = _commit_path(
        za, committed_verdicts, budget, run_end, accounting, capture_assignments
    )

    decisions = None
    if capture_decisions:
        accepted_flags = np.zeros(len(za), dtype=bool)
        accepted_flags[accept_idx] = True
        remaining = budget - np.cumsum(accepted_flags)
        decisions = [
            DecisionRow(
                time=int(za.entries[k]),
                vehicle_id=za.vehicle_ids[int(za.vehicle_codes[k])],
                service_time=int(za.services[k]),
                verdict_mask=int(masks[k]),
                active=int(act_per_arrival[k]),
                committed=bool(accepted_flags[k]),
                budget_remaining=int(remaining[k]),
            )
            for k in range(len(za))
        ]

    return ZoneRunResult(
        zone=za.zone,
        credited_total=credited,
        truncated_total=truncated,
        selections=len(accept_idx),
        broker_switches=switches,
        algorithm_switches=algorithm_switches,
        accept_times=za.entries[accept_idx],
        accept_services=za.services[accept_idx],
        assignments=assignments,
        interval_sums=sums,
        active_series=active,
        decisions=decisions,
    )
