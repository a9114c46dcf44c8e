"""
Fixed-step bus/passenger simulation.

The global clock advances in ``step_min`` steps.  Within each step, in order:
passengers whose departure falls in the step join their first boarding queue,
buses due for dispatch are created at the first stop of their route, every
active bus advances along its route (arrivals are processed in travel order:
alighting first, then FIFO boarding up to capacity), and finally per-step
accumulators (onboard steps, crowded steps, load ratios) are updated.

A bus is dispatched forward every ``headway_min`` from ``first_departure_min``,
reverses at the far terminal and retires when it returns to its first stop.
"""
from __future__ import annotations

import bisect
import csv
import json
import math
from collections import defaultdict
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import GROUPS, ConfigError, Dataset, SensitivityProfile, SimConfig
from .network import FORWARD, REVERSE, Network
from .planner import TripPlan

_EPS_M = 1e-9

COMPLETED = "Completed"
FAILED = "Failed"


@dataclass(frozen=True)
class SpeedProfile:
    v_off: float  # km/h
    t_m: float = 480.0
    t_e: float = 1050.0
    sigma: float = 60.0
    k: float = 0.4
    v_min: float = 8.0

    def __post_init__(self):
        if not self.v_min > 0:
            raise ConfigError("v_min must be > 0")
        if self.v_off < self.v_min:
            raise ConfigError(f"v_off {self.v_off} km/h is below v_min {self.v_min} km/h")
        if not 0 <= self.k < 1:
            raise ConfigError("k must lie in [0, 1)")
        if not self.sigma > 0:
            raise ConfigError("sigma must be > 0")
        if not self.t_m < self.t_e:
            raise ConfigError("t_m must precede t_e")

    @classmethod
    def from_config(cls, config: SimConfig, v_off: float) -> "SpeedProfile":
        return cls(v_off, config.t_m, config.t_e, config.sigma, config.k, config.v_min)


def speed_at(profile: SpeedProfile, t):
    """Two-peak time-of-day speed in km/h at minute ``t`` (scalar or array)."""
    if np.ndim(t) == 0:
        zm = (t - profile.t_m) / profile.sigma
        ze = (t - profile.t_e) / profile.sigma
        v = profile.v_off * (1.0 - profile.k * (math.exp(-zm * zm) + math.exp(-ze * ze)))
        return max(profile.v_min, v)
    t = np.asarray(t, dtype=np.float64)
    zm = (t - profile.t_m) / profile.sigma
    ze = (t - profile.t_e) / profile.sigma
    v = profile.v_off * (1.0 - profile.k * (np.exp(-zm * zm) + np.exp(-ze * ze)))
    return np.maximum(profile.v_min, v)


def compute_dissatisfaction(L, T, W, C, profile: SensitivityProfile, group: str) -> float:
    b1, b2, b3, b4 = profile.beta(group)
    return b1 * L + b2 * T + b3 * W + b4 * C


@dataclass(frozen=True)
class BusState:
    bus_id: int
    route_id: str
    direction: int
    segment_index: int  # index of the stop the bus last left
    residual_m: float  # metres to the next stop
    capacity: int
    onboard: tuple = ()
    dispatched_min: float = 0.0
    active: bool = True

    @property
    def next_index(self) -> int:
        return self.segment_index + self.direction


@dataclass(frozen=True)
class Arrival:
    stop_idx: int
    time_min: float
    arriving_direction: int
    departing_direction: int
    retire: bool = False


def advance_bus(bus: BusState, t: float, profile: SpeedProfile, cum_m: Sequence[float],
                dt_min: float) -> tuple[BusState, list[Arrival]]:
    """Move ``bus`` for ``dt_min`` minutes at the speed in force at ``t``.

    Every stop reached emits an :class:`Arrival` in travel order; distance left
    over after the last reached stop carries into the next segment.  Returns a
    new state; ``bus`` is not modified.
    """
    if not bus.active:
        return bus, []
    v = speed_at(profile, t)
    m_per_min = v * 1000.0 / 60.0
    dist = m_per_min * dt_min
    last = len(cum_m) - 1
    seg_i, d, residual = bus.segment_index, bus.direction, bus.residual_m
    traveled = 0.0
    events = []
    active = True
    while True:
        remaining = dist - traveled
        if remaining + _EPS_M < residual:
            residual -= remaining
            break
        traveled += residual
        arr = seg_i + d
        when = t + (traveled / m_per_min if m_per_min > 0 else 0.0)
        if d == FORWARD and arr == last:
            events.append(Arrival(arr, when, d, REVERSE))
            d = REVERSE
        elif d == REVERSE and arr == 0:
            events.append(Arrival(arr, when, d, d, retire=True))
            active = False
            seg_i, residual = arr, 0.0
            break
        else:
            events.append(Arrival(arr, when, d, d))
        seg_i = arr
        residual = abs(cum_m[seg_i + d] - cum_m[seg_i])
    return replace(bus, segment_index=seg_i, direction=d, residual_m=max(residual, 0.0), active=active), events


def process_stop(onboard: Sequence[int], waiting: Sequence[int], capacity: int,
                 alights_here, may_board) -> tuple[list[int], list[int], list[int], list[int]]:
    """Alight first, then board eligible waiters in queue order up to capacity.

    ``alights_here(p)`` and ``may_board(p)`` are predicates over passenger ids.
    Returns ``(onboard_after, alighted, boarded, still_waiting)``.
    """
    staying, alighted = [], []
    for p in onboard:
        (alighted if alights_here(p) else staying).append(p)
    boarded, still = [], []
    room = capacity - len(staying)
    for p in waiting:
        if room > 0 and may_board(p):
            boarded.append(p)
            room -= 1
        else:
            still.append(p)
    assert len(staying) + len(boarded) <= capacity
    return staying + boarded, alighted, boarded, still


@dataclass(frozen=True)
class TripOutcome:
    passenger_id: str
    group: str
    status: str
    L: float
    T: int
    W: int
    C: int
    D: float | None
    in_vehicle_min: float
    waiting_min: float
    crowded_min: float
    segments: int = 0
    transfer_wait: int = 0  # the part of W spent waiting at transfer stops
    reason: str = ""


@dataclass(frozen=True)
class GroupAggregate:
    n_trips: int
    n_completed: int
    in_vehicle_min: float
    transfers: float
    waiting_min: float
    crowded_min: float
    mean_d: float
    failure_rate: float
    mean_load_ratio: float


@dataclass(frozen=True)
class AggregateReport:
    groups: dict  # group -> GroupAggregate
    overall: GroupAggregate
    bus_load_ratio: float  # mean load/capacity over all in-service bus-steps

    def to_json(self) -> dict:
        def block(a: GroupAggregate):
            return {k: _r(getattr(a, k)) for k in a.__dataclass_fields__}

        return {
            "groups": {g: block(a) for g, a in self.groups.items()},
            "overall": block(self.overall),
            "bus_load_ratio": _r(self.bus_load_ratio),
        }


def _r(x):
    return round(x, 10) if isinstance(x, float) else x


@dataclass
class SimulationResult:
    outcomes: list[TripOutcome]
    report: AggregateReport
    events: list | None = None
    end_min: float = 0.0


class _Pax:
    __slots__ = ("legs", "leg", "join_step", "eligible_step", "board_step", "board_time",
                 "L", "T", "W", "C", "WX", "edges", "ivt", "boardings", "status", "reason", "load_sum", "load_n")

    def __init__(self, legs):
        self.legs = legs
        self.leg = 0
        self.join_step = 0
        self.eligible_step = 0
        self.board_step = 0
        self.board_time = 0.0
        self.L = 0
        self.W = 0
        self.C = 0
        self.WX = 0  # waiting steps at second and later boardings
        self.edges = 0
        self.ivt = 0.0
        self.boardings = 0
        self.status = None
        self.reason = ""
        self.load_sum = 0.0
        self.load_n = 0


def run_simulation(dataset: Dataset, network: Network, plans: Sequence[TripPlan],
                   profile: SensitivityProfile, config: SimConfig | None = None,
                   record_events: bool = False) -> SimulationResult:
    """Simulate every trip in ``dataset.trips`` following ``plans`` (same order)."""
    config = config or SimConfig()
    trips = dataset.trips
    if len(plans) != len(trips):
        raise ValueError("plans and trips differ in length")
    step = config.step_min
    events = [] if record_events else None
    pax = [_Pax(p.legs) for p in plans]
    for i, p in enumerate(plans):
        if p.feasible:
            missing = [leg.route_id for leg in p.legs if leg.route_id not in network.routes]
            if missing:
                raise ValueError(f"plan of {trips[i].passenger_id!r} uses inactive route {missing[0]!r}")

    routes = list(network.routes.values())
    profiles = {r.route_id: SpeedProfile.from_config(config, r.v_off) for r in routes}
    n = len(trips)
    if n == 0:
        return SimulationResult([], _aggregate([], [], 0.0, 0), events, 0.0)

    k_pax = int(math.floor(min(t.departure_min for t in trips) / step))
    k0 = min([k_pax] + [int(math.floor(r.first_departure_min / step)) for r in routes])
    k_end = k_pax + int(math.ceil(config.horizon_min / step))

    # passengers sorted by (departure step, passenger_id) for deterministic spawn order
    spawn_order = sorted(range(n), key=lambda i: (int(math.floor(trips[i].departure_min / step)),
                                                   trips[i].passenger_id))
    spawn_ptr = 0
    queues = defaultdict(list)  # (route_id, direction, board_idx) -> sorted [(join_step, pid, i)]
    next_dispatch = {r.route_id: r.first_departure_min for r in routes}
    buses: list[BusState] = []
    bus_seq = 0
    done = 0
    load_sum = 0.0
    load_n = 0

    def log(*item):
        if events is not None:
            events.append(item)

    def enqueue(i, k, eligible):
        pp = pax[i]
        leg = pp.legs[pp.leg]
        pp.join_step = k
        pp.eligible_step = eligible
        bisect.insort(queues[(leg.route_id, leg.direction, leg.board_idx)], (k, trips[i].passenger_id, i))

    def finish(i, k, status, reason=""):
        nonlocal done
        pp = pax[i]
        pp.status = status
        pp.reason = reason
        done += 1
        log(k, "finish", trips[i].passenger_id, status, reason)

    def handle_arrival(bus: BusState, ev: Arrival, k: int) -> BusState:
        rid = bus.route_id
        stop_idx = ev.stop_idx
        onboard = bus.onboard
        for i in onboard:
            pax[i].edges += 1

        def alights_here(i):
            leg = pax[i].legs[pax[i].leg]
            return leg.alight_idx == stop_idx and leg.direction == ev.arriving_direction

        key = (rid, ev.departing_direction, stop_idx)
        waiting = [] if ev.retire else queues.get(key, [])

        def may_board(entry):
            return pax[entry[2]].eligible_step <= k

        new_onboard, alighted, boarded, still = process_stop(onboard, waiting, bus.capacity,
                                                             alights_here, may_board)
        staying = new_onboard[: len(new_onboard) - len(boarded)]
        # queue update must precede re-enqueueing of alighted transfer passengers
        if boarded:
            if still:
                queues[key] = still
            else:
                del queues[key]
        for i in alighted:
            pp = pax[i]
            pp.ivt += ev.time_min - pp.board_time
            pp.L += k - pp.board_step
            log(k, "alight", trips[i].passenger_id, rid, stop_idx, bus.bus_id, ev.time_min)
            pp.leg += 1
            if pp.leg == len(pp.legs):
                finish(i, k, COMPLETED)
            else:
                enqueue(i, k, k + 1)
        new_ids = []
        for entry in boarded:
            i = entry[2]
            pp = pax[i]
            pp.W += k - pp.join_step
            if pp.boardings:
                pp.WX += k - pp.join_step
            pp.boardings += 1
            pp.board_step = k
            pp.board_time = ev.time_min
            new_ids.append(i)
            log(k, "board", trips[i].passenger_id, rid, stop_idx, bus.bus_id, ev.time_min)
        return replace(bus, onboard=tuple(staying) + tuple(new_ids))

    k = k0
    while k < k_end:
        t = k * step
        t_next = t + step
        # 1. spawn
        while spawn_ptr < n:
            i = spawn_order[spawn_ptr]
            if trips[i].departure_min >= t_next:
                break
            spawn_ptr += 1
            log(k, "spawn", trips[i].passenger_id)
            if not plans[i].feasible:
                finish(i, k, FAILED, "no_path")
            else:
                enqueue(i, k, k)
        # 2. dispatch
        for r in routes:
            while next_dispatch[r.route_id] < t_next:
                tau = next_dispatch[r.route_id]
                next_dispatch[r.route_id] = tau + r.headway_min
                if tau < t:
                    continue
                cum = network.cum_m[r.route_id]
                bus = BusState(bus_seq, r.route_id, FORWARD, 0, cum[1] - cum[0], r.capacity, (), tau)
                bus_seq += 1
                log(k, "dispatch", bus.bus_id, r.route_id, tau)
                bus = handle_arrival(bus, Arrival(0, tau, FORWARD, FORWARD), k)
                buses.append(bus)
        # 3. move
        moved = []
        for bus in buses:
            dt = step if bus.dispatched_min <= t else t_next - bus.dispatched_min
            bus, evs = advance_bus(bus, t, profiles[bus.route_id], network.cum_m[bus.route_id], dt)
            for ev in evs:
                bus = handle_arrival(bus, ev, k)
            moved.append(bus)
        # 4. end-of-step accumulators
        buses = []
        for bus in moved:
            if not bus.active:
                continue
            ratio = len(bus.onboard) / bus.capacity
            crowded = ratio >= config.crowding_threshold
            load_sum += ratio
            load_n += 1
            log(k, "load", bus.bus_id, len(bus.onboard), bus.capacity)
            for i in bus.onboard:
                pp = pax[i]
                pp.load_sum += ratio
                pp.load_n += 1
                if crowded:
                    pp.C += 1
            buses.append(bus)
        k += 1
        if done == n:
            break

    for i in range(n):
        if pax[i].status is None:
            pp = pax[i]
            pp.status, pp.reason = FAILED, "horizon"
            log(k, "finish", trips[i].passenger_id, FAILED, "horizon")

    outcomes = []
    for i, trip in enumerate(trips):
        pp = pax[i]
        T = max(0, pp.boardings - 1)
        L = pp.edges if config.travel_measure == "edges" else pp.L
        if pp.status == COMPLETED:
            D = compute_dissatisfaction(L, T, pp.W, pp.C, profile, trip.group)
        else:
            D = None
        outcomes.append(TripOutcome(
            passenger_id=trip.passenger_id, group=trip.group, status=pp.status,
            L=L, T=T, W=pp.W, C=pp.C, D=D,
            in_vehicle_min=pp.ivt, waiting_min=pp.W * step, crowded_min=pp.C * step,
            segments=pp.edges, transfer_wait=pp.WX, reason=pp.reason,
        ))
    exp_load = [(p.load_sum, p.load_n) for p in pax]
    report = _aggregate(outcomes, exp_load, load_sum, load_n)
    return SimulationResult(outcomes, report, events, k * step)


def _mean(xs) -> float:
    return float(sum(xs) / len(xs)) if xs else 0.0


def _group_block(rows, loads) -> GroupAggregate:
    done = [o for o in rows if o.status == COMPLETED]
    ls = sum(l for l, _ in loads)
    ln = sum(c for _, c in loads)
    return GroupAggregate(
        n_trips=len(rows),
        n_completed=len(done),
        in_vehicle_min=_mean([o.in_vehicle_min for o in done]),
        transfers=_mean([o.T for o in done]),
        waiting_min=_mean([o.waiting_min for o in done]),
        crowded_min=_mean([o.crowded_min for o in done]),
        mean_d=_mean([o.D for o in done]),
        failure_rate=(len(rows) - len(done)) / len(rows) if rows else 0.0,
        mean_load_ratio=ls / ln if ln else 0.0,
    )


def _aggregate(outcomes, exp_load, load_sum, load_n) -> AggregateReport:
    groups = {}
    for g in GROUPS:
        idx = [i for i, o in enumerate(outcomes) if o.group == g]
        groups[g] = _group_block([outcomes[i] for i in idx], [exp_load[i] for i in idx])
    overall = _group_block(outcomes, exp_load)
    return AggregateReport(groups, overall, load_sum / load_n if load_n else 0.0)


OUTCOME_COLUMNS = ("passenger_id", "group", "status", "L", "T", "W", "C", "D",
                   "in_vehicle_min", "waiting_min", "crowded_min")


def _cell(x):
    if x is None:
        return ""
    if isinstance(x, float):
        return f"{x:.10g}"
    return str(x)


def write_outcomes_csv(outcomes: Sequence[TripOutcome], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(OUTCOME_COLUMNS)
        for o in outcomes:
            w.writerow([_cell(getattr(o, c)) for c in OUTCOME_COLUMNS])


def read_outcomes_csv(path) -> list[TripOutcome]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            out.append(TripOutcome(
                passenger_id=row["passenger_id"], group=row["group"], status=row["status"],
                L=float(row["L"]), T=int(float(row["T"])), W=int(float(row["W"])), C=int(float(row["C"])),
                D=float(row["D"]) if row["D"] else None,
                in_vehicle_min=float(row["in_vehicle_min"]), waiting_min=float(row["waiting_min"]),
                crowded_min=float(row["crowded_min"]),
            ))
    return out


def write_aggregates_json(report: AggregateReport, path, extra: dict | None = None) -> None:
    blob = report.to_json()
    if extra:
        blob.update(extra)
    Path(path).write_text(json.dumps(blob, indent=2, sort_keys=True) + "\n", encoding="utf-8")
