"""
Generalized-cost trip planning.

A plan is a sequence of ride legs; consecutive legs meet at the same stop or
at the two ends of one walking transfer link.  Cost per plan::

    b_L * ride + b_T * transfers + b_W * sum(headway / 2 per boarding, in steps)

where ``ride`` is the number of ride edges (``travel_measure="edges"``) or the
expected number of onboard steps at off-peak speed (``"steps"``).  Crowding is
not known at planning time and contributes nothing.

Ties are broken by fewer transfers, then the lexicographically smallest
route-id sequence, then the smallest leg index tuples, which makes the
search a total order and the output fully deterministic.

The search compares costs as integers quantized to 1e-9, so summation order
cannot split or merge ties; the reported ``planned_cost`` is recomputed in
floating point from the chosen legs.  Two backends run the same label
search: a numba kernel (default when available) and a dict/heapq version.
They return identical plans.
"""
from __future__ import annotations

import heapq
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .data import SensitivityProfile, SimConfig, TripRecord
from .network import FORWARD, REVERSE, Network

_QUANT = 1e9


@dataclass(frozen=True)
class Leg:
    route_id: str
    direction: int  # FORWARD (+1) or REVERSE (-1)
    board_idx: int
    alight_idx: int
    board_stop: str
    alight_stop: str

    @property
    def n_edges(self) -> int:
        return abs(self.alight_idx - self.board_idx)


@dataclass(frozen=True)
class TripPlan:
    legs: tuple[Leg, ...]
    planned_cost: float
    feasible: bool

    @property
    def transfers(self) -> int:
        return max(0, len(self.legs) - 1)

    @property
    def routes(self) -> tuple[str, ...]:
        return tuple(leg.route_id for leg in self.legs)

    def uses_any(self, route_ids) -> bool:
        return any(leg.route_id in route_ids for leg in self.legs)

    def to_json(self) -> dict:
        return {
            "feasible": self.feasible,
            "cost": self.planned_cost if self.feasible else None,
            "legs": [
                {"route_id": l.route_id, "direction": "forward" if l.direction == FORWARD else "reverse",
                 "board_stop": l.board_stop, "alight_stop": l.alight_stop,
                 "board_idx": l.board_idx, "alight_idx": l.alight_idx}
                for l in self.legs
            ],
        }


INFEASIBLE = TripPlan((), math.inf, False)


class PlannerIndex:
    """Precomputed per-network lookup tables shared by all searches on that network."""

    def __init__(self, network: Network, config: SimConfig, backend: str | None = None):
        backend = backend or ("numba" if kernels.label_search_nb is not None else "python")
        if backend not in ("numba", "python"):
            raise ValueError(f"unknown planner backend {backend!r}")
        if backend == "numba" and kernels.label_search_nb is None:
            raise ValueError("numba backend requested but numba is unavailable or disabled")
        self.backend = backend
        self.network = network
        self.config = config
        self.stop_pos = network.node_index
        self.n_stops = len(network.nodes)
        self.route_ids = list(network.routes)
        self.route_stops = []
        self.ride_units = []  # per route: per-segment ride measure (edges or expected steps)
        self.wait_steps = []
        # boardings[stop] -> list of (route_k, direction, idx)
        self.boardings = [[] for _ in range(self.n_stops)]
        for k, rid in enumerate(self.route_ids):
            r = network.routes[rid]
            stops = [self.stop_pos[s] for s in r.stops]
            cum = network.cum_m[rid]
            if config.travel_measure == "edges":
                units = [1.0] * (len(stops) - 1)
            else:
                m_per_step = r.v_off * 1000.0 / 60.0 * config.step_min
                units = [(cum[i + 1] - cum[i]) / m_per_step for i in range(len(stops) - 1)]
            self.route_stops.append(stops)
            self.ride_units.append(units)
            self.wait_steps.append(r.headway_min / 2.0 / config.step_min)
            for i, s in enumerate(stops):
                if i < len(stops) - 1:
                    self.boardings[s].append((k, FORWARD, i))
                if i > 0:
                    self.boardings[s].append((k, REVERSE, i))
        self.walk = [[] for _ in range(self.n_stops)]
        for e in network.transfer_edges:
            a, b = self.stop_pos[e.stop_a], self.stop_pos[e.stop_b]
            self.walk[a].append(b)
            self.walk[b].append(a)
        if backend == "numba":
            self._build_arrays()

    def _build_arrays(self) -> None:
        lens = [len(st) for st in self.route_stops]
        self.r_len = np.array(lens, dtype=np.int64)
        self.r_off = np.concatenate([[0], np.cumsum(lens)[:-1]]).astype(np.int64) if lens else np.zeros(0, np.int64)
        self.r_stops = np.array([s for st in self.route_stops for s in st], dtype=np.int64)
        self.pos_route = np.repeat(np.arange(len(lens), dtype=np.int64), lens)
        order = sorted(range(len(self.route_ids)), key=self.route_ids.__getitem__)
        self.rank = np.empty(len(order), dtype=np.int64)
        self.rank[order] = np.arange(len(order))
        self.ident = np.arange(len(order), dtype=np.int64)
        flat = [(s, k, d, i) for s in range(self.n_stops) for k, d, i in self.boardings[s]]
        self.b_ptr = np.searchsorted(np.array([f[0] for f in flat], dtype=np.int64),
                                     np.arange(self.n_stops + 1)).astype(np.int64)
        self.b_route = np.array([f[1] for f in flat], dtype=np.int64)
        self.b_dir = np.array([f[2] for f in flat], dtype=np.int64)
        self.b_idx = np.array([f[3] for f in flat], dtype=np.int64)
        self.w_ptr = np.concatenate([[0], np.cumsum([len(w) for w in self.walk])]).astype(np.int64)
        self.w_nbr = np.array([x for w in self.walk for x in w], dtype=np.int64)

    def _quantized(self, beta):
        b_l, b_t, b_w, _ = beta
        seg_q = np.zeros(len(self.r_stops), dtype=np.int64)
        for k, units in enumerate(self.ride_units):
            off = self.r_off[k]
            seg_q[off:off + len(units)] = [round(b_l * u * _QUANT) for u in units]
        board_q = np.array([round(b_w * w * _QUANT) for w in self.wait_steps], dtype=np.int64)
        return seg_q, board_q, round(b_t * _QUANT)

    def _search(self, origin: int, beta, cap: int | None, target: int | None):
        """Label-setting search from ``origin``.

        Returns ``best`` mapping state -> (key, raw_cost).  States are tuples:
        ``(0, stop, phase, t)`` at a stop (phase 0 start, 1 alighted, 2 walked),
        ``(2, route_k, direction, idx, t)`` just boarded at ``idx`` and
        ``(1, route_k, direction, idx, t)`` riding into ``idx``; ``t`` is the
        transfer count when ``cap`` is set and 0 otherwise.  Keeping boarding
        apart from riding matters: a cheap boarding label at a stop must not
        shadow a rider who needs to alight there.
        """
        b_l, b_t, b_w, _ = beta
        route_ids = self.route_ids
        # the ordering key uses costs quantized to 1e-9 integer units, so sums are exact and ties are
        # reproducible; the float cost travels alongside for reporting
        ride_q = [[round(b_l * u * _QUANT) for u in units] for units in self.ride_units]
        board_q = [round(b_w * w * _QUANT) for w in self.wait_steps]
        xfer_q = round(b_t * _QUANT)
        best = {}
        start = (0, origin, 0, 0)
        key0 = (0, 0, (), (), -1)
        heap = [(key0, 0.0, start)]
        best[start] = (key0, 0.0)
        push = heapq.heappush
        pop = heapq.heappop
        get = best.get

        while heap:
            key, cost, state = pop(heap)
            if best[state][0] != key:
                continue
            q, transfers, rseq, legs, board = key
            if state[0] == 0:
                _, s, phase, tcount = state
                if target is not None and phase == 1 and s == target:
                    break
                if phase == 1:
                    for s2 in self.walk[s]:
                        st = (0, s2, 2, tcount)
                        cur = get(st)
                        if cur is None or key < cur[0]:
                            best[st] = (key, cost)
                            push(heap, (key, cost, st))
                nt = transfers + (1 if legs else 0)
                if cap is not None and nt > cap:
                    continue
                extra_q, extra = (xfer_q, b_t) if legs else (0, 0.0)
                for rk, d, i in self.boardings[s]:
                    q2 = q + board_q[rk] + extra_q
                    st = (2, rk, d, i, nt if cap is not None else 0)
                    cur = get(st)
                    if cur is not None and cur[0][0] < q2:
                        continue
                    k2 = (q2, nt, rseq + (route_ids[rk],), legs, i)
                    if cur is None or k2 < cur[0]:
                        c2 = cost + b_w * self.wait_steps[rk] + extra
                        best[st] = (k2, c2)
                        push(heap, (k2, c2, st))
            else:
                kind, rk, d, i, tcount = state
                stops = self.route_stops[rk]
                j = i + d
                if 0 <= j < len(stops):
                    seg = i if d == FORWARD else j
                    q2 = q + ride_q[rk][seg]
                    st = (1, rk, d, j, tcount)
                    cur = get(st)
                    if cur is None or cur[0][0] >= q2:
                        k2 = (q2, transfers, rseq, legs, board)
                        if cur is None or k2 < cur[0]:
                            c2 = cost + b_l * self.ride_units[rk][seg]
                            best[st] = (k2, c2)
                            push(heap, (k2, c2, st))
                if kind == 1:
                    st = (0, stops[i], 1, tcount)
                    cur = get(st)
                    if cur is None or cur[0][0] >= q:
                        k2 = (q, transfers, rseq, legs + ((route_ids[rk], d, board, i),), -1)
                        if cur is None or k2 < cur[0]:
                            best[st] = (k2, cost)
                            push(heap, (k2, cost, st))
        return best

    # Both backends answer with ``best(dest) -> (cost_q, transfers, legs)`` where legs are
    # (route_k, direction, board_idx, alight_idx) tuples, or None when unreachable.

    def _dict_best(self, origin: int, beta, cap: int | None, target: int | None):
        best = self._search(origin, beta, cap, target)
        kpos = {rid: k for k, rid in enumerate(self.route_ids)}

        def lookup(dest):
            if cap is None:
                entry = best.get((0, dest, 1, 0))
            else:
                found = [best[st] for t in range(cap + 1) if (st := (0, dest, 1, t)) in best]
                entry = min(found, key=lambda e: e[0]) if found else None
            if entry is None:
                return None
            key = entry[0]
            return key[0], key[1], tuple((kpos[rid], d, b, a) for rid, d, b, a in key[3])

        return lookup

    def _kernel_best(self, origin: int, beta, cap: int | None, target: int | None):
        seg_q, board_q, xfer_q = self._quantized(beta)
        lab_q, lab_t, parent, board, per_layer = kernels.label_search_nb(
            self.n_stops, self.r_off, self.r_len, self.r_stops, self.pos_route, seg_q, board_q, xfer_q,
            self.rank, self.b_ptr, self.b_route, self.b_dir, self.b_idx, self.w_ptr, self.w_nbr,
            origin, -1 if target is None else target, -1 if cap is None else cap)
        inf = np.iinfo(np.int64).max
        layers = 1 if cap is None else cap + 1

        def lookup(dest):
            cands = [(int(lab_q[st]), int(lab_t[st]), st)
                     for t in range(layers) if lab_q[st := t * per_layer + self.n_stops + dest] != inf]
            if not cands:
                return None
            q, t, st = min(cands)
            legs = kernels._chain_legs(st, parent, board, per_layer, self.n_stops, len(self.r_stops),
                                       self.pos_route, self.r_off, self.ident)
            return q, t, tuple(tuple(int(x) for x in row) for row in legs)

        return lookup

    def _best(self, origin: int, beta, cap: int | None, target: int | None):
        if self.backend == "numba":
            return self._kernel_best(origin, beta, cap, target)
        return self._dict_best(origin, beta, cap, target)

    def _plan_from(self, legs, beta) -> TripPlan:
        """Build the plan and its float cost, accumulated in travel order."""
        b_l, b_t, b_w, _ = beta
        cost = 0.0
        out = []
        for n, (k, d, b, a) in enumerate(legs):
            cost = cost + b_w * self.wait_steps[k] + (b_t if n else 0.0)
            units = self.ride_units[k]
            for i in (range(b, a) if d == FORWARD else range(b - 1, a - 1, -1)):
                cost = cost + b_l * units[i]
            rid = self.route_ids[k]
            stops = self.network.routes[rid].stops
            out.append(Leg(rid, d, b, a, stops[b], stops[a]))
        return TripPlan(tuple(out), cost, True)

    def _resolve(self, found, o: int, d: int, beta) -> TripPlan:
        if found is None:
            return INFEASIBLE
        if found[1] > self.config.max_transfers:
            capped = self._best(o, beta, self.config.max_transfers, None)(d)
            return INFEASIBLE if capped is None else self._plan_from(capped[2], beta)
        return self._plan_from(found[2], beta)

    def plan(self, origin: str, dest: str, beta) -> TripPlan:
        if origin not in self.stop_pos or dest not in self.stop_pos:
            raise KeyError(f"unknown stop in OD pair ({origin!r}, {dest!r})")
        o, d = self.stop_pos[origin], self.stop_pos[dest]
        return self._resolve(self._best(o, beta, None, d)(d), o, d, beta)

    def plan_many(self, origin: str, dests: Sequence[str], beta) -> dict[str, TripPlan]:
        """Plans from one origin to several destinations with a single one-to-all search."""
        o = self.stop_pos[origin]
        lookup = self._best(o, beta, None, None)
        out = {}
        for dest in dests:
            d = self.stop_pos[dest]
            out[dest] = self._resolve(lookup(d), o, d, beta)
        return out


def plan_trip(network: Network, trip: TripRecord, profile: SensitivityProfile,
              config: SimConfig | None = None, index: PlannerIndex | None = None) -> TripPlan:
    config = config or SimConfig()
    index = index or PlannerIndex(network, config)
    return index.plan(trip.origin_stop, trip.dest_stop, profile.beta(trip.group))


def plan_all(network: Network, trips: Sequence[TripRecord], profile: SensitivityProfile,
             config: SimConfig | None = None, backend: str | None = None) -> list[TripPlan]:
    """Plan every trip; trips sharing origin and group share one search."""
    config = config or SimConfig()
    index = PlannerIndex(network, config, backend)
    by_origin = defaultdict(list)
    for i, t in enumerate(trips):
        by_origin[(t.origin_stop, t.group)].append(i)
    plans: list[TripPlan | None] = [None] * len(trips)
    for (origin, group), idxs in sorted(by_origin.items()):
        dests = sorted({trips[i].dest_stop for i in idxs})
        found = index.plan_many(origin, dests, profile.beta(group))
        for i in idxs:
            plans[i] = found[trips[i].dest_stop]
    return plans


def replan_affected(network_after: Network, plans_before: Sequence[TripPlan], trips: Sequence[TripRecord],
                    profile: SensitivityProfile, config: SimConfig | None = None) -> list[TripPlan]:
    """Replan only trips whose current plan rides a route no longer in ``network_after``."""
    config = config or SimConfig()
    active = network_after.routes
    affected = [i for i, p in enumerate(plans_before)
                if p.feasible and any(leg.route_id not in active for leg in p.legs)]
    out = list(plans_before)
    if not affected:
        return out
    sub = [trips[i] for i in affected]
    fresh = plan_all(network_after, sub, profile, config)
    for i, p in zip(affected, fresh):
        out[i] = p
    return out
