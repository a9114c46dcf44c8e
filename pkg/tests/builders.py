"""Small dataset builders and brute-force oracles shared by the tests."""
from __future__ import annotations

import itertools
import math
from collections import defaultdict, deque

import numpy as np

from buscut.data import GROUPS, Dataset, RouteDef, SimConfig, Stop, TripRecord
from buscut.network import FORWARD, REVERSE
from buscut.synth import _to_latlon

ORIGIN = (40.0, 116.0)


def stop_at(sid, x_m, y_m=0.0):
    return Stop(sid, *_to_latlon(ORIGIN, x_m, y_m))


def route(rid, stops, headway=10.0, capacity=50, v_off=24.0, first=0.0):
    return RouteDef(rid, tuple(stops), float(headway), int(capacity), float(v_off), float(first))


def trip(pid, o, d, t=0.0, group="General"):
    return TripRecord(pid, group, o, d, float(t))


def two_route_dataset(trips=()):
    """Two lines crossing at S2; A: S0-S1-S2-S3, B: S4-S2-S5, plus a slow direct C: S0-S5."""
    stops = [stop_at("S0", 0), stop_at("S1", 1000), stop_at("S2", 2000), stop_at("S3", 3000),
             stop_at("S4", 2000, 1500), stop_at("S5", 2000, -1500)]
    routes = [route("A", ["S0", "S1", "S2", "S3"]),
              route("B", ["S4", "S2", "S5"]),
              route("C", ["S0", "S5"], headway=60.0, v_off=10.0)]
    return Dataset(tuple(stops), tuple(routes), tuple(trips))


def random_fixture(rng: np.random.Generator, max_stops=12, max_routes=6, n_trips=12) -> Dataset:
    """Random small network: stops on a jittered grid (some within walking range), random routes."""
    n_stops = int(rng.integers(5, max_stops + 1))
    stops = []
    for i in range(n_stops):
        x = float(rng.integers(0, 5)) * 700 + float(rng.uniform(-120, 120))
        y = float(rng.integers(0, 4)) * 700 + float(rng.uniform(-120, 120))
        stops.append(stop_at(f"S{i:02d}", x, y))
    # nudge duplicates apart so no two stops share coordinates
    seen = set()
    for i, s in enumerate(stops):
        while (s.lat, s.lon) in seen:
            s = Stop(s.stop_id, s.lat + 1e-4, s.lon)
        seen.add((s.lat, s.lon))
        stops[i] = s
    ids = [s.stop_id for s in stops]
    routes = []
    n_routes = int(rng.integers(2, max_routes + 1))
    for r in range(n_routes):
        k = int(rng.integers(2, min(6, n_stops) + 1))
        seq = [ids[j] for j in rng.choice(n_stops, size=k, replace=False)]
        routes.append(route(f"R{r}", seq, headway=float(rng.choice([10, 15, 20, 30])),
                            v_off=float(rng.uniform(15, 30))))
    served = sorted({s for r in routes for s in r.stops})
    trips = []
    for i in range(n_trips):
        o, d = rng.choice(len(served), size=2, replace=False)
        trips.append(trip(f"P{i:03d}", served[o], served[d], float(rng.integers(360, 900)),
                          GROUPS[int(rng.integers(4))]))
    return Dataset(tuple(stops), tuple(routes), tuple(trips))


# ---------------------------------------------------------------- planner oracle

def _ride_units(network, config, rid):
    r = network.routes[rid]
    cum = network.cum_m[rid]
    if config.travel_measure == "edges":
        return [1.0] * (len(r.stops) - 1)
    per_step = r.v_off * 1000.0 / 60.0 * config.step_min
    return [(cum[i + 1] - cum[i]) / per_step for i in range(len(r.stops) - 1)]


def enumerate_legs(network, config):
    """Every possible ride leg: (route, direction, board_idx, alight_idx, board_stop, alight_stop, cost_parts)."""
    legs = []
    for rid, r in network.routes.items():
        units = _ride_units(network, config, rid)
        wait = r.headway_min / 2.0 / config.step_min
        n = len(r.stops)
        for b, a in itertools.permutations(range(n), 2):
            d = FORWARD if a > b else REVERSE
            lo, hi = min(a, b), max(a, b)
            legs.append((rid, d, b, a, r.stops[b], r.stops[a], sum(units[lo:hi]), wait))
    return legs


def brute_force_cost(network, origin, dest, beta, config: SimConfig, max_transfers=3):
    """Cheapest plan cost over all leg sequences with at most ``max_transfers`` transfers (inf if none)."""
    b_l, b_t, b_w, _ = beta
    legs = enumerate_legs(network, config)
    by_board = defaultdict(list)
    for leg in legs:
        by_board[leg[4]].append(leg)
    near = defaultdict(set)
    for e in network.transfer_edges:
        near[e.stop_a].add(e.stop_b)
        near[e.stop_b].add(e.stop_a)
    best = math.inf

    def dfs(stop, n_legs, cost):
        nonlocal best
        if n_legs > max_transfers:
            return
        nxt = {stop} | near[stop] if n_legs >= 0 else {stop}
        for s in nxt:
            for leg in by_board[s]:
                c = cost + b_l * leg[6] + b_w * leg[7] + (b_t if n_legs >= 0 else 0.0)
                # every cost term is non-negative, so a prefix at or above the best cannot win
                if c >= best + 1e-12:
                    continue
                if leg[5] == dest:
                    best = min(best, c)
                dfs(leg[5], n_legs + 1, c)

    # n_legs counts completed legs minus one, so -1 means nothing ridden yet
    dfs(origin, -1, 0.0)
    return best


# ---------------------------------------------------------------- graph oracle

def brute_force_graph_metrics(n, edges):
    """Betweenness (ordered pairs, unnormalized), summed hop distance and connected-pair count.

    Counts shortest paths explicitly: sigma_st(v) = sigma_sv * sigma_vt when v
    lies on a shortest s-t path.
    """
    adj = defaultdict(set)
    for a, b in edges:
        adj[a].add(b)
    dist = np.full((n, n), -1, dtype=np.int64)
    sig = np.zeros((n, n))
    for s in range(n):
        dist[s, s] = 0
        sig[s, s] = 1
        q = deque([s])
        while q:
            v = q.popleft()
            for w in sorted(adj[v]):
                if dist[s, w] < 0:
                    dist[s, w] = dist[s, v] + 1
                    q.append(w)
                if dist[s, w] == dist[s, v] + 1:
                    sig[s, w] += sig[s, v]
    bc = np.zeros(n)
    for s, t in itertools.permutations(range(n), 2):
        if dist[s, t] <= 0:
            continue
        for v in range(n):
            if v in (s, t) or dist[s, v] < 0 or dist[v, t] < 0:
                continue
            if dist[s, v] + dist[v, t] == dist[s, t]:
                bc[v] += sig[s, v] * sig[v, t] / sig[s, t]
    mask = dist > 0
    return bc, int(dist[mask].sum()), int(mask.sum())


# ---------------------------------------------------------------- event-log replay

def replay_events(events, trips, profile, config, buses_capacity):
    """Recompute L, T, W, C, D per passenger purely from the event log.

    Returns ``(per_pid dict, max_onboard_ok)``.
    """
    spawn = {}
    last_free = {}
    boards = defaultdict(list)  # pid -> [(k, bus)]
    alights = defaultdict(list)
    load = defaultdict(dict)  # bus -> {k: (n, cap)}
    onboard = defaultdict(int)
    cap_ok = True
    W = defaultdict(int)
    finished = {}
    for ev in events:
        k, kind = ev[0], ev[1]
        if kind == "spawn":
            spawn[ev[2]] = k
            last_free[ev[2]] = k
        elif kind == "board":
            pid, bus = ev[2], ev[5]
            W[pid] += k - last_free[pid]
            boards[pid].append((k, bus))
            onboard[bus] += 1
            if onboard[bus] > buses_capacity[bus]:
                cap_ok = False
        elif kind == "alight":
            pid, bus = ev[2], ev[5]
            alights[pid].append(k)
            last_free[pid] = k
            onboard[bus] -= 1
        elif kind == "load":
            load[ev[2]][k] = (ev[3], ev[4])
            if ev[3] != onboard[ev[2]]:
                cap_ok = False
        elif kind == "finish":
            finished[ev[2]] = ev[3]
    groups = {t.passenger_id: t.group for t in trips}
    out = {}
    for pid, status in finished.items():
        L = C = 0
        for (kb, bus), ka in zip(boards[pid], alights[pid]):
            L += ka - kb
            for k in range(kb, ka):
                n, cap = load[bus][k]
                if n / cap >= config.crowding_threshold:
                    C += 1
        T = max(0, len(boards[pid]) - 1)
        b = profile.beta(groups[pid])
        D = b[0] * L + b[1] * T + b[2] * W[pid] + b[3] * C if status == "Completed" else None
        out[pid] = (status, L, T, W[pid], C, D)
    return out, cap_ok


# ---------------------------------------------------------------- experiment fixtures

def separated_groups_dataset(trips_per_group=60):
    """One long two-way line where each group rides a different distance.

    Students ride 2 stops, General 5, Elderly 10 and Disabled 17, so the
    group mean D values are spread far apart.
    """
    stops = tuple(stop_at(f"S{i:02d}", 1000.0 * i) for i in range(20))
    line = route("L", [s.stop_id for s in stops], headway=10.0, capacity=200, v_off=24.0, first=330.0)
    hops = {"Student": 2, "General": 5, "Elderly": 10, "Disabled": 17}
    trips = []
    for g, h in hops.items():
        for i in range(trips_per_group):
            o = i % (20 - h)
            trips.append(trip(f"{g[0]}{i:03d}", f"S{o:02d}", f"S{o + h:02d}", 400.0 + 7 * i, g))
    return Dataset(stops, (line,), tuple(trips))
