"""Deterministic synthetic networks and demand (stand-in for proprietary smart-card data)."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import GROUPS, Dataset, PoiRecord, RouteDef, Stop, TripRecord

M_PER_DEG_LAT = 6_371_000.0 * math.pi / 180.0

POI_CATEGORIES = ("residential", "school", "hospital", "retail", "office", "park", "restaurant", "government")


class SynthError(ValueError):
    pass


@dataclass(frozen=True)
class SynthSpec:
    topology: str = "grid"  # "grid" or "hub_spoke"
    n_routes: int = 10
    n_stops: int = 40
    n_trips: int = 2000
    group_mix: dict = field(default_factory=lambda: {"General": 0.33, "Student": 0.12,
                                                     "Elderly": 0.45, "Disabled": 0.10})
    peak_share: float = 0.5  # fraction of departures drawn from the two peak windows
    spacing_m: float = 400.0
    origin: tuple = (40.316, 116.631)
    headways: tuple = (15.0, 30.0)
    capacity: int = 60
    v_off_range: tuple = (20.0, 30.0)
    first_departure_min: float = 330.0
    service_window: tuple = (360.0, 1320.0)
    n_pois: int = 0

    @classmethod
    def huairou_scale(cls, **kw) -> "SynthSpec":
        """79 routes and 72,750 trips; elderly-dominant group mix with morning/evening peaks."""
        base = dict(topology="grid", n_routes=79, n_stops=600, n_trips=72_750, n_pois=400)
        base.update(kw)
        return cls(**base)


def _grid_shape(n: int) -> tuple[int, int]:
    rows = int(math.isqrt(n))
    while n % rows:
        rows -= 1
    return rows, n // rows


def _exact_counts(mix: dict, total: int) -> dict:
    """Largest-remainder apportionment of ``total`` over the group proportions."""
    weights = np.array([float(mix.get(g, 0.0)) for g in GROUPS])
    if np.any(weights < 0) or weights.sum() <= 0:
        raise SynthError("group_mix must have non-negative weights with a positive sum")
    raw = weights / weights.sum() * total
    counts = np.floor(raw).astype(int)
    short = total - counts.sum()
    order = sorted(range(len(GROUPS)), key=lambda i: (-(raw[i] - counts[i]), i))
    for i in order[:short]:
        counts[i] += 1
    return dict(zip(GROUPS, counts.tolist()))


def _to_latlon(origin, x_m, y_m):
    lat0, lon0 = origin
    lat = lat0 + y_m / M_PER_DEG_LAT
    lon = lon0 + x_m / (M_PER_DEG_LAT * math.cos(math.radians(lat0)))
    return round(lat, 7), round(lon, 7)


def _grid_routes(spec: SynthSpec, rng, rows: int, cols: int, sid):
    lines = []
    for i in range(max(rows, cols)):
        if i < rows and cols >= 2:
            lines.append(tuple(sid(i, c) for c in range(cols)))
        if i < cols and rows >= 2:
            lines.append(tuple(sid(r, i) for r in range(rows)))
    routes = lines[: spec.n_routes]
    seen = {r for r in routes} | {tuple(reversed(r)) for r in routes}
    attempts = 0
    min_len = max(2, min(rows, cols) // 2 + 1)
    while len(routes) < spec.n_routes:
        attempts += 1
        if attempts > 200 * spec.n_routes:
            raise SynthError(f"cannot construct {spec.n_routes} distinct routes on a {rows}x{cols} grid")
        r0, c0 = int(rng.integers(rows)), int(rng.integers(cols))
        r1, c1 = int(rng.integers(rows)), int(rng.integers(cols))
        if abs(r1 - r0) + abs(c1 - c0) + 1 < min_len:
            continue
        moves = ["r"] * abs(r1 - r0) + ["c"] * abs(c1 - c0)
        rng.shuffle(moves)
        path = [(r0, c0)]
        dr = 1 if r1 >= r0 else -1
        dc = 1 if c1 >= c0 else -1
        for m in moves:
            r, c = path[-1]
            path.append((r + dr, c) if m == "r" else (r, c + dc))
        route = tuple(sid(r, c) for r, c in path)
        if route in seen:
            continue
        seen.add(route)
        seen.add(tuple(reversed(route)))
        routes.append(route)
    return routes


def _grid(spec: SynthSpec, rng):
    rows, cols = _grid_shape(spec.n_stops)
    if spec.n_routes > rows * cols:
        raise SynthError(f"{spec.n_routes} routes exceed what a {rows}x{cols} grid supports")

    def sid(r, c):
        return f"S{r * cols + c:04d}"

    stops = []
    for r in range(rows):
        for c in range(cols):
            lat, lon = _to_latlon(spec.origin, c * spec.spacing_m, r * spec.spacing_m)
            stops.append(Stop(sid(r, c), lat, lon))
    return stops, _grid_routes(spec, rng, rows, cols, sid)


def _hub_spoke(spec: SynthSpec, rng):
    """A long trunk line, spokes hanging off evenly spaced trunk stops, and an orbital joining spoke tips."""
    n_spokes = spec.n_routes - 2
    if n_spokes < 2:
        raise SynthError("hub_spoke needs at least 4 routes (trunk, orbital, 2 spokes)")
    n_anchors = (n_spokes + 1) // 2
    trunk_len = max(n_anchors, spec.n_stops // 3)
    spoke_extra = (spec.n_stops - trunk_len) // n_spokes
    if spoke_extra < 1:
        raise SynthError(f"{spec.n_stops} stops are too few for {n_spokes} spokes")
    leftover = spec.n_stops - trunk_len - spoke_extra * n_spokes
    stops, routes = [], []
    counter = iter(range(10**6))

    def new_stop(x, y):
        s = Stop(f"S{next(counter):04d}", *_to_latlon(spec.origin, x, y))
        stops.append(s)
        return s.stop_id

    sp = spec.spacing_m
    x0 = -(trunk_len - 1) * sp / 2
    trunk = [new_stop(x0 + i * sp, 0.0) for i in range(trunk_len)]
    routes.append(tuple(trunk))
    tips = []
    for j in range(n_spokes):
        anchor = (j // 2) * (trunk_len - 1) // max(1, n_anchors - 1)
        sign = 1 if j % 2 == 0 else -1
        n_extra = spoke_extra + (1 if j < leftover else 0)
        x = x0 + anchor * sp
        spoke = [trunk[anchor]] + [new_stop(x, sign * (i + 1) * sp * 1.5) for i in range(n_extra)]
        tips.append((sign, anchor, spoke[-1]))
        routes.append(tuple(reversed(spoke)))
    # orbital: north tips west->east, then south tips east->west
    north = [t[2] for t in sorted(tips) if t[0] == 1]
    south = [t[2] for t in sorted(tips, reverse=True) if t[0] == -1]
    orbital = tuple(north + south)
    if len(orbital) < 2:
        raise SynthError("hub_spoke orbital needs at least 2 spoke tips")
    routes.append(orbital)
    return stops, routes


def _departures(spec: SynthSpec, rng, n: int) -> np.ndarray:
    lo, hi = spec.service_window
    out = rng.uniform(lo, hi, size=n)
    peak = rng.random(n) < spec.peak_share
    morning = rng.random(n) < 0.6
    m = peak & morning
    e = peak & ~morning
    out[m] = np.clip(rng.normal(480.0, 30.0, size=int(m.sum())), 420.0, 540.0)
    out[e] = np.clip(rng.normal(1050.0, 20.0, size=int(e.sum())), 1020.0, 1080.0)
    return np.floor(out)


def generate_synthetic(spec: SynthSpec, seed: int) -> Dataset:
    """Build a validated dataset; identical ``(spec, seed)`` always gives an identical dataset."""
    if spec.n_stops < 4 or spec.n_routes < 1 or spec.n_trips < 0:
        raise SynthError("need at least 4 stops, 1 route and a non-negative trip count")
    rng = np.random.default_rng(seed)
    if spec.topology == "grid":
        stops, seqs = _grid(spec, rng)
    elif spec.topology == "hub_spoke":
        stops, seqs = _hub_spoke(spec, rng)
    else:
        raise SynthError(f"unknown topology {spec.topology!r}")

    routes = []
    lo_v, hi_v = spec.v_off_range
    for i, seq in enumerate(seqs):
        routes.append(RouteDef(
            route_id=f"R{i:03d}",
            stops=seq,
            headway_min=float(spec.headways[int(rng.integers(len(spec.headways)))]),
            capacity=int(spec.capacity),
            v_off=round(float(rng.uniform(lo_v, hi_v)), 2),
            first_departure_min=float(spec.first_departure_min),
        ))

    served = sorted({s for seq in seqs for s in seq})
    counts = _exact_counts(spec.group_mix, spec.n_trips)
    groups = np.array([g for g in GROUPS for _ in range(counts[g])], dtype=object)
    rng.shuffle(groups)
    deps = _departures(spec, rng, spec.n_trips)
    o = rng.integers(len(served), size=spec.n_trips)
    d = rng.integers(len(served) - 1, size=spec.n_trips)
    d = d + (d >= o)
    trips = [
        TripRecord(f"P{i:06d}", str(groups[i]), served[o[i]], served[d[i]], float(deps[i]))
        for i in range(spec.n_trips)
    ]

    pois = None
    if spec.n_pois > 0:
        pois = []
        for i in range(spec.n_pois):
            anchor = stops[int(rng.integers(len(stops)))]
            dy, dx = rng.normal(0.0, spec.spacing_m / 3, size=2)
            lat = round(anchor.lat + float(dy) / M_PER_DEG_LAT, 7)
            lon = round(anchor.lon + float(dx) / (M_PER_DEG_LAT * math.cos(math.radians(anchor.lat))), 7)
            cat = POI_CATEGORIES[int(rng.integers(len(POI_CATEGORIES)))]
            pois.append(PoiRecord(f"POI{i:05d}", lat, lon, cat))
    return Dataset(tuple(stops), tuple(routes), tuple(trips), None if pois is None else tuple(pois))
