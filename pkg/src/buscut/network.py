"""Directed stop-to-stop bus network with route-tagged ride edges and walking transfer links."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .data import Dataset, RouteDef, SimConfig, haversine_m
from .kernels import brandes, haversine_matrix, to_csr

log = logging.getLogger(__name__)

FORWARD = 1
REVERSE = -1


@dataclass(frozen=True)
class RideEdge:
    from_stop: str
    to_stop: str
    route_id: str
    length_m: float


@dataclass(frozen=True)
class TransferEdge:
    stop_a: str
    stop_b: str
    walk_m: float


@dataclass(frozen=True)
class Network:
    nodes: tuple[str, ...]
    coords: tuple[tuple[float, float], ...]
    routes: dict  # route_id -> RouteDef, active routes only, dataset order
    ride_edges: tuple[RideEdge, ...]
    transfer_edges: tuple[TransferEdge, ...]
    cum_m: dict  # route_id -> tuple of cumulative metres at each stop index
    transfer_radius_m: float

    @property
    def active_routes(self) -> frozenset:
        return frozenset(self.routes)

    @cached_property
    def node_index(self) -> dict[str, int]:
        return {s: i for i, s in enumerate(self.nodes)}

    @cached_property
    def transfer_neighbors(self) -> dict[str, list[tuple[str, float]]]:
        out = {s: [] for s in self.nodes}
        for e in self.transfer_edges:
            out[e.stop_a].append((e.stop_b, e.walk_m))
            out[e.stop_b].append((e.stop_a, e.walk_m))
        return out

    def route_length_m(self, route_id: str) -> float:
        return self.cum_m[route_id][-1]


def build_network(dataset: Dataset, config: SimConfig | None = None) -> Network:
    config = config or SimConfig()
    nodes = tuple(s.stop_id for s in dataset.stops)
    coords = tuple((s.lat, s.lon) for s in dataset.stops)
    routes, cum, edges = {}, {}, []
    for r in dataset.routes:
        routes[r.route_id] = r
        cum[r.route_id] = _cumulative(dataset, r)
        edges.extend(_route_edges(r, cum[r.route_id]))
    transfers = _transfer_edges(dataset, config.transfer_radius_m)
    return Network(nodes, coords, routes, tuple(edges), transfers, cum, config.transfer_radius_m)


def _cumulative(dataset: Dataset, r: RouteDef) -> tuple[float, ...]:
    out = [0.0]
    for a, b in zip(r.stops, r.stops[1:]):
        sa, sb = dataset.stop(a), dataset.stop(b)
        seg = haversine_m((sa.lat, sa.lon), (sb.lat, sb.lon))
        if seg == 0.0:
            log.warning("route %s: zero-length segment %s -> %s", r.route_id, a, b)
        out.append(out[-1] + seg)
    return tuple(out)


def _route_edges(r: RouteDef, cum) -> list[RideEdge]:
    n = len(r.stops)
    fwd = [RideEdge(r.stops[i], r.stops[i + 1], r.route_id, cum[i + 1] - cum[i]) for i in range(n - 1)]
    rev = [RideEdge(r.stops[i], r.stops[i - 1], r.route_id, cum[i] - cum[i - 1]) for i in range(n - 1, 0, -1)]
    return fwd + rev


def _transfer_edges(dataset: Dataset, radius: float, chunk: int = 2048) -> tuple[TransferEdge, ...]:
    n = len(dataset.stops)
    if n < 2:
        return ()
    lat = np.array([s.lat for s in dataset.stops])
    lon = np.array([s.lon for s in dataset.stops])
    out = []
    for lo in range(0, n, chunk):
        hi = min(n, lo + chunk)
        d = haversine_matrix(lat[lo:hi], lon[lo:hi], lat, lon)
        ii, jj = np.nonzero(d <= radius)
        for i, j in zip(ii + lo, jj):
            if i < j:
                out.append(TransferEdge(dataset.stops[i].stop_id, dataset.stops[j].stop_id, float(d[i - lo, j])))
    out.sort(key=lambda e: (dataset.stop_index[e.stop_a], dataset.stop_index[e.stop_b]))
    return tuple(out)


def remove_route(network: Network, route_id: str) -> Network:
    """Return a copy of ``network`` without the ride edges of ``route_id``."""
    if route_id not in network.routes:
        raise KeyError(f"route {route_id!r} is not active")
    routes = {k: v for k, v in network.routes.items() if k != route_id}
    cum = {k: v for k, v in network.cum_m.items() if k != route_id}
    edges = tuple(e for e in network.ride_edges if e.route_id != route_id)
    return Network(network.nodes, network.coords, routes, edges, network.transfer_edges, cum,
                   network.transfer_radius_m)


def remove_routes(network: Network, route_ids) -> Network:
    for rid in route_ids:
        network = remove_route(network, rid)
    return network


def ride_pairs(network: Network) -> set[tuple[int, int]]:
    """Distinct directed (from, to) node-index pairs joined by at least one ride edge."""
    idx = network.node_index
    return {(idx[e.from_stop], idx[e.to_stop]) for e in network.ride_edges}


def _graph_csr(network: Network):
    idx = network.node_index
    pairs = ride_pairs(network)
    for e in network.transfer_edges:
        a, b = idx[e.stop_a], idx[e.stop_b]
        pairs.add((a, b))
        pairs.add((b, a))
    pairs = sorted(pairs)
    src = [p[0] for p in pairs]
    dst = [p[1] for p in pairs]
    return to_csr(len(network.nodes), src, dst)


def _brandes(network: Network):
    if not network.nodes:
        return np.zeros(0), 0, 0
    return brandes(*_graph_csr(network))


def betweenness(network: Network) -> dict[str, float]:
    """Unnormalized ordered-pair node betweenness on the hop graph (ride + transfer edges)."""
    bc, _, _ = _brandes(network)
    return {s: float(v) for s, v in zip(network.nodes, bc)}


@dataclass(frozen=True)
class TopologyMetrics:
    density: float
    avg_betweenness: float
    avg_path_length: float | None  # None when no ordered pair is connected
    connected_fraction: float
    n_nodes: int
    n_ride_pairs: int


def topology_metrics(network: Network) -> TopologyMetrics:
    n = len(network.nodes)
    n_pairs = len(ride_pairs(network))
    if n < 2:
        return TopologyMetrics(0.0, 0.0, None, 0.0, n, n_pairs)
    bc, dist_sum, connected = _brandes(network)
    ordered = n * (n - 1)
    apl = float(dist_sum) / connected if connected else None
    return TopologyMetrics(
        density=n_pairs / ordered,
        avg_betweenness=float(np.mean(bc)),
        avg_path_length=apl,
        connected_fraction=connected / ordered,
        n_nodes=n,
        n_ride_pairs=n_pairs,
    )


def write_edges_csv(network: Network, path) -> None:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["from", "to", "route_id", "length_m", "kind"])
        for e in network.ride_edges:
            w.writerow([e.from_stop, e.to_stop, e.route_id, f"{e.length_m:.3f}", "ride"])
        for e in network.transfer_edges:
            w.writerow([e.stop_a, e.stop_b, "", f"{e.walk_m:.3f}", "transfer"])
