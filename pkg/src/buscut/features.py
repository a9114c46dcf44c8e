"""
Per-route features along three dimensions and the weighted feature score
used to order route deletions.

Capacity: ``ridership``.  Structure: ``density_contrib``, ``avg_betweenness``,
``avg_path_length_delta``.  Function: ``sparse_station_ratio``,
``amenity_entropy``.  Network-level structural metrics are localized to a
route by leave-one-out deltas (density, path length) or by averaging over the
route's stops (betweenness).
"""
from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .data import ConfigError, PoiRecord, SimConfig
from .kernels import haversine_matrix
from .network import Network, betweenness, remove_route, topology_metrics
from .planner import TripPlan
from .stats import zscore

DIMENSIONS = ("capacity", "structure", "function")
FEATURE_NAMES = ("ridership", "density_contrib", "avg_betweenness", "avg_path_length_delta",
                 "sparse_station_ratio", "amenity_entropy")


@dataclass(frozen=True)
class RouteFeatures:
    route_id: str
    ridership: int
    density_contrib: float
    avg_betweenness: float
    avg_path_length_delta: float
    sparse_station_ratio: float
    amenity_entropy: float
    has_pois: bool = True  # False when no POI data was supplied (entropy then 0)

    def value(self, name: str) -> float:
        if name not in FEATURE_NAMES:
            raise KeyError(f"unknown feature {name!r}")
        return float(getattr(self, name))


@dataclass(frozen=True)
class FeatureScore:
    route_id: str
    dimension: str
    score: float
    rank: int  # 1 = lowest score = first to be removed


def _apl(m) -> float:
    return 0.0 if m.avg_path_length is None else m.avg_path_length


def nearest_other_stop_m(network: Network) -> np.ndarray:
    """Distance from every network stop to its nearest other stop (inf for a lone stop)."""
    lat = np.array([c[0] for c in network.coords])
    lon = np.array([c[1] for c in network.coords])
    n = lat.size
    out = np.full(n, np.inf)
    chunk = 1024
    for lo in range(0, n, chunk):
        hi = min(n, lo + chunk)
        d = haversine_matrix(lat[lo:hi], lon[lo:hi], lat, lon)
        d[np.arange(hi - lo), np.arange(lo, hi)] = np.inf
        out[lo:hi] = d.min(axis=1) if n > 1 else np.inf
    return out


def sparse_station_ratio(stop_nn_m: Sequence[float], threshold_m: float) -> float:
    d = np.asarray(stop_nn_m, dtype=np.float64)
    if d.size == 0:
        return 0.0
    return float((d > threshold_m).mean())


def shannon_entropy(counts) -> float:
    c = np.asarray([x for x in counts if x > 0], dtype=np.float64)
    if c.size == 0:
        return 0.0
    p = c / c.sum()
    return float(-(p * np.log(p)).sum())


def route_poi_categories(network: Network, route_id: str, pois: Sequence[PoiRecord],
                         buffer_m: float) -> dict[str, int]:
    """Category counts of POIs within ``buffer_m`` of any stop of the route, each POI counted once."""
    if not pois:
        return {}
    idx = network.node_index
    stops = sorted({idx[s] for s in network.routes[route_id].stops})
    slat = np.array([network.coords[i][0] for i in stops])
    slon = np.array([network.coords[i][1] for i in stops])
    plat = np.array([p.lat for p in pois])
    plon = np.array([p.lon for p in pois])
    near = (haversine_matrix(plat, plon, slat, slon) <= buffer_m).any(axis=1)
    counts: dict[str, int] = {}
    for p, hit in zip(pois, near):
        if hit:
            counts[p.category] = counts.get(p.category, 0) + 1
    return counts


def compute_route_features(network: Network, plans: Sequence[TripPlan], pois: Sequence[PoiRecord] | None,
                           config: SimConfig | None = None) -> list[RouteFeatures]:
    """One feature record per active route, in network route order."""
    config = config or SimConfig()
    ridership = {rid: 0 for rid in network.routes}
    for p in plans:
        if p.feasible:
            for rid in set(p.routes):
                if rid in ridership:
                    ridership[rid] += 1
    base = topology_metrics(network)
    bc = betweenness(network)
    nn = nearest_other_stop_m(network)
    idx = network.node_index
    out = []
    for rid, r in network.routes.items():
        without = topology_metrics(remove_route(network, rid))
        stops = sorted(set(r.stops), key=idx.__getitem__)
        cats = route_poi_categories(network, rid, pois or (), config.poi_buffer_m)
        out.append(RouteFeatures(
            route_id=rid,
            ridership=ridership[rid],
            density_contrib=base.density - without.density,
            avg_betweenness=float(np.mean([bc[s] for s in stops])),
            avg_path_length_delta=_apl(without) - _apl(base),
            sparse_station_ratio=sparse_station_ratio([nn[idx[s]] for s in stops], config.sparse_distance_m),
            amenity_entropy=shannon_entropy(cats.values()),
            has_pois=pois is not None,
        ))
    return out


def load_coefficients(source=None) -> dict[str, dict[str, float]]:
    """Read ``{dimension: {feature: weight}}`` from a JSON path, a mapping, or the shipped defaults.

    ``source`` of None or ``"builtin"`` selects the shipped coefficient table.
    """
    if source is None or source == "builtin":
        raw = json.loads(resources.files("buscut.resources").joinpath("coefficients.json").read_text("utf-8"))
    elif isinstance(source, Mapping):
        raw = source
    else:
        path = Path(source)
        if not path.is_file():
            raise ConfigError(f"coefficients file not found: {path}")
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    out = {}
    for dim, weights in raw.items():
        d = str(dim).lower()
        if d not in DIMENSIONS:
            raise ConfigError(f"unknown dimension {dim!r}; expected one of {DIMENSIONS}")
        if not isinstance(weights, Mapping) or not weights:
            raise ConfigError(f"dimension {dim!r} needs a non-empty feature->weight mapping")
        block = {}
        for feat, w in weights.items():
            if feat not in FEATURE_NAMES:
                raise ConfigError(f"unknown feature {feat!r} in dimension {dim!r}")
            try:
                block[feat] = float(w)
            except (TypeError, ValueError):
                raise ConfigError(f"weight for {feat!r} is not a number: {w!r}") from None
            if not math.isfinite(block[feat]):
                raise ConfigError(f"weight for {feat!r} must be finite")
        out[d] = block
    return out


def score_routes(features: Sequence[RouteFeatures], weights: Mapping[str, float],
                 dimension: str = "") -> list[FeatureScore]:
    """Weighted sum of population z-scores, sorted ascending by (score, route_id)."""
    if not features:
        return []
    total = np.zeros(len(features))
    for name, w in sorted(weights.items()):
        if w == 0:
            continue
        raw = np.array([f.value(name) for f in features])
        if not raw.std() > 0:
            warnings.warn(f"feature {name!r} has zero variance across routes; its z is set to 0",
                          RuntimeWarning, stacklevel=2)
            continue
        total += w * zscore(raw)
    order = sorted(range(len(features)), key=lambda i: (round(float(total[i]), 12), features[i].route_id))
    return [FeatureScore(features[i].route_id, dimension, float(total[i]), rank + 1)
            for rank, i in enumerate(order)]


def write_features_csv(features: Sequence[RouteFeatures], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("route_id",) + FEATURE_NAMES)
        for f in features:
            w.writerow([f.route_id] + [f"{f.value(n):.10g}" for n in FEATURE_NAMES])


def write_scores_csv(scores: Sequence[FeatureScore], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("route_id", "dimension", "score", "rank"))
        for s in scores:
            w.writerow([s.route_id, s.dimension, f"{s.score:.10g}", s.rank])
