"""
Record types, CSV ingestion/serialization and validation.

All records are frozen dataclasses; a :class:`Dataset` is validated once at
construction and never mutated afterwards.
"""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .kernels import EARTH_RADIUS_M

GROUPS = ("General", "Student", "Elderly", "Disabled")
COMPONENTS = ("L", "T", "W", "C")

STOPS_HEADER = ("stop_id", "lat", "lon")
ROUTES_HEADER = ("route_id", "stop_sequence", "headway_min", "capacity", "v_off_kmh", "first_departure_min")
TRIPS_HEADER = ("passenger_id", "group", "origin_stop", "dest_stop", "departure_min")
POIS_HEADER = ("poi_id", "lat", "lon", "category")


class DatasetError(ValueError):
    """Invalid input data. Carries the offending file, line and column when known."""

    def __init__(self, message, path=None, line=None, column=None):
        self.path = str(path) if path is not None else None
        self.line = line
        self.column = column
        where = []
        if path is not None:
            where.append(Path(path).name)
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column!r}")
        prefix = ", ".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Stop:
    stop_id: str
    lat: float
    lon: float


@dataclass(frozen=True)
class RouteDef:
    route_id: str
    stops: tuple[str, ...]
    headway_min: float
    capacity: int
    v_off: float  # km/h
    first_departure_min: float

    def with_changes(self, **kw) -> "RouteDef":
        return dataclasses.replace(self, **kw)


@dataclass(frozen=True)
class TripRecord:
    passenger_id: str
    group: str
    origin_stop: str
    dest_stop: str
    departure_min: float


@dataclass(frozen=True)
class PoiRecord:
    poi_id: str
    lat: float
    lon: float
    category: str


@dataclass(frozen=True)
class SensitivityProfile:
    """Per-group weights on segments/ride steps (L), transfers (T), waiting (W), crowding (C)."""

    weights: tuple[tuple[float, float, float, float], ...]  # row order follows GROUPS

    def __post_init__(self):
        arr = np.asarray(self.weights, dtype=np.float64)
        if arr.shape != (len(GROUPS), len(COMPONENTS)):
            raise ConfigError(f"sensitivity table must be {len(GROUPS)}x{len(COMPONENTS)}, got {arr.shape}")
        if not np.all(np.isfinite(arr)) or np.any(arr < 0):
            raise ConfigError("sensitivity weights must be finite and non-negative")

    @classmethod
    def from_mapping(cls, mapping: Mapping) -> "SensitivityProfile":
        lowered = {str(k).lower(): v for k, v in mapping.items()}
        rows = []
        for g in GROUPS:
            if g.lower() not in lowered:
                raise ConfigError(f"sensitivity table is missing group {g!r}")
            row = lowered[g.lower()]
            try:
                rows.append(tuple(float(row[c]) for c in COMPONENTS))
            except KeyError as exc:
                raise ConfigError(f"group {g!r} is missing weight {exc.args[0]!r}") from None
        return cls(tuple(rows))

    @classmethod
    def from_json(cls, path) -> "SensitivityProfile":
        with open(path, encoding="utf-8") as fh:
            return cls.from_mapping(json.load(fh))

    @classmethod
    def default(cls) -> "SensitivityProfile":
        text = resources.files("buscut.resources").joinpath("sensitivity.json").read_text("utf-8")
        return cls.from_mapping(json.loads(text))

    @classmethod
    def from_array(cls, arr) -> "SensitivityProfile":
        arr = np.asarray(arr, dtype=np.float64)
        return cls(tuple(tuple(float(x) for x in row) for row in arr))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=np.float64)

    def beta(self, group: str) -> tuple[float, float, float, float]:
        try:
            return self.weights[GROUPS.index(group)]
        except ValueError:
            raise KeyError(f"unknown passenger group {group!r}") from None

    def to_mapping(self) -> dict:
        return {g: dict(zip(COMPONENTS, row)) for g, row in zip(GROUPS, self.weights)}


@dataclass(frozen=True)
class SimConfig:
    step_min: float = 5.0
    transfer_radius_m: float = 300.0
    crowding_threshold: float = 0.8
    # two-peak speed profile; v_off is per route
    t_m: float = 480.0
    t_e: float = 1050.0
    sigma: float = 60.0
    k: float = 0.4
    v_min: float = 8.0
    sparse_distance_m: float = 800.0
    poi_buffer_m: float = 300.0
    rng_seed: int = 0
    fail_policy: str = "exclude_from_mean_d"
    max_transfers: int = 3
    horizon_min: float = 1440.0
    # "steps": L counts onboard simulation steps; "edges": L counts ride edges
    travel_measure: str = "steps"
    removal_fraction: float = 0.6
    sweep_mode: str = "static"
    low_signal_load: float = 0.3
    jobs: int = 1

    def __post_init__(self):
        if not self.step_min > 0:
            raise ConfigError("step_min must be > 0")
        if self.transfer_radius_m < 0:
            raise ConfigError("transfer_radius_m must be >= 0")
        if not 0 < self.crowding_threshold <= 1:
            raise ConfigError("crowding_threshold must lie in (0, 1]")
        for name in ("sigma", "v_min", "sparse_distance_m", "poi_buffer_m", "horizon_min"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0")
        if not 0 <= self.k < 1:
            raise ConfigError("k must lie in [0, 1)")
        if not self.t_m < self.t_e:
            raise ConfigError("t_m must be earlier than t_e")
        if self.travel_measure not in ("steps", "edges"):
            raise ConfigError("travel_measure must be 'steps' or 'edges'")
        if self.sweep_mode not in ("static", "dynamic"):
            raise ConfigError("sweep_mode must be 'static' or 'dynamic'")
        if self.fail_policy != "exclude_from_mean_d":
            raise ConfigError("fail_policy must be 'exclude_from_mean_d'")
        if not 0 < self.removal_fraction <= 1:
            raise ConfigError("removal_fraction must lie in (0, 1]")
        if self.max_transfers < 0:
            raise ConfigError("max_transfers must be >= 0")

    @classmethod
    def from_mapping(cls, mapping: Mapping) -> "SimConfig":
        known = {f.name: f for f in dataclasses.fields(cls)}
        kw = {}
        for key, value in mapping.items():
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            ftype = type(getattr(cls(), key))
            try:
                kw[key] = ftype(value)
            except (TypeError, ValueError):
                raise ConfigError(f"config key {key!r}: cannot convert {value!r}") from None
        return cls(**kw)

    def replace(self, **kw) -> "SimConfig":
        return dataclasses.replace(self, **kw)

    def to_mapping(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        # jobs changes wall time only, so it is not part of the identity of a run
        settings = {k: v for k, v in self.to_mapping().items() if k != "jobs"}
        blob = json.dumps(settings, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass(frozen=True, eq=True)
class Dataset:
    stops: tuple[Stop, ...]
    routes: tuple[RouteDef, ...]
    trips: tuple[TripRecord, ...]
    pois: tuple[PoiRecord, ...] | None = None
    _stop_index: dict = field(default=None, init=False, repr=False, compare=False, hash=False)
    _route_index: dict = field(default=None, init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        object.__setattr__(self, "stops", tuple(self.stops))
        object.__setattr__(self, "routes", tuple(self.routes))
        object.__setattr__(self, "trips", tuple(self.trips))
        if self.pois is not None:
            object.__setattr__(self, "pois", tuple(self.pois))
        validate(self)
        object.__setattr__(self, "_stop_index", {s.stop_id: i for i, s in enumerate(self.stops)})
        object.__setattr__(self, "_route_index", {r.route_id: i for i, r in enumerate(self.routes)})

    @property
    def stop_index(self) -> dict[str, int]:
        return self._stop_index

    def stop(self, stop_id: str) -> Stop:
        return self.stops[self._stop_index[stop_id]]

    def route(self, route_id: str) -> RouteDef:
        try:
            return self.routes[self._route_index[route_id]]
        except KeyError:
            raise KeyError(f"unknown route {route_id!r}") from None

    def replace_routes(self, routes: Iterable[RouteDef]) -> "Dataset":
        return Dataset(self.stops, tuple(routes), self.trips, self.pois)

    def replace_trips(self, trips: Iterable[TripRecord]) -> "Dataset":
        return Dataset(self.stops, self.routes, tuple(trips), self.pois)


def validate(ds: Dataset) -> None:
    """Check every record invariant and cross reference; raise DatasetError on the first violation."""
    seen = set()
    for s in ds.stops:
        if s.stop_id in seen:
            raise DatasetError(f"duplicate stop_id {s.stop_id!r}")
        seen.add(s.stop_id)
        _check_coord(s.lat, s.lon, s.stop_id)
    rids = set()
    for r in ds.routes:
        _check_route(r, seen)
        if r.route_id in rids:
            raise DatasetError(f"duplicate route_id {r.route_id!r}")
        rids.add(r.route_id)
    pids = set()
    for t in ds.trips:
        _check_trip(t, seen)
        if t.passenger_id in pids:
            raise DatasetError(f"duplicate passenger_id {t.passenger_id!r}")
        pids.add(t.passenger_id)
    if ds.pois is not None:
        poi_ids = set()
        for p in ds.pois:
            if p.poi_id in poi_ids:
                raise DatasetError(f"duplicate poi_id {p.poi_id!r}")
            poi_ids.add(p.poi_id)
            _check_coord(p.lat, p.lon, p.poi_id)
            if not p.category:
                raise DatasetError(f"poi {p.poi_id!r} has an empty category")


def _check_coord(lat, lon, key):
    if not (math.isfinite(lat) and -90.0 <= lat <= 90.0):
        raise DatasetError(f"{key!r}: latitude {lat} out of range")
    if not (math.isfinite(lon) and -180.0 <= lon <= 180.0):
        raise DatasetError(f"{key!r}: longitude {lon} out of range")


def _check_route(r: RouteDef, stop_ids) -> None:
    if len(r.stops) < 2:
        raise DatasetError(f"route {r.route_id!r} needs at least 2 stops")
    for a, b in zip(r.stops, r.stops[1:]):
        if a == b:
            raise DatasetError(f"route {r.route_id!r} repeats stop {a!r} consecutively")
    for s in r.stops:
        if s not in stop_ids:
            raise DatasetError(f"route {r.route_id!r} references unknown stop {s!r}")
    if not (math.isfinite(r.headway_min) and r.headway_min > 0):
        raise DatasetError(f"route {r.route_id!r}: headway_min must be > 0")
    if r.capacity <= 0:
        raise DatasetError(f"route {r.route_id!r}: capacity must be > 0")
    if not (math.isfinite(r.v_off) and r.v_off > 0):
        raise DatasetError(f"route {r.route_id!r}: v_off must be > 0")
    if not (math.isfinite(r.first_departure_min) and r.first_departure_min >= 0):
        raise DatasetError(f"route {r.route_id!r}: first_departure_min must be >= 0")


def _check_trip(t: TripRecord, stop_ids) -> None:
    if t.group not in GROUPS:
        raise DatasetError(f"trip {t.passenger_id!r}: unknown group {t.group!r}")
    for s in (t.origin_stop, t.dest_stop):
        if s not in stop_ids:
            raise DatasetError(f"trip {t.passenger_id!r} references unknown stop {s!r}")
    if t.origin_stop == t.dest_stop:
        raise DatasetError(f"trip {t.passenger_id!r}: origin equals destination")
    if not (math.isfinite(t.departure_min) and t.departure_min >= 0):
        raise DatasetError(f"trip {t.passenger_id!r}: departure_min must be >= 0")


def haversine_m(a, b) -> float:
    """Great-circle distance in metres between two (lat, lon) pairs in degrees."""
    lat1, lon1 = a
    lat2, lon2 = b
    p1, p2 = math.radians(lat1), math.radians(lat2)
    h = math.sin((p2 - p1) / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(math.radians(lon2 - lon1) / 2) ** 2
    return 2.0 * EARTH_RADIUS_M * math.asin(math.sqrt(min(h, 1.0)))


# ---------------------------------------------------------------------------
# CSV reading
# ---------------------------------------------------------------------------

def _read_rows(path, header):
    path = Path(path)
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DatasetError(f"cannot open: {exc.strerror}", path) from None
    with fh:
        reader = csv.reader(fh)
        try:
            got = next(reader)
        except StopIteration:
            raise DatasetError("missing header row", path, 1) from None
        got = [h.strip() for h in got]
        if tuple(got) != header:
            raise DatasetError(f"expected header {','.join(header)}, got {','.join(got)}", path, 1)
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DatasetError(f"expected {len(header)} fields, got {len(row)}", path, lineno)
            yield lineno, dict(zip(header, (c.strip() for c in row)))


def _num(row, col, path, lineno, kind=float):
    raw = row[col]
    try:
        val = kind(raw)
    except ValueError:
        raise DatasetError(f"not a valid {kind.__name__}: {raw!r}", path, lineno, col) from None
    if kind is float and not math.isfinite(val):
        raise DatasetError(f"non-finite value {raw!r}", path, lineno, col)
    return val


def _nonempty(row, col, path, lineno):
    if not row[col]:
        raise DatasetError("empty value", path, lineno, col)
    return row[col]


def load_dataset(stops_path, routes_path, trips_path, pois_path=None) -> Dataset:
    """Parse and validate the four input CSV files (POIs optional)."""
    stops, stop_ids = [], {}
    for ln, row in _read_rows(stops_path, STOPS_HEADER):
        sid = _nonempty(row, "stop_id", stops_path, ln)
        if sid in stop_ids:
            raise DatasetError(f"duplicate stop_id {sid!r} (first on line {stop_ids[sid]})", stops_path, ln, "stop_id")
        lat = _num(row, "lat", stops_path, ln)
        lon = _num(row, "lon", stops_path, ln)
        if not -90 <= lat <= 90:
            raise DatasetError(f"latitude {lat} out of range", stops_path, ln, "lat")
        if not -180 <= lon <= 180:
            raise DatasetError(f"longitude {lon} out of range", stops_path, ln, "lon")
        stop_ids[sid] = ln
        stops.append(Stop(sid, lat, lon))

    routes, route_ids = [], {}
    for ln, row in _read_rows(routes_path, ROUTES_HEADER):
        rid = _nonempty(row, "route_id", routes_path, ln)
        if rid in route_ids:
            raise DatasetError(f"duplicate route_id {rid!r}", routes_path, ln, "route_id")
        seq = tuple(s.strip() for s in row["stop_sequence"].split("|"))
        for s in seq:
            if s not in stop_ids:
                raise DatasetError(f"unknown stop {s!r}", routes_path, ln, "stop_sequence")
        route = RouteDef(
            route_id=rid,
            stops=seq,
            headway_min=_num(row, "headway_min", routes_path, ln),
            capacity=_num(row, "capacity", routes_path, ln, int),
            v_off=_num(row, "v_off_kmh", routes_path, ln),
            first_departure_min=_num(row, "first_departure_min", routes_path, ln),
        )
        try:
            _check_route(route, stop_ids)
        except DatasetError as exc:
            raise DatasetError(str(exc), routes_path, ln) from None
        route_ids[rid] = ln
        routes.append(route)

    trips, pids = [], set()
    for ln, row in _read_rows(trips_path, TRIPS_HEADER):
        pid = _nonempty(row, "passenger_id", trips_path, ln)
        if pid in pids:
            raise DatasetError(f"duplicate passenger_id {pid!r}", trips_path, ln, "passenger_id")
        pids.add(pid)
        for col in ("origin_stop", "dest_stop"):
            if row[col] not in stop_ids:
                raise DatasetError(f"unknown stop {row[col]!r}", trips_path, ln, col)
        if row["group"] not in GROUPS:
            raise DatasetError(f"unknown group {row['group']!r}", trips_path, ln, "group")
        trip = TripRecord(pid, row["group"], row["origin_stop"], row["dest_stop"],
                          _num(row, "departure_min", trips_path, ln))
        try:
            _check_trip(trip, stop_ids)
        except DatasetError as exc:
            raise DatasetError(str(exc), trips_path, ln) from None
        trips.append(trip)

    pois = None
    if pois_path is not None:
        pois, poi_ids = [], set()
        for ln, row in _read_rows(pois_path, POIS_HEADER):
            poi_id = _nonempty(row, "poi_id", pois_path, ln)
            if poi_id in poi_ids:
                raise DatasetError(f"duplicate poi_id {poi_id!r}", pois_path, ln, "poi_id")
            poi_ids.add(poi_id)
            lat = _num(row, "lat", pois_path, ln)
            lon = _num(row, "lon", pois_path, ln)
            if not (-90 <= lat <= 90 and -180 <= lon <= 180):
                raise DatasetError("coordinate out of range", pois_path, ln)
            pois.append(PoiRecord(poi_id, lat, lon, _nonempty(row, "category", pois_path, ln)))

    return Dataset(tuple(stops), tuple(routes), tuple(trips), None if pois is None else tuple(pois))


def load_dataset_dir(directory) -> Dataset:
    """Load ``stops.csv``, ``routes.csv``, ``trips.csv`` and, if present, ``pois.csv`` from a directory."""
    d = Path(directory)
    pois = d / "pois.csv"
    return load_dataset(d / "stops.csv", d / "routes.csv", d / "trips.csv", pois if pois.exists() else None)


# ---------------------------------------------------------------------------
# CSV writing
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if x.is_integer() and abs(x) < 1e15:
            return str(int(x))
        return repr(x)
    return str(x)


def write_dataset(ds: Dataset, directory) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    with open(d / "stops.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(STOPS_HEADER)
        for s in ds.stops:
            w.writerow([s.stop_id, _fmt(s.lat), _fmt(s.lon)])
    with open(d / "routes.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ROUTES_HEADER)
        for r in ds.routes:
            w.writerow([r.route_id, "|".join(r.stops), _fmt(r.headway_min), r.capacity,
                        _fmt(r.v_off), _fmt(r.first_departure_min)])
    with open(d / "trips.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRIPS_HEADER)
        for t in ds.trips:
            w.writerow([t.passenger_id, t.group, t.origin_stop, t.dest_stop, _fmt(t.departure_min)])
    if ds.pois is not None:
        with open(d / "pois.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(POIS_HEADER)
            for p in ds.pois:
                w.writerow([p.poi_id, _fmt(p.lat), _fmt(p.lon), p.category])
