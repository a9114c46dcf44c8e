"""
Experiment families on top of the plan/simulate pipeline: baseline, single
route removal, continuous deletion sweeps, one-factor-at-a-time driver
checks, sensitivity-weight perturbation and distribution validation.

Every function is a pure function of its inputs (dataset, config, seed);
optional process parallelism only changes wall time, never results.
"""
from __future__ import annotations

import csv
import dataclasses
import json
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import __version__
from .data import COMPONENTS, GROUPS, ConfigError, Dataset, SensitivityProfile, SimConfig
from .engine import COMPLETED, AggregateReport, SimulationResult, TripOutcome, run_simulation
from .features import (DIMENSIONS, FEATURE_NAMES, compute_route_features, load_coefficients,
                       score_routes)
from .network import Network, build_network, remove_route
from .planner import TripPlan, plan_all, replan_affected
from .stats import (RankTestResult, elasticity, gaussian_kde, histogram_pmf,
                    kendall, ks_statistic, ols, scott_bandwidth, spearman, tv_distance, zscore)


def _pmap(fn, items, jobs: int):
    """Ordered map, optionally over a process pool."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(jobs, len(items))) as ex:
        return list(ex.map(fn, items))


def _r(x, nd=10):
    if x is None:
        return None
    if isinstance(x, float):
        if math.isnan(x) or math.isinf(x):
            return None
        return round(x, nd) + 0.0  # folds -0.0 into 0.0
    return x


def _provenance(config: SimConfig, seed: int | None = None) -> dict:
    return {"config_hash": config.digest(), "seed": config.rng_seed if seed is None else seed,
            "version": __version__}


def _dump_json(blob: dict, path) -> None:
    Path(path).write_text(json.dumps(blob, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# ---------------------------------------------------------------- scenario records

@dataclass(frozen=True)
class ScenarioResult:
    scenario_id: str
    removed_routes: tuple[str, ...]
    group_mean_d: dict  # group -> mean D over completed trips
    overall_mean_d: float
    failure_rate: float
    mean_waiting_min: float
    mean_load_ratio: float
    delta_d: float  # overall mean D minus the baseline's (0 for the baseline itself)
    group_delta_d: dict
    report: AggregateReport

    def to_json(self) -> dict:
        return {
            "scenario_id": self.scenario_id,
            "removed_routes": list(self.removed_routes),
            "group_mean_d": {g: _r(v) for g, v in self.group_mean_d.items()},
            "overall_mean_d": _r(self.overall_mean_d),
            "failure_rate": _r(self.failure_rate),
            "mean_waiting_min": _r(self.mean_waiting_min),
            "mean_load_ratio": _r(self.mean_load_ratio),
            "delta_d": _r(self.delta_d),
            "group_delta_d": {g: _r(v) for g, v in self.group_delta_d.items()},
            "aggregates": self.report.to_json(),
        }


def _scenario(sid: str, removed, report: AggregateReport, base: AggregateReport | None) -> ScenarioResult:
    gd = {g: report.groups[g].mean_d for g in GROUPS}
    if base is None:
        dd, gdd = 0.0, {g: 0.0 for g in GROUPS}
    else:
        dd = report.overall.mean_d - base.overall.mean_d
        gdd = {g: gd[g] - base.groups[g].mean_d for g in GROUPS}
    return ScenarioResult(sid, tuple(removed), gd, report.overall.mean_d, report.overall.failure_rate,
                          report.overall.waiting_min, report.bus_load_ratio, dd, gdd, report)


@dataclass
class BaselineRun:
    dataset: Dataset
    config: SimConfig
    profile: SensitivityProfile
    network: Network
    plans: list[TripPlan]
    sim: SimulationResult
    result: ScenarioResult

    @property
    def outcomes(self) -> list[TripOutcome]:
        return self.sim.outcomes


def run_baseline(dataset: Dataset, config: SimConfig | None = None,
                 profile: SensitivityProfile | None = None) -> BaselineRun:
    """Build the network, plan every trip, simulate and aggregate."""
    config = config or SimConfig()
    profile = profile or SensitivityProfile.default()
    net = build_network(dataset, config)
    plans = plan_all(net, dataset.trips, profile, config)
    sim = run_simulation(dataset, net, plans, profile, config)
    return BaselineRun(dataset, config, profile, net, plans, sim, _scenario("baseline", (), sim.report, None))


def _simulate_task(args) -> AggregateReport:
    dataset, network, plans, profile, config = args
    return run_simulation(dataset, network, plans, profile, config).report


def run_single_removal(dataset: Dataset, route_id: str, config: SimConfig | None = None,
                       profile: SensitivityProfile | None = None,
                       baseline: BaselineRun | None = None) -> ScenarioResult:
    """Remove every edge of one route, replan the affected trips and re-simulate."""
    baseline = baseline or run_baseline(dataset, config, profile)
    if route_id not in baseline.network.routes:
        raise KeyError(f"unknown route {route_id!r}")
    net = remove_route(baseline.network, route_id)
    plans = replan_affected(net, baseline.plans, dataset.trips, baseline.profile, baseline.config)
    rep = _simulate_task((dataset, net, plans, baseline.profile, baseline.config))
    return _scenario(f"remove:{route_id}", (route_id,), rep, baseline.sim.report)


def _removal_task(args) -> AggregateReport:
    baseline, route_id = args
    net = remove_route(baseline.network, route_id)
    plans = replan_affected(net, baseline.plans, baseline.dataset.trips, baseline.profile, baseline.config)
    return run_simulation(baseline.dataset, net, plans, baseline.profile, baseline.config).report


def run_all_removals(baseline: BaselineRun, jobs: int = 1) -> list[ScenarioResult]:
    """Single-route removal for every active route, in network route order."""
    rids = list(baseline.network.routes)
    reps = _pmap(_removal_task, [(baseline, r) for r in rids], jobs)
    return [_scenario(f"remove:{r}", (r,), rep, baseline.sim.report) for r, rep in zip(rids, reps)]


def write_scenario_json(result: ScenarioResult, config: SimConfig, path) -> None:
    blob = result.to_json()
    blob.update(_provenance(config))
    _dump_json(blob, path)


# ---------------------------------------------------------------- deletion sweep

@dataclass(frozen=True)
class SweepPoint:
    step: int
    removed_route: str  # "" for the starting point
    group_mean_d: dict
    overall_mean_d: float
    failure_rate: float


@dataclass(frozen=True)
class SweepCurve:
    dimension: str
    order: tuple[str, ...]
    points: tuple[SweepPoint, ...]

    @property
    def overall(self) -> np.ndarray:
        return np.array([p.overall_mean_d for p in self.points])

    @property
    def failure_rates(self) -> np.ndarray:
        return np.array([p.failure_rate for p in self.points])


def n_removals(n_routes: int, fraction: float) -> int:
    # round first so 0.6 * 10 does not become 6.000000000000001 -> 7
    return min(n_routes, int(math.ceil(round(fraction * n_routes, 9))))


def _dimension_weights(dimension: str, coefficients) -> dict:
    dim = dimension.lower()
    if dim not in DIMENSIONS:
        raise ConfigError(f"unknown dimension {dimension!r}; expected one of {DIMENSIONS}")
    if coefficients is None:
        raise ConfigError(f"coefficients for dimension {dim!r} are required")
    if isinstance(coefficients, Mapping) and set(coefficients) <= set(FEATURE_NAMES):
        return dict(coefficients)
    table = load_coefficients(coefficients)
    if dim not in table:
        raise ConfigError(f"coefficients do not define dimension {dim!r}")
    return table[dim]


def run_sweep(dataset: Dataset, dimension: str, coefficients, config: SimConfig | None = None,
              profile: SensitivityProfile | None = None, baseline: BaselineRun | None = None,
              jobs: int = 1) -> SweepCurve:
    """Remove routes in ascending feature-score order until the removal fraction is reached.

    ``coefficients`` is either a feature->weight mapping for ``dimension`` or
    anything :func:`load_coefficients` accepts.  In static mode routes are
    ranked once on the starting network; in dynamic mode they are re-scored
    on the current network before each removal.
    """
    weights = _dimension_weights(dimension, coefficients)
    baseline = baseline or run_baseline(dataset, config, profile)
    config, profile = baseline.config, baseline.profile
    dim = dimension.lower()
    total = n_removals(len(baseline.network.routes), config.removal_fraction)

    net, plans = baseline.network, baseline.plans
    order: list[str] = []
    states = []
    if config.sweep_mode == "static":
        feats = compute_route_features(net, plans, dataset.pois, config)
        ranking = [s.route_id for s in score_routes(feats, weights, dim)][:total]
    for step in range(total):
        if config.sweep_mode == "static":
            rid = ranking[step]
        else:
            feats = compute_route_features(net, plans, dataset.pois, config)
            rid = score_routes(feats, weights, dim)[0].route_id
        net = remove_route(net, rid)
        plans = replan_affected(net, plans, dataset.trips, profile, config)
        order.append(rid)
        states.append((dataset, net, plans, profile, config))

    reports = [baseline.sim.report] + _pmap(_simulate_task, states, jobs)
    points = []
    for step, rep in enumerate(reports):
        points.append(SweepPoint(step, order[step - 1] if step else "",
                                 {g: rep.groups[g].mean_d for g in GROUPS},
                                 rep.overall.mean_d, rep.overall.failure_rate))
    return SweepCurve(dim, tuple(order), tuple(points))


SWEEP_COLUMNS = ("dimension", "step", "removed_route", "overall_D", "D_general", "D_student",
                 "D_elderly", "D_disabled", "failure_rate", "config_hash", "seed")


def write_sweep_csv(curves: Sequence[SweepCurve], config: SimConfig, path) -> None:
    prov = _provenance(config)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for c in curves:
            for p in c.points:
                w.writerow([c.dimension, p.step, p.removed_route, f"{p.overall_mean_d:.10g}"]
                           + [f"{p.group_mean_d[g]:.10g}" for g in GROUPS]
                           + [f"{p.failure_rate:.10g}", prov["config_hash"], prov["seed"]])


# ---------------------------------------------------------------- OFAT

SCENARIOS = {
    # scenario -> (component whose weight predicts the group order, perturbed parameter)
    "WAIT+": ("W", "headway"),
    "TIME+": ("L", "speed"),
    "CROWD+": ("C", "capacity"),
    "XFER+": ("T", "transfer_headway"),
}


@dataclass(frozen=True)
class OfatReport:
    scenario: str
    magnitude: float
    component: str
    x_base: float
    x_new: float
    exposure_base: float  # pooled mean of the scenario's exposure measure, baseline run
    exposure_delta: float  # pooled mean change of that measure over trips completed in both runs
    elasticities: dict  # group -> elasticity of the stratified group response
    raw_elasticities: dict  # group -> elasticity of the group's own mean D
    expected_order: tuple  # groups sorted by descending weight, ties kept in GROUPS order
    observed_order: tuple
    rank_test: RankTestResult
    low_signal: bool
    passed: bool
    baseline_load_ratio: float
    mean_waiting_base: dict
    mean_waiting_new: dict
    note: str = ""

    def to_json(self) -> dict:
        return {
            "scenario": self.scenario, "magnitude": self.magnitude, "component": self.component,
            "x_base": _r(self.x_base), "x_new": _r(self.x_new),
            "exposure_base": _r(self.exposure_base), "exposure_delta": _r(self.exposure_delta),
            "elasticities": {g: _r(v) for g, v in self.elasticities.items()},
            "raw_elasticities": {g: _r(v) for g, v in self.raw_elasticities.items()},
            "expected_order": list(self.expected_order), "observed_order": list(self.observed_order),
            "spearman": _r(self.rank_test.statistic), "ties": self.rank_test.ties,
            "low_signal": self.low_signal, "passed": self.passed,
            "baseline_load_ratio": _r(self.baseline_load_ratio),
            "mean_waiting_base": {g: _r(v) for g, v in self.mean_waiting_base.items()},
            "mean_waiting_new": {g: _r(v) for g, v in self.mean_waiting_new.items()},
            "note": self.note,
        }


def transfer_leg_routes(plans: Sequence[TripPlan]) -> set[str]:
    """Routes that appear as a second-or-later leg in any feasible plan."""
    return {leg.route_id for p in plans if p.feasible for leg in p.legs[1:]}


def _apply_driver(dataset: Dataset, scenario: str, m: float, plans) -> tuple[Dataset, float]:
    """Modified dataset and the new value of the driver (baseline value 1)."""
    if scenario == "WAIT+":
        routes = [r.with_changes(headway_min=r.headway_min * m) for r in dataset.routes]
        x_new = m
    elif scenario == "TIME+":
        routes = [r.with_changes(v_off=r.v_off * m) for r in dataset.routes]
        x_new = 1.0 / m
    elif scenario == "CROWD+":
        routes = [r.with_changes(capacity=max(1, int(round(r.capacity * m)))) for r in dataset.routes]
        x_new = 1.0 / m
    elif scenario == "XFER+":
        legs = transfer_leg_routes(plans)
        routes = [r.with_changes(headway_min=r.headway_min * m) if r.route_id in legs else r
                  for r in dataset.routes]
        x_new = m
    else:
        raise ConfigError(f"unknown OFAT scenario {scenario!r}; expected one of {tuple(SCENARIOS)}")
    return dataset.replace_routes(routes), x_new


def _exposure(o: TripOutcome, component: str) -> float:
    # transfers are fixed under frozen plans, so the transfer driver is measured by transfer-stop waiting
    if component == "T":
        return float(o.transfer_wait)
    return float(getattr(o, component))


def _weak_order_spearman(observed: dict, weights: dict) -> tuple[RankTestResult, tuple]:
    """Spearman between observed values and weights, where tied weights accept either observed order.

    Groups with equal weight are placed in their observed order inside the
    tied block, so only orderings that contradict a strict weight difference
    lower the statistic.
    """
    expected = tuple(sorted(GROUPS, key=lambda g: (-weights[g], GROUPS.index(g))))
    keys = {g: (weights[g], observed[g]) for g in GROUPS}
    levels = sorted(set(keys.values()))
    target = {g: levels.index(keys[g]) for g in GROUPS}
    res = spearman([observed[g] for g in GROUPS], [target[g] for g in GROUPS], threshold=1.0)
    return dataclasses.replace(res, ties="tie-aware (tied weights accept any observed order)"), expected


def run_ofat(dataset: Dataset, scenario: str, magnitude: float, config: SimConfig | None = None,
             profile: SensitivityProfile | None = None, baseline: BaselineRun | None = None) -> OfatReport:
    """Apply one driver change, re-simulate with frozen plans and compare group elasticities to the weights.

    The group response is stratified: the pooled mean change of the
    scenario's exposure measure (over trips completed in both runs) is
    weighted by each group's coefficient for that component, then turned
    into an elasticity against the pooled baseline mean D.  Raw own-group
    elasticities of mean D are reported alongside.
    """
    if scenario not in SCENARIOS:
        raise ConfigError(f"unknown OFAT scenario {scenario!r}; expected one of {tuple(SCENARIOS)}")
    if not magnitude > 0:
        raise ConfigError("magnitude must be > 0")
    baseline = baseline or run_baseline(dataset, config, profile)
    config, profile = baseline.config, baseline.profile
    comp, _ = SCENARIOS[scenario]
    ci = COMPONENTS.index(comp)
    weights = {g: profile.beta(g)[ci] for g in GROUPS}
    base_rep = baseline.sim.report
    d_base = base_rep.overall.mean_d

    mod, x_new = _apply_driver(dataset, scenario, magnitude, baseline.plans)
    if magnitude == 1.0:
        new_outcomes, new_rep = baseline.sim.outcomes, base_rep
    else:
        net = build_network(mod, config)
        sim = run_simulation(mod, net, baseline.plans, profile, config)
        new_outcomes, new_rep = sim.outcomes, sim.report

    both = [(a, b) for a, b in zip(baseline.sim.outcomes, new_outcomes)
            if a.status == COMPLETED and b.status == COMPLETED]
    exp_base = float(np.mean([_exposure(a, comp) for a, _ in both])) if both else 0.0
    delta = float(np.mean([_exposure(b, comp) - _exposure(a, comp) for a, b in both])) if both else 0.0

    if magnitude == 1.0:
        el = {g: 0.0 for g in GROUPS}
        raw = {g: 0.0 for g in GROUPS}
    else:
        el = {g: elasticity(d_base, d_base + weights[g] * delta, 1.0, x_new) for g in GROUPS}
        raw = {g: elasticity(base_rep.groups[g].mean_d, new_rep.groups[g].mean_d, 1.0, x_new)
               if base_rep.groups[g].mean_d != 0 else math.nan for g in GROUPS}

    notes = []
    low = False
    if scenario == "CROWD+" and base_rep.bus_load_ratio < config.low_signal_load:
        low = True
        notes.append(f"baseline load ratio {base_rep.bus_load_ratio:.3f} below {config.low_signal_load}")
    if magnitude != 1.0 and not abs(delta) > 1e-12:
        low = True
        notes.append(f"no measurable change in {comp} exposure")

    if magnitude == 1.0:
        rank = RankTestResult(math.nan, "spearman", "tie-aware", None, 1.0)
        expected = tuple(sorted(GROUPS, key=lambda g: (-weights[g], GROUPS.index(g))))
        passed = False
        notes.append("magnitude 1.0 leaves the driver unchanged")
    else:
        rank, expected = _weak_order_spearman(el, weights)
        passed = bool(rank.passed) and not low
    observed = tuple(sorted(GROUPS, key=lambda g: (-(el[g] if not math.isnan(el[g]) else -math.inf),
                                                   GROUPS.index(g))))
    return OfatReport(
        scenario=scenario, magnitude=float(magnitude), component=comp, x_base=1.0, x_new=float(x_new),
        exposure_base=exp_base, exposure_delta=delta, elasticities=el, raw_elasticities=raw,
        expected_order=expected, observed_order=observed, rank_test=rank, low_signal=low, passed=passed,
        baseline_load_ratio=base_rep.bus_load_ratio,
        mean_waiting_base={g: base_rep.groups[g].waiting_min for g in GROUPS},
        mean_waiting_new={g: new_rep.groups[g].waiting_min for g in GROUPS},
        note="; ".join(notes),
    )


def write_ofat_json(reports: Sequence[OfatReport], config: SimConfig, path) -> None:
    blob = {"scenarios": [r.to_json() for r in reports]}
    blob.update(_provenance(config))
    _dump_json(blob, path)


# ---------------------------------------------------------------- perturbation

@dataclass(frozen=True)
class PerturbationReport:
    mode: str
    n_samples: int
    global_factors: np.ndarray  # (n,)
    group_means: np.ndarray  # (n, 4) per-sample group mean D, GROUPS order
    standardized: np.ndarray  # (n, 4) pooled z-scores
    taus: np.ndarray  # (n,)
    retention_rate: float
    baseline_means: np.ndarray  # (4,)
    baseline_order: tuple
    iqr_gaps: dict  # pair -> {"q25", "q75", "iqr", "q25_z", "q75_z", "iqr_z"}
    envelope_ok: bool
    envelope_ratio: float  # smallest adjacent-group ratio of baseline means

    def to_json(self) -> dict:
        return {
            "mode": self.mode, "n_samples": self.n_samples, "retention_rate": _r(self.retention_rate),
            "min_tau": _r(float(np.min(self.taus))) if self.taus.size else None,
            "baseline_means": {g: _r(float(v)) for g, v in zip(GROUPS, self.baseline_means)},
            "baseline_order": list(self.baseline_order),
            "iqr_gaps": {k: {kk: _r(vv) for kk, vv in v.items()} for k, v in self.iqr_gaps.items()},
            "envelope_ok": self.envelope_ok, "envelope_ratio": _r(self.envelope_ratio),
        }


GAP_PAIRS = (("Elderly", "Student"), ("Disabled", "General"))


def _group_component_means(outcomes: Sequence[TripOutcome]) -> np.ndarray:
    out = np.zeros((len(GROUPS), len(COMPONENTS)))
    for gi, g in enumerate(GROUPS):
        rows = [(o.L, o.T, o.W, o.C) for o in outcomes if o.group == g and o.status == COMPLETED]
        if rows:
            out[gi] = np.mean(np.asarray(rows, dtype=np.float64), axis=0)
    return out


def draw_perturbations(n: int, global_range: float, individual_range: float, seed: int):
    """Global factors (n,) and individual factors (n, 4, 4) from a seeded generator."""
    rng = np.random.default_rng(seed)
    g = rng.uniform(1.0 - global_range, 1.0 + global_range, size=n)
    u = rng.uniform(1.0 - individual_range, 1.0 + individual_range, size=(n, len(GROUPS), len(COMPONENTS)))
    return g, u


def _full_task(args):
    dataset, config, profile = args
    net = build_network(dataset, config)
    plans = plan_all(net, dataset.trips, profile, config)
    rep = run_simulation(dataset, net, plans, profile, config).report
    return [rep.groups[g].mean_d for g in GROUPS]


def run_perturbation(dataset: Dataset, config: SimConfig | None = None, n_samples: int = 600,
                     global_range: float = 0.15, individual_range: float = 0.10, mode: str = "fast",
                     seed: int | None = None, profile: SensitivityProfile | None = None,
                     baseline: BaselineRun | None = None, bias: Mapping[str, float] | None = None,
                     jobs: int = 1) -> PerturbationReport:
    """Perturb the 16 weights ``n_samples`` times and track the group ordering of mean D.

    ``fast`` re-scores the frozen baseline components of each completed trip
    (mean D is then linear in the weights); ``full`` re-plans and
    re-simulates every sample.  ``bias`` multiplies a group's weights in
    every sample on top of the random factors, for stress tests.
    """
    if mode not in ("fast", "full"):
        raise ConfigError("perturbation mode must be 'fast' or 'full'")
    if n_samples < 1:
        raise ConfigError("n_samples must be >= 1")
    if not (0 <= global_range < 1 and 0 <= individual_range < 1):
        raise ConfigError("perturbation ranges must lie in [0, 1)")
    baseline = baseline or run_baseline(dataset, config, profile)
    config, profile = baseline.config, baseline.profile
    seed = config.rng_seed if seed is None else seed
    beta = profile.as_array()
    base_means = np.array([baseline.sim.report.groups[g].mean_d for g in GROUPS])

    g, u = draw_perturbations(n_samples, global_range, individual_range, seed)
    scale = np.ones(len(GROUPS))
    for grp, f in (bias or {}).items():
        scale[GROUPS.index(grp)] = float(f)
    betas = g[:, None, None] * u * beta[None, :, :] * scale[None, :, None]

    if mode == "fast":
        comp = _group_component_means(baseline.outcomes)
        means = np.einsum("sgc,gc->sg", betas, comp)
    else:
        tasks = [(dataset, config, SensitivityProfile.from_array(b)) for b in betas]
        means = np.asarray(_pmap(_full_task, tasks, jobs), dtype=np.float64)

    taus = np.array([kendall(row, base_means).statistic for row in means])
    retained = float(np.mean(np.isclose(taus, 1.0, rtol=0, atol=1e-12)))
    pooled = means.ravel()
    sd = pooled.std()
    std = (means - pooled.mean()) / sd if sd > 0 else np.zeros_like(means)
    gaps = {}
    for hi, lo in GAP_PAIRS:
        a, b = GROUPS.index(hi), GROUPS.index(lo)
        raw = means[:, a] - means[:, b]
        z = std[:, a] - std[:, b]
        q25, q75 = np.percentile(raw, [25, 75])
        z25, z75 = np.percentile(z, [25, 75])
        gaps[f"{hi}-{lo}"] = {"q25": float(q25), "q75": float(q75), "iqr": float(q75 - q25),
                              "q25_z": float(z25), "q75_z": float(z75), "iqr_z": float(z75 - z25)}
    order = tuple(sorted(GROUPS, key=lambda x: (-base_means[GROUPS.index(x)], GROUPS.index(x))))
    ratio, ok = envelope_check(base_means, individual_range)
    return PerturbationReport(mode, n_samples, g, means, std, taus, retained, base_means, order, gaps, ok, ratio)


def envelope_check(group_means, individual_range: float) -> tuple[float, bool]:
    """Whether every adjacent pair of group means is separated beyond the worst-case individual spread.

    The global factor scales all groups alike, so only the individual factors
    can reorder groups: a mean can move by at most the factor range either way.
    """
    s = np.sort(np.asarray(group_means, dtype=np.float64))[::-1]
    if s.size < 2 or np.any(s <= 0):
        return 0.0, False
    ratio = float(np.min(s[:-1] / s[1:]))
    return ratio, bool(ratio > (1.0 + individual_range) / (1.0 - individual_range))


def write_perturbation_csv(report: PerturbationReport, config: SimConfig, path, seed: int | None = None) -> None:
    prov = _provenance(config, seed)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample", "g"] + [f"D_{x.lower()}" for x in GROUPS] + [f"z_{x.lower()}" for x in GROUPS]
                   + ["tau", "config_hash", "seed"])
        for i in range(report.n_samples):
            w.writerow([i, f"{report.global_factors[i]:.10g}"]
                       + [f"{v:.10g}" for v in report.group_means[i]]
                       + [f"{v:.10g}" for v in report.standardized[i]]
                       + [f"{report.taus[i]:.10g}", prov["config_hash"], prov["seed"]])


# ---------------------------------------------------------------- validation

@dataclass(frozen=True)
class ValidationReport:
    n_sim: int
    n_ref: int
    trip_time_ks: float
    trip_time_tv: float | None
    transfers_ks: float
    transfers_tv: float
    kde_grid: tuple
    kde_sim: tuple
    kde_ref: tuple
    kde_integral_sim: float | None
    kde_integral_ref: float | None
    transfer_support: tuple
    transfer_pmf_sim: tuple
    transfer_pmf_ref: tuple
    note: str = ""

    def to_json(self) -> dict:
        return {
            "n_sim": self.n_sim, "n_ref": self.n_ref,
            "trip_time": {"ks": _r(self.trip_time_ks), "tv": _r(self.trip_time_tv),
                          "kde_integral_sim": _r(self.kde_integral_sim),
                          "kde_integral_ref": _r(self.kde_integral_ref),
                          "grid": [_r(x, 6) for x in self.kde_grid],
                          "density_sim": [_r(x, 12) for x in self.kde_sim],
                          "density_ref": [_r(x, 12) for x in self.kde_ref]},
            "transfers": {"ks": _r(self.transfers_ks), "tv": _r(self.transfers_tv),
                          "support": list(self.transfer_support),
                          "pmf_sim": [_r(x) for x in self.transfer_pmf_sim],
                          "pmf_ref": [_r(x) for x in self.transfer_pmf_ref]},
            "note": self.note,
        }


def _trapezoid(y, x) -> float:
    return float(np.sum((y[1:] + y[:-1]) * np.diff(x)) / 2.0)


def _trip_times(outcomes):
    return np.array([o.in_vehicle_min + o.waiting_min for o in outcomes if o.status == COMPLETED])


def _transfer_counts(outcomes):
    return np.array([o.T for o in outcomes if o.status == COMPLETED], dtype=np.int64)


def validate_distributions(sim: Sequence[TripOutcome], ref: Sequence[TripOutcome],
                           n_grid: int = 512) -> ValidationReport:
    """Compare total trip time and transfer-count distributions of two outcome sets."""
    a, b = _trip_times(sim), _trip_times(ref)
    if a.size == 0 or b.size == 0:
        raise ValueError("validation needs completed trips in both outcome sets")
    ta, tb = _transfer_counts(sim), _transfer_counts(ref)
    ks_t = ks_statistic(a, b)
    ks_x = ks_statistic(ta, tb)
    support, pa, pb = histogram_pmf(ta, tb)
    note = ""
    grid = dens_a = dens_b = ()
    tv_t = int_a = int_b = None
    if a.std() > 0 and b.std() > 0 and a.size > 1 and b.size > 1:
        h = max(scott_bandwidth(a), scott_bandwidth(b))
        lo = min(a.min(), b.min()) - 6 * h
        hi = max(a.max(), b.max()) + 6 * h
        g = np.linspace(lo, hi, n_grid)
        _, fa = gaussian_kde(a, g)
        _, fb = gaussian_kde(b, g)
        int_a, int_b = float(_trapezoid(fa, g)), float(_trapezoid(fb, g))
        tv_t = float(0.5 * _trapezoid(np.abs(fa - fb), g))
        grid, dens_a, dens_b = tuple(g.tolist()), tuple(fa.tolist()), tuple(fb.tolist())
    else:
        note = "trip-time KDE skipped: a sample has zero variance"
    return ValidationReport(a.size, b.size, ks_t, tv_t, ks_x, tv_distance(pa, pb), grid, dens_a, dens_b,
                            int_a, int_b, tuple(int(s) for s in support), tuple(pa.tolist()),
                            tuple(pb.tolist()), note)


def write_validation_json(report: ValidationReport, config: SimConfig, path) -> None:
    blob = report.to_json()
    blob.update(_provenance(config))
    _dump_json(blob, path)


# ---------------------------------------------------------------- dimension regressions

@dataclass(frozen=True)
class RegressionTable:
    dimensions: dict  # dimension -> RegressionResult, or None when no usable regressor remains
    dropped: dict  # dimension -> features left out for zero variance across routes
    features: tuple
    removals: tuple  # ScenarioResult per route, network order

    def coefficients(self) -> dict:
        return {d: dict(zip(r.names, r.coefficients)) for d, r in self.dimensions.items() if r is not None}


DIMENSION_FEATURES = {
    "capacity": ("ridership",),
    "structure": ("density_contrib", "avg_betweenness", "avg_path_length_delta"),
    "function": ("sparse_station_ratio", "amenity_entropy"),
}


def run_regressions(dataset: Dataset, config: SimConfig | None = None,
                    profile: SensitivityProfile | None = None, baseline: BaselineRun | None = None,
                    standardize: bool = True, jobs: int = 1) -> RegressionTable:
    """Regress per-route single-removal mean-D change on each dimension's features.

    Every active route is one observation.  Regressors are z-scored across
    routes; with ``standardize`` the response is z-scored as well.  Features
    that are constant across routes carry no information and are dropped
    with a warning.
    """
    baseline = baseline or run_baseline(dataset, config, profile)
    feats = compute_route_features(baseline.network, baseline.plans, dataset.pois, baseline.config)
    removals = run_all_removals(baseline, jobs)
    y = np.array([s.delta_d for s in removals])
    out, dropped = {}, {}
    for dim, names in DIMENSION_FEATURES.items():
        cols = {n: np.array([f.value(n) for f in feats]) for n in names}
        keep = tuple(n for n in names if cols[n].std() > 0)
        dropped[dim] = tuple(n for n in names if n not in keep)
        for n in dropped[dim]:
            warnings.warn(f"feature {n!r} is constant across routes; left out of the {dim} regression",
                          RuntimeWarning, stacklevel=2)
        if not keep:
            out[dim] = None
            continue
        X = np.column_stack([zscore(cols[n]) for n in keep])
        out[dim] = ols(X, y, standardize_y=standardize, names=keep)
    return RegressionTable(out, dropped, tuple(feats), tuple(removals))


def write_regression_json(table: RegressionTable, config: SimConfig, path) -> None:
    dims = {}
    for d, r in table.dimensions.items():
        block = {"dropped": list(table.dropped[d])}
        if r is not None:
            block.update(_round_tree(r.to_json()))
        dims[d] = block
    blob = {"dimensions": dims}
    blob.update(_provenance(config))
    _dump_json(blob, path)


def _round_tree(v):
    if isinstance(v, dict):
        return {k: _round_tree(x) for k, x in v.items()}
    return _r(v, 12)
