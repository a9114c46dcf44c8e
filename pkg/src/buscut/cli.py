"""
``buscut`` command line.

Exit codes: 0 success, 1 invalid input (usage, config, dataset), 2 runtime
failure.  Progress goes to stderr; results go to files under ``--out``.
"""
from __future__ import annotations

import argparse
import hashlib
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .data import ConfigError, DatasetError, SensitivityProfile, SimConfig, load_dataset_dir, write_dataset
from .engine import read_outcomes_csv, write_aggregates_json, write_outcomes_csv
from .experiments import (SCENARIOS, run_baseline, run_ofat, run_perturbation, run_regressions,
                          run_single_removal, run_sweep, validate_distributions, write_ofat_json,
                          write_perturbation_csv, write_regression_json, write_scenario_json,
                          write_sweep_csv, write_validation_json, _dump_json, _provenance, _r)
from .features import (DIMENSIONS, compute_route_features, load_coefficients, score_routes,
                       write_features_csv, write_scores_csv)
from .network import build_network, topology_metrics, write_edges_csv
from .stats import StatsError
from .synth import SynthError, SynthSpec, generate_synthetic

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger("buscut")

USER_ERRORS = (ConfigError, DatasetError, SynthError, StatsError, FileNotFoundError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _common(p: argparse.ArgumentParser, data: bool = True) -> None:
    p.add_argument("--config", type=Path, help="TOML file with simulation settings")
    p.add_argument("--seed", type=int, help="random seed (overrides rng_seed in the config)")
    p.add_argument("--out", type=Path, default=Path("."), help="output directory")
    p.add_argument("--jobs", type=int, help="maximum concurrent scenario runs")
    if data:
        p.add_argument("--data", type=Path, required=True,
                       help="directory with stops.csv, routes.csv, trips.csv and optional pois.csv")
        p.add_argument("--sensitivity", type=Path, help="JSON table of group weights (default: shipped table)")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="buscut", description=__doc__.strip().splitlines()[0])
    ap.add_argument("--version", action="version", version=f"buscut {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    top = ap.add_subparsers(dest="group", required=True, parser_class=_Parser)

    gen = top.add_parser("gen", help="generate inputs").add_subparsers(dest="cmd", required=True,
                                                                       parser_class=_Parser)
    p = gen.add_parser("synth", help="write a synthetic dataset")
    _common(p, data=False)
    p.add_argument("--topology", choices=("grid", "hub_spoke"), default="grid")
    p.add_argument("--scale", choices=("small", "huairou"), default="small",
                   help="'huairou' gives 79 routes and 72,750 trips")
    p.add_argument("--routes", type=int)
    p.add_argument("--stops", type=int)
    p.add_argument("--trips", type=int)
    p.add_argument("--pois", type=int)

    net = top.add_parser("net", help="network tools").add_subparsers(dest="cmd", required=True,
                                                                     parser_class=_Parser)
    p = net.add_parser("build", help="write edges.csv and topology metrics")
    _common(p)

    sim = top.add_parser("sim", help="simulation").add_subparsers(dest="cmd", required=True,
                                                                  parser_class=_Parser)
    p = sim.add_parser("baseline", help="plan and simulate every trip")
    _common(p)

    exp = top.add_parser("exp", help="experiments").add_subparsers(dest="cmd", required=True,
                                                                   parser_class=_Parser)
    p = exp.add_parser("remove", help="single-route removal")
    _common(p)
    p.add_argument("--route", required=True)
    p = exp.add_parser("sweep", help="continuous deletion by feature score")
    _common(p)
    p.add_argument("--dimension", required=True, choices=DIMENSIONS + ("all",))
    p.add_argument("--coefficients", required=True,
                   help="coefficients JSON {dimension: {feature: weight}}, or 'builtin' for the shipped table")
    p.add_argument("--mode", choices=("static", "dynamic"), help="ranking mode (overrides sweep_mode)")
    p = exp.add_parser("ofat", help="one-factor-at-a-time driver check")
    _common(p)
    p.add_argument("--scenario", required=True, choices=tuple(SCENARIOS) + ("all",))
    p.add_argument("--magnitude", type=float, required=True,
                   help="multiplier on the driven parameter (headway, speed or capacity)")
    p = exp.add_parser("perturb", help="sensitivity-weight perturbation")
    _common(p)
    p.add_argument("--samples", type=int, default=600)
    p.add_argument("--global-range", type=float, default=0.15)
    p.add_argument("--individual-range", type=float, default=0.10)
    p.add_argument("--mode", choices=("fast", "full"), default="fast")

    st = top.add_parser("stats", help="statistics").add_subparsers(dest="cmd", required=True,
                                                                  parser_class=_Parser)
    p = st.add_parser("regress", help="per-dimension regressions of removal impact on route features")
    _common(p)
    p.add_argument("--raw-y", action="store_true", help="keep the response in raw units")

    val = top.add_parser("validate", help="validation").add_subparsers(dest="cmd", required=True,
                                                                      parser_class=_Parser)
    p = val.add_parser("compare", help="compare two outcomes.csv files")
    _common(p, data=False)
    p.add_argument("--sim", type=Path, required=True)
    p.add_argument("--ref", type=Path, required=True)
    return ap


# ---------------------------------------------------------------- helpers

def load_config(path: Path | None, seed: int | None, jobs: int | None, **overrides) -> SimConfig:
    values = {}
    if path is not None:
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            doc = tomllib.loads(path.read_text(encoding="utf-8"))
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        values.update(doc.get("sim", {}))
        values.update({k: v for k, v in doc.items() if not isinstance(v, dict)})
    if seed is not None:
        if seed < 0:
            raise ConfigError("--seed must be a non-negative integer")
        values["rng_seed"] = seed
    if jobs is not None:
        if jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        values["jobs"] = jobs
    values.update({k: v for k, v in overrides.items() if v is not None})
    return SimConfig.from_mapping(values)


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _inputs(args) -> list[Path]:
    files = []
    if getattr(args, "data", None) is not None:
        files += sorted(p for p in args.data.glob("*.csv"))
    for name in ("config", "sensitivity", "sim", "ref"):
        v = getattr(args, name, None)
        if isinstance(v, Path):
            files.append(v)
    coef = getattr(args, "coefficients", None)
    if coef and coef != "builtin":
        files.append(Path(coef))
    return files


def _write_manifest(args, argv, config: SimConfig, outputs: list[Path]) -> None:
    manifest = {
        "tool": "buscut",
        "version": __version__,
        "command": list(argv),
        "config_hash": config.digest(),
        "config": config.to_mapping(),
        "seed": config.rng_seed,
        "inputs": {str(p): _sha256(p) for p in _inputs(args) if p.is_file()},
        "outputs": {p.name: _sha256(p) for p in outputs},
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    _dump_json(manifest, args.out / "manifest.json")


def _profile(args) -> SensitivityProfile:
    return SensitivityProfile.from_json(args.sensitivity) if args.sensitivity else SensitivityProfile.default()


def _dataset(args):
    log.info("loading dataset from %s", args.data)
    return load_dataset_dir(args.data)


# ---------------------------------------------------------------- commands

def cmd_gen_synth(args, config):
    spec = SynthSpec.huairou_scale() if args.scale == "huairou" else SynthSpec()
    kw = {"topology": args.topology}
    for flag, field in (("routes", "n_routes"), ("stops", "n_stops"), ("trips", "n_trips"), ("pois", "n_pois")):
        if getattr(args, flag) is not None:
            kw[field] = getattr(args, flag)
    spec = SynthSpec(**{**spec.__dict__, **kw})
    ds = generate_synthetic(spec, config.rng_seed)
    write_dataset(ds, args.out)
    names = ["stops.csv", "routes.csv", "trips.csv"] + (["pois.csv"] if ds.pois is not None else [])
    log.info("wrote %d stops, %d routes, %d trips", len(ds.stops), len(ds.routes), len(ds.trips))
    return [args.out / n for n in names]


def cmd_net_build(args, config):
    ds = _dataset(args)
    net = build_network(ds, config)
    m = topology_metrics(net)
    write_edges_csv(net, args.out / "edges.csv")
    blob = {"density": _r(m.density), "avg_betweenness": _r(m.avg_betweenness),
            "avg_path_length": _r(m.avg_path_length), "connected_fraction": _r(m.connected_fraction),
            "n_nodes": m.n_nodes, "n_ride_pairs": m.n_ride_pairs,
            "n_ride_edges": len(net.ride_edges), "n_transfer_edges": len(net.transfer_edges)}
    blob.update(_provenance(config))
    _dump_json(blob, args.out / "network.json")
    return [args.out / "edges.csv", args.out / "network.json"]


def cmd_sim_baseline(args, config):
    ds = _dataset(args)
    base = run_baseline(ds, config, _profile(args))
    write_aggregates_json(base.sim.report, args.out / "aggregates.json", _provenance(config))
    write_outcomes_csv(base.outcomes, args.out / "outcomes.csv")
    o = base.sim.report.overall
    log.info("%d trips, %d completed, mean D %.4f", o.n_trips, o.n_completed, o.mean_d)
    return [args.out / "aggregates.json", args.out / "outcomes.csv"]


def cmd_exp_remove(args, config):
    ds = _dataset(args)
    base = run_baseline(ds, config, _profile(args))
    if args.route not in base.network.routes:
        raise ConfigError(f"unknown route {args.route!r}")
    res = run_single_removal(ds, args.route, baseline=base)
    write_scenario_json(res, config, args.out / "scenario_result.json")
    log.info("removed %s: dD %+.4f, failure rate %.4f", args.route, res.delta_d, res.failure_rate)
    return [args.out / "scenario_result.json"]


def cmd_exp_sweep(args, config):
    table = load_coefficients(args.coefficients)
    dims = DIMENSIONS if args.dimension == "all" else (args.dimension,)
    for d in dims:
        if d not in table:
            raise ConfigError(f"coefficients {args.coefficients!r} do not define dimension {d!r}")
    ds = _dataset(args)
    base = run_baseline(ds, config, _profile(args))
    feats = compute_route_features(base.network, base.plans, ds.pois, config)
    curves, scores = [], []
    for d in dims:
        log.info("sweep %s", d)
        scores += score_routes(feats, table[d], d)
        curves.append(run_sweep(ds, d, table[d], baseline=base, jobs=config.jobs))
    outs = [args.out / "sweep_curve.csv", args.out / "features.csv", args.out / "scores.csv"]
    write_sweep_csv(curves, config, outs[0])
    write_features_csv(feats, outs[1])
    write_scores_csv(scores, outs[2])
    return outs


def cmd_exp_ofat(args, config):
    ds = _dataset(args)
    base = run_baseline(ds, config, _profile(args))
    names = tuple(SCENARIOS) if args.scenario == "all" else (args.scenario,)
    reports = []
    for sc in names:
        r = run_ofat(ds, sc, args.magnitude, baseline=base)
        log.info("%s: spearman %s, %s%s", sc, _r(r.rank_test.statistic), "pass" if r.passed else "fail",
                 " (low signal)" if r.low_signal else "")
        reports.append(r)
    write_ofat_json(reports, config, args.out / "ofat_report.json")
    return [args.out / "ofat_report.json"]


def cmd_exp_perturb(args, config):
    ds = _dataset(args)
    base = run_baseline(ds, config, _profile(args))
    rep = run_perturbation(ds, n_samples=args.samples, global_range=args.global_range,
                           individual_range=args.individual_range, mode=args.mode, baseline=base,
                           jobs=config.jobs)
    write_perturbation_csv(rep, config, args.out / "perturbation.csv")
    blob = rep.to_json()
    blob.update(_provenance(config))
    _dump_json(blob, args.out / "perturbation_summary.json")
    log.info("retention rate %.4f over %d samples", rep.retention_rate, rep.n_samples)
    return [args.out / "perturbation.csv", args.out / "perturbation_summary.json"]


def cmd_stats_regress(args, config):
    ds = _dataset(args)
    base = run_baseline(ds, config, _profile(args))
    table = run_regressions(ds, baseline=base, standardize=not args.raw_y, jobs=config.jobs)
    write_regression_json(table, config, args.out / "regression_table.json")
    write_features_csv(table.features, args.out / "features.csv")
    return [args.out / "regression_table.json", args.out / "features.csv"]


def cmd_validate_compare(args, config):
    for p in (args.sim, args.ref):
        if not p.is_file():
            raise ConfigError(f"outcomes file not found: {p}")
    try:
        rep = validate_distributions(read_outcomes_csv(args.sim), read_outcomes_csv(args.ref))
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"cannot compare outcomes: {exc}") from None
    write_validation_json(rep, config, args.out / "validation_report.json")
    log.info("trip time KS %.4f, transfers TV %.4f", rep.trip_time_ks, rep.transfers_tv)
    return [args.out / "validation_report.json"]


COMMANDS = {
    ("gen", "synth"): cmd_gen_synth,
    ("net", "build"): cmd_net_build,
    ("sim", "baseline"): cmd_sim_baseline,
    ("exp", "remove"): cmd_exp_remove,
    ("exp", "sweep"): cmd_exp_sweep,
    ("exp", "ofat"): cmd_exp_ofat,
    ("exp", "perturb"): cmd_exp_perturb,
    ("stats", "regress"): cmd_stats_regress,
    ("validate", "compare"): cmd_validate_compare,
}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr, force=True)
    try:
        extra = {"sweep_mode": getattr(args, "mode", None)} if args.group == "exp" and args.cmd == "sweep" else {}
        config = load_config(args.config, args.seed, args.jobs, **extra)
        args.out.mkdir(parents=True, exist_ok=True)
        outputs = COMMANDS[(args.group, args.cmd)](args, config)
        _write_manifest(args, argv, config, outputs)
    except USER_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - any other failure is a runtime error
        log.debug("runtime failure", exc_info=True)
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
