"""Compare the numba kernels against their pure numpy/Python fallbacks.

Usage::

    python benchmarks/bench_kernels.py            # small synthetic network
    python benchmarks/bench_kernels.py --scale huairou --trips 2000

Each kernel pair is run on the same inputs, checked for identical output,
and timed (best of ``--repeat`` runs, after one warm-up call that also
triggers numba compilation).
"""
from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from buscut import kernels
from buscut.data import SensitivityProfile, SimConfig
from buscut.network import _graph_csr, build_network
from buscut.planner import PlannerIndex
from buscut.synth import SynthSpec, generate_synthetic


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def plan_sample(index, trips, profile):
    return [index.plan(t.origin_stop, t.dest_stop, profile.beta(t.group)) for t in trips]


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scale", choices=("small", "huairou"), default="small")
    ap.add_argument("--trips", type=int, default=300, help="trips planned per planner backend")
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    if kernels.label_search_nb is None:
        print("numba is unavailable or disabled (BUSCUT_DISABLE_JIT); nothing to compare", file=sys.stderr)
        return 1
    spec = SynthSpec.huairou_scale() if args.scale == "huairou" else SynthSpec(n_trips=args.trips)
    ds = generate_synthetic(spec, args.seed)
    cfg = SimConfig()
    net = build_network(ds, cfg)
    print(f"{len(net.nodes)} stops, {len(net.routes)} routes, {len(net.transfer_edges)} transfer links")

    rows = []
    csr = _graph_csr(net)
    t_py, ref = best_of(lambda: kernels.brandes_py(*csr), args.repeat)
    t_nb, got = best_of(lambda: kernels.brandes_nb(*csr), args.repeat)
    assert np.allclose(ref[0], got[0], atol=1e-9) and ref[1:] == got[1:]
    rows.append(("brandes", t_py, t_nb))

    lat = np.array([c[0] for c in net.coords])
    lon = np.array([c[1] for c in net.coords])
    t_py, ref = best_of(lambda: kernels.haversine_matrix_np(lat, lon, lat, lon), args.repeat)
    t_nb, got = best_of(lambda: kernels.haversine_matrix_nb(lat, lon, lat, lon), args.repeat)
    assert np.allclose(ref, got, atol=1e-6)
    rows.append(("haversine", t_py, t_nb))

    profile = SensitivityProfile.default()
    trips = ds.trips[:args.trips]
    py_index = PlannerIndex(net, cfg, backend="python")
    nb_index = PlannerIndex(net, cfg, backend="numba")
    t_py, ref = best_of(lambda: plan_sample(py_index, trips, profile), 1)
    t_nb, got = best_of(lambda: plan_sample(nb_index, trips, profile), args.repeat)
    assert ref == got
    rows.append((f"planner x{len(trips)}", t_py, t_nb))

    print(f"{'kernel':<16}{'python [s]':>12}{'numba [s]':>12}{'speedup':>10}")
    for name, a, b in rows:
        print(f"{name:<16}{a:>12.4f}{b:>12.4f}{a / b:>9.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
