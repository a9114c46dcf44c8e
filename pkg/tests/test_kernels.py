import networkx as nx
import numpy as np
import pytest

from buscut import kernels
from buscut.data import haversine_m
from buscut.kernels import brandes_py, haversine_matrix, haversine_matrix_np, to_csr

from builders import brute_force_graph_metrics

BACKENDS = [pytest.param(brandes_py, id="numpy")]
if kernels.brandes_nb is not None:
    BACKENDS.append(pytest.param(kernels.brandes_nb, id="numba"))


def _random_digraph(rng, n_max=15):
    n = int(rng.integers(2, n_max + 1))
    p = float(rng.uniform(0.05, 0.5))
    edges = sorted({(int(a), int(b)) for a in range(n) for b in range(n)
                    if a != b and rng.random() < p})
    return n, edges


@pytest.mark.parametrize("kernel", BACKENDS)
def test_brandes_matches_networkx(kernel):
    rng = np.random.default_rng(5)
    for _ in range(30):
        n, edges = _random_digraph(rng)
        g = nx.DiGraph()
        g.add_nodes_from(range(n))
        g.add_edges_from(edges)
        bc, dist_sum, n_pairs = kernel(*to_csr(n, [a for a, _ in edges], [b for _, b in edges]))
        ref = nx.betweenness_centrality(g, normalized=False)
        np.testing.assert_allclose(bc, [ref[i] for i in range(n)], atol=1e-9)
        lengths = dict(nx.all_pairs_shortest_path_length(g))
        assert dist_sum == sum(d for s in lengths for t, d in lengths[s].items() if s != t)
        assert n_pairs == sum(len(lengths[s]) - 1 for s in lengths)


@pytest.mark.parametrize("kernel", BACKENDS)
def test_brandes_matches_path_counting_oracle(kernel):
    rng = np.random.default_rng(6)
    for _ in range(20):
        n, edges = _random_digraph(rng, 10)
        got = kernel(*to_csr(n, [a for a, _ in edges], [b for _, b in edges]))
        bc, dist_sum, n_pairs = brute_force_graph_metrics(n, edges)
        np.testing.assert_allclose(got[0], bc, atol=1e-9)
        assert (got[1], got[2]) == (dist_sum, n_pairs)


def test_brandes_on_a_path():
    # 0 -> 1 -> 2: node 1 lies on the single path 0 to 2
    bc, dist_sum, n_pairs = brandes_py(*to_csr(3, [0, 1], [1, 2]))
    assert bc.tolist() == [0.0, 1.0, 0.0]
    assert (dist_sum, n_pairs) == (1 + 2 + 1, 3)


def test_to_csr_layout():
    indptr, indices, rindptr, rindices = to_csr(3, [2, 0, 0], [0, 2, 1])
    assert indptr.tolist() == [0, 2, 2, 3]
    assert indices.tolist() == [1, 2, 0]
    assert rindptr.tolist() == [0, 1, 2, 3]
    assert rindices.tolist() == [2, 0, 0]


def test_haversine_backends_agree_with_scalar():
    rng = np.random.default_rng(0)
    lat1, lon1 = rng.uniform(-80, 80, 7), rng.uniform(-179, 179, 7)
    lat2, lon2 = rng.uniform(-80, 80, 5), rng.uniform(-179, 179, 5)
    ref = np.array([[haversine_m((a, b), (c, d)) for c, d in zip(lat2, lon2)] for a, b in zip(lat1, lon1)])
    np.testing.assert_allclose(haversine_matrix_np(lat1, lon1, lat2, lon2), ref, rtol=1e-12, atol=1e-6)
    np.testing.assert_allclose(haversine_matrix(lat1, lon1, lat2, lon2), ref, rtol=1e-12, atol=1e-6)
    loop = kernels._haversine_matrix_loop(lat1, lon1, lat2, lon2)
    np.testing.assert_allclose(loop, ref, rtol=1e-12, atol=1e-6)


def test_haversine_arc_length_oracle():
    # along a meridian the great-circle distance is R times the latitude difference in radians
    d = haversine_matrix([10.0], [30.0], [10.0, 25.5, -40.0], [30.0, 30.0, 30.0])
    expected = kernels.EARTH_RADIUS_M * np.radians([0.0, 15.5, 50.0])
    np.testing.assert_allclose(d[0], expected, rtol=1e-12)


@pytest.mark.skipif(kernels.label_search_nb is None, reason="numba unavailable")
def test_benchmark_script_runs(capsys):
    import runpy
    from pathlib import Path
    path = Path(__file__).resolve().parents[1] / "benchmarks" / "bench_kernels.py"
    bench = runpy.run_path(str(path), run_name="bench")
    assert bench["main"](["--trips", "40", "--repeat", "1"]) == 0
    out = capsys.readouterr().out
    assert "brandes" in out and "planner x40" in out
