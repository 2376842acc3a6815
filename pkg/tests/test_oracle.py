import networkx as nx
import numpy as np
import pytest

from urban_sim.oracle import max_disjoint_count, qos_paths, vertex_min_cut
from urban_sim.routing import select_disjoint_paths
from urban_sim.scenario import QosRequirement

LOOSE = QosRequirement(max_delay=10.0, max_hops=9, min_bw=1.0)


def _random_connected_graph(rng, n):
    while True:
        graph = nx.gnp_random_graph(n, float(rng.uniform(0.25, 0.5)), seed=int(rng.integers(2**31)))
        if nx.is_connected(graph):
            return graph


def _geometric_graph(positions, tx_range):
    graph = nx.Graph()
    graph.add_nodes_from(range(len(positions)))
    for i, (xi, yi) in enumerate(positions):
        for j, (xj, yj) in enumerate(positions[i + 1:], start=i + 1):
            if np.hypot(xi - xj, yi - yj) <= tx_range:
                graph.add_edge(i, j)
    return graph


def test_greedy_never_beats_the_optimum_or_the_cut():
    rng = np.random.default_rng(2024)
    for _ in range(200):
        n = int(rng.integers(4, 11))
        graph = _random_connected_graph(rng, n)
        src, dst = (int(v) for v in rng.choice(n, size=2, replace=False))
        paths = qos_paths(graph, src, dst, LOOSE, hop_delay=0.01)
        greedy = select_disjoint_paths(paths, LOOSE, max_paths=n)
        best = max_disjoint_count(paths)
        cut = vertex_min_cut(graph, src, dst)
        assert 1 <= len(greedy) <= best <= cut


def test_min_cut_matches_node_connectivity():
    rng = np.random.default_rng(7)
    checked = 0
    while checked < 50:
        graph = _random_connected_graph(rng, int(rng.integers(4, 9)))
        src, dst = (int(v) for v in rng.choice(graph.number_of_nodes(), size=2, replace=False))
        if graph.has_edge(src, dst):
            continue
        assert vertex_min_cut(graph, src, dst) == nx.node_connectivity(graph, src, dst)
        checked += 1


def test_unconstrained_optimum_equals_the_cut():
    # Menger: without hop or delay limits the disjoint maximum is the min cut
    rng = np.random.default_rng(11)
    for _ in range(40):
        graph = _random_connected_graph(rng, int(rng.integers(4, 8)))
        src, dst = 0, graph.number_of_nodes() - 1
        paths = qos_paths(graph, src, dst, LOOSE, hop_delay=0.01)
        assert max_disjoint_count(paths) == vertex_min_cut(graph, src, dst)


def test_hop_limit_filters_paths():
    graph = nx.path_graph(5)
    assert qos_paths(graph, 0, 4, QosRequirement(max_hops=3), hop_delay=0.01) == []
    (path,) = qos_paths(graph, 0, 4, QosRequirement(max_hops=4), hop_delay=0.01)
    assert path.nodes == (0, 1, 2, 3, 4)
    assert path.est_delay == pytest.approx(0.04)


def test_residual_bandwidth_filters_paths():
    graph = nx.cycle_graph(4)
    residual = {1: 10.0}
    paths = qos_paths(graph, 0, 2, QosRequirement(min_bw=100.0), hop_delay=0.01, residual=residual)
    assert [p.nodes for p in paths] == [(0, 3, 2)]


@pytest.mark.parametrize("name, src, dst", [("diamond", 0, 3), ("two_bridge", 0, 5)])
def test_shipped_topologies_reach_the_optimum(load_scenario, name, src, dst):
    cfg = load_scenario(name)
    graph = _geometric_graph(cfg.nodes.placement, cfg.radio.tx_range)
    qos = cfg.traffic[0].qos
    paths = qos_paths(graph, src, dst, qos, hop_delay=cfg.qos.nominal_hop_delay)
    greedy = select_disjoint_paths(paths, qos, cfg.routing.max_paths)
    assert len(greedy) == max_disjoint_count(paths) == 2
