import numpy as np
import pytest

from formflight.graph import (
    FormationGraph,
    GraphError,
    analyze,
    has_spanning_tree,
    validate_gamma,
)
from formflight.scenario import load, shipped_path

from conftest import reachability_oracle, random_spanning_digraph


def make_graph(adjacency):
    adjacency = np.asarray(adjacency, dtype=float)
    n = adjacency.shape[0]
    return FormationGraph(
        adjacency=adjacency,
        offsets=np.zeros((n, 3)),
        maneuver_velocity=np.zeros(3),
    )


def test_two_node_chain_degrees_and_laplacian():
    # node 1 hears node 0
    graph = make_graph([[0, 0], [1, 0]])
    analysis = analyze(graph)
    assert np.array_equal(analysis.degree, [0.0, 1.0])
    assert analysis.max_degree == 1.0
    assert analysis.laplacian[1, 1] == 1.0
    assert analysis.laplacian[1, 0] == -1.0


def test_laplacian_rows_sum_to_zero():
    rng = np.random.default_rng(7)
    for _ in range(50):
        n = int(rng.integers(2, 9))
        adjacency = rng.uniform(0, 2, (n, n))
        np.fill_diagonal(adjacency, 0.0)
        analysis = analyze(make_graph(adjacency))
        assert np.abs(analysis.laplacian.sum(axis=1)).max() < 1e-12


def test_shipped_hexagon_topology_has_spanning_tree():
    scenario = load(shipped_path("hexagon"))
    assert has_spanning_tree(scenario.graph)
    assert reachability_oracle(scenario.graph.adjacency)


def test_ring_with_chords_unit_weights():
    # hexagon-style ring over nodes 0..5 plus chords through a hub at 6
    n = 7
    adjacency = np.zeros((n, n))
    ring = [0, 1, 2, 3, 4, 5]
    for idx, v in enumerate(ring):
        adjacency[v, ring[(idx + 1) % 6]] = 1.0
    adjacency[6, 0] = 1.0
    adjacency[2, 6] = 1.0
    graph = make_graph(adjacency)
    assert has_spanning_tree(graph) == reachability_oracle(adjacency)
    assert has_spanning_tree(graph)


def test_spanning_tree_simple_cases():
    complete = np.ones((4, 4)) - np.eye(4)
    assert has_spanning_tree(make_graph(complete))
    assert not has_spanning_tree(make_graph(np.zeros((2, 2))))
    chain = np.zeros((4, 4))
    for child in (1, 2, 3):
        chain[child, child - 1] = 1.0
    assert has_spanning_tree(make_graph(chain))


def test_spanning_tree_matches_oracle_on_random_graphs():
    rng = np.random.default_rng(11)
    for _ in range(200):
        n = int(rng.integers(2, 9))
        adjacency = (rng.uniform(0, 1, (n, n)) < 0.25).astype(float)
        np.fill_diagonal(adjacency, 0.0)
        assert has_spanning_tree(make_graph(adjacency)) == reachability_oracle(adjacency)


def test_construction_rejects_bad_graphs():
    with pytest.raises(GraphError):
        make_graph([[0.0]])  # single vehicle
    with pytest.raises(GraphError):
        make_graph([[0, -1], [0, 0]])  # negative weight
    with pytest.raises(GraphError):
        make_graph([[1, 0], [0, 0]])  # self-weight


def test_validate_gamma_examples():
    analysis = analyze(make_graph([[0, 0], [1, 0]]))  # max degree 1
    report = validate_gamma(analysis, gamma=2.0, h=0.05)
    assert report.valid and report.lower == 1.0 and report.upper == 20.0

    deg9 = np.zeros((10, 10))
    deg9[0, 1:] = 1.0
    report = validate_gamma(analyze(make_graph(deg9)), gamma=2.0, h=0.05)
    assert not report.valid  # sqrt(9) = 3 > 2

    deg4 = np.zeros((5, 5))
    deg4[0, 1:] = 1.0
    report = validate_gamma(analyze(make_graph(deg4)), gamma=3.0, h=0.05)
    assert report.lower == 2.0 and report.upper == 20.0 and report.valid


def test_validate_gamma_empty_interval_is_reported_not_raised():
    wide = np.zeros((2, 2))
    wide[0, 1] = 625.0  # sqrt(625) = 25 >= 1/h = 20
    report = validate_gamma(analyze(make_graph(wide)), gamma=22.0, h=0.05)
    assert report.interval_empty and not report.valid
    assert "empty" in report.describe()


def test_validate_gamma_monotone():
    rng = np.random.default_rng(3)
    for _ in range(100):
        adjacency = random_spanning_digraph(rng, int(rng.integers(2, 7)))
        analysis = analyze(make_graph(adjacency))
        h = 0.05
        lo, hi = np.sqrt(analysis.max_degree), 1.0 / h
        if lo >= hi:
            continue
        g1 = rng.uniform(lo, hi)
        g2 = rng.uniform(g1, hi - 1e-9)
        if validate_gamma(analysis, g1, h).valid:
            assert validate_gamma(analysis, g2, h).valid
