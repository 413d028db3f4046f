import itertools

import numpy as np
import pytest

from app.errors import FileAccessError, GraphFormatError
from app.services.graph_service import (
    build_pull_weights,
    build_push_weights,
    degree_table,
    dump_edge_file,
    from_edge_list,
    graph_info,
    is_strongly_connected,
    load_edge_file,
    min_push_weight,
    parse_edge_text,
    random_strongly_connected,
)


def _reachable_everywhere(n, pairs):
    """Floyd-Warshall style closure on 1-based (receiver, sender) pairs"""
    reach = np.eye(n, dtype=bool)
    for receiver, sender in pairs:
        reach[sender - 1, receiver - 1] = True
    for k in range(n):
        reach |= reach[:, [k]] & reach[[k], :]
    return bool(reach.all())


def test_fig1_graph_shape(fig1_graph):
    """Reference network has 17 links"""
    assert fig1_graph.n == 10
    assert fig1_graph.m == 17
    assert fig1_graph.in_adj[3] == (0, 4, 7)
    assert fig1_graph.out_adj[0] == (1, 3)


def test_single_node(single_graph):
    """Test the one-node network"""
    assert single_graph.m == 0
    assert degree_table(single_graph) == [(0, 0)]
    assert is_strongly_connected(single_graph)


def test_pair_degrees(pair_graph):
    """Test degrees on the two-node network"""
    assert degree_table(pair_graph) == [(1, 1), (1, 1)]


@pytest.mark.parametrize(
    "n,pairs",
    [
        (2, [(1, 3)]),
        (2, [(0, 1)]),
        (2, [(1, 1)]),
        (2, [(1, 2), (1, 2)]),
        (0, []),
    ],
)
def test_from_edge_list_rejects_bad_pairs(n, pairs):
    """Out-of-range, self-loop, duplicate and empty graphs are rejected"""
    with pytest.raises(GraphFormatError):
        from_edge_list(n, pairs)


def test_fig1_strongly_connected(fig1_graph):
    """Test the reference network is strongly connected"""
    assert is_strongly_connected(fig1_graph)


def test_removing_only_in_edge_breaks_connectivity(fig1_pairs):
    """Node 1 hears only node 2"""
    pairs = [p for p in fig1_pairs if p != (1, 2)]
    assert not is_strongly_connected(from_edge_list(10, pairs))


def test_strong_connectivity_matches_brute_force():
    """Test strong connectivity against a transitive closure"""
    rng = np.random.default_rng(2024)
    for _ in range(200):
        n = int(rng.integers(1, 9))
        candidates = [(j, i) for j, i in itertools.product(range(1, n + 1), repeat=2) if j != i]
        pairs = [p for p in candidates if rng.random() < 0.25]
        g = from_edge_list(n, pairs)
        assert is_strongly_connected(g) == _reachable_everywhere(n, pairs)


def test_pull_weights_row_four(fig1_graph):
    """Node 4 listens to 1, 5 and 8"""
    R = build_pull_weights(fig1_graph)
    for i in (0, 3, 4, 7):
        assert R[3, i] == pytest.approx(0.25)
    assert R[3].sum() == pytest.approx(1.0)
    assert np.count_nonzero(R[3]) == 4


def test_push_weights_column_one(fig1_graph):
    """Node 1 pushes to 2 and 4"""
    C = build_push_weights(fig1_graph)
    for j in (0, 1, 3):
        assert C[j, 0] == pytest.approx(1 / 3)
    assert np.count_nonzero(C[:, 0]) == 3


def test_weights_are_stochastic():
    """Test pull rows and push columns sum to 1"""
    rng = np.random.default_rng(5)
    for n in range(1, 9):
        g = random_strongly_connected(n, 0.3, rng)
        R = build_pull_weights(g)
        C = build_push_weights(g)
        np.testing.assert_allclose(R.sum(axis=1), 1.0, atol=1e-12)
        np.testing.assert_allclose(C.sum(axis=0), 1.0, atol=1e-12)
        assert (np.diag(R) > 0).all() and (np.diag(C) > 0).all()
        assert (R >= 0).all() and (C >= 0).all()


@pytest.mark.parametrize(
    "n,pairs,expected",
    [
        (1, [], 1.0),
        (2, [(1, 2), (2, 1)], 0.5),
        (10, "fig1", 1 / 3),
    ],
)
def test_min_push_weight(n, pairs, expected, fig1_pairs):
    """Test smallest positive push weight"""
    if pairs == "fig1":
        pairs = fig1_pairs
    assert min_push_weight(build_push_weights(from_edge_list(n, pairs))) == pytest.approx(expected)


def test_trivial_weight_matrices(single_graph, pair_graph):
    """Test weights on one and two nodes"""
    np.testing.assert_array_equal(build_pull_weights(single_graph), [[1.0]])
    np.testing.assert_array_equal(build_push_weights(single_graph), [[1.0]])
    np.testing.assert_allclose(build_pull_weights(pair_graph), 0.5)
    np.testing.assert_allclose(build_push_weights(pair_graph), 0.5)


def test_random_graphs_are_strongly_connected():
    """Test random generator output"""
    rng = np.random.default_rng(11)
    for _ in range(50):
        g = random_strongly_connected(int(rng.integers(1, 9)), 0.2, rng)
        assert is_strongly_connected(g)


def test_load_reference_file(fig1_path, fig1_graph):
    """Test reading the reference edge file"""
    g = load_edge_file(fig1_path)
    assert g.edges == fig1_graph.edges


def test_graph_info(fig1_graph):
    """Test graph summary"""
    info = graph_info(fig1_graph)
    assert info.strongly_connected
    assert info.min_push_weight == pytest.approx(1 / 3)
    assert info.in_degrees[3] == 3
    assert sum(info.out_degrees) == 17


def test_edge_file_round_trip(tmp_path, fig1_graph):
    """Test edge file reads back"""
    path = tmp_path / "copy.edges"
    dump_edge_file(fig1_graph, str(path))
    assert load_edge_file(str(path)).edges == fig1_graph.edges


@pytest.mark.parametrize(
    "text",
    [
        "1 2\n",
        "n=two\n1 2\n",
        "n=2\n1\n",
        "n=2\n1 x\n",
        "# comment only\n",
        "n=2\n1 3\n",
    ],
)
def test_parse_errors(text):
    """Test malformed edge lists"""
    with pytest.raises(GraphFormatError):
        parse_edge_text(text)


def test_parse_sender_receiver_order():
    """File lines are sender first"""
    g = parse_edge_text("n=2\n# link\n1 2\n")
    assert g.has_edge(1, 0)
    assert not g.has_edge(0, 1)


def test_missing_file():
    """Test unreadable edge file"""
    with pytest.raises(FileAccessError):
        load_edge_file("/nonexistent/graph.edges")
