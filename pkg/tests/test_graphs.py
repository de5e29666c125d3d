"""Graph parsing, shortest paths, degrees and batching."""

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gptrans import graphs as G
from gptrans.errors import EmptyBatchError, MalformedGraphError

from oracles import floyd_warshall


def random_graph(rng, n_min=1, n_max=10, with_attrs=True):
    n = int(rng.integers(n_min, n_max + 1))
    pairs = [(u, v) for u in range(n) for v in range(n) if u != v]
    rng.shuffle(pairs)
    m = int(rng.integers(0, len(pairs) + 1)) if pairs else 0
    edges = pairs[:m]
    return G.Graph(
        num_nodes=n,
        node_attrs=[[int(rng.integers(0, 5))] for _ in range(n)] if with_attrs else [[0]] * n,
        edges=edges,
        edge_attrs=[[int(rng.integers(0, 3))] for _ in edges],
    )


# --- parse / serialize -------------------------------------------------------


def test_parse_minimal_record():
    g = G.parse_graph({"num_nodes": 2, "edges": [[0, 1]]})
    assert g.num_nodes == 2
    assert g.edges == [(0, 1)]
    assert g.node_attrs == [[0], [0]]  # defaulted
    assert g.edge_attrs == [[0]]


def test_parse_rejects_out_of_range_endpoint():
    with pytest.raises(MalformedGraphError):
        G.parse_graph({"num_nodes": 2, "edges": [[0, 5]]})


def test_parse_keeps_edge_attrs():
    g = G.parse_graph({"num_nodes": 3, "edges": [[0, 1], [1, 2]], "edge_attrs": [[2], [7]]})
    assert g.edge_attrs == [[2], [7]]


def test_parse_rejects_attr_length_mismatch():
    with pytest.raises(MalformedGraphError):
        G.parse_graph({"num_nodes": 2, "edges": [[0, 1]], "edge_attrs": [[1], [2]]})


def test_parse_rejects_duplicate_edges():
    with pytest.raises(MalformedGraphError):
        G.parse_graph({"num_nodes": 2, "edges": [[0, 1], [0, 1]]})


def test_parse_rejects_unknown_keys_and_bad_counts():
    with pytest.raises(MalformedGraphError):
        G.parse_graph({"num_nodes": 1, "edges": [], "bogus": 1})
    with pytest.raises(MalformedGraphError):
        G.parse_graph({"num_nodes": 0, "edges": []})
    with pytest.raises(MalformedGraphError):
        G.parse_graph({"num_nodes": 2, "edges": [], "node_targets": [1]})


def test_parse_accepts_flat_attr_lists():
    g = G.parse_graph({"num_nodes": 2, "edges": [[0, 1]], "node_attrs": [3, 4], "edge_attrs": [1]})
    assert g.node_attrs == [[3], [4]]
    assert g.edge_attrs == [[1]]


@given(st.integers(0, 10**6))
@settings(max_examples=80, deadline=None)
def test_round_trip(seed):
    rng = np.random.default_rng(seed)
    g = random_graph(rng)
    if rng.random() < 0.5:
        g.graph_target = float(np.round(rng.normal(), 6))
    if rng.random() < 0.3:
        g.node_targets = [int(rng.integers(0, 2)) for _ in range(g.num_nodes)]
    if rng.random() < 0.3:
        g.edge_targets = [int(rng.integers(0, 2)) for _ in g.edges]
    assert G.parse_graph(G.serialize_graph(g)) == g


def test_jsonl_file_round_trip(tmp_path):
    rng = np.random.default_rng(5)
    gs = [random_graph(rng) for _ in range(7)]
    path = tmp_path / "d.jsonl"
    G.save_jsonl(path, gs)
    assert G.load_jsonl(path) == gs


# --- shortest paths and degrees ----------------------------------------------


def test_spd_path_graph():
    g = G.Graph(3, [[0]] * 3, [(0, 1), (1, 2)], [[0]] * 2)
    d = G.all_pairs_shortest_path(g)
    assert d[0, 2] == 2 and d[0, 1] == 1
    assert (np.diag(d) == 0).all()


def test_spd_disconnected():
    g = G.Graph(2, [[0]] * 2, [], [])
    d = G.all_pairs_shortest_path(g)
    assert d[0, 1] == G.UNREACHABLE and d[1, 0] == G.UNREACHABLE


def test_spd_directed_flag():
    g = G.Graph(2, [[0]] * 2, [(0, 1)], [[0]])
    d = G.all_pairs_shortest_path(g, treat_undirected=False)
    assert d[0, 1] == 1 and d[1, 0] == G.UNREACHABLE


def test_spd_matches_floyd_warshall_fixed():
    rng = np.random.default_rng(42)
    g = random_graph(rng, n_min=8, n_max=8)
    g.edges = g.edges[:12]
    g.edge_attrs = g.edge_attrs[:12]
    np.testing.assert_array_equal(
        G.all_pairs_shortest_path(g), floyd_warshall(8, g.edges, undirected=True)
    )


@given(st.integers(0, 10**6))
@settings(max_examples=100, deadline=None)
def test_spd_matches_floyd_warshall_property(seed):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, n_max=10)
    for undirected in (True, False):
        np.testing.assert_array_equal(
            G.all_pairs_shortest_path(g, treat_undirected=undirected),
            floyd_warshall(g.num_nodes, g.edges, undirected=undirected),
        )


def test_degree_single_edge():
    g = G.Graph(2, [[0]] * 2, [(0, 1)], [[0]])
    indeg, outdeg = G.degree_stats(g)
    np.testing.assert_array_equal(indeg, [0, 1])
    np.testing.assert_array_equal(outdeg, [1, 0])


def test_degree_empty_edges():
    g = G.Graph(3, [[0]] * 3, [], [])
    indeg, outdeg = G.degree_stats(g)
    assert indeg.sum() == 0 and outdeg.sum() == 0


def test_degree_star():
    g = G.Graph(5, [[0]] * 5, [(0, i) for i in range(1, 5)], [[0]] * 4)
    indeg, outdeg = G.degree_stats(g)
    assert outdeg[0] == 4
    assert (indeg[1:] == 1).all()


# --- batching ----------------------------------------------------------------


def test_batch_mask_layout():
    g3 = G.Graph(3, [[0]] * 3, [], [])
    g5 = G.Graph(5, [[0]] * 5, [], [])
    batch = G.batch_graphs([g5, g3])
    assert batch.max_nodes == 5
    np.testing.assert_array_equal(batch.node_mask[0], [True] * 6)
    np.testing.assert_array_equal(batch.node_mask[1], [True, True, True, True, False, False])


def test_batch_single_node_graph_spd_tokens():
    g = G.Graph(1, [[0]], [], [])
    batch = G.batch_graphs([g], spd_clip=20)
    assert batch.spd.shape == (1, 2, 2)
    virt = G.spd_virtual_id(20)
    assert batch.spd[0, 0, 0] == virt
    assert batch.spd[0, 0, 1] == virt and batch.spd[0, 1, 0] == virt
    assert batch.spd[0, 1, 1] == 0


def test_batch_degree_clamp():
    n = 102
    g = G.Graph(n, [[0]] * n, [(0, i) for i in range(1, 101)], [[0]] * 100)
    batch = G.batch_graphs([g], deg_clip=64)
    assert batch.outdeg_ids[0, 0] == 64


def test_batch_spd_clip_and_unreachable():
    # path 0-1-...-25 plus one isolated node
    n = 27
    edges = [(i, i + 1) for i in range(25)]
    g = G.Graph(n, [[0]] * n, edges, [[0]] * len(edges))
    batch = G.batch_graphs([g], spd_clip=20)
    assert batch.spd[0, 1, 1 + 25] == 20  # clamped
    assert batch.spd[0, 1, 1 + 26] == G.spd_unreachable_id(20)


def test_batch_pad_sentinels():
    g2 = G.Graph(2, [[1], [2]], [(0, 1)], [[1]])
    g4 = G.Graph(4, [[1]] * 4, [], [])
    batch = G.batch_graphs([g2, g4], spd_clip=20, deg_clip=64, edge_attr_vocab=[4])
    # padded node positions of the first graph
    assert batch.indeg_ids[0, 2] == G.degree_pad_id(64)
    assert batch.node_attr_ids[0, 2, 0] == 0
    assert batch.spd[0, 3, 3] == G.spd_pad_id(20)
    assert batch.spd[0, 0, 4] == G.spd_pad_id(20)  # virtual-vs-pad stays PAD
    assert batch.direct_edge_attr_ids[0, 3, 3, 0] == G.edge_attr_pad_id(4)
    # direct edge vs NO-EDGE, directed reading
    assert batch.direct_edge_attr_ids[0, 1, 2, 0] == 1
    assert batch.direct_edge_attr_ids[0, 2, 1, 0] == G.edge_attr_no_edge_id(4)
    assert batch.direct_edge_attr_ids[0, 0, 1, 0] == G.edge_attr_no_edge_id(4)


def test_batch_rejects_empty_list():
    with pytest.raises(EmptyBatchError):
        G.batch_graphs([])


@given(st.integers(0, 10**6))
@settings(max_examples=60, deadline=None)
def test_batch_order_stability(seed):
    rng = np.random.default_rng(seed)
    g1 = random_graph(rng, n_max=6)
    g2 = random_graph(rng, n_max=6)
    vocab = [3]
    both = G.batch_graphs([g1, g2], edge_attr_vocab=vocab)
    solo = G.batch_graphs([g1], edge_attr_vocab=vocab, pad_to=both.max_nodes)
    for name in ("node_attr_ids", "indeg_ids", "outdeg_ids", "node_mask", "spd", "direct_edge_attr_ids"):
        np.testing.assert_array_equal(getattr(both, name)[0], getattr(solo, name)[0], err_msg=name)


def test_batch_targets():
    g = G.Graph(
        2,
        [[0], [0]],
        [(0, 1)],
        [[0]],
        graph_target=1.5,
        node_targets=[1, 0],
        edge_targets=[1],
    )
    batch = G.batch_graphs([g])
    np.testing.assert_array_equal(batch.graph_target, [1.5])
    np.testing.assert_array_equal(batch.node_target, [[1, 0]])
    assert batch.edge_target[0, 1, 2] == 1
    assert batch.edge_target[0, 2, 1] == -1
