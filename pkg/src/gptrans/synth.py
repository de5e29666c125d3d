"""Synthetic dataset generators at desk scale.

Four task families, all emitted in the JSONL graph format with a
vocab.json and a manifest recording the exact generator parameters:

* spd-regression: connected random graphs; the target is the mean
  pairwise shortest-path distance, a pure function of the structure the
  edge stream carries.
* degree-class:   per-node label = parity of total degree.
* cluster-like:   planted-partition graphs; one revealed node per cluster
  carries its cluster id as an attribute, labels are cluster ids.
* tsp-like:       random Euclidean points, k-NN edges plus a greedy tour;
  edges on the tour get positive labels.
"""

from __future__ import annotations

import numpy as np

from .embedding import Vocab
from .errors import ConfigurationError
from .graphs import Graph, all_pairs_shortest_path

SYNTH_TASKS = ("spd-regression", "degree-class", "cluster-like", "tsp-like")


def _connected_random_graph(rng: np.random.Generator, n: int, extra_edge_frac: float = 0.6) -> Graph:
    """Random spanning chain plus extra random directed edges."""
    order = rng.permutation(n)
    edges = set()
    for a, b in zip(order[:-1], order[1:]):
        edges.add((int(a), int(b)))
    n_extra = int(round(extra_edge_frac * n))
    for _ in range(n_extra):
        u = int(rng.integers(0, n))
        v = int(rng.integers(0, n))
        if u != v and (u, v) not in edges and (v, u) not in edges:
            edges.add((u, v))
    edge_list = sorted(edges)
    return Graph(
        num_nodes=n,
        node_attrs=[[0] for _ in range(n)],
        edges=edge_list,
        edge_attrs=[[0] for _ in edge_list],
    )


def gen_spd_regression(rng: np.random.Generator, n: int) -> Graph:
    g = _connected_random_graph(rng, n)
    if n == 1:
        g.graph_target = 0.0
        return g
    dist = all_pairs_shortest_path(g, treat_undirected=True)
    iu = np.triu_indices(n, k=1)
    g.graph_target = float(dist[iu].mean())
    return g


def gen_degree_class(rng: np.random.Generator, n: int, p_edge: float = 0.3) -> Graph:
    edges = []
    for u in range(n):
        for v in range(n):
            if u != v and rng.random() < p_edge:
                edges.append((u, v))
    g = Graph(
        num_nodes=n,
        node_attrs=[[0] for _ in range(n)],
        edges=edges,
        edge_attrs=[[0] for _ in edges],
    )
    total = np.zeros(n, dtype=np.int64)
    for u, v in edges:
        total[u] += 1
        total[v] += 1
    g.node_targets = [int(d % 2) for d in total]
    return g


def gen_cluster_like(
    rng: np.random.Generator, n: int, k: int = 3, p_in: float = 0.5, p_out: float = 0.08
) -> Graph:
    labels = rng.integers(0, k, size=n)
    # guarantee a revealed seed node for every populated cluster
    attrs = [[0] for _ in range(n)]
    for c in range(k):
        members = np.flatnonzero(labels == c)
        if len(members):
            attrs[int(rng.choice(members))] = [c + 1]
    edges = []
    for u in range(n):
        for v in range(u + 1, n):
            p = p_in if labels[u] == labels[v] else p_out
            if rng.random() < p:
                edges.append((u, v))
    return Graph(
        num_nodes=n,
        node_attrs=attrs,
        edges=edges,
        edge_attrs=[[0] for _ in edges],
        node_targets=[int(c) for c in labels],
    )


def gen_tsp_like(rng: np.random.Generator, n: int, k_nn: int = 3, dist_buckets: int = 8) -> Graph:
    """k-NN graph over random 2-d points; greedy nearest-neighbor tour."""
    pts = rng.random((n, 2))
    d = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1))

    tour = [0]
    remaining = set(range(1, n))
    while remaining:
        cur = tour[-1]
        nxt = min(remaining, key=lambda j: d[cur, j])
        tour.append(nxt)
        remaining.remove(nxt)
    tour_edges = set()
    for a, b in zip(tour, tour[1:] + [tour[0]]):
        tour_edges.add((a, b))
        tour_edges.add((b, a))

    pairs = set(tour_edges)
    k_eff = min(k_nn, n - 1)
    for u in range(n):
        for v in np.argsort(d[u])[1 : 1 + k_eff]:
            pairs.add((u, int(v)))
            pairs.add((int(v), u))
    edge_list = sorted(pairs)
    dmax = float(d.max()) or 1.0
    edge_attrs = [[min(int(d[u, v] / dmax * dist_buckets), dist_buckets - 1)] for u, v in edge_list]
    return Graph(
        num_nodes=n,
        node_attrs=[[0] for _ in range(n)],
        edges=edge_list,
        edge_attrs=edge_attrs,
        edge_targets=[int((u, v) in tour_edges) for u, v in edge_list],
    )


def synth_vocab(task: str, **gen_kwargs) -> Vocab:
    if task == "spd-regression":
        return Vocab(node_attr_sizes=[1], edge_attr_sizes=[1], task="graph-regression")
    if task == "degree-class":
        return Vocab(node_attr_sizes=[1], edge_attr_sizes=[1], task="node-classification", num_classes=2)
    if task == "cluster-like":
        k = gen_kwargs.get("k", 3)
        return Vocab(
            node_attr_sizes=[k + 1], edge_attr_sizes=[1], task="node-classification", num_classes=k
        )
    if task == "tsp-like":
        buckets = gen_kwargs.get("dist_buckets", 8)
        return Vocab(
            node_attr_sizes=[1], edge_attr_sizes=[buckets], task="edge-classification", num_classes=2
        )
    raise ConfigurationError(f"unknown synthetic task {task!r}; choose from {SYNTH_TASKS}")


def generate(
    task: str,
    n_graphs: int,
    size_range: tuple[int, int],
    seed: int,
    **gen_kwargs,
) -> tuple[list[Graph], Vocab]:
    """Deterministic dataset of ``n_graphs`` graphs with sizes in the range."""
    lo, hi = size_range
    if not (1 <= lo <= hi):
        raise ConfigurationError(f"bad size range {size_range}")
    rng = np.random.default_rng(seed)
    gen = {
        "spd-regression": gen_spd_regression,
        "degree-class": gen_degree_class,
        "cluster-like": gen_cluster_like,
        "tsp-like": gen_tsp_like,
    }.get(task)
    if gen is None:
        raise ConfigurationError(f"unknown synthetic task {task!r}; choose from {SYNTH_TASKS}")
    graphs = [gen(rng, int(rng.integers(lo, hi + 1)), **gen_kwargs) for _ in range(n_graphs)]
    return graphs, synth_vocab(task, **gen_kwargs)


def scan_vocab(graphs: list[Graph], task: str | None = None, num_classes: int | None = None) -> Vocab:
    """Infer per-slot vocabulary sizes (max id + 1) from a dataset."""
    n_slots = len(graphs[0].node_attrs[0])
    e_slots = len(graphs[0].edge_attrs[0]) if graphs[0].edge_attrs else 1
    node_sizes = [1] * n_slots
    edge_sizes = [1] * e_slots
    for g in graphs:
        for attrs in g.node_attrs:
            for s, v in enumerate(attrs):
                node_sizes[s] = max(node_sizes[s], v + 1)
        for attrs in g.edge_attrs:
            for s, v in enumerate(attrs):
                edge_sizes[s] = max(edge_sizes[s], v + 1)
    return Vocab(node_attr_sizes=node_sizes, edge_attr_sizes=edge_sizes, task=task, num_classes=num_classes)
