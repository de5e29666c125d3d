"""Attributed-graph parsing, preprocessing and batching.

Input format is JSON Lines, one graph per line, with keys ``num_nodes``,
``edges`` and optional ``node_attrs``, ``edge_attrs``, ``graph_target``,
``node_targets``, ``edge_targets``. All functions here are pure and safe
to call from parallel workers.

Batching prepends a virtual node at index 0 of every attention axis and
maps distances/degrees/attribute ids into finite vocabularies:

* shortest-path buckets ``0..spd_clip``, then UNREACHABLE, VIRTUAL, PAD
* degree ids ``0..deg_clip``, then one shared PAD/virtual token
* per-slot edge-attribute ids, then NO-EDGE and PAD rows
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyBatchError, MalformedGraphError

UNREACHABLE = -1  # raw hop-count sentinel, pre-bucketing

_KNOWN_KEYS = {
    "num_nodes",
    "edges",
    "node_attrs",
    "edge_attrs",
    "graph_target",
    "node_targets",
    "edge_targets",
}


@dataclass
class Graph:
    """One attributed graph. Attribute ids are categorical, one list per slot."""

    num_nodes: int
    node_attrs: list[list[int]]
    edges: list[tuple[int, int]]
    edge_attrs: list[list[int]]
    graph_target: float | int | None = None
    node_targets: list[int] | None = None
    edge_targets: list[int] | None = None

    @property
    def num_edges(self) -> int:
        return len(self.edges)


def _as_slot_lists(raw, count: int, what: str) -> list[list[int]]:
    """Normalize `[id, ...]` or `[[id, ...], ...]` into one id-list per item."""
    if raw is None:
        return [[0] for _ in range(count)]
    if len(raw) != count:
        raise MalformedGraphError(f"{what} has length {len(raw)}, expected {count}")
    out = []
    for item in raw:
        if isinstance(item, (int, np.integer)):
            item = [int(item)]
        elif isinstance(item, list) and all(isinstance(v, (int, np.integer)) for v in item):
            item = [int(v) for v in item]
        else:
            raise MalformedGraphError(f"{what} entries must be ints or int lists, got {item!r}")
        if any(v < 0 for v in item):
            raise MalformedGraphError(f"{what} contains negative id {item}")
        out.append(item)
    slots = {len(item) for item in out}
    if len(slots) > 1:
        raise MalformedGraphError(f"{what} has inconsistent slot counts {sorted(slots)}")
    return out


def parse_graph(record: str | dict) -> Graph:
    """Validate one JSONL record into a Graph."""
    if isinstance(record, str):
        try:
            record = json.loads(record)
        except json.JSONDecodeError as exc:
            raise MalformedGraphError(f"invalid JSON: {exc}") from exc
    if not isinstance(record, dict):
        raise MalformedGraphError(f"record must be an object, got {type(record).__name__}")
    unknown = set(record) - _KNOWN_KEYS
    if unknown:
        raise MalformedGraphError(f"unknown keys {sorted(unknown)}")
    if "num_nodes" not in record or "edges" not in record:
        raise MalformedGraphError("record needs at least num_nodes and edges")

    n = record["num_nodes"]
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise MalformedGraphError(f"num_nodes must be a positive int, got {n!r}")
    n = int(n)

    edges: list[tuple[int, int]] = []
    seen = set()
    for e in record["edges"]:
        if not (isinstance(e, (list, tuple)) and len(e) == 2):
            raise MalformedGraphError(f"edge must be a pair, got {e!r}")
        u, v = int(e[0]), int(e[1])
        if not (0 <= u < n and 0 <= v < n):
            raise MalformedGraphError(f"edge ({u}, {v}) endpoint out of range [0, {n})")
        if (u, v) in seen:
            raise MalformedGraphError(f"duplicate edge ({u}, {v})")
        seen.add((u, v))
        edges.append((u, v))

    node_attrs = _as_slot_lists(record.get("node_attrs"), n, "node_attrs")
    edge_attrs = _as_slot_lists(record.get("edge_attrs"), len(edges), "edge_attrs")

    node_targets = record.get("node_targets")
    if node_targets is not None:
        if len(node_targets) != n:
            raise MalformedGraphError("node_targets length must equal num_nodes")
        node_targets = [int(t) for t in node_targets]
    edge_targets = record.get("edge_targets")
    if edge_targets is not None:
        if len(edge_targets) != len(edges):
            raise MalformedGraphError("edge_targets length must equal number of edges")
        edge_targets = [int(t) for t in edge_targets]

    return Graph(
        num_nodes=n,
        node_attrs=node_attrs,
        edges=edges,
        edge_attrs=edge_attrs,
        graph_target=record.get("graph_target"),
        node_targets=node_targets,
        edge_targets=edge_targets,
    )


def serialize_graph(g: Graph) -> str:
    record: dict = {
        "num_nodes": g.num_nodes,
        "edges": [[u, v] for u, v in g.edges],
        "node_attrs": [list(a) for a in g.node_attrs],
        "edge_attrs": [list(a) for a in g.edge_attrs],
    }
    if g.graph_target is not None:
        record["graph_target"] = g.graph_target
    if g.node_targets is not None:
        record["node_targets"] = list(g.node_targets)
    if g.edge_targets is not None:
        record["edge_targets"] = list(g.edge_targets)
    return json.dumps(record, separators=(",", ":"))


def load_jsonl(path: str | Path) -> list[Graph]:
    graphs = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                graphs.append(parse_graph(line))
            except MalformedGraphError as exc:
                raise MalformedGraphError(f"{path}:{lineno}: {exc}") from exc
    return graphs


def save_jsonl(path: str | Path, graphs: list[Graph]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for g in graphs:
            fh.write(serialize_graph(g))
            fh.write("\n")


def degree_stats(g: Graph) -> tuple[np.ndarray, np.ndarray]:
    """(indegree, outdegree) over the directed edge list."""
    indeg = np.zeros(g.num_nodes, dtype=np.int64)
    outdeg = np.zeros(g.num_nodes, dtype=np.int64)
    for u, v in g.edges:
        outdeg[u] += 1
        indeg[v] += 1
    return indeg, outdeg


def all_pairs_shortest_path(g: Graph, treat_undirected: bool = True) -> np.ndarray:
    """Hop-count matrix via BFS from every node; UNREACHABLE where no path."""
    n = g.num_nodes
    adj: list[list[int]] = [[] for _ in range(n)]
    for u, v in g.edges:
        adj[u].append(v)
        if treat_undirected and u != v:
            adj[v].append(u)
    dist = np.full((n, n), UNREACHABLE, dtype=np.int64)
    for src in range(n):
        dist[src, src] = 0
        queue = deque([src])
        while queue:
            u = queue.popleft()
            du = dist[src, u]
            for v in adj[u]:
                if dist[src, v] == UNREACHABLE:
                    dist[src, v] = du + 1
                    queue.append(v)
    return dist


# --- token-id helpers shared with the embedding layer ---------------------


def spd_vocab_size(spd_clip: int) -> int:
    return spd_clip + 4  # buckets 0..clip, UNREACHABLE, VIRTUAL, PAD


def spd_unreachable_id(spd_clip: int) -> int:
    return spd_clip + 1


def spd_virtual_id(spd_clip: int) -> int:
    return spd_clip + 2


def spd_pad_id(spd_clip: int) -> int:
    return spd_clip + 3


def degree_vocab_size(deg_clip: int) -> int:
    return deg_clip + 2  # 0..clip plus the shared PAD/virtual token


def degree_pad_id(deg_clip: int) -> int:
    return deg_clip + 1


def edge_attr_vocab_size(n_ids: int) -> int:
    return n_ids + 2  # real ids, NO-EDGE, PAD


def edge_attr_no_edge_id(n_ids: int) -> int:
    return n_ids


def edge_attr_pad_id(n_ids: int) -> int:
    return n_ids + 1


@dataclass
class BatchedGraph:
    """Padded tensor form of a list of graphs, virtual node at index 0.

    ``N`` is the max real-node count in the batch; attention axes have
    extent ``1+N``. Padded positions carry their tensor's pad sentinel and
    are masked out downstream.
    """

    node_attr_ids: np.ndarray  # [B, N, A_n] int64
    indeg_ids: np.ndarray  # [B, N]
    outdeg_ids: np.ndarray  # [B, N]
    node_mask: np.ndarray  # [B, 1+N] bool; column 0 always True
    spd: np.ndarray  # [B, 1+N, 1+N] bucket ids
    direct_edge_attr_ids: np.ndarray  # [B, 1+N, 1+N, A_e]
    n_nodes: np.ndarray  # [B] real-node counts
    spd_clip: int
    deg_clip: int
    graph_target: np.ndarray | None = None  # [B] float64
    node_target: np.ndarray | None = None  # [B, N], -1 where absent/padded
    edge_target: np.ndarray | None = None  # [B, 1+N, 1+N], -1 where unlabeled
    edge_attr_vocab: list[int] = field(default_factory=list)  # per-slot real-id counts

    @property
    def batch_size(self) -> int:
        return self.node_mask.shape[0]

    @property
    def max_nodes(self) -> int:
        return self.node_mask.shape[1] - 1


def batch_graphs(
    graphs: list[Graph],
    spd_clip: int = 20,
    deg_clip: int = 64,
    edge_attr_vocab: list[int] | None = None,
    treat_undirected: bool = True,
    pad_to: int | None = None,
) -> BatchedGraph:
    """Pad a list of graphs into one tensor batch.

    ``edge_attr_vocab`` gives per-slot edge-id counts so the NO-EDGE/PAD
    sentinel rows land just past the real ids; it defaults to max-id+1
    over the batch. ``pad_to`` forces the real-node axis to a given N.
    """
    if not graphs:
        raise EmptyBatchError("batch_graphs needs at least one graph")
    B = len(graphs)
    N = max(g.num_nodes for g in graphs)
    if pad_to is not None:
        if pad_to < N:
            raise EmptyBatchError(f"pad_to={pad_to} smaller than largest graph ({N})")
        N = pad_to
    T = 1 + N

    a_n = len(graphs[0].node_attrs[0])
    a_e = max((len(ea) for g in graphs for ea in g.edge_attrs), default=1)
    for g in graphs:
        if len(g.node_attrs[0]) != a_n:
            raise MalformedGraphError("node attribute slot counts differ across the batch")
        for ea in g.edge_attrs:
            if len(ea) != a_e:
                raise MalformedGraphError("edge attribute slot counts differ across the batch")

    if edge_attr_vocab is None:
        maxid = [0] * a_e
        for g in graphs:
            for ea in g.edge_attrs:
                for s, v in enumerate(ea):
                    maxid[s] = max(maxid[s], v + 1)
        edge_attr_vocab = [max(m, 1) for m in maxid]
    if len(edge_attr_vocab) != a_e:
        raise MalformedGraphError(
            f"edge_attr_vocab has {len(edge_attr_vocab)} slots, data has {a_e}"
        )

    no_edge = [edge_attr_no_edge_id(v) for v in edge_attr_vocab]
    e_pad = [edge_attr_pad_id(v) for v in edge_attr_vocab]
    d_pad = degree_pad_id(deg_clip)

    node_attr_ids = np.zeros((B, N, a_n), dtype=np.int64)  # node-attr pad reuses id 0
    indeg_ids = np.full((B, N), d_pad, dtype=np.int64)
    outdeg_ids = np.full((B, N), d_pad, dtype=np.int64)
    node_mask = np.zeros((B, T), dtype=bool)
    node_mask[:, 0] = True
    spd = np.full((B, T, T), spd_pad_id(spd_clip), dtype=np.int64)
    dea = np.empty((B, T, T, a_e), dtype=np.int64)
    dea[...] = np.asarray(e_pad, dtype=np.int64)
    n_nodes = np.zeros(B, dtype=np.int64)

    have_gt = any(g.graph_target is not None for g in graphs)
    have_nt = any(g.node_targets is not None for g in graphs)
    have_et = any(g.edge_targets is not None for g in graphs)
    graph_target = np.zeros(B, dtype=np.float64) if have_gt else None
    node_target = np.full((B, N), -1, dtype=np.int64) if have_nt else None
    edge_target = np.full((B, T, T), -1, dtype=np.int64) if have_et else None

    for b, g in enumerate(graphs):
        n = g.num_nodes
        n_nodes[b] = n
        node_mask[b, 1 : 1 + n] = True

        node_attr_ids[b, :n] = np.asarray(g.node_attrs, dtype=np.int64)
        indeg, outdeg = degree_stats(g)
        indeg_ids[b, :n] = np.minimum(indeg, deg_clip)
        outdeg_ids[b, :n] = np.minimum(outdeg, deg_clip)

        dist = all_pairs_shortest_path(g, treat_undirected=treat_undirected)
        bucket = np.where(
            dist == UNREACHABLE,
            spd_unreachable_id(spd_clip),
            np.minimum(dist, spd_clip),
        )
        # padded rows/cols keep the PAD token even against the virtual node
        spd[b, 0, : 1 + n] = spd_virtual_id(spd_clip)
        spd[b, : 1 + n, 0] = spd_virtual_id(spd_clip)
        spd[b, 1 : 1 + n, 1 : 1 + n] = bucket

        real = np.asarray(no_edge, dtype=np.int64)
        dea[b, : 1 + n, : 1 + n] = real  # unmasked pairs default to NO-EDGE
        for (u, v), attrs in zip(g.edges, g.edge_attrs):
            dea[b, 1 + u, 1 + v] = np.asarray(attrs, dtype=np.int64)

        if graph_target is not None and g.graph_target is not None:
            graph_target[b] = float(g.graph_target)
        if node_target is not None and g.node_targets is not None:
            node_target[b, :n] = np.asarray(g.node_targets, dtype=np.int64)
        if edge_target is not None and g.edge_targets is not None:
            for (u, v), t in zip(g.edges, g.edge_targets):
                edge_target[b, 1 + u, 1 + v] = t

    return BatchedGraph(
        node_attr_ids=node_attr_ids,
        indeg_ids=indeg_ids,
        outdeg_ids=outdeg_ids,
        node_mask=node_mask,
        spd=spd,
        direct_edge_attr_ids=dea,
        n_nodes=n_nodes,
        spd_clip=spd_clip,
        deg_clip=deg_clip,
        graph_target=graph_target,
        node_target=node_target,
        edge_target=edge_target,
        edge_attr_vocab=list(edge_attr_vocab),
    )
