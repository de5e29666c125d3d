"""Graph embedding layer: id tensors -> node and edge embeddings.

Node embeddings sum the per-slot attribute lookups with indegree and
outdegree lookups; the virtual node gets its own learned vector. Edge
embeddings sum the shortest-path-bucket lookup with per-slot lookups of
the direct-edge attributes (NO-EDGE rows elsewhere). Padded positions are
zeroed so nothing leaks through residual streams.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .graphs import BatchedGraph, degree_vocab_size, edge_attr_vocab_size, spd_vocab_size
from .tensor import Tensor


@dataclass
class Vocab:
    """Dataset vocabulary metadata (the vocab.json contract)."""

    node_attr_sizes: list[int]
    edge_attr_sizes: list[int]
    task: str | None = None
    num_classes: int | None = None

    def to_dict(self) -> dict:
        return {
            "node_attr_sizes": list(self.node_attr_sizes),
            "edge_attr_sizes": list(self.edge_attr_sizes),
            "task": self.task,
            "num_classes": self.num_classes,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Vocab":
        return cls(
            node_attr_sizes=[int(v) for v in d["node_attr_sizes"]],
            edge_attr_sizes=[int(v) for v in d["edge_attr_sizes"]],
            task=d.get("task"),
            num_classes=d.get("num_classes"),
        )


@dataclass
class EmbeddingTables:
    node_attr: list[Tensor]  # per slot [V_s, d1]
    indeg: Tensor  # [deg_clip+2, d1]
    outdeg: Tensor  # [deg_clip+2, d1]
    virtual_node: Tensor  # [d1]
    edge_attr: list[Tensor]  # per slot [V_s+2, d2]
    rel_pos: Tensor  # [spd_clip+4, d2]


def trunc_normal(rng: np.random.Generator, shape, std: float = 0.02, dtype=np.float32) -> np.ndarray:
    """Normal(0, std) resampled until inside +-2 std."""
    out = rng.normal(0.0, std, size=shape)
    bad = np.abs(out) > 2.0 * std
    while bad.any():
        out[bad] = rng.normal(0.0, std, size=int(bad.sum()))
        bad = np.abs(out) > 2.0 * std
    return out.astype(dtype)


def table_shapes(vocab: Vocab, d1: int, d2: int, spd_clip: int, deg_clip: int) -> dict[str, tuple[int, ...]]:
    """Checkpoint-name -> shape for every embedding table."""
    shapes: dict[str, tuple[int, ...]] = {}
    for s, size in enumerate(vocab.node_attr_sizes):
        shapes[f"embed.node_attr.{s}"] = (size, d1)
    shapes["embed.indeg"] = (degree_vocab_size(deg_clip), d1)
    shapes["embed.outdeg"] = (degree_vocab_size(deg_clip), d1)
    shapes["embed.virtual"] = (d1,)
    for s, size in enumerate(vocab.edge_attr_sizes):
        shapes[f"embed.edge_attr.{s}"] = (edge_attr_vocab_size(size), d2)
    shapes["embed.rel_pos"] = (spd_vocab_size(spd_clip), d2)
    return shapes


def init_tables(
    vocab: Vocab,
    d1: int,
    d2: int,
    spd_clip: int,
    deg_clip: int,
    rng: np.random.Generator,
    dtype=np.float32,
) -> EmbeddingTables:
    def make(shape):
        return Tensor(trunc_normal(rng, shape, dtype=dtype), requires_grad=True, dtype=dtype)

    shapes = table_shapes(vocab, d1, d2, spd_clip, deg_clip)
    return EmbeddingTables(
        node_attr=[make(shapes[f"embed.node_attr.{s}"]) for s in range(len(vocab.node_attr_sizes))],
        indeg=make(shapes["embed.indeg"]),
        outdeg=make(shapes["embed.outdeg"]),
        virtual_node=make(shapes["embed.virtual"]),
        edge_attr=[make(shapes[f"embed.edge_attr.{s}"]) for s in range(len(vocab.edge_attr_sizes))],
        rel_pos=make(shapes["embed.rel_pos"]),
    )


def named_tables(tables: EmbeddingTables) -> dict[str, Tensor]:
    out: dict[str, Tensor] = {}
    for s, t in enumerate(tables.node_attr):
        out[f"embed.node_attr.{s}"] = t
    out["embed.indeg"] = tables.indeg
    out["embed.outdeg"] = tables.outdeg
    out["embed.virtual"] = tables.virtual_node
    for s, t in enumerate(tables.edge_attr):
        out[f"embed.edge_attr.{s}"] = t
    out["embed.rel_pos"] = tables.rel_pos
    return out


def embed_nodes(batch: BatchedGraph, tables: EmbeddingTables) -> Tensor:
    """[B, 1+N, d1]; row 0 is the virtual-node vector, padded rows are zero."""
    B, N, a_n = batch.node_attr_ids.shape
    d1 = tables.virtual_node.shape[0]
    dtype = tables.virtual_node.dtype

    x = T.embed(tables.node_attr[0], batch.node_attr_ids[:, :, 0])
    for s in range(1, a_n):
        x = x + T.embed(tables.node_attr[s], batch.node_attr_ids[:, :, s])
    x = x + T.embed(tables.indeg, batch.indeg_ids)
    x = x + T.embed(tables.outdeg, batch.outdeg_ids)

    real = batch.node_mask[:, 1:]
    if not real.all():
        x = x * real[:, :, None].astype(dtype)

    virt = T.broadcast_to(T.reshape(tables.virtual_node, (1, 1, d1)), (B, 1, d1))
    return T.concat([virt, x], axis=1)


def embed_edges(batch: BatchedGraph, tables: EmbeddingTables) -> Tensor:
    """[B, 1+N, 1+N, d2]; rows/cols of padded nodes are zero."""
    a_e = batch.direct_edge_attr_ids.shape[-1]
    dtype = tables.rel_pos.dtype

    e = T.embed(tables.rel_pos, batch.spd)
    for s in range(a_e):
        e = e + T.embed(tables.edge_attr[s], batch.direct_edge_attr_ids[:, :, :, s])

    if batch.node_mask.all():
        return e
    pair_mask = (batch.node_mask[:, :, None] & batch.node_mask[:, None, :]).astype(dtype)
    return e * pair_mask[:, :, :, None]
