"""Independent reference implementations used only by the tests.

Everything here is written as plain loops over scalars (or the textbook
algorithm), deliberately ignoring how the package vectorizes the same
math, so the two sides can disagree.
"""

from __future__ import annotations

import math

import numpy as np

BIG = 10**9


def floyd_warshall(n: int, edges, undirected: bool = True) -> np.ndarray:
    """Textbook O(n^3) all-pairs hop counts; -1 where unreachable."""
    dist = [[0 if i == j else BIG for j in range(n)] for i in range(n)]
    for u, v in edges:
        dist[u][v] = min(dist[u][v], 1)
        if undirected:
            dist[v][u] = min(dist[v][u], 1)
    for k in range(n):
        for i in range(n):
            for j in range(n):
                if dist[i][k] + dist[k][j] < dist[i][j]:
                    dist[i][j] = dist[i][k] + dist[k][j]
    out = np.array(dist, dtype=np.int64)
    out[out >= BIG] = -1
    return out


def softmax_row(row):
    m = max(row)
    e = [math.exp(v - m) for v in row]
    s = sum(e)
    return [v / s for v in e]


def embed_nodes_loop(batch, tables) -> np.ndarray:
    """Per-node scalar-loop version of the node embedding sum."""
    B, N, a_n = batch.node_attr_ids.shape
    d1 = tables.virtual_node.data.shape[0]
    out = np.zeros((B, 1 + N, d1), dtype=np.float64)
    for b in range(B):
        out[b, 0] = tables.virtual_node.data
        for i in range(N):
            if not batch.node_mask[b, 1 + i]:
                continue
            acc = np.zeros(d1, dtype=np.float64)
            for s in range(a_n):
                acc += tables.node_attr[s].data[batch.node_attr_ids[b, i, s]]
            acc += tables.indeg.data[batch.indeg_ids[b, i]]
            acc += tables.outdeg.data[batch.outdeg_ids[b, i]]
            out[b, 1 + i] = acc
    return out


def embed_edges_loop(batch, tables) -> np.ndarray:
    B, T, _, a_e = batch.direct_edge_attr_ids.shape
    d2 = tables.rel_pos.data.shape[1]
    out = np.zeros((B, T, T, d2), dtype=np.float64)
    for b in range(B):
        for i in range(T):
            for j in range(T):
                if not (batch.node_mask[b, i] and batch.node_mask[b, j]):
                    continue
                acc = tables.rel_pos.data[batch.spd[b, i, j]].astype(np.float64).copy()
                for s in range(a_e):
                    acc += tables.edge_attr[s].data[batch.direct_edge_attr_ids[b, i, j, s]]
                out[b, i, j] = acc
    return out


def gpa_loop(
    x_node: np.ndarray,
    x_edge: np.ndarray,
    w_q: np.ndarray,
    w_k: np.ndarray,
    w_v: np.ndarray,
    w_o: np.ndarray,
    w_reduce: np.ndarray,
    w_expand: np.ndarray,
    fuse_w: np.ndarray,
    fuse_b: np.ndarray,
    n_head: int,
    node_to_edge: bool = True,
    edge_to_node: bool = True,
):
    """Straight-line scalar evaluation of the three propagation paths.

    Unbatched, no masking: x_node is [T, d1], x_edge is [T, T, d2].
    Returns (node_update, edge_update, attention[h, i, j]).
    """
    T, d1 = x_node.shape
    d2 = x_edge.shape[2]
    dh = d1 // n_head

    q = np.zeros((T, d1))
    k = np.zeros((T, d1))
    v = np.zeros((T, d1))
    for i in range(T):
        for a in range(d1):
            sq = sk = sv = 0.0
            for c in range(d1):
                sq += x_node[i, c] * w_q[c, a]
                sk += x_node[i, c] * w_k[c, a]
                sv += x_node[i, c] * w_v[c, a]
            q[i, a] = sq
            k[i, a] = sk
            v[i, a] = sv

    phi = np.zeros((T, T, n_head))
    for i in range(T):
        for j in range(T):
            for h in range(n_head):
                s = 0.0
                for c in range(d2):
                    s += x_edge[i, j, c] * w_reduce[c, h]
                phi[i, j, h] = s

    attn = np.zeros((n_head, T, T))
    for h in range(n_head):
        for i in range(T):
            for j in range(T):
                s = 0.0
                for d in range(dh):
                    s += q[i, h * dh + d] * k[j, h * dh + d]
                attn[h, i, j] = s / math.sqrt(dh) + phi[i, j, h]

    soft = np.zeros_like(attn)
    for h in range(n_head):
        for i in range(T):
            soft[h, i, :] = softmax_row(list(attn[h, i, :]))

    x1 = np.zeros((T, d1))
    for h in range(n_head):
        for i in range(T):
            for d in range(dh):
                s = 0.0
                for j in range(T):
                    s += soft[h, i, j] * v[j, h * dh + d]
                x1[i, h * dh + d] = s

    edge_update = np.zeros((T, T, d2))
    x2 = np.zeros((T, d1))
    if node_to_edge:
        for i in range(T):
            for j in range(T):
                for c in range(d2):
                    s = 0.0
                    for h in range(n_head):
                        s += (attn[h, i, j] + soft[h, i, j]) * w_expand[h, c]
                    edge_update[i, j, c] = s
        if edge_to_node:
            pooled = np.zeros((T, d2))
            for i in range(T):
                for c in range(d2):
                    weights = softmax_row(list(edge_update[i, :, c]))
                    s = 0.0
                    for j in range(T):
                        s += edge_update[i, j, c] * weights[j]
                    pooled[i, c] = s
            for i in range(T):
                for a in range(d1):
                    s = fuse_b[a]
                    for c in range(d2):
                        s += pooled[i, c] * fuse_w[c, a]
                    x2[i, a] = s

    node_update = np.zeros((T, d1))
    for i in range(T):
        for a in range(d1):
            s = 0.0
            for c in range(d1):
                s += (x1[i, c] + x2[i, c]) * w_o[c, a]
            node_update[i, a] = s

    return node_update, edge_update, attn


def adam_scalar(theta, grads, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """Reference bias-corrected Adam on one scalar, applied over a grad list."""
    m = 0.0
    v = 0.0
    t = 0
    for g in grads:
        t += 1
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        mhat = m / (1 - beta1**t)
        vhat = v / (1 - beta2**t)
        theta = theta - lr * mhat / (math.sqrt(vhat) + eps)
    return theta


def broadcast_binary_loop(a: np.ndarray, b: np.ndarray, op) -> np.ndarray:
    """Elementwise op under numpy broadcasting rules, one scalar at a time."""
    shape = np.broadcast_shapes(a.shape, b.shape)
    out = np.zeros(shape, dtype=np.float64)
    for idx in np.ndindex(*shape) if shape else [()]:
        ai = tuple(
            0 if a.shape[d - (len(shape) - a.ndim)] == 1 else idx[d]
            for d in range(len(shape) - a.ndim, len(shape))
        )
        bi = tuple(
            0 if b.shape[d - (len(shape) - b.ndim)] == 1 else idx[d]
            for d in range(len(shape) - b.ndim, len(shape))
        )
        out[idx] = op(float(a[ai]), float(b[bi]))
    return out
