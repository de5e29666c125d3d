"""Graph Propagation Attention.

Multi-head attention over node embeddings where the bias on the attention
logits is projected per layer from the edge embeddings, plus two extra
propagation paths:

* node-to-edge: the biased attention map (raw + softmaxed) is projected
  back into edge-embedding space, becoming the edge-stream update;
* edge-to-node: the fresh edge update is pooled per query node with a
  softmax over key nodes and fused into the node stream through an affine
  layer.

Masked keys carry a large negative surrogate in the returned attention
map, get exactly zero softmax weight, and are excluded from the edge pool.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ShapeError
from .tensor import Tensor

NEG_INF = -1e9  # finite stand-in so masked logits never produce NaNs


@dataclass
class PathToggles:
    node_to_edge: bool = True
    edge_to_node: bool = True


@dataclass
class GPAParams:
    w_q: Tensor  # [d1, d1]
    w_k: Tensor
    w_v: Tensor
    w_o: Tensor
    w_reduce: Tensor  # [d2, n_head]
    w_expand: Tensor  # [n_head, d2]
    fuse_w: Tensor  # [d2, d1]
    fuse_b: Tensor  # [d1]
    n_head: int

    @property
    def d1(self) -> int:
        return self.w_q.shape[0]

    @property
    def d2(self) -> int:
        return self.w_reduce.shape[0]

    @property
    def d_head(self) -> int:
        return self.d1 // self.n_head


@dataclass
class GPAOutput:
    node_update: Tensor  # [B, 1+N, d1], pre-residual
    edge_update: Tensor  # [B, 1+N, 1+N, d2], pre-residual
    attention: Tensor  # [B, n_head, 1+N, 1+N], post-bias, pre-softmax


def attention_bias(x_edge: Tensor, w_reduce: Tensor) -> Tensor:
    """Project edge embeddings to one bias logit per head: [B, H, T, T]."""
    if x_edge.shape[-1] != w_reduce.shape[0]:
        raise ShapeError(
            f"edge width {x_edge.shape[-1]} does not match w_reduce {w_reduce.shape}"
        )
    phi = T.matmul(x_edge, w_reduce)  # [B, T, T, H]
    return T.transpose(phi, (0, 3, 1, 2))


def _split_heads(x: Tensor, n_head: int) -> Tensor:
    B, T_, d = x.shape
    return T.transpose(T.reshape(x, (B, T_, n_head, d // n_head)), (0, 2, 1, 3))


def _merge_heads(x: Tensor) -> Tensor:
    B, H, T_, dh = x.shape
    return T.reshape(T.transpose(x, (0, 2, 1, 3)), (B, T_, H * dh))


def _as_mask(node_mask) -> np.ndarray | None:
    """Normalize to a bool array, or None when nothing is actually masked."""
    if node_mask is None:
        return None
    m = np.asarray(node_mask, dtype=bool)
    return None if m.all() else m


def _attention_core(
    q: Tensor,
    k: Tensor,
    v: Tensor,
    phi: Tensor | None,
    key_mask: np.ndarray | None,
    attn_dropout: float = 0.0,
    train: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[Tensor, Tensor, Tensor]:
    """Returns (mixed values, A, softmax(A)); the clean softmax is shared
    with the edge write-back, dropout only touches the value mix."""
    dh = q.shape[-1]
    scores = T.matmul(q, T.transpose(k, (0, 1, 3, 2))) * np.asarray(
        1.0 / math.sqrt(dh), dtype=q.dtype
    )
    a = scores if phi is None else scores + phi
    mask4 = None
    if key_mask is not None:
        mask4 = key_mask[:, None, None, :]
        a = a + np.where(mask4, 0.0, NEG_INF).astype(q.dtype)
    soft = T.softmax(a, axis=-1, mask=mask4)
    weights = soft
    if train and attn_dropout > 0.0:
        if rng is None:
            raise ValueError("attention dropout needs an rng in train mode")
        weights = T.dropout(soft, attn_dropout, rng)
    return T.matmul(weights, v), a, soft


def scaled_dot_attention(
    q: Tensor,
    k: Tensor,
    v: Tensor,
    phi: Tensor | None,
    key_mask: np.ndarray | None,
    attn_dropout: float = 0.0,
    train: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[Tensor, Tensor]:
    """Per-head attention on [B, H, T, dh] inputs; returns (mixed values, A)."""
    mixed, a, _ = _attention_core(
        q, k, v, phi, _as_mask(key_mask), attn_dropout=attn_dropout, train=train, rng=rng
    )
    return mixed, a


def node_to_node(
    x_node: Tensor,
    phi: Tensor | None,
    params: GPAParams,
    node_mask: np.ndarray | None,
    attn_dropout: float = 0.0,
    train: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[Tensor, Tensor]:
    """Biased multi-head self-attention; returns (x'_node [B,T,d1], A)."""
    q = _split_heads(T.matmul(x_node, params.w_q), params.n_head)
    k = _split_heads(T.matmul(x_node, params.w_k), params.n_head)
    v = _split_heads(T.matmul(x_node, params.w_v), params.n_head)
    mixed, a, _ = _attention_core(
        q, k, v, phi, _as_mask(node_mask), attn_dropout=attn_dropout, train=train, rng=rng
    )
    return _merge_heads(mixed), a


def _expand_attention(a: Tensor, soft: Tensor, w_expand: Tensor, mask: np.ndarray | None) -> Tensor:
    stacked = T.transpose(a + soft, (0, 2, 3, 1))  # [B, T, T, H]
    out = T.matmul(stacked, w_expand)
    if mask is not None:
        pair = (mask[:, :, None] & mask[:, None, :]).astype(out.dtype)
        out = out * pair[:, :, :, None]
    return out


def node_to_edge(a: Tensor, w_expand: Tensor, node_mask: np.ndarray | None) -> Tensor:
    """(A + softmax(A)) projected from heads to edge channels: [B, T, T, d2].

    `a` is the post-bias pre-softmax map (masked keys already at the
    negative surrogate); pairs touching a masked node are zeroed.
    """
    mask = _as_mask(node_mask)
    soft = T.softmax(a, axis=-1, mask=None if mask is None else mask[:, None, None, :])
    return _expand_attention(a, soft, w_expand, mask)


def edge_to_node(
    x_edge_update: Tensor,
    fuse_w: Tensor,
    fuse_b: Tensor,
    node_mask: np.ndarray | None,
) -> Tensor:
    """Softmax-weighted pool of the edge update over key nodes, then affine.

    The softmax runs over the key axis independently per query node and
    channel; masked pairs get zero weight and drop out of the sum.
    """
    mask = _as_mask(node_mask)
    pair_mask = None
    if mask is not None:
        pair_mask = (mask[:, :, None] & mask[:, None, :])[:, :, :, None]
    pooled = T.softmax_pool(x_edge_update, axis=2, mask=pair_mask)  # [B, T, d2]
    return T.matmul(pooled, fuse_w) + fuse_b


def gpa_forward(
    x_node: Tensor,
    x_edge: Tensor,
    params: GPAParams,
    node_mask: np.ndarray | None = None,
    toggles: PathToggles | None = None,
    attn_dropout: float = 0.0,
    train: bool = False,
    rng: np.random.Generator | None = None,
) -> GPAOutput:
    """Run the three propagation paths; node-to-node is always on.

    With node-to-edge off the edge stream gets a zero update and the
    edge-to-node term vanishes with it (it consumes the fresh edge update).
    """
    toggles = toggles or PathToggles()
    mask = _as_mask(node_mask)
    phi = attention_bias(x_edge, params.w_reduce)
    q = _split_heads(T.matmul(x_node, params.w_q), params.n_head)
    k = _split_heads(T.matmul(x_node, params.w_k), params.n_head)
    v = _split_heads(T.matmul(x_node, params.w_v), params.n_head)
    mixed, a, soft = _attention_core(
        q, k, v, phi, mask, attn_dropout=attn_dropout, train=train, rng=rng
    )
    x1 = _merge_heads(mixed)

    if toggles.node_to_edge:
        edge_update = _expand_attention(a, soft, params.w_expand, mask)
    else:
        edge_update = T.Tensor(
            np.zeros(x_edge.shape, dtype=x_edge.data.dtype), requires_grad=False
        )

    if toggles.node_to_edge and toggles.edge_to_node:
        x2 = edge_to_node(edge_update, params.fuse_w, params.fuse_b, node_mask)
        node_sum = x1 + x2
    else:
        node_sum = x1

    node_update = T.matmul(node_sum, params.w_o)
    if mask is not None:
        node_update = node_update * mask.astype(node_update.dtype)[:, :, None]
    return GPAOutput(node_update=node_update, edge_update=edge_update, attention=a)
