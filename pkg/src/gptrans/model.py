"""Model assembly: configs, presets, transformer blocks, heads, accounting.

Block wiring: the attention module consumes layer-normalized node
embeddings and raw edge embeddings; both of its outputs are added
residually (the edge stream has its own residual), then a pre-norm FFN
updates the node stream. Layer scale, when enabled, multiplies every
residual branch elementwise before the addition; drop path skips branches
per sample during training.

A dual-FFN baseline block is included for efficiency comparisons: same
node path (with the edge-derived bias), but the edge stream is updated by
its own LN + FFN residual instead of the attention write-back.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .embedding import (
    EmbeddingTables,
    Vocab,
    embed_edges,
    embed_nodes,
    init_tables,
    named_tables,
    table_shapes,
    trunc_normal,
)
from .errors import ConfigurationError
from .gpa import GPAParams, PathToggles, attention_bias, gpa_forward, node_to_node
from .graphs import BatchedGraph
from .tensor import Tensor

TASKS = (
    "graph-regression",
    "graph-classification",
    "node-classification",
    "edge-classification",
)

PRESETS: dict[str, dict] = {
    "nano": dict(d1=80, d2=40, n_layers=12, n_head=8, d_head=10, layer_scale=False),
    "tiny": dict(d1=256, d2=32, n_layers=12, n_head=8, d_head=32, layer_scale=True),
    "small": dict(d1=384, d2=48, n_layers=12, n_head=12, d_head=32, layer_scale=True),
    "base": dict(d1=608, d2=76, n_layers=18, n_head=19, d_head=32, layer_scale=True),
    "large": dict(d1=736, d2=92, n_layers=24, n_head=23, d_head=32, layer_scale=True),
}


@dataclass
class ModelConfig:
    d1: int = 80
    d2: int = 40
    n_layers: int = 12
    n_head: int = 8
    d_head: int = 10
    ffn_ratio: float = 1.0
    dropout_ffn: float = 0.0
    dropout_embed: float = 0.0
    dropout_attn: float = 0.0
    drop_path_rate: float = 0.0
    layer_scale: bool = False
    layer_scale_init: float = 1e-5
    node_to_edge: bool = True
    edge_to_node: bool = True
    spd_clip: int = 20
    deg_clip: int = 64
    task: str = "graph-regression"
    num_classes: int | None = None
    baseline_dual_ffn: bool = False

    def __post_init__(self):
        if self.d1 != self.n_head * self.d_head:
            raise ConfigurationError(
                f"d1={self.d1} must equal n_head*d_head={self.n_head}*{self.d_head}"
            )
        for name in ("dropout_ffn", "dropout_embed", "dropout_attn", "drop_path_rate"):
            rate = getattr(self, name)
            if not 0.0 <= rate < 1.0:
                raise ConfigurationError(f"{name}={rate} not in [0, 1)")
        if self.task not in TASKS:
            raise ConfigurationError(f"unknown task {self.task!r}; choose from {TASKS}")
        if self.task != "graph-regression" and (self.num_classes or 0) < 2:
            raise ConfigurationError(f"task {self.task} needs num_classes >= 2")

    @property
    def toggles(self) -> PathToggles:
        return PathToggles(node_to_edge=self.node_to_edge, edge_to_node=self.edge_to_node)

    @property
    def ffn_hidden(self) -> int:
        return int(round(self.ffn_ratio * self.d1))

    @property
    def edge_ffn_hidden(self) -> int:
        return int(round(self.ffn_ratio * self.d2))

    @property
    def head_in(self) -> int:
        return self.d2 if self.task == "edge-classification" else self.d1

    @property
    def head_out(self) -> int:
        if self.task == "graph-regression":
            return 1
        if self.task == "edge-classification" and self.num_classes == 2:
            return 1  # single-logit binary edge head
        return int(self.num_classes)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


def preset(name: str, **overrides) -> ModelConfig:
    if name not in PRESETS:
        raise ConfigurationError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    kwargs = dict(PRESETS[name])
    kwargs.update(overrides)
    return ModelConfig(**kwargs)


@dataclass
class BlockParams:
    gpa: GPAParams
    ln1_gain: Tensor
    ln1_bias: Tensor
    ln2_gain: Tensor
    ln2_bias: Tensor
    ffn_w1: Tensor
    ffn_b1: Tensor
    ffn_w2: Tensor
    ffn_b2: Tensor
    gamma_node: Tensor | None = None
    gamma_edge: Tensor | None = None
    # dual-FFN baseline only
    edge_ln_gain: Tensor | None = None
    edge_ln_bias: Tensor | None = None
    edge_ffn_w1: Tensor | None = None
    edge_ffn_b1: Tensor | None = None
    edge_ffn_w2: Tensor | None = None
    edge_ffn_b2: Tensor | None = None


@dataclass
class HeadParams:
    ln_gain: Tensor
    ln_bias: Tensor
    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor


@dataclass
class ModelParams:
    tables: EmbeddingTables
    blocks: list[BlockParams]
    head: HeadParams


def parameter_shapes(cfg: ModelConfig, vocab: Vocab) -> dict[str, tuple[int, ...]]:
    """Checkpoint-name -> shape for the full model; the single source of
    truth shared by initialization and parameter counting."""
    shapes = table_shapes(vocab, cfg.d1, cfg.d2, cfg.spd_clip, cfg.deg_clip)
    d1, d2, hidden = cfg.d1, cfg.d2, cfg.ffn_hidden
    for l in range(cfg.n_layers):
        p = f"block{l}"
        shapes[f"{p}.gpa.w_q"] = (d1, d1)
        shapes[f"{p}.gpa.w_k"] = (d1, d1)
        shapes[f"{p}.gpa.w_v"] = (d1, d1)
        shapes[f"{p}.gpa.w_o"] = (d1, d1)
        shapes[f"{p}.gpa.w_reduce"] = (d2, cfg.n_head)
        shapes[f"{p}.gpa.w_expand"] = (cfg.n_head, d2)
        shapes[f"{p}.gpa.fuse_fc.weight"] = (d2, d1)
        shapes[f"{p}.gpa.fuse_fc.bias"] = (d1,)
        shapes[f"{p}.ln1.gain"] = (d1,)
        shapes[f"{p}.ln1.bias"] = (d1,)
        shapes[f"{p}.ln2.gain"] = (d1,)
        shapes[f"{p}.ln2.bias"] = (d1,)
        shapes[f"{p}.ffn.fc1.weight"] = (d1, hidden)
        shapes[f"{p}.ffn.fc1.bias"] = (hidden,)
        shapes[f"{p}.ffn.fc2.weight"] = (hidden, d1)
        shapes[f"{p}.ffn.fc2.bias"] = (d1,)
        if cfg.layer_scale:
            shapes[f"{p}.gamma_node"] = (d1,)
            shapes[f"{p}.gamma_edge"] = (d2,)
        if cfg.baseline_dual_ffn:
            eh = cfg.edge_ffn_hidden
            shapes[f"{p}.edge_ln.gain"] = (d2,)
            shapes[f"{p}.edge_ln.bias"] = (d2,)
            shapes[f"{p}.edge_ffn.fc1.weight"] = (d2, eh)
            shapes[f"{p}.edge_ffn.fc1.bias"] = (eh,)
            shapes[f"{p}.edge_ffn.fc2.weight"] = (eh, d2)
            shapes[f"{p}.edge_ffn.fc2.bias"] = (d2,)
    d_in, d_out = cfg.head_in, cfg.head_out
    shapes["head.ln.gain"] = (d_in,)
    shapes["head.ln.bias"] = (d_in,)
    shapes["head.fc1.weight"] = (d_in, d_in)
    shapes["head.fc1.bias"] = (d_in,)
    shapes["head.fc2.weight"] = (d_in, d_out)
    shapes["head.fc2.bias"] = (d_out,)
    return shapes


def count_params(cfg: ModelConfig, vocab: Vocab) -> int:
    """Exact scalar-parameter count, embedding tables and head included."""
    return sum(int(np.prod(s)) for s in parameter_shapes(cfg, vocab).values())


def init_model(
    cfg: ModelConfig, vocab: Vocab, seed: int = 0, dtype=np.float32
) -> ModelParams:
    rng = np.random.default_rng(seed)
    tables = init_tables(vocab, cfg.d1, cfg.d2, cfg.spd_clip, cfg.deg_clip, rng, dtype=dtype)

    def weight(*shape):
        return Tensor(trunc_normal(rng, shape, dtype=dtype), requires_grad=True, dtype=dtype)

    def zeros(*shape):
        return Tensor(np.zeros(shape, dtype=dtype), requires_grad=True, dtype=dtype)

    def ones(*shape):
        return Tensor(np.ones(shape, dtype=dtype), requires_grad=True, dtype=dtype)

    def gamma(*shape):
        return Tensor(
            np.full(shape, cfg.layer_scale_init, dtype=dtype), requires_grad=True, dtype=dtype
        )

    blocks = []
    for _ in range(cfg.n_layers):
        blocks.append(
            BlockParams(
                gpa=GPAParams(
                    w_q=weight(cfg.d1, cfg.d1),
                    w_k=weight(cfg.d1, cfg.d1),
                    w_v=weight(cfg.d1, cfg.d1),
                    w_o=weight(cfg.d1, cfg.d1),
                    w_reduce=weight(cfg.d2, cfg.n_head),
                    w_expand=weight(cfg.n_head, cfg.d2),
                    fuse_w=weight(cfg.d2, cfg.d1),
                    fuse_b=zeros(cfg.d1),
                    n_head=cfg.n_head,
                ),
                ln1_gain=ones(cfg.d1),
                ln1_bias=zeros(cfg.d1),
                ln2_gain=ones(cfg.d1),
                ln2_bias=zeros(cfg.d1),
                ffn_w1=weight(cfg.d1, cfg.ffn_hidden),
                ffn_b1=zeros(cfg.ffn_hidden),
                ffn_w2=weight(cfg.ffn_hidden, cfg.d1),
                ffn_b2=zeros(cfg.d1),
                gamma_node=gamma(cfg.d1) if cfg.layer_scale else None,
                gamma_edge=gamma(cfg.d2) if cfg.layer_scale else None,
                edge_ln_gain=ones(cfg.d2) if cfg.baseline_dual_ffn else None,
                edge_ln_bias=zeros(cfg.d2) if cfg.baseline_dual_ffn else None,
                edge_ffn_w1=weight(cfg.d2, cfg.edge_ffn_hidden) if cfg.baseline_dual_ffn else None,
                edge_ffn_b1=zeros(cfg.edge_ffn_hidden) if cfg.baseline_dual_ffn else None,
                edge_ffn_w2=weight(cfg.edge_ffn_hidden, cfg.d2) if cfg.baseline_dual_ffn else None,
                edge_ffn_b2=zeros(cfg.d2) if cfg.baseline_dual_ffn else None,
            )
        )

    head = HeadParams(
        ln_gain=ones(cfg.head_in),
        ln_bias=zeros(cfg.head_in),
        w1=weight(cfg.head_in, cfg.head_in),
        b1=zeros(cfg.head_in),
        w2=weight(cfg.head_in, cfg.head_out),
        b2=zeros(cfg.head_out),
    )
    return ModelParams(tables=tables, blocks=blocks, head=head)


def named_parameters(params: ModelParams) -> dict[str, Tensor]:
    out = dict(named_tables(params.tables))
    for l, bp in enumerate(params.blocks):
        p = f"block{l}"
        out[f"{p}.gpa.w_q"] = bp.gpa.w_q
        out[f"{p}.gpa.w_k"] = bp.gpa.w_k
        out[f"{p}.gpa.w_v"] = bp.gpa.w_v
        out[f"{p}.gpa.w_o"] = bp.gpa.w_o
        out[f"{p}.gpa.w_reduce"] = bp.gpa.w_reduce
        out[f"{p}.gpa.w_expand"] = bp.gpa.w_expand
        out[f"{p}.gpa.fuse_fc.weight"] = bp.gpa.fuse_w
        out[f"{p}.gpa.fuse_fc.bias"] = bp.gpa.fuse_b
        out[f"{p}.ln1.gain"] = bp.ln1_gain
        out[f"{p}.ln1.bias"] = bp.ln1_bias
        out[f"{p}.ln2.gain"] = bp.ln2_gain
        out[f"{p}.ln2.bias"] = bp.ln2_bias
        out[f"{p}.ffn.fc1.weight"] = bp.ffn_w1
        out[f"{p}.ffn.fc1.bias"] = bp.ffn_b1
        out[f"{p}.ffn.fc2.weight"] = bp.ffn_w2
        out[f"{p}.ffn.fc2.bias"] = bp.ffn_b2
        if bp.gamma_node is not None:
            out[f"{p}.gamma_node"] = bp.gamma_node
            out[f"{p}.gamma_edge"] = bp.gamma_edge
        if bp.edge_ln_gain is not None:
            out[f"{p}.edge_ln.gain"] = bp.edge_ln_gain
            out[f"{p}.edge_ln.bias"] = bp.edge_ln_bias
            out[f"{p}.edge_ffn.fc1.weight"] = bp.edge_ffn_w1
            out[f"{p}.edge_ffn.fc1.bias"] = bp.edge_ffn_b1
            out[f"{p}.edge_ffn.fc2.weight"] = bp.edge_ffn_w2
            out[f"{p}.edge_ffn.fc2.bias"] = bp.edge_ffn_b2
    out["head.ln.gain"] = params.head.ln_gain
    out["head.ln.bias"] = params.head.ln_bias
    out["head.fc1.weight"] = params.head.w1
    out["head.fc1.bias"] = params.head.b1
    out["head.fc2.weight"] = params.head.w2
    out["head.fc2.bias"] = params.head.b2
    return out


def load_into(params: ModelParams, arrays: dict[str, np.ndarray]) -> None:
    """Copy checkpoint arrays into an initialized parameter tree."""
    named = named_parameters(params)
    missing = set(named) - set(arrays)
    extra = set(arrays) - set(named)
    if missing or extra:
        raise ConfigurationError(
            f"checkpoint mismatch: missing {sorted(missing)[:4]}..., extra {sorted(extra)[:4]}..."
            if len(missing) + len(extra) > 8
            else f"checkpoint mismatch: missing {sorted(missing)}, extra {sorted(extra)}"
        )
    for name, t in named.items():
        arr = arrays[name]
        if tuple(arr.shape) != t.shape:
            raise ConfigurationError(f"{name}: checkpoint shape {arr.shape} != model {t.shape}")
        t.data = arr.astype(t.dtype, copy=True)


def _drop_path(x: Tensor, rate: float, train: bool, rng: np.random.Generator | None) -> Tensor:
    """Per-sample stochastic depth; kept branches are rescaled by 1/keep."""
    if not train or rate <= 0.0:
        return x
    if rng is None:
        raise ValueError("drop path needs an rng in train mode")
    B = x.shape[0]
    keep = (rng.random(B) >= rate).astype(x.dtype) / np.asarray(1.0 - rate, dtype=x.dtype)
    return x * keep.reshape((B,) + (1,) * (x.ndim - 1))


def ffn_forward(
    x: Tensor,
    w1: Tensor,
    b1: Tensor,
    w2: Tensor,
    b2: Tensor,
    rate: float = 0.0,
    train: bool = False,
    rng: np.random.Generator | None = None,
) -> Tensor:
    h = T.gelu(T.matmul(x, w1) + b1)
    if train and rate > 0.0:
        h = T.dropout(h, rate, rng)
    out = T.matmul(h, w2) + b2
    if train and rate > 0.0:
        out = T.dropout(out, rate, rng)
    return out


def block_forward(
    x_node: Tensor,
    x_edge: Tensor,
    bp: BlockParams,
    node_mask: np.ndarray,
    cfg: ModelConfig,
    train: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[Tensor, Tensor]:
    gpa_out = gpa_forward(
        T.layer_norm(x_node, bp.ln1_gain, bp.ln1_bias),
        x_edge,
        bp.gpa,
        node_mask,
        toggles=cfg.toggles,
        attn_dropout=cfg.dropout_attn,
        train=train,
        rng=rng,
    )
    node_branch = gpa_out.node_update
    edge_branch = gpa_out.edge_update
    if cfg.layer_scale:
        node_branch = node_branch * bp.gamma_node
        if cfg.node_to_edge:
            edge_branch = edge_branch * bp.gamma_edge
    node_branch = _drop_path(node_branch, cfg.drop_path_rate, train, rng)
    x_node_hat = x_node + node_branch
    if cfg.node_to_edge:
        edge_branch = _drop_path(edge_branch, cfg.drop_path_rate, train, rng)
        x_edge_out = x_edge + edge_branch
    else:
        x_edge_out = x_edge

    ffn_branch = ffn_forward(
        T.layer_norm(x_node_hat, bp.ln2_gain, bp.ln2_bias),
        bp.ffn_w1,
        bp.ffn_b1,
        bp.ffn_w2,
        bp.ffn_b2,
        rate=cfg.dropout_ffn,
        train=train,
        rng=rng,
    )
    if cfg.layer_scale:
        ffn_branch = ffn_branch * bp.gamma_node  # node-stream scale is shared
    ffn_branch = _drop_path(ffn_branch, cfg.drop_path_rate, train, rng)
    return x_node_hat + ffn_branch, x_edge_out


def dual_ffn_block_forward(
    x_node: Tensor,
    x_edge: Tensor,
    bp: BlockParams,
    node_mask: np.ndarray,
    cfg: ModelConfig,
    train: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[Tensor, Tensor]:
    """Baseline block: biased attention node path + per-block edge FFN."""
    if bp.edge_ffn_w1 is None:
        raise ConfigurationError("dual-FFN block called without edge-FFN parameters")
    phi = attention_bias(x_edge, bp.gpa.w_reduce)
    x1, _ = node_to_node(
        T.layer_norm(x_node, bp.ln1_gain, bp.ln1_bias),
        phi,
        bp.gpa,
        node_mask,
        attn_dropout=cfg.dropout_attn,
        train=train,
        rng=rng,
    )
    node_branch = T.matmul(x1, bp.gpa.w_o)
    mask_arr = np.asarray(node_mask, dtype=bool)
    all_real = mask_arr.all()
    if not all_real:
        node_branch = node_branch * mask_arr.astype(node_branch.dtype)[:, :, None]
    if cfg.layer_scale:
        node_branch = node_branch * bp.gamma_node
    node_branch = _drop_path(node_branch, cfg.drop_path_rate, train, rng)
    x_node_hat = x_node + node_branch

    edge_branch = ffn_forward(
        T.layer_norm(x_edge, bp.edge_ln_gain, bp.edge_ln_bias),
        bp.edge_ffn_w1,
        bp.edge_ffn_b1,
        bp.edge_ffn_w2,
        bp.edge_ffn_b2,
        rate=cfg.dropout_ffn,
        train=train,
        rng=rng,
    )
    if not all_real:
        m = mask_arr.astype(edge_branch.dtype)
        edge_branch = edge_branch * (m[:, :, None] * m[:, None, :])[:, :, :, None]
    if cfg.layer_scale:
        edge_branch = edge_branch * bp.gamma_edge
    edge_branch = _drop_path(edge_branch, cfg.drop_path_rate, train, rng)
    x_edge_out = x_edge + edge_branch

    ffn_branch = ffn_forward(
        T.layer_norm(x_node_hat, bp.ln2_gain, bp.ln2_bias),
        bp.ffn_w1,
        bp.ffn_b1,
        bp.ffn_w2,
        bp.ffn_b2,
        rate=cfg.dropout_ffn,
        train=train,
        rng=rng,
    )
    if cfg.layer_scale:
        ffn_branch = ffn_branch * bp.gamma_node
    ffn_branch = _drop_path(ffn_branch, cfg.drop_path_rate, train, rng)
    return x_node_hat + ffn_branch, x_edge_out


def head_forward(x: Tensor, head: HeadParams, apply_ln: bool = True) -> Tensor:
    if apply_ln:
        x = T.layer_norm(x, head.ln_gain, head.ln_bias)
    return T.matmul(T.gelu(T.matmul(x, head.w1) + head.b1), head.w2) + head.b2


def model_forward(
    batch: BatchedGraph,
    params: ModelParams,
    cfg: ModelConfig,
    train: bool = False,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Embed, run the block stack, read the task head.

    Output shapes: graph-regression [B]; graph-classification [B, k];
    node-classification [B, N, k]; edge-classification [B, 1+N, 1+N, k]
    (single logit channel for binary edges).
    """
    x_node = embed_nodes(batch, params.tables)
    x_edge = embed_edges(batch, params.tables)
    if train and cfg.dropout_embed > 0.0:
        x_node = T.dropout(x_node, cfg.dropout_embed, rng)
        x_edge = T.dropout(x_edge, cfg.dropout_embed, rng)

    block_fn = dual_ffn_block_forward if cfg.baseline_dual_ffn else block_forward
    mask = batch.node_mask
    for bp in params.blocks:
        x_node, x_edge = block_fn(x_node, x_edge, bp, mask, cfg, train=train, rng=rng)

    if cfg.task == "graph-regression":
        out = head_forward(x_node[:, 0, :], params.head)
        return T.reshape(out, (out.shape[0],))
    if cfg.task == "graph-classification":
        return head_forward(x_node[:, 0, :], params.head)
    if cfg.task == "node-classification":
        return head_forward(x_node[:, 1:, :], params.head)
    # edge-classification reads the edge stream at every pair; the loss
    # selects the labeled (direct-edge) positions
    return head_forward(x_edge, params.head)


# --- FLOP accounting -----------------------------------------------------------

# per-element costs for non-matmul ops (documented convention)
SOFTMAX_COST = 5.0
LN_COST = 8.0
GELU_COST = 10.0
ADD_COST = 1.0


@dataclass
class FlopReport:
    macs: float
    elementwise: float
    breakdown: dict[str, float] = field(default_factory=dict)

    @property
    def flops_one_per_mac(self) -> float:
        return self.macs + self.elementwise

    @property
    def flops_two_per_mac(self) -> float:
        return 2.0 * self.macs + self.elementwise

    def to_dict(self) -> dict:
        return {
            "macs": self.macs,
            "elementwise": self.elementwise,
            "flops_one_per_mac": self.flops_one_per_mac,
            "flops_two_per_mac": self.flops_two_per_mac,
            "breakdown": dict(self.breakdown),
        }


def estimate_flops(cfg: ModelConfig, n_nodes: int, vocab: Vocab | None = None) -> FlopReport:
    """Analytic per-forward cost for a single graph of ``n_nodes``.

    MACs (multiply-accumulates) cover the matmuls; softmax/LN/GELU and the
    stream additions are tallied per element. Totals are reported under
    both the 1-FLOP-per-MAC and 2-FLOPs-per-MAC conventions.
    """
    if n_nodes < 1:
        raise ConfigurationError("n_nodes must be >= 1")
    t = 1 + n_nodes
    pairs = t * t
    d1, d2, h = cfg.d1, cfg.d2, cfg.n_head
    hidden = cfg.ffn_hidden
    br: dict[str, float] = {}

    n_slots = len(vocab.node_attr_sizes) if vocab else 1
    e_slots = len(vocab.edge_attr_sizes) if vocab else 1
    embed_elt = t * d1 * (n_slots + 2) * ADD_COST + pairs * d2 * (e_slots + 1) * ADD_COST
    br["embed.adds"] = embed_elt

    qkv = 3 * t * d1 * d1
    out_proj = t * d1 * d1
    scores = pairs * d1  # sum over heads of T^2 * d_head
    mix = pairs * d1
    phi = pairs * d2 * h
    softmax_attn = h * pairs * SOFTMAX_COST
    ln_node = 2 * t * d1 * LN_COST
    ffn = t * d1 * hidden + t * hidden * d1
    gelu_ffn = t * hidden * GELU_COST
    residuals = (2 * t * d1 + pairs * d2) * ADD_COST
    bias_add = h * pairs * ADD_COST

    block_macs = qkv + out_proj + scores + mix + phi + ffn
    block_elt = softmax_attn + ln_node + gelu_ffn + residuals + bias_add

    if cfg.baseline_dual_ffn:
        eh = cfg.edge_ffn_hidden
        edge_ffn = pairs * d2 * eh + pairs * eh * d2
        block_macs += edge_ffn
        block_elt += pairs * d2 * LN_COST + pairs * eh * GELU_COST
        br["block.edge_ffn.macs"] = edge_ffn * cfg.n_layers
    else:
        if cfg.node_to_edge:
            n2e = pairs * h * d2
            block_macs += n2e
            block_elt += h * pairs * (SOFTMAX_COST + ADD_COST)
            br["block.node_to_edge.macs"] = n2e * cfg.n_layers
            if cfg.edge_to_node:
                e2n = pairs * d2 + t * d2 * d1
                block_macs += e2n
                block_elt += pairs * d2 * SOFTMAX_COST
                br["block.edge_to_node.macs"] = e2n * cfg.n_layers

    br["block.qkv_out_proj.macs"] = (qkv + out_proj) * cfg.n_layers
    br["block.attention.macs"] = (scores + mix) * cfg.n_layers
    br["block.bias_phi.macs"] = phi * cfg.n_layers
    br["block.ffn.macs"] = ffn * cfg.n_layers

    d_in, d_out = cfg.head_in, cfg.head_out
    head_rows = pairs if cfg.task == "edge-classification" else (
        t - 1 if cfg.task == "node-classification" else 1
    )
    head_macs = head_rows * (d_in * d_in + d_in * d_out)
    head_elt = head_rows * (d_in * LN_COST + d_in * GELU_COST)
    br["head.macs"] = head_macs

    macs = cfg.n_layers * block_macs + head_macs
    elementwise = embed_elt + cfg.n_layers * block_elt + head_elt
    return FlopReport(macs=float(macs), elementwise=float(elementwise), breakdown=br)
