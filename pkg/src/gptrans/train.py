"""Optimization stack: decoupled-weight-decay Adam, cosine warmup schedule,
parameter EMA, task losses, metrics, and the train/eval loops.

Weight decay skips embedding tables, norms, biases and layer-scale vectors
(anything 1-d or under the ``embed.`` prefix). All loops are deterministic
given the seed; the metrics log is append-only JSONL with exactly the keys
``epoch``, ``lr``, ``train_loss``, ``eval_metric``.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from . import tensor as T
from .checkpoint import save_checkpoint
from .embedding import Vocab
from .errors import ConfigurationError, EmptyLossError, ShapeError
from .graphs import BatchedGraph, Graph, batch_graphs
from .model import ModelConfig, ModelParams, init_model, model_forward, named_parameters
from .tensor import Tensor


# --- optimizer -----------------------------------------------------------------


def decay_mask(name: str, tensor: Tensor) -> bool:
    """True if this parameter receives weight decay."""
    return tensor.ndim > 1 and not name.startswith("embed.")


@dataclass
class OptimState:
    lr_peak: float = 1e-3
    lr_min: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.05
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adamw_step(params: dict[str, Tensor], state: OptimState, lr: float) -> None:
    """Bias-corrected Adam update plus decoupled decay ``lr * wd * theta``.

    Gradients are read from each tensor's ``grad`` slot; missing gradients
    are treated as zero (the decay term still applies where eligible).
    """
    state.t += 1
    bc1 = 1.0 - state.beta1**state.t
    bc2 = 1.0 - state.beta2**state.t
    for name, p in params.items():
        g = p.grad
        if g is None:
            g = np.zeros_like(p.data)
        if g.shape != p.data.shape:
            raise ShapeError(f"{name}: grad shape {g.shape} != param shape {p.data.shape}")
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data, dtype=np.float64)
            state.v[name] = np.zeros_like(p.data, dtype=np.float64)
        m = state.m[name]
        v = state.v[name]
        g64 = g.astype(np.float64, copy=False)
        m *= state.beta1
        m += (1.0 - state.beta1) * g64
        v *= state.beta2
        v += (1.0 - state.beta2) * (g64 * g64)
        update = (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        if state.weight_decay > 0.0 and decay_mask(name, p):
            update = update + state.weight_decay * p.data.astype(np.float64, copy=False)
        p.data = (p.data.astype(np.float64, copy=False) - lr * update).astype(p.dtype)


def cosine_warmup_lr(
    step: int, total_steps: int, warmup_steps: int, lr_peak: float, lr_min: float = 0.0
) -> float:
    """Linear ramp 0 -> peak over warmup, then cosine decay to lr_min."""
    if warmup_steps > total_steps:
        raise ConfigurationError(f"warmup_steps {warmup_steps} > total_steps {total_steps}")
    if not 0 <= step <= total_steps:
        raise ConfigurationError(f"step {step} outside [0, {total_steps}]")
    if warmup_steps > 0 and step < warmup_steps:
        return lr_peak * step / warmup_steps
    if total_steps == warmup_steps:
        return lr_peak
    progress = (step - warmup_steps) / (total_steps - warmup_steps)
    return lr_min + 0.5 * (lr_peak - lr_min) * (1.0 + math.cos(math.pi * progress))


def clip_global_norm(params: dict[str, Tensor], max_norm: float) -> float:
    total = 0.0
    for p in params.values():
        if p.grad is not None:
            total += float(np.sum(p.grad.astype(np.float64) ** 2))
    norm = math.sqrt(total)
    if norm > max_norm > 0.0:
        scale = max_norm / norm
        for p in params.values():
            if p.grad is not None:
                p.grad = p.grad * np.asarray(scale, dtype=p.grad.dtype)
    return norm


# --- EMA -------------------------------------------------------------------------


@dataclass
class EmaState:
    shadow: dict[str, np.ndarray]
    decay: float = 0.9999

    @classmethod
    def from_params(cls, params: dict[str, Tensor], decay: float = 0.9999) -> "EmaState":
        return cls(shadow={k: p.data.copy() for k, p in params.items()}, decay=decay)


def ema_update(ema: EmaState, params: dict[str, Tensor], decay: float | None = None) -> EmaState:
    d = ema.decay if decay is None else decay
    for k, p in params.items():
        ema.shadow[k] = d * ema.shadow[k] + (1.0 - d) * p.data
    return ema


# --- losses ----------------------------------------------------------------------


def task_loss(task: str, predictions: Tensor, targets: np.ndarray, mask: np.ndarray | None = None) -> Tensor:
    """Scalar loss for a batch; masked positions contribute exactly nothing.

    graph-regression: mean absolute error. Classification: softmax cross
    entropy, except binary edge labels which use the logistic loss on the
    single logit channel.
    """
    if task == "graph-regression":
        t = np.asarray(targets, dtype=predictions.dtype)
        if mask is not None and not np.asarray(mask).any():
            raise EmptyLossError("every graph in the batch is masked")
        err = T.absolute(predictions - t)
        if mask is not None:
            keep = np.asarray(mask, dtype=predictions.dtype)
            return T.tsum(err * keep) * np.asarray(1.0 / keep.sum(), dtype=predictions.dtype)
        return T.mean(err)

    if task in ("graph-classification", "node-classification"):
        tgt = np.asarray(targets)
        keep = np.ones(tgt.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
        keep = keep & (tgt >= 0)
        count = int(keep.sum())
        if count == 0:
            raise EmptyLossError("no unmasked labeled positions in the batch")
        k = predictions.shape[-1]
        onehot = np.zeros(predictions.shape, dtype=predictions.dtype)
        idx = np.nonzero(keep)
        onehot[idx + (tgt[idx],)] = 1.0
        logp = T.log_softmax(predictions, axis=-1)
        return T.tsum(logp * onehot) * np.asarray(-1.0 / count, dtype=predictions.dtype)

    if task == "edge-classification":
        tgt = np.asarray(targets)
        keep = (tgt >= 0) if mask is None else (np.asarray(mask, dtype=bool) & (tgt >= 0))
        count = int(keep.sum())
        if count == 0:
            raise EmptyLossError("no labeled edges in the batch")
        if predictions.shape[-1] == 1:
            z = T.reshape(predictions, predictions.shape[:-1])
            y = (tgt > 0).astype(predictions.dtype)
            keep_f = keep.astype(predictions.dtype)
            # logistic loss: softplus(z) - y*z, averaged over labeled pairs
            per = T.softplus(z) - z * y
            return T.tsum(per * keep_f) * np.asarray(1.0 / count, dtype=predictions.dtype)
        onehot = np.zeros(predictions.shape, dtype=predictions.dtype)
        idx = np.nonzero(keep)
        onehot[idx + (np.maximum(tgt[idx], 0),)] = 1.0
        logp = T.log_softmax(predictions, axis=-1)
        return T.tsum(logp * onehot) * np.asarray(-1.0 / count, dtype=predictions.dtype)

    raise ConfigurationError(f"unknown task {task!r}")


# --- metrics ---------------------------------------------------------------------


def mae(pred: np.ndarray, target: np.ndarray) -> float:
    return float(np.mean(np.abs(pred - target)))


def accuracy(logits: np.ndarray, target: np.ndarray, mask: np.ndarray) -> float:
    pred = logits.argmax(axis=-1)
    keep = mask & (target >= 0)
    return float((pred[keep] == target[keep]).mean())


def f1_binary(scores: np.ndarray, labels: np.ndarray, threshold: float = 0.0) -> float:
    pred = scores > threshold
    pos = labels > 0
    tp = float(np.sum(pred & pos))
    fp = float(np.sum(pred & ~pos))
    fn = float(np.sum(~pred & pos))
    if tp == 0.0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 2.0 * precision * recall / (precision + recall)


def roc_auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Rank-statistic AUC with midranks for ties."""
    pos = labels > 0
    n_pos = int(pos.sum())
    n_neg = int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        return float("nan")
    ranks = rankdata(scores)
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def average_precision(scores: np.ndarray, labels: np.ndarray) -> float:
    pos = labels > 0
    if not pos.any():
        return float("nan")
    order = np.argsort(-scores, kind="stable")
    hits = pos[order]
    cum = np.cumsum(hits)
    precision = cum / np.arange(1, len(hits) + 1)
    return float(precision[hits].sum() / pos.sum())


# --- data plumbing ----------------------------------------------------------------


def worker_count() -> int | None:
    """Optional cap from GPTRANS_THREADS; None disables the worker pool."""
    raw = os.environ.get("GPTRANS_THREADS", "")
    if not raw:
        return None
    n = int(raw)
    return n if n > 1 else None


def make_batches(
    graphs: list[Graph],
    order: np.ndarray,
    batch_size: int,
    cfg: ModelConfig,
    vocab: Vocab,
) -> list[BatchedGraph]:
    chunks = [order[i : i + batch_size] for i in range(0, len(order), batch_size)]

    def build(chunk):
        return batch_graphs(
            [graphs[i] for i in chunk],
            spd_clip=cfg.spd_clip,
            deg_clip=cfg.deg_clip,
            edge_attr_vocab=vocab.edge_attr_sizes,
        )

    workers = worker_count()
    if workers:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(build, chunks))
    return [build(chunk) for chunk in chunks]


def check_dataset(graphs: list[Graph], cfg: ModelConfig) -> None:
    if cfg.task == "graph-regression" and any(g.graph_target is None for g in graphs):
        raise ConfigurationError("graph-regression needs graph_target on every graph")
    if cfg.task == "graph-classification" and any(g.graph_target is None for g in graphs):
        raise ConfigurationError("graph-classification needs graph_target on every graph")
    if cfg.task == "node-classification" and any(g.node_targets is None for g in graphs):
        raise ConfigurationError("node-classification needs node_targets on every graph")
    if cfg.task == "edge-classification" and any(g.edge_targets is None for g in graphs):
        raise ConfigurationError("edge-classification needs edge_targets on every graph")


def _batch_loss(batch: BatchedGraph, out: Tensor, cfg: ModelConfig) -> Tensor:
    if cfg.task == "graph-regression":
        return task_loss(cfg.task, out, batch.graph_target)
    if cfg.task == "graph-classification":
        return task_loss(cfg.task, out, batch.graph_target.astype(np.int64))
    if cfg.task == "node-classification":
        return task_loss(cfg.task, out, batch.node_target, batch.node_mask[:, 1:])
    return task_loss(cfg.task, out, batch.edge_target)


# --- evaluation --------------------------------------------------------------------


def metric_direction(task: str) -> str:
    return "min" if task == "graph-regression" else "max"


def evaluate(
    graphs: list[Graph],
    params: ModelParams,
    cfg: ModelConfig,
    vocab: Vocab,
    batch_size: int = 64,
    ema: EmaState | None = None,
    use_ema: bool = False,
) -> dict:
    """Metric report over a dataset; optionally through the EMA shadow."""
    check_dataset(graphs, cfg)
    if use_ema:
        if ema is None:
            raise ConfigurationError("use_ema requires an EmaState")
        named = named_parameters(params)
        saved = {k: p.data for k, p in named.items()}
        for k, p in named.items():
            p.data = ema.shadow[k].astype(p.dtype, copy=False)
    try:
        order = np.arange(len(graphs))
        batches = make_batches(graphs, order, batch_size, cfg, vocab)
        preds, targets, masks = [], [], []
        loss_total, loss_count = 0.0, 0
        for batch in batches:
            out = model_forward(batch, params, cfg, train=False)
            loss = _batch_loss(batch, out, cfg)
            n = batch.batch_size
            loss_total += float(loss.data) * n
            loss_count += n
            preds.append(out.data)
            if cfg.task in ("graph-regression", "graph-classification"):
                targets.append(batch.graph_target)
                masks.append(np.ones(n, dtype=bool))
            elif cfg.task == "node-classification":
                targets.append(batch.node_target)
                masks.append(batch.node_mask[:, 1:])
            else:
                targets.append(batch.edge_target)
                masks.append(batch.edge_target >= 0)

        report: dict = {"task": cfg.task, "n_graphs": len(graphs), "loss": loss_total / loss_count}
        if cfg.task == "graph-regression":
            p = np.concatenate(preds)
            t = np.concatenate(targets)
            report["metric"] = "mae"
            report["value"] = mae(p, t)
            report["baseline_constant_mean_mae"] = mae(np.full_like(t, t.mean()), t)
        elif cfg.task == "graph-classification":
            p = np.concatenate(preds)
            t = np.concatenate(targets).astype(np.int64)
            report["metric"] = "accuracy"
            report["value"] = accuracy(p, t, np.ones(len(t), dtype=bool))
        elif cfg.task == "node-classification":
            flat_p, flat_t = [], []
            for p, t, m in zip(preds, targets, masks):
                keep = m & (t >= 0)
                flat_p.append(p[keep])
                flat_t.append(t[keep])
            p = np.concatenate(flat_p)
            t = np.concatenate(flat_t)
            report["metric"] = "accuracy"
            report["value"] = float((p.argmax(axis=-1) == t).mean())
        else:
            flat_s, flat_t = [], []
            for p, t, m in zip(preds, targets, masks):
                scores = p[..., 0] if p.shape[-1] == 1 else p[..., 1] - p[..., 0]
                flat_s.append(scores[m])
                flat_t.append(t[m])
            s = np.concatenate(flat_s)
            t = np.concatenate(flat_t)
            report["metric"] = "f1"
            report["value"] = f1_binary(s, t)
            report["roc_auc"] = roc_auc(s, t)
            report["average_precision"] = average_precision(s, t)
        return report
    finally:
        if use_ema:
            for k, p in named.items():
                p.data = saved[k]


# --- training loop ------------------------------------------------------------------


@dataclass
class TrainSettings:
    epochs: int = 10
    batch_size: int = 64
    lr_peak: float = 1e-3
    lr_min: float = 0.0
    warmup_epochs: float = 1.0
    weight_decay: float = 0.05
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    ema_decay: float = 0.9999
    clip_norm: float = 0.0  # 0 disables clipping
    seed: int = 0
    eval_batch_size: int = 64
    eval_every: int = 1  # evaluate every k epochs (final epoch always)
    early_stop_patience: int = 0  # 0 disables early stopping


@dataclass
class TrainResult:
    params: ModelParams
    ema: EmaState
    metrics: list[dict]
    best_value: float
    best_epoch: int


def train_loop(
    train_graphs: list[Graph],
    eval_graphs: list[Graph] | None,
    cfg: ModelConfig,
    vocab: Vocab,
    settings: TrainSettings,
    out_dir: str | Path | None = None,
    total_steps: int | None = None,
) -> TrainResult:
    """Seeded AdamW training with cosine warmup schedule and EMA.

    Writes ``metrics.jsonl`` plus last/best checkpoints into ``out_dir``
    when given. ``total_steps`` truncates the run mid-epoch (the schedule
    is built over the truncated horizon).
    """
    check_dataset(train_graphs, cfg)
    if eval_graphs:
        check_dataset(eval_graphs, cfg)

    seeds = np.random.SeedSequence(settings.seed).spawn(3)
    params = init_model(cfg, vocab, seed=settings.seed)
    named = named_parameters(params)
    shuffle_rng = np.random.default_rng(seeds[1])
    model_rng = np.random.default_rng(seeds[2])

    state = OptimState(
        lr_peak=settings.lr_peak,
        lr_min=settings.lr_min,
        beta1=settings.beta1,
        beta2=settings.beta2,
        eps=settings.eps_adam,
        weight_decay=settings.weight_decay,
    )
    ema = EmaState.from_params(named, decay=settings.ema_decay)

    steps_per_epoch = math.ceil(len(train_graphs) / settings.batch_size)
    horizon = settings.epochs * steps_per_epoch
    if total_steps is not None:
        horizon = min(horizon, total_steps)
    warmup_steps = int(round(settings.warmup_epochs * steps_per_epoch))
    warmup_steps = min(warmup_steps, horizon)

    out_path = Path(out_dir) if out_dir is not None else None
    metrics_fh = None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)
        metrics_fh = open(out_path / "metrics.jsonl", "a", encoding="utf-8")

    direction = metric_direction(cfg.task)
    best_value = math.inf if direction == "min" else -math.inf
    best_epoch = -1
    metrics: list[dict] = []
    step = 0
    stale = 0
    try:
        for epoch in range(settings.epochs):
            order = shuffle_rng.permutation(len(train_graphs))
            batches = make_batches(train_graphs, order, settings.batch_size, cfg, vocab)
            epoch_loss, epoch_n = 0.0, 0
            lr = 0.0
            for batch in batches:
                if step >= horizon:
                    break
                lr = cosine_warmup_lr(step, horizon, warmup_steps, settings.lr_peak, settings.lr_min)
                with T.Tape() as tape:
                    out = model_forward(batch, params, cfg, train=True, rng=model_rng)
                    loss = _batch_loss(batch, out, cfg)
                tape.backward(loss)
                if settings.clip_norm > 0.0:
                    clip_global_norm(named, settings.clip_norm)
                adamw_step(named, state, lr)
                ema_update(ema, named)
                for p in named.values():
                    p.zero_grad()
                epoch_loss += float(loss.data) * batch.batch_size
                epoch_n += batch.batch_size
                step += 1

            last_epoch = epoch == settings.epochs - 1 or step >= horizon
            do_eval = last_epoch or (epoch % settings.eval_every == 0)
            value = None
            if do_eval:
                eval_set = eval_graphs if eval_graphs else train_graphs
                report = evaluate(eval_set, params, cfg, vocab, batch_size=settings.eval_batch_size)
                value = report["value"]
            line = {
                "epoch": epoch,
                "lr": lr,
                "train_loss": epoch_loss / max(epoch_n, 1),
                "eval_metric": value,
            }
            metrics.append(line)
            if metrics_fh is not None:
                metrics_fh.write(json.dumps(line) + "\n")
                metrics_fh.flush()

            if do_eval:
                improved = value < best_value if direction == "min" else value > best_value
                if improved:
                    best_value = value
                    best_epoch = epoch
                    stale = 0
                    if out_path is not None:
                        save_checkpoint(
                            out_path / "ckpt_best.bin", {k: p.data for k, p in named.items()}
                        )
                else:
                    stale += 1
                if settings.early_stop_patience and stale >= settings.early_stop_patience:
                    break
            if step >= horizon:
                break
    finally:
        if metrics_fh is not None:
            metrics_fh.close()

    if out_path is not None:
        save_checkpoint(out_path / "ckpt_last.bin", {k: p.data for k, p in named.items()})
        save_checkpoint(out_path / "ckpt_ema.bin", dict(ema.shadow))
        (out_path / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2))
    return TrainResult(params=params, ema=ema, metrics=metrics, best_value=best_value, best_epoch=best_epoch)
