"""Command-line entry point.

Commands: synth, scan, train, eval, gradcheck, params, flops, bench.
Every command that writes a run or dataset directory drops a manifest
(command, config snapshot, seed, dataset paths, input hash, timestamp);
reports are printed as tables and optionally written as JSON that
validates against the schemas shipped in ``gptrans/schemas``.
"""

from __future__ import annotations

import os

# honor the worker/thread cap before numpy binds its thread pools
_threads = os.environ.get("GPTRANS_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

import argparse
import hashlib
import json
import statistics
import sys
import time
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from . import tensor as T
from .checkpoint import load_checkpoint
from .embedding import Vocab
from .errors import ConfigurationError, GPTransError
from .gradcheck import gradcheck
from .graphs import Graph, batch_graphs, load_jsonl, save_jsonl
from .model import (
    ModelConfig,
    PRESETS,
    block_forward,
    count_params,
    dual_ffn_block_forward,
    estimate_flops,
    init_model,
    load_into,
    model_forward,
    named_parameters,
    preset,
)
from .synth import SYNTH_TASKS, generate, scan_vocab
from .train import EmaState, TrainSettings, evaluate, train_loop

VOCAB_PRESETS = {
    # ZINC-style molecules: 28 atom types, 4 bond types, single slot each
    "zinc-like": Vocab(node_attr_sizes=[28], edge_attr_sizes=[4]),
    # OGB-style molecules with offset tables: 9 node slots, 3 edge slots
    "pcqm4m-like": Vocab(node_attr_sizes=[512] * 9, edge_attr_sizes=[512] * 3),
}

# published reference points for the parity reports
PARAM_REFERENCES = {
    ("nano", "zinc-like"): 554e3,
    ("tiny", "pcqm4m-like"): 6.6e6,
    ("small", "pcqm4m-like"): 13.6e6,
    ("base", "pcqm4m-like"): 45.7e6,
    ("large", "pcqm4m-like"): 86.0e6,
}
FLOP_REFERENCES = {("small", 20): 0.472e9}


def load_schema(name: str) -> dict:
    with resources.files("gptrans.schemas").joinpath(f"{name}.schema.json").open("r") as fh:
        return json.load(fh)


def sha256_files(paths: list[Path]) -> str:
    h = hashlib.sha256()
    for p in sorted(paths):
        h.update(str(p.name).encode())
        h.update(p.read_bytes())
    return h.hexdigest()


def write_manifest(
    out_dir: Path, command: str, config: dict, seed: int | None, dataset_paths: list[Path]
) -> None:
    manifest = {
        "command": command,
        "config": config,
        "seed": seed,
        "dataset_paths": [str(p) for p in dataset_paths],
        "input_hash": sha256_files([p for p in dataset_paths if p.is_file()]),
        "created_at": datetime.now(timezone.utc).isoformat(),
        "version": __version__,
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def emit_json(report: dict, path: str | None) -> None:
    if path:
        Path(path).write_text(json.dumps(report, indent=2) + "\n")


def config_from_args(args) -> ModelConfig:
    overrides = {}
    for attr, key in [
        ("layers", "n_layers"),
        ("d1", "d1"),
        ("d2", "d2"),
        ("heads", "n_head"),
        ("d_head", "d_head"),
    ]:
        value = getattr(args, attr, None)
        if value is not None:
            overrides[key] = value
    for key in (
        "task",
        "num_classes",
        "dropout_ffn",
        "dropout_embed",
        "dropout_attn",
        "drop_path_rate",
        "spd_clip",
        "deg_clip",
    ):
        value = getattr(args, key.replace("-", "_"), None)
        if value is not None:
            overrides[key] = value
    if getattr(args, "toggle_n2e", None) is not None:
        overrides["node_to_edge"] = args.toggle_n2e
    if getattr(args, "toggle_e2n", None) is not None:
        overrides["edge_to_node"] = args.toggle_e2n
    if getattr(args, "dual_ffn", False):
        overrides["baseline_dual_ffn"] = True
    if getattr(args, "preset", None):
        base = dict(PRESETS[args.preset])
        if "d1" in overrides or "heads" in overrides or "d_head" in overrides:
            # keep d1 = heads * d_head consistent when partially overridden
            d1 = overrides.get("d1", base["d1"])
            d_head = overrides.get("d_head", base["d_head"])
            overrides.setdefault("n_head", d1 // d_head)
        base.update(overrides)
        return ModelConfig(**base)
    return ModelConfig(**overrides)


def resolve_vocab(spec_str: str) -> tuple[str, Vocab]:
    if spec_str in VOCAB_PRESETS:
        return spec_str, VOCAB_PRESETS[spec_str]
    path = Path(spec_str)
    if not path.is_file():
        raise ConfigurationError(
            f"--vocab must be one of {sorted(VOCAB_PRESETS)} or a vocab.json path, got {spec_str}"
        )
    return str(path), Vocab.from_dict(json.loads(path.read_text()))


# --- commands ----------------------------------------------------------------


def cmd_synth(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    gen_kwargs = {}
    if args.task == "cluster-like":
        gen_kwargs["k"] = args.clusters
    size_range = (args.size_min, args.size_max)
    train_graphs, vocab = generate(args.task, args.n_train, size_range, seed=args.seed, **gen_kwargs)
    eval_graphs, _ = generate(args.task, args.n_eval, size_range, seed=args.seed + 1, **gen_kwargs)
    save_jsonl(out / "train.jsonl", train_graphs)
    save_jsonl(out / "eval.jsonl", eval_graphs)
    (out / "vocab.json").write_text(json.dumps(vocab.to_dict(), indent=2) + "\n")
    write_manifest(
        out,
        "synth",
        {
            "task": args.task,
            "n_train": args.n_train,
            "n_eval": args.n_eval,
            "size_range": list(size_range),
            **gen_kwargs,
        },
        args.seed,
        [out / "train.jsonl", out / "eval.jsonl"],
    )
    print(f"wrote {args.n_train} train / {args.n_eval} eval graphs to {out}")
    return 0


def cmd_scan(args) -> int:
    graphs = load_jsonl(args.data)
    vocab = scan_vocab(graphs, task=args.task, num_classes=args.num_classes)
    Path(args.out).write_text(json.dumps(vocab.to_dict(), indent=2) + "\n")
    print(f"scanned {len(graphs)} graphs -> {args.out}")
    print(f"  node_attr_sizes={vocab.node_attr_sizes} edge_attr_sizes={vocab.edge_attr_sizes}")
    return 0


def _load_dataset_dir(data: str) -> tuple[list[Graph], list[Graph] | None, Vocab, list[Path]]:
    root = Path(data)
    if root.is_dir():
        train_path = root / "train.jsonl"
        eval_path = root / "eval.jsonl"
        vocab_path = root / "vocab.json"
        if not train_path.is_file() or not vocab_path.is_file():
            raise ConfigurationError(f"{root} needs train.jsonl and vocab.json")
        train_graphs = load_jsonl(train_path)
        eval_graphs = load_jsonl(eval_path) if eval_path.is_file() else None
        vocab = Vocab.from_dict(json.loads(vocab_path.read_text()))
        paths = [train_path] + ([eval_path] if eval_graphs is not None else [])
        return train_graphs, eval_graphs, vocab, paths
    raise ConfigurationError(f"--data {data} is not a dataset directory")


def cmd_train(args) -> int:
    train_graphs, eval_graphs, vocab, paths = _load_dataset_dir(args.data)
    cfg = config_from_args(args)
    if vocab.task and getattr(args, "task", None) is None:
        cfg = ModelConfig(**{**cfg.to_dict(), "task": vocab.task, "num_classes": vocab.num_classes})
    settings = TrainSettings(
        epochs=args.epochs,
        batch_size=args.batch_size,
        lr_peak=args.lr,
        lr_min=args.lr_min,
        warmup_epochs=args.warmup_epochs,
        weight_decay=args.weight_decay,
        ema_decay=args.ema_decay,
        clip_norm=args.clip_norm,
        seed=args.seed,
        eval_every=args.eval_every,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_manifest(out, "train", {"model": cfg.to_dict(), "train": settings.__dict__}, args.seed, paths)
    t0 = time.perf_counter()
    result = train_loop(
        train_graphs, eval_graphs, cfg, vocab, settings, out_dir=out, total_steps=args.total_steps
    )
    elapsed = time.perf_counter() - t0
    print(f"trained {len(result.metrics)} epochs in {elapsed:.1f}s")
    print(f"best eval metric {result.best_value:.6f} at epoch {result.best_epoch}")
    print(f"artifacts in {out}")
    return 0


def cmd_eval(args) -> int:
    run = Path(args.run)
    cfg = ModelConfig.from_dict(json.loads((run / "config.json").read_text()))
    graphs = load_jsonl(args.data)
    vocab_path = Path(args.data).parent / "vocab.json"
    if args.vocab:
        _, vocab = resolve_vocab(args.vocab)
    elif vocab_path.is_file():
        vocab = Vocab.from_dict(json.loads(vocab_path.read_text()))
    else:
        raise ConfigurationError("no vocab.json next to --data; pass --vocab")

    params = init_model(cfg, vocab, seed=0)
    ckpt_name = args.checkpoint or "ckpt_best.bin"
    arrays = load_checkpoint(run / ckpt_name)
    load_into(params, arrays)
    ema = None
    if args.use_ema:
        shadow = load_checkpoint(run / "ckpt_ema.bin")
        ema = EmaState(shadow=shadow)
    report = evaluate(graphs, params, cfg, vocab, batch_size=args.batch_size, ema=ema, use_ema=args.use_ema)
    report["use_ema"] = bool(args.use_ema)

    print(f"task={report['task']} graphs={report['n_graphs']} loss={report['loss']:.6f}")
    print(f"{report['metric']} = {report['value']:.6f}")
    if "baseline_constant_mean_mae" in report:
        print(f"constant-mean baseline mae = {report['baseline_constant_mean_mae']:.6f}")
    if "roc_auc" in report:
        print(f"roc_auc = {report['roc_auc']:.6f}  average_precision = {report['average_precision']:.6f}")
    emit_json(report, args.json)
    return 0


def build_gradcheck_model(cfg: ModelConfig, seed: int = 0):
    """Double-precision model + 3-node batch + scalar loss closure."""
    vocab = Vocab(node_attr_sizes=[4], edge_attr_sizes=[3])
    params = init_model(cfg, vocab, seed=seed, dtype=np.float64)
    g = Graph(
        num_nodes=3,
        node_attrs=[[1], [2], [0]],
        edges=[(0, 1), (1, 2)],
        edge_attrs=[[1], [2]],
    )
    batch = batch_graphs([g], spd_clip=cfg.spd_clip, deg_clip=cfg.deg_clip, edge_attr_vocab=[3])
    coef = np.random.default_rng(seed + 1).normal(size=1)

    def f():
        return T.tsum(model_forward(batch, params, cfg) * coef)

    return f, named_parameters(params)


def cmd_gradcheck(args) -> int:
    cfg = config_from_args(args)
    if cfg.dropout_ffn or cfg.dropout_attn or cfg.dropout_embed or cfg.drop_path_rate:
        raise ConfigurationError("gradcheck needs all stochastic regularizers disabled")
    f, named = build_gradcheck_model(cfg, seed=args.seed)
    t0 = time.perf_counter()
    report = gradcheck(f, named, step=args.step, tol=args.tol, max_per_tensor=args.max_per_tensor)
    elapsed = time.perf_counter() - t0

    width = max(len(e.name) for e in report.entries)
    print(f"{'parameter group'.ljust(width)}  {'max rel err':>12}  {'checked':>7}  status")
    for e in report.entries:
        print(f"{e.name.ljust(width)}  {e.max_rel_err:12.3e}  {e.n_checked:7d}  {'ok' if e.passed else 'FAIL'}")
    print(f"overall: {'PASS' if report.passed else 'FAIL'} "
          f"(max rel err {report.max_rel_err:.3e}, tol {report.tol:g}, {elapsed:.1f}s)")
    emit_json(report.to_dict(), args.json)
    return 0 if report.passed else 1


def cmd_params(args) -> int:
    cfg = config_from_args(args)
    vocab_name, vocab = resolve_vocab(args.vocab)
    if vocab.task and cfg.task != vocab.task:
        cfg = ModelConfig(**{**cfg.to_dict(), "task": vocab.task, "num_classes": vocab.num_classes})
    count = count_params(cfg, vocab)
    reference = PARAM_REFERENCES.get((args.preset, vocab_name))
    report = {
        "preset": args.preset,
        "vocab": vocab_name,
        "count": count,
        "reference": reference,
        "relative_error": None if reference is None else abs(count - reference) / reference,
        "within_10_percent": None if reference is None else abs(count - reference) / reference <= 0.10,
    }
    print(f"parameters: {count:,} ({count / 1e6:.3f}M)")
    if reference is not None:
        print(
            f"reference {reference / 1e6:.3f}M -> relative error {report['relative_error']:.2%} "
            f"({'within' if report['within_10_percent'] else 'OUTSIDE'} +-10%)"
        )
    emit_json(report, args.json)
    return 0


def cmd_flops(args) -> int:
    cfg = config_from_args(args)
    r = estimate_flops(cfg, args.nodes)
    reference = FLOP_REFERENCES.get((args.preset, args.nodes))
    within = None
    if reference is not None:
        within = (
            abs(r.flops_one_per_mac - reference) / reference <= 0.25
            or abs(r.flops_two_per_mac - reference) / reference <= 0.25
        )
    report = {
        "preset": args.preset,
        "n_nodes": args.nodes,
        **r.to_dict(),
        "reference": reference,
        "within_25_percent": within,
    }
    print(f"forward cost at {args.nodes} nodes:")
    print(f"  MACs                 {r.macs / 1e9:.4f} G")
    print(f"  FLOPs (1 per MAC)    {r.flops_one_per_mac / 1e9:.4f} G")
    print(f"  FLOPs (2 per MAC)    {r.flops_two_per_mac / 1e9:.4f} G")
    for name, value in sorted(r.breakdown.items()):
        print(f"    {name:28s} {value / 1e9:.4f} G")
    if reference is not None:
        print(f"reference {reference / 1e9:.3f}G -> {'within' if within else 'OUTSIDE'} +-25% under at least one convention")
    emit_json(report, args.json)
    return 0


def _time_fn(fn, warmup: int, repeats: int) -> list[float]:
    for _ in range(warmup):
        fn()
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return times


def _median_iqr(times: list[float]) -> tuple[float, float]:
    qs = statistics.quantiles(times, n=4)
    return statistics.median(times), qs[2] - qs[0]


def run_bench(
    cfg: ModelConfig,
    n_nodes: int,
    repeats: int = 30,
    warmup: int = 10,
    include_dual_ffn: bool = True,
    threads: int | None = 1,
) -> dict:
    """Median wall-time per block forward (and forward+backward) at equal widths.

    BLAS pools are pinned to ``threads`` (default 1) while timing; on small
    shapes multi-threaded GEMM mostly adds scheduler noise.
    """
    if repeats < 10:
        raise ConfigurationError("bench needs repeats >= 10")
    if threads:
        from threadpoolctl import threadpool_limits

        with threadpool_limits(threads):
            return run_bench(cfg, n_nodes, repeats, warmup, include_dual_ffn, threads=None)
    rng = np.random.default_rng(0)
    t = n_nodes + 1
    mask = np.ones((1, t), dtype=bool)
    vocab = Vocab(node_attr_sizes=[4], edge_attr_sizes=[3])

    variants = [("gpa_block", cfg, block_forward)]
    if include_dual_ffn:
        dual_cfg = ModelConfig(**{**cfg.to_dict(), "baseline_dual_ffn": True})
        variants.append(("dual_ffn_block", dual_cfg, dual_ffn_block_forward))

    out = []
    for name, vcfg, fn in variants:
        params = init_model(
            ModelConfig(**{**vcfg.to_dict(), "n_layers": 1}), vocab, seed=1
        ).blocks[0]
        x_node = T.Tensor(rng.normal(size=(1, t, vcfg.d1)).astype(np.float32))
        x_edge = T.Tensor(rng.normal(size=(1, t, t, vcfg.d2)).astype(np.float32))

        def forward():
            fn(x_node, x_edge, params, mask, vcfg)

        def forward_backward():
            with T.Tape() as tape:
                node_out, edge_out = fn(x_node, x_edge, params, mask, vcfg)
                loss = T.tsum(node_out) + T.tsum(edge_out)
            tape.backward(loss)

        fwd = _time_fn(forward, warmup, repeats)
        trn = _time_fn(forward_backward, warmup, repeats)
        fwd_med, fwd_iqr = _median_iqr(fwd)
        trn_med, trn_iqr = _median_iqr(trn)
        r = estimate_flops(ModelConfig(**{**vcfg.to_dict(), "n_layers": 1}), n_nodes)
        out.append(
            {
                "name": name,
                "forward_median_s": fwd_med,
                "forward_iqr_s": fwd_iqr,
                "train_median_s": trn_med,
                "train_iqr_s": trn_iqr,
                "macs": r.breakdown["block.qkv_out_proj.macs"]
                + r.breakdown["block.attention.macs"]
                + r.breakdown["block.bias_phi.macs"]
                + r.breakdown["block.ffn.macs"]
                + r.breakdown.get("block.node_to_edge.macs", 0.0)
                + r.breakdown.get("block.edge_to_node.macs", 0.0)
                + r.breakdown.get("block.edge_ffn.macs", 0.0),
                "flops_two_per_mac": 2.0
                * (
                    r.breakdown["block.qkv_out_proj.macs"]
                    + r.breakdown["block.attention.macs"]
                    + r.breakdown["block.bias_phi.macs"]
                    + r.breakdown["block.ffn.macs"]
                    + r.breakdown.get("block.node_to_edge.macs", 0.0)
                    + r.breakdown.get("block.edge_to_node.macs", 0.0)
                    + r.breakdown.get("block.edge_ffn.macs", 0.0)
                ),
            }
        )
    return {"n_nodes": n_nodes, "repeats": repeats, "warmup": warmup, "variants": out}


def cmd_bench(args) -> int:
    cfg = config_from_args(args)
    report = run_bench(
        cfg,
        args.nodes,
        repeats=args.repeats,
        warmup=args.warmup,
        include_dual_ffn=args.include_dual_ffn,
        threads=args.threads,
    )
    report["preset"] = args.preset
    print(f"block timing at {args.nodes} nodes (d1={cfg.d1}, d2={cfg.d2}), "
          f"{args.repeats} reps after {args.warmup} warmup:")
    print(f"{'variant':16s} {'fwd median':>12} {'fwd IQR':>10} {'fwd+bwd median':>15} {'MACs':>10}")
    for v in report["variants"]:
        print(
            f"{v['name']:16s} {v['forward_median_s'] * 1e3:9.2f} ms {v['forward_iqr_s'] * 1e3:7.2f} ms"
            f" {v['train_median_s'] * 1e3:12.2f} ms {v['macs'] / 1e6:8.1f} M"
        )
    if len(report["variants"]) == 2:
        gpa, dual = report["variants"]
        faster = gpa["forward_median_s"] <= dual["forward_median_s"]
        print(f"gpa_block {'<=' if faster else '>'} dual_ffn_block on forward median")
    emit_json(report, args.json)
    return 0


# --- argument wiring -----------------------------------------------------------


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--preset", choices=sorted(PRESETS), default=None)
    p.add_argument("--layers", type=int, default=None, dest="layers")
    p.add_argument("--d1", type=int, default=None)
    p.add_argument("--d2", type=int, default=None)
    p.add_argument("--heads", type=int, default=None)
    p.add_argument("--d-head", type=int, default=None, dest="d_head")
    p.add_argument("--task", choices=("graph-regression", "graph-classification", "node-classification", "edge-classification"), default=None)
    p.add_argument("--num-classes", type=int, default=None, dest="num_classes")
    p.add_argument("--spd-clip", type=int, default=None, dest="spd_clip")
    p.add_argument("--deg-clip", type=int, default=None, dest="deg_clip")
    p.add_argument("--dropout-ffn", type=float, default=None, dest="dropout_ffn")
    p.add_argument("--dropout-embed", type=float, default=None, dest="dropout_embed")
    p.add_argument("--dropout-attn", type=float, default=None, dest="dropout_attn")
    p.add_argument("--drop-path-rate", type=float, default=None, dest="drop_path_rate")
    p.add_argument("--toggle-n2e", action=argparse.BooleanOptionalAction, default=None, dest="toggle_n2e")
    p.add_argument("--toggle-e2n", action=argparse.BooleanOptionalAction, default=None, dest="toggle_e2n")
    p.add_argument("--dual-ffn", action="store_true", dest="dual_ffn")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gptrans", description=__doc__)
    parser.add_argument("--version", action="version", version=f"gptrans {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--task", choices=SYNTH_TASKS, required=True)
    p.add_argument("--n-train", type=int, default=1000)
    p.add_argument("--n-eval", type=int, default=200)
    p.add_argument("--size-min", type=int, default=8)
    p.add_argument("--size-max", type=int, default=16)
    p.add_argument("--clusters", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("scan", help="derive vocab.json from a JSONL dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--out", default="vocab.json")
    p.add_argument("--task", default=None)
    p.add_argument("--num-classes", type=int, default=None, dest="num_classes")
    p.set_defaults(fn=cmd_scan)

    p = sub.add_parser("train", help="train on a dataset directory")
    _add_model_flags(p)
    p.add_argument("--data", required=True, help="dataset dir with train.jsonl/eval.jsonl/vocab.json")
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--batch-size", type=int, default=64, dest="batch_size")
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--lr-min", type=float, default=0.0, dest="lr_min")
    p.add_argument("--warmup-epochs", type=float, default=1.0, dest="warmup_epochs")
    p.add_argument("--weight-decay", type=float, default=0.05, dest="weight_decay")
    p.add_argument("--ema-decay", type=float, default=0.9999, dest="ema_decay")
    p.add_argument("--clip-norm", type=float, default=0.0, dest="clip_norm")
    p.add_argument("--eval-every", type=int, default=1, dest="eval_every")
    p.add_argument("--total-steps", type=int, default=None, dest="total_steps")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--run", required=True, help="training run directory")
    p.add_argument("--data", required=True, help="JSONL file to evaluate")
    p.add_argument("--vocab", default=None)
    p.add_argument("--checkpoint", default=None, help="checkpoint file name inside the run dir")
    p.add_argument("--use-ema", action="store_true", dest="use_ema")
    p.add_argument("--batch-size", type=int, default=64, dest="batch_size")
    p.add_argument("--json", default=None)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference check of the backward pass")
    _add_model_flags(p)
    p.add_argument("--step", type=float, default=1e-4)
    p.add_argument("--tol", type=float, default=1e-3)
    p.add_argument("--max-per-tensor", type=int, default=64, dest="max_per_tensor")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", default=None)
    p.set_defaults(fn=cmd_gradcheck)

    p = sub.add_parser("params", help="exact parameter count for a config + vocab")
    _add_model_flags(p)
    p.add_argument("--vocab", default="zinc-like")
    p.add_argument("--json", default=None)
    p.set_defaults(fn=cmd_params)

    p = sub.add_parser("flops", help="analytic forward cost")
    _add_model_flags(p)
    p.add_argument("--nodes", type=int, default=20)
    p.add_argument("--json", default=None)
    p.set_defaults(fn=cmd_flops)

    p = sub.add_parser("bench", help="micro-benchmark block variants")
    _add_model_flags(p)
    p.add_argument("--nodes", type=int, default=128)
    p.add_argument("--repeats", type=int, default=30)
    p.add_argument("--warmup", type=int, default=10)
    p.add_argument("--threads", type=int, default=1, help="BLAS threads while timing (0 = leave unlimited)")
    p.add_argument(
        "--include-dual-ffn",
        action=argparse.BooleanOptionalAction,
        default=True,
        dest="include_dual_ffn",
    )
    p.add_argument("--json", default=None)
    p.set_defaults(fn=cmd_bench)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except GPTransError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: missing file {exc.filename}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
