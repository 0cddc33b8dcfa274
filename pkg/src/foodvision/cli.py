"""Command-line entry point: one command, one subcommand per pipeline stage.

Every stochastic component receives an explicit ``--seed``; given identical
inputs and seeds, every subcommand writes byte-identical outputs except for
wall-clock values, which live under clearly marked ``timing`` keys so
determinism checks can exclude exactly one subtree.

Paths are resolved against ``--workdir`` (or $FOODVISION_WORKDIR, default:
current directory).  Exit codes: 0 success, 1 runtime failure (one-line
``error: ...`` on stderr), 2 usage errors.
"""
from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import FoodvisionError


def _workdir(args) -> Path:
    return Path(args.workdir or os.environ.get("FOODVISION_WORKDIR") or ".")


def _resolve(args, value) -> Path:
    path = Path(value)
    return path if path.is_absolute() else _workdir(args) / path


def _load_split(args, manifest_path, size: int):
    from .data import DatasetManifest, SplitSpec, load_split_arrays, split_dataset

    manifest = DatasetManifest.load(manifest_path)
    train_idx, test_idx = split_dataset(
        manifest, SplitSpec(train_fraction=args.train_fraction, seed=args.seed))
    train = load_split_arrays(manifest, train_idx, size=size)
    test = load_split_arrays(manifest, test_idx, size=size)
    return manifest, train, test


def _train_config(args):
    from .training import TrainConfig

    return TrainConfig(
        cycles=args.cycles,
        batch_size=args.batch_size,
        base_lr=args.lr,
        momentum=args.momentum,
        weight_decay=args.weight_decay,
        scheduler=args.scheduler,
        seed=args.seed,
    )


def _add_train_flags(p, cycles_default: int = 12):
    p.add_argument("--cycles", type=int, default=cycles_default)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=0.1, help="base learning rate")
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--weight-decay", type=float, default=5e-4)
    p.add_argument("--scheduler", choices=("constant", "step", "one_cycle"), default="step")
    p.add_argument("--train-fraction", type=float, default=0.7)


def cmd_gen_data(args) -> int:
    from .data import generate_synthetic_dataset

    out = _resolve(args, args.out)
    manifest = generate_synthetic_dataset(
        n_classes=args.classes, per_class=args.per_class,
        image_size=args.size, seed=args.seed, out_dir=out)
    print(f"wrote {len(manifest.samples)} images for {len(manifest.class_names)} "
          f"classes under {out}")
    return 0


def cmd_train(args) -> int:
    from .models import ModelConfig, build_model, save_checkpoint
    from .training import train

    manifest_path = _resolve(args, args.manifest)
    manifest, train_data, test_data = _load_split(args, manifest_path, args.size)
    cfg = ModelConfig(family=args.family, blocks_per_stage=args.n,
                      num_classes=len(manifest.class_names),
                      input_size=(3, args.size, args.size))
    model = build_model(cfg, seed=args.seed)
    metrics = train(model, train_data, test_data, _train_config(args))
    checkpoint = _resolve(args, args.out_checkpoint)
    metrics_path = _resolve(args, args.out_metrics)
    checkpoint.parent.mkdir(parents=True, exist_ok=True)
    metrics_path.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(model, checkpoint)
    metrics.save(metrics_path)
    last = metrics.cycle_records[-1]
    print(f"trained {cfg.name}: top-1 {last.top1_accuracy:.4f}, "
          f"error {last.test_error_rate:.4f}; checkpoint -> {checkpoint}, "
          f"metrics -> {metrics_path}")
    return 0


def cmd_lr_find(args) -> int:
    from .models import ModelConfig, build_model
    from .training import lr_find

    manifest_path = _resolve(args, args.manifest)
    manifest, train_data, _ = _load_split(args, manifest_path, args.size)
    cfg = ModelConfig(family=args.family, blocks_per_stage=args.n,
                      num_classes=len(manifest.class_names),
                      input_size=(3, args.size, args.size))
    model = build_model(cfg, seed=args.seed)
    result = lr_find(model, train_data, args.lr_min, args.lr_max, args.steps,
                     batch_size=args.batch_size, seed=args.seed)
    out = _resolve(args, args.out_csv)
    out.parent.mkdir(parents=True, exist_ok=True)
    lines = ["lr,smoothed_loss"]
    lines.extend(f"{lr!r},{loss!r}" for lr, loss in result.curve)
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"lr sweep: {len(result.curve)} points, suggested lr {result.suggested_lr:g}; "
          f"curve -> {out}")
    return 0


def cmd_eval(args) -> int:
    from .ioutil import write_json
    from .models import load_checkpoint
    from .training import evaluate

    model = load_checkpoint(_resolve(args, args.checkpoint))
    manifest_path = _resolve(args, args.manifest)
    size = model.config.input_size[1]
    manifest, _, test_data = _load_split(args, manifest_path, size)
    result = evaluate(model, *test_data)
    payload = {
        "model": model.name,
        "error_rate": result.error_rate,
        "top1_accuracy": result.top1_accuracy,
        "top5_accuracy": result.top5_accuracy,
        "confusion": result.confusion.tolist(),
    }
    if args.out:
        out = _resolve(args, args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        write_json(payload, out)
        print(f"evaluation -> {out}")
    print(f"{model.name}: error {result.error_rate:.4f}, "
          f"top-1 {result.top1_accuracy:.4f}, top-5 {result.top5_accuracy:.4f}")
    return 0


def cmd_bench(args) -> int:
    from .benchmark import measure_latency
    from .ioutil import write_json
    from .models import load_checkpoint, model_size_bytes, peak_activation_bytes

    model = load_checkpoint(_resolve(args, args.checkpoint))
    c, h, w = model.config.input_size
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(args.seed)))
    frame = rng.standard_normal((1, c, h, w)).astype(np.float32)
    latency = measure_latency(model, frame, n_warmup=args.n_warmup, n_runs=args.n_runs)
    payload = {
        "model": model.name,
        "model_size_bytes": model_size_bytes(model),
        "peak_activation_bytes": peak_activation_bytes(
            model, (args.batch_size, c, h, w)),
        "activation_batch_size": args.batch_size,
        "timing": {"latency": latency.to_dict()},
    }
    if args.out:
        out = _resolve(args, args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        write_json(payload, out)
        print(f"bench -> {out}")
    print(f"{model.name}: mean latency {latency.mean_ns / 1e6:.3f} ms, "
          f"size {payload['model_size_bytes']} B, "
          f"peak activations {payload['peak_activation_bytes']} B")
    return 0


def cmd_compare(args) -> int:
    from .benchmark import emit_comparison, run_comparison

    families = [f.strip() for f in args.families.split(",") if f.strip()]
    manifest_path = _resolve(args, args.manifest)
    manifest, train_data, test_data = _load_split(args, manifest_path, args.size)
    report = run_comparison(
        families, (train_data, test_data),
        dataset_name=f"synthetic-{len(manifest.class_names)}",
        train_cfg=_train_config(args), model_seed=args.seed,
        blocks_per_stage=args.n, num_classes=len(manifest.class_names),
        input_size=(3, args.size, args.size),
        tta_threshold=args.tta_threshold if args.tta_threshold >= 0 else None)
    out = _resolve(args, args.out_dir)
    written = emit_comparison(report, out)
    print(f"comparison over {', '.join(families)} -> {len(written)} files in {out}")
    return 0


def cmd_serve(args) -> int:
    from .nutrition import default_store_path
    from .service import ServiceConfig, serve

    store = args.store or os.environ.get("FOODVISION_STORE") or str(default_store_path())
    config = ServiceConfig(threshold=args.threshold, stability_k=args.stability_k,
                           default_interval_ms=args.interval_ms)
    serve(_resolve(args, args.checkpoint), _resolve(args, store),
          host=args.host, port=args.port, config=config,
          manifest_path=_resolve(args, args.manifest) if args.manifest else None)
    return 0


def cmd_report(args) -> int:
    from .training import RunMetrics

    metrics = RunMetrics.load(_resolve(args, args.metrics))
    out_dir = _resolve(args, args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    batch_csv = out_dir / "batch_losses.csv"
    lines = ["batch,loss"]
    lines.extend(f"{i},{loss!r}" for i, loss in metrics.batch_losses)
    batch_csv.write_text("\n".join(lines) + "\n", encoding="utf-8")
    cycles_csv = out_dir / "cycles.csv"
    lines = ["cycle,train_loss,test_error_rate,top1_accuracy,top5_accuracy"]
    lines.extend(
        f"{c.cycle},{c.train_loss!r},{c.test_error_rate!r},"
        f"{c.top1_accuracy!r},{c.top5_accuracy!r}"
        for c in metrics.cycle_records)
    cycles_csv.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"report CSVs -> {batch_csv}, {cycles_csv}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="foodvision",
        description="Train, benchmark, and serve the desk-scale food classifier.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=7)
        p.add_argument("--workdir", default=None,
                       help="base for relative paths (default: $FOODVISION_WORKDIR or .)")

    p = sub.add_parser("gen-data", help="render the synthetic dataset + manifest")
    common(p)
    p.add_argument("--classes", type=int, default=20)
    p.add_argument("--per-class", type=int, default=100)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--out", default="dataset")
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("train", help="train one preset and write checkpoint + metrics")
    common(p)
    p.add_argument("--manifest", default="dataset/manifest.json")
    p.add_argument("--family", choices=("residual", "plain", "dense_concat"),
                   default="residual")
    p.add_argument("--n", type=int, default=1, help="blocks per stage")
    p.add_argument("--size", type=int, default=64)
    _add_train_flags(p)
    p.add_argument("--out-checkpoint", default="runs/model.ckpt")
    p.add_argument("--out-metrics", default="runs/metrics.json")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("lr-find", help="learning-rate range sweep to a CSV curve")
    common(p)
    p.add_argument("--manifest", default="dataset/manifest.json")
    p.add_argument("--family", choices=("residual", "plain", "dense_concat"),
                   default="residual")
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--train-fraction", type=float, default=0.7)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr-min", type=float, default=1e-5)
    p.add_argument("--lr-max", type=float, default=1.0)
    p.add_argument("--steps", type=int, default=60)
    p.add_argument("--out-csv", default="runs/lr_curve.csv")
    p.set_defaults(fn=cmd_lr_find)

    p = sub.add_parser("eval", help="evaluate a checkpoint on the test split")
    common(p)
    p.add_argument("--checkpoint", default="runs/model.ckpt")
    p.add_argument("--manifest", default="dataset/manifest.json")
    p.add_argument("--train-fraction", type=float, default=0.7)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("bench", help="latency, size, and activation memory of a checkpoint")
    common(p)
    p.add_argument("--checkpoint", default="runs/model.ckpt")
    p.add_argument("--n-warmup", type=int, default=10)
    p.add_argument("--n-runs", type=int, default=100)
    p.add_argument("--batch-size", type=int, default=32,
                   help="batch size for activation-memory accounting")
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("compare", help="train + measure several families, emit the report")
    common(p)
    p.add_argument("--manifest", default="dataset/manifest.json")
    p.add_argument("--families", default="residual,plain,dense_concat")
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--size", type=int, default=64)
    _add_train_flags(p)
    p.add_argument("--tta-threshold", type=float, default=0.85,
                   help="top-5 threshold for time-to-accuracy; negative disables")
    p.add_argument("--out-dir", default="runs/comparison")
    p.set_defaults(fn=cmd_compare)

    p = sub.add_parser("serve", help="run the recognition HTTP service")
    common(p)
    p.add_argument("--checkpoint", default="runs/model.ckpt")
    p.add_argument("--store", default=None,
                   help="nutrition store JSON (default: $FOODVISION_STORE or bundled)")
    p.add_argument("--manifest", default=None,
                   help="manifest providing class names (default: store order)")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--threshold", type=float, default=0.6)
    p.add_argument("--stability-k", type=int, default=2)
    p.add_argument("--interval-ms", type=int, default=500)
    p.set_defaults(fn=cmd_serve)

    p = sub.add_parser("report", help="render CSV series from a stored metrics file")
    common(p)
    p.add_argument("--metrics", default="runs/metrics.json")
    p.add_argument("--out-dir", default="runs/report")
    p.set_defaults(fn=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except FoodvisionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
