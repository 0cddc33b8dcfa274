"""Compare the three families: accuracy, latency, size, activation memory.

Run:  python demos/05_model_comparison.py   (a few minutes on a laptop CPU)
Writes the comparison report files under ./demo_out/comparison/.
"""
from foodvision.benchmark import emit_comparison, run_comparison
from foodvision.data import SplitSpec, generate_synthetic_dataset, load_split_arrays, split_dataset
from foodvision.training import TrainConfig

manifest = generate_synthetic_dataset(
    n_classes=6, per_class=20, image_size=48, seed=9, out_dir="demo_out/cmp_ds")
train_idx, test_idx = split_dataset(manifest, SplitSpec(train_fraction=0.7, seed=9))
data = (load_split_arrays(manifest, train_idx, size=48),
        load_split_arrays(manifest, test_idx, size=48))

report = run_comparison(
    families=("residual", "plain", "dense_concat"),
    data=data,
    dataset_name="synthetic-6",
    train_cfg=TrainConfig(cycles=4, batch_size=16, base_lr=0.1, seed=9),
    model_seed=9,
    blocks_per_stage=1,
    num_classes=6,
    input_size=(3, 48, 48),
    latency_runs=20,
    tta_threshold=0.85,
)

print(f"{'model':16s} {'top1':>6s} {'mean err':>9s} {'lat ms':>7s} "
      f"{'size B':>8s} {'act B':>10s}")
for r in report.records:
    print(f"{r['name']:16s} {r['final_top1_accuracy']:6.3f} "
          f"{r['error_stats']['mean_error']:9.3f} "
          f"{r['latency']['mean_ns'] / 1e6:7.2f} "
          f"{r['model_size_bytes']:8d} {r['peak_activation_bytes']:10d}")

files = emit_comparison(report, "demo_out/comparison")
print("\nwrote:")
for path in files:
    print(f"  {path}")
print("\nthe report juxtaposes the published full-scale baselines in a "
      "quarantined section; they are not comparable to these desk-scale runs.")
