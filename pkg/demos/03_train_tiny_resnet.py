"""Train the smallest residual preset on a quick synthetic task.

Run:  python demos/03_train_tiny_resnet.py   (about a minute on a laptop CPU)
"""
import numpy as np

from foodvision.data import SplitSpec, generate_synthetic_dataset, load_split_arrays, split_dataset
from foodvision.models import ModelConfig, build_model, model_size_bytes, save_checkpoint
from foodvision.training import TrainConfig, evaluate, train

manifest = generate_synthetic_dataset(
    n_classes=6, per_class=20, image_size=48, seed=3, out_dir="demo_out/train_ds")
train_idx, test_idx = split_dataset(manifest, SplitSpec(train_fraction=0.7, seed=3))
train_data = load_split_arrays(manifest, train_idx, size=48)
test_data = load_split_arrays(manifest, test_idx, size=48)

config = ModelConfig(family="residual", blocks_per_stage=1, num_classes=6,
                     input_size=(3, 48, 48))
model = build_model(config, seed=3)
print(f"model {model.name}: {model_size_bytes(model)} bytes of parameters")

cfg = TrainConfig(cycles=6, batch_size=16, base_lr=0.1, seed=3)
metrics = train(model, train_data, test_data, cfg,
                on_cycle_end=lambda c: print(
                    f"  cycle {c.cycle}: train loss {c.train_loss:.3f}, "
                    f"test error {c.test_error_rate:.3f}, "
                    f"top-5 {c.top5_accuracy:.3f}"))

result = evaluate(model, *test_data)
print(f"final: top-1 {result.top1_accuracy:.3f}, top-5 {result.top5_accuracy:.3f}")
print("confusion matrix (rows = actual):")
print(result.confusion)

save_checkpoint(model, "demo_out/tiny_resnet.ckpt")
metrics.save("demo_out/tiny_resnet_metrics.json")
print("wrote demo_out/tiny_resnet.ckpt and demo_out/tiny_resnet_metrics.json")
