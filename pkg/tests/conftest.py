"""Session fixtures for the acceptance suite.

The heavyweight artifacts (the 2000-image synthetic dataset and the seeded
reference training run) are built once per session and shared by every
criterion that needs them.
"""
from types import SimpleNamespace

import pytest

from foodvision.data import (
    SplitSpec,
    generate_synthetic_dataset,
    load_split_arrays,
    split_dataset,
)
from foodvision.models import ModelConfig, build_model
from foodvision.training import TrainConfig, train

REFERENCE_SEED = 7


@pytest.fixture(scope="session")
def acceptance_dir(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance")


@pytest.fixture(scope="session")
def synthetic20(acceptance_dir):
    """The full 20-class, 2000-image synthetic dataset with its 70/30 split."""
    manifest = generate_synthetic_dataset(
        n_classes=20, per_class=100, image_size=64, seed=REFERENCE_SEED,
        out_dir=acceptance_dir / "synthetic20")
    train_idx, test_idx = split_dataset(
        manifest, SplitSpec(train_fraction=0.7, seed=REFERENCE_SEED))
    x_train, y_train = load_split_arrays(manifest, train_idx)
    x_test, y_test = load_split_arrays(manifest, test_idx)
    return SimpleNamespace(
        manifest=manifest,
        root=acceptance_dir / "synthetic20",
        train=(x_train, y_train),
        test=(x_test, y_test),
    )


@pytest.fixture(scope="session")
def reference_run(synthetic20):
    """The pinned 12-cycle residual n=1 training run on synthetic-20."""
    config = ModelConfig(family="residual", blocks_per_stage=1, num_classes=20)
    model = build_model(config, seed=REFERENCE_SEED)
    train_cfg = TrainConfig(cycles=12, batch_size=32, base_lr=0.1, seed=REFERENCE_SEED)
    metrics = train(model, synthetic20.train, synthetic20.test, train_cfg)
    return SimpleNamespace(model=model, metrics=metrics, model_config=config,
                           train_config=train_cfg)
