"""Desk-scale food recognition: residual CNN, training suite, serving stack."""

__version__ = "0.1.0"

from .autograd import Tape, Tensor, backward, finite_difference_check, matmul
from .data import (
    DatasetManifest,
    SplitSpec,
    decode_and_preprocess,
    generate_synthetic_dataset,
    kfold,
    split_dataset,
)
from .models import (
    Model,
    ModelConfig,
    build_model,
    gradient_flow_probe,
    load_checkpoint,
    model_size_bytes,
    peak_activation_bytes,
    save_checkpoint,
)
from .nutrition import (
    FoodRecord,
    FoodStore,
    NutritionFacts,
    health_score,
    load_store,
    nutrition_for_portion,
)
from .training import RunMetrics, TrainConfig, evaluate, lr_find, run_stats, train
from .benchmark import (
    ComparisonReport,
    LatencyReport,
    emit_comparison,
    measure_latency,
    paper_baselines,
    time_to_accuracy,
)
from .service import ClassificationResult, ServiceConfig, create_app

__all__ = [
    "Tape", "Tensor", "backward", "finite_difference_check", "matmul",
    "DatasetManifest", "SplitSpec", "decode_and_preprocess",
    "generate_synthetic_dataset", "kfold", "split_dataset",
    "Model", "ModelConfig", "build_model", "gradient_flow_probe",
    "load_checkpoint", "model_size_bytes", "peak_activation_bytes", "save_checkpoint",
    "FoodRecord", "FoodStore", "NutritionFacts", "health_score",
    "load_store", "nutrition_for_portion",
    "RunMetrics", "TrainConfig", "evaluate", "lr_find", "run_stats", "train",
    "ComparisonReport", "LatencyReport", "emit_comparison", "measure_latency",
    "paper_baselines", "time_to_accuracy",
    "ClassificationResult", "ServiceConfig", "create_app",
]
