"""Latency, size, time-to-accuracy, and memory comparison across presets.

Measured numbers from the tiny desk-scale presets are never compared
numerically against the published full-scale baselines; the baselines ride
along in a clearly quarantined section of the report for juxtaposition only.
All time fields carry explicit units in their names (ns, ms, or seconds).
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .autograd import Tensor
from .errors import ConfigError
from .ioutil import write_json
from .models import (
    ModelConfig,
    build_model,
    model_size_bytes,
    peak_activation_bytes,
)
from .training import RunMetrics, TrainConfig, run_stats, train

REPORT_VERSION = 1

TABLE_COLUMNS = ("model", "dataset", "std_error", "lowest_error", "mean_error")

# Published full-scale reference rows (error statistics over 12 training
# cycles on the original 20-class food photo dataset). Stored verbatim,
# including the original model-name spellings; used only for report
# juxtaposition, never as expectations for measured runs.
PAPER_BASELINES = (
    {"sno": 1, "model": "Resnet50", "dataset": "Food-20",
     "std_error": 0.052703, "lowest_error": 0.116923, "mean_error": 0.148718},
    {"sno": 2, "model": "Resnet152", "dataset": "Food-20",
     "std_error": 0.049478, "lowest_error": 0.098462, "mean_error": 0.130769},
    {"sno": 3, "model": "Vgg16", "dataset": "Food-20",
     "std_error": 0.163696, "lowest_error": 0.120000, "mean_error": 0.197948},
    {"sno": 4, "model": "Vgg19", "dataset": "Food-20",
     "std_error": 0.159544, "lowest_error": 0.110769, "mean_error": 0.193333},
    {"sno": 5, "model": "Squeezeenet", "dataset": "Food-20",
     "std_error": 0.125697, "lowest_error": 0.166154, "mean_error": 0.239230},
    {"sno": 6, "model": "Alexnet", "dataset": "Food-20",
     "std_error": 0.151687, "lowest_error": 0.206154, "mean_error": 0.292307},
    {"sno": 7, "model": "Densenet", "dataset": "Food-20",
     "std_error": 0.115322, "lowest_error": 0.089231, "mean_error": 0.161794},
)


def paper_baselines() -> list[dict]:
    """The seven published error-statistics rows, verbatim."""
    return [dict(row) for row in PAPER_BASELINES]


# ---------------------------------------------------------------------------
# Latency
# ---------------------------------------------------------------------------

@dataclass
class LatencyReport:
    model_name: str
    n_warmup: int
    n_runs: int
    per_run_ns: list[int]
    execution_profile: str = "cpu-single-thread"

    def __post_init__(self):
        if self.n_runs < 2 or len(self.per_run_ns) != self.n_runs:
            raise ConfigError(f"latency report needs >= 2 recorded runs, "
                              f"got {len(self.per_run_ns)}")
        if any(t <= 0 for t in self.per_run_ns):
            raise ConfigError("latency samples must be positive")

    @property
    def mean_ns(self) -> float:
        return float(np.mean(self.per_run_ns))

    @property
    def median_ns(self) -> float:
        return float(np.median(self.per_run_ns))

    @property
    def p95_ns(self) -> float:
        return float(np.percentile(self.per_run_ns, 95))

    @property
    def coefficient_of_variation(self) -> float:
        return float(np.std(self.per_run_ns, ddof=1) / self.mean_ns)

    @property
    def timer_resolution_ns(self) -> float:
        return time.get_clock_info("perf_counter").resolution * 1e9

    @property
    def resolution_warning(self) -> bool:
        # a timer coarser than 1% of the median run cannot resolve the tail
        return self.timer_resolution_ns > 0.01 * self.median_ns

    def to_dict(self) -> dict:
        return {
            "model": self.model_name,
            "execution_profile": self.execution_profile,
            "n_warmup": self.n_warmup,
            "n_runs": self.n_runs,
            "mean_ns": self.mean_ns,
            "median_ns": self.median_ns,
            "p95_ns": self.p95_ns,
            "coefficient_of_variation": self.coefficient_of_variation,
            "timer_resolution_ns": self.timer_resolution_ns,
            "resolution_warning": self.resolution_warning,
            "per_run_ns": list(self.per_run_ns),
        }


def measure_latency(model, frame, n_warmup: int = 10, n_runs: int = 100) -> LatencyReport:
    """Time n_runs single-image eval-mode forwards after n_warmup unrecorded ones.

    The same frame is supplied every time; timing uses the monotonic
    high-resolution counter. The model's parameters are read-only throughout.
    The process should be otherwise idle: never run measurements concurrently
    with training in the same process.
    """
    if n_warmup < 1:
        raise ConfigError(f"n_warmup must be >= 1, got {n_warmup}")
    if n_runs < 10:
        raise ConfigError(f"n_runs must be >= 10, got {n_runs}")
    if getattr(model, "training", False):
        raise ConfigError("measure_latency requires the model in eval mode")
    data = frame.data if isinstance(frame, Tensor) else np.asarray(frame, dtype=np.float32)
    if data.ndim == 3:
        data = data[None]
    if data.shape[0] != 1:
        raise ConfigError(f"latency measurement takes one frame, got batch {data.shape[0]}")
    tensor = Tensor(data)

    for _ in range(n_warmup):
        model.forward(tensor)
    samples = []
    for _ in range(n_runs):
        start = time.perf_counter_ns()
        model.forward(tensor)
        samples.append(time.perf_counter_ns() - start)
    return LatencyReport(model_name=getattr(model, "name", model.__class__.__name__),
                         n_warmup=n_warmup, n_runs=n_runs, per_run_ns=samples)


# ---------------------------------------------------------------------------
# Time to accuracy
# ---------------------------------------------------------------------------

@dataclass
class TimeToAccuracy:
    threshold: float
    metric: str
    reached: bool
    cycles: Optional[int]
    seconds: Optional[float]
    max_cycles: int

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "metric": self.metric,
            "reached": self.reached,
            "cycles": self.cycles,
            "seconds": self.seconds,
            "max_cycles": self.max_cycles,
        }


def time_to_accuracy(model_cfg: ModelConfig, data, threshold: float,
                     metric: str = "top5", max_cycles: int = 12,
                     train_cfg: Optional[TrainConfig] = None,
                     seed: int = 0) -> TimeToAccuracy:
    """Train from scratch until validation accuracy first reaches threshold.

    Returns the first cycle whose accuracy meets the threshold and the
    cumulative wall seconds up to it; not reaching it within max_cycles is a
    valid, reportable outcome.
    """
    if not (0.0 <= threshold < 1.0):
        raise ConfigError(f"threshold must be in [0, 1), got {threshold}")
    if metric not in ("top1", "top5"):
        raise ConfigError(f"metric must be top1 or top5, got {metric!r}")
    if max_cycles < 1:
        raise ConfigError(f"max_cycles must be >= 1, got {max_cycles}")
    train_data, val_data = data
    cfg = train_cfg or TrainConfig()
    cfg = TrainConfig(cycles=max_cycles, batch_size=cfg.batch_size, base_lr=cfg.base_lr,
                      momentum=cfg.momentum, weight_decay=cfg.weight_decay,
                      scheduler=cfg.scheduler, seed=cfg.seed)
    model = build_model(model_cfg, seed=seed)

    hit = {}

    def stop_when(record):
        acc = record.top5_accuracy if metric == "top5" else record.top1_accuracy
        if acc >= threshold and "cycle" not in hit:
            hit["cycle"] = record.cycle
            return True
        return False

    start = time.perf_counter()
    train(model, train_data, val_data, cfg, on_cycle_end=stop_when)
    elapsed = time.perf_counter() - start
    if "cycle" in hit:
        return TimeToAccuracy(threshold=threshold, metric=metric, reached=True,
                              cycles=hit["cycle"], seconds=elapsed, max_cycles=max_cycles)
    return TimeToAccuracy(threshold=threshold, metric=metric, reached=False,
                          cycles=None, seconds=None, max_cycles=max_cycles)


# ---------------------------------------------------------------------------
# Comparison report
# ---------------------------------------------------------------------------

@dataclass
class ComparisonReport:
    dataset_name: str
    records: list[dict] = field(default_factory=list)
    baselines: list[dict] = field(default_factory=lambda: paper_baselines())

    def to_dict(self) -> dict:
        return {
            "version": REPORT_VERSION,
            "dataset": self.dataset_name,
            "units": {
                "latency": "nanoseconds (ns fields), derived ms in bubble chart",
                "time_to_threshold": "seconds",
                "sizes": "bytes",
                "std_error": "sample standard deviation (n-1) over cycle error rates",
            },
            "records": self.records,
            "paper_baselines": {
                "note": ("published full-scale reference rows; juxtaposition only, "
                         "not comparable to desk-scale measurements"),
                "rows": self.baselines,
            },
        }


def model_comparison_record(name: str, family: str, depth: int, metrics: RunMetrics,
                            latency: LatencyReport, size_bytes: int,
                            activation_bytes: int,
                            tta: Optional[TimeToAccuracy] = None) -> dict:
    stats = run_stats(metrics.error_series())
    return {
        "name": name,
        "family": family,
        "depth": depth,
        "error_stats": {
            "std_error": stats.std_error,
            "lowest_error": stats.lowest_error,
            "mean_error": stats.mean_error,
        },
        "final_top1_accuracy": metrics.cycle_records[-1].top1_accuracy,
        "top5_curve": [c.top5_accuracy for c in metrics.cycle_records],
        "error_curve": [c.test_error_rate for c in metrics.cycle_records],
        "loss_curve": [c.train_loss for c in metrics.cycle_records],
        "time_to_threshold": tta.to_dict() if tta else None,
        "latency": latency.to_dict(),
        "model_size_bytes": size_bytes,
        "peak_activation_bytes": activation_bytes,
    }


def _csv_cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path: Path, header: tuple, rows: list[tuple]) -> None:
    lines = [",".join(header)]
    lines.extend(",".join(_csv_cell(v) for v in row) for row in rows)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def emit_comparison(report: ComparisonReport, out_dir) -> list[Path]:
    """Write the comparison artifacts; bit-stable for identical input.

    Files: table.csv (error statistics in the published column order),
    <model>_cycles.csv per record (error/loss per cycle), bubble.csv
    (accuracy / latency / size triple), report.json, README.txt.
    """
    if not report.records:
        raise ConfigError("comparison report needs at least one model record")
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create report directory {out_dir}: {exc}") from exc

    written = []

    table_rows = [
        (r["name"], report.dataset_name,
         r["error_stats"]["std_error"], r["error_stats"]["lowest_error"],
         r["error_stats"]["mean_error"])
        for r in report.records
    ]
    table = out_dir / "table.csv"
    _write_csv(table, TABLE_COLUMNS, table_rows)
    written.append(table)

    for r in report.records:
        rows = [
            (i + 1, err, loss, top5)
            for i, (err, loss, top5) in enumerate(
                zip(r["error_curve"], r["loss_curve"], r["top5_curve"]))
        ]
        path = out_dir / f"{r['name']}_cycles.csv"
        _write_csv(path, ("cycle", "test_error_rate", "train_loss", "top5_accuracy"), rows)
        written.append(path)

    bubble_rows = [
        (r["name"], r["final_top1_accuracy"],
         r["latency"]["mean_ns"] / 1e6, r["model_size_bytes"])
        for r in report.records
    ]
    bubble = out_dir / "bubble.csv"
    _write_csv(bubble, ("model", "top1_accuracy", "mean_latency_ms", "model_size_bytes"), bubble_rows)
    written.append(bubble)

    report_path = out_dir / "report.json"
    write_json(report.to_dict(), report_path)
    written.append(report_path)

    readme = out_dir / "README.txt"
    readme.write_text(
        "Comparison report layout\n"
        "------------------------\n"
        "table.csv          error statistics per measured model; columns\n"
        "                   model,dataset,std_error,lowest_error,mean_error\n"
        "<model>_cycles.csv per-cycle test error, train loss, top-5 accuracy\n"
        "bubble.csv         accuracy / mean latency (ms) / size (bytes) triple\n"
        "report.json        full report; measured records plus a quarantined\n"
        "                   paper_baselines section (published full-scale rows,\n"
        "                   juxtaposition only)\n"
        "Latency fields are nanoseconds unless suffixed _ms; time-to-threshold\n"
        "is wall seconds; std_error is the sample (n-1) standard deviation over\n"
        "per-cycle test error rates.\n",
        encoding="utf-8")
    written.append(readme)
    return written


def run_comparison(families, data, dataset_name: str, train_cfg: TrainConfig,
                   model_seed: int = 0, blocks_per_stage: int = 1,
                   num_classes: int = 20, input_size=(3, 64, 64),
                   latency_runs: int = 30, tta_threshold: Optional[float] = 0.85,
                   latency_batch_shape=None) -> ComparisonReport:
    """Train and measure each family, assembling the full comparison report."""
    report = ComparisonReport(dataset_name=dataset_name)
    (x_train, y_train), (x_test, y_test) = data
    for family in families:
        cfg = ModelConfig(family=family, blocks_per_stage=blocks_per_stage,
                          num_classes=num_classes, input_size=tuple(input_size))
        model = build_model(cfg, seed=model_seed)
        metrics = train(model, (x_train, y_train), (x_test, y_test), train_cfg)
        frame = x_test[:1]
        latency = measure_latency(model, frame, n_warmup=5, n_runs=latency_runs)
        tta = None
        if tta_threshold is not None:
            tta = time_to_accuracy(cfg, ((x_train, y_train), (x_test, y_test)),
                                   tta_threshold, metric="top5",
                                   max_cycles=train_cfg.cycles, train_cfg=train_cfg,
                                   seed=model_seed)
        batch_shape = latency_batch_shape or (train_cfg.batch_size, *input_size)
        report.records.append(model_comparison_record(
            name=cfg.name, family=family, depth=cfg.backbone_weighted_layers,
            metrics=metrics, latency=latency,
            size_bytes=model_size_bytes(model),
            activation_bytes=peak_activation_bytes(model, batch_shape),
            tta=tta,
        ))
    return report
