"""SGD training loop, learning-rate finder, evaluation, and run statistics.

Training is fully deterministic for a fixed (model seed, data, config seed):
batch order, optimizer state, and every recorded metric replay identically.
Wall-clock measurements are captured but kept in a separate ``timing``
subtree of the serialized metrics so that determinism checks can exclude
exactly one key.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .autograd import Tape, Tensor, backward
from .errors import (
    ConfigError,
    DivergenceError,
    EvaluationError,
    NumericError,
    StatisticsError,
)
from .ioutil import read_json, write_json
from .layers import softmax_cross_entropy

SCHEDULERS = ("constant", "step", "one_cycle")

METRICS_VERSION = 1


@dataclass
class TrainConfig:
    """Hyperparameters for one training run.

    ``step`` decays the learning rate by 10x at half and three-quarters of
    the cycle budget (cycles 6 and 9 of the default 12), matching the point
    where the compared models flatten out.
    """

    cycles: int = 12
    batch_size: int = 32
    base_lr: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 5e-4
    scheduler: str = "step"
    seed: int = 0

    def __post_init__(self):
        if self.cycles < 1:
            raise ConfigError(f"cycles must be >= 1, got {self.cycles}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.base_lr < 0:
            raise ConfigError(f"base_lr must be >= 0, got {self.base_lr}")
        if not (0.0 <= self.momentum < 1.0):
            raise ConfigError(f"momentum must be in [0,1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.scheduler not in SCHEDULERS:
            raise ConfigError(f"unknown scheduler {self.scheduler!r}; expected {SCHEDULERS}")

    def to_dict(self) -> dict:
        return {
            "cycles": self.cycles,
            "batch_size": self.batch_size,
            "base_lr": self.base_lr,
            "momentum": self.momentum,
            "weight_decay": self.weight_decay,
            "scheduler": self.scheduler,
            "seed": self.seed,
        }


@dataclass
class CycleRecord:
    cycle: int
    train_loss: float
    test_error_rate: float
    top1_accuracy: float
    top5_accuracy: float
    wall_seconds: float


@dataclass
class RunMetrics:
    """Everything one training run produces, ready for serialization."""

    config: dict
    model_name: str
    batch_losses: list[tuple[int, float]] = field(default_factory=list)
    cycle_records: list[CycleRecord] = field(default_factory=list)
    confusion: Optional[np.ndarray] = None
    total_wall_seconds: float = 0.0

    def error_series(self) -> list[float]:
        return [c.test_error_rate for c in self.cycle_records]

    def to_dict(self) -> dict:
        return {
            "version": METRICS_VERSION,
            "model": self.model_name,
            "config": self.config,
            "batch_losses": [[i, loss] for i, loss in self.batch_losses],
            "cycles": [
                {
                    "cycle": c.cycle,
                    "train_loss": c.train_loss,
                    "test_error_rate": c.test_error_rate,
                    "top1_accuracy": c.top1_accuracy,
                    "top5_accuracy": c.top5_accuracy,
                }
                for c in self.cycle_records
            ],
            "confusion": self.confusion.tolist() if self.confusion is not None else None,
            "timing": {
                "cycle_wall_seconds": [c.wall_seconds for c in self.cycle_records],
                "total_wall_seconds": self.total_wall_seconds,
            },
        }

    def save(self, path) -> None:
        write_json(self.to_dict(), path)

    @classmethod
    def from_dict(cls, d: dict) -> "RunMetrics":
        timing = d.get("timing", {})
        walls = timing.get("cycle_wall_seconds", [0.0] * len(d["cycles"]))
        records = [
            CycleRecord(
                cycle=c["cycle"],
                train_loss=c["train_loss"],
                test_error_rate=c["test_error_rate"],
                top1_accuracy=c["top1_accuracy"],
                top5_accuracy=c["top5_accuracy"],
                wall_seconds=walls[i] if i < len(walls) else 0.0,
            )
            for i, c in enumerate(d["cycles"])
        ]
        confusion = np.array(d["confusion"], dtype=np.int64) if d.get("confusion") else None
        return cls(
            config=d["config"],
            model_name=d.get("model", ""),
            batch_losses=[(int(i), float(l)) for i, l in d["batch_losses"]],
            cycle_records=records,
            confusion=confusion,
            total_wall_seconds=timing.get("total_wall_seconds", 0.0),
        )

    @classmethod
    def load(cls, path) -> "RunMetrics":
        return cls.from_dict(read_json(path))


@dataclass
class ErrorStats:
    """Mean / lowest / sample standard deviation over a cycle error series."""

    mean_error: float
    lowest_error: float
    std_error: float


def run_stats(error_series: Sequence[float]) -> ErrorStats:
    """Summary statistics over a series of per-cycle error rates.

    Standard deviation uses the sample (n-1) convention; a length-1 series
    has deviation 0 by definition.
    """
    if len(error_series) == 0:
        raise StatisticsError("run_stats needs a non-empty series")
    arr = np.asarray(error_series, dtype=np.float64)
    std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return ErrorStats(mean_error=float(arr.mean()),
                      lowest_error=float(arr.min()),
                      std_error=std)


# ---------------------------------------------------------------------------
# Optimizer and schedules
# ---------------------------------------------------------------------------

class SGD:
    """SGD with classical momentum and coupled L2 weight decay."""

    def __init__(self, params: list[tuple[str, Tensor]], momentum: float = 0.9,
                 weight_decay: float = 0.0):
        self.params = params
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocity = {name: np.zeros_like(p.data) for name, p in params}

    def step(self, lr: float) -> None:
        mu, wd = self.momentum, self.weight_decay
        for name, p in self.params:
            g = p.grad
            if g is None:
                continue
            if wd:
                g = g + wd * p.data
            v = self.velocity[name]
            v *= mu
            v += g
            p.data -= lr * v

    def zero_grad(self) -> None:
        for _, p in self.params:
            p.grad = None


def schedule_lr(cfg: TrainConfig, cycle: int, step: int, steps_per_cycle: int) -> float:
    """Learning rate for a given (0-based) cycle and step within the run."""
    if cfg.scheduler == "constant":
        return cfg.base_lr
    if cfg.scheduler == "step":
        first = math.ceil(cfg.cycles * 0.5)
        second = math.ceil(cfg.cycles * 0.75)
        factor = 1.0
        if cycle >= first:
            factor *= 0.1
        if cycle >= second:
            factor *= 0.1
        return cfg.base_lr * factor
    # one_cycle: linear warmup to the base rate over the first 30% of steps,
    # then cosine anneal down to base/100
    total = max(1, cfg.cycles * steps_per_cycle)
    t = cycle * steps_per_cycle + step
    warmup = max(1, int(total * 0.3))
    if t < warmup:
        return cfg.base_lr * (0.1 + 0.9 * t / warmup)
    progress = (t - warmup) / max(1, total - warmup)
    floor = cfg.base_lr / 100.0
    return floor + (cfg.base_lr - floor) * 0.5 * (1 + math.cos(math.pi * progress))


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

@dataclass
class EvalResult:
    error_rate: float
    topk_accuracy: dict[int, float]
    confusion: np.ndarray

    @property
    def top1_accuracy(self) -> float:
        return self.topk_accuracy[1]

    @property
    def top5_accuracy(self) -> float:
        ks = [k for k in self.topk_accuracy if k > 1]
        return self.topk_accuracy[max(ks)] if ks else self.topk_accuracy[1]


def topk_hits(logits: np.ndarray, labels: np.ndarray, k: int) -> np.ndarray:
    """Boolean per-sample: is the true label among the k best scores?

    Ties are broken toward the lowest class index (stable sort on negated
    scores).
    """
    order = np.argsort(-logits, axis=1, kind="stable")[:, :k]
    return (order == labels[:, None]).any(axis=1)


def evaluate(model, x: np.ndarray, y: np.ndarray, batch_size: int = 256) -> EvalResult:
    """Error rate, top-k accuracy (k in {1,5}), and the confusion matrix.

    The model must be in eval mode so batch norm uses running statistics;
    predictions use argmax with lowest-index tie-breaking.
    """
    if len(x) == 0:
        raise EvaluationError("cannot evaluate on an empty split")
    if model.training:
        raise EvaluationError("evaluate requires the model in eval mode")
    k_classes = model.config.num_classes
    if len(y) and int(np.max(y)) >= k_classes:
        raise EvaluationError(
            f"labels reach {int(np.max(y))} but the model has {k_classes} classes")
    ks = sorted({1, min(5, k_classes)})
    hits = {k: 0 for k in ks}
    confusion = np.zeros((k_classes, k_classes), dtype=np.int64)
    y = np.asarray(y, dtype=np.int64)
    for start in range(0, len(x), batch_size):
        xb = Tensor(x[start:start + batch_size])
        yb = y[start:start + batch_size]
        logits = model.forward(xb).data
        pred = logits.argmax(axis=1)
        np.add.at(confusion, (yb, pred), 1)
        for k in ks:
            hits[k] += int(topk_hits(logits, yb, k).sum())
    n = len(x)
    topk = {k: hits[k] / n for k in ks}
    if 5 not in topk:
        topk[5] = topk[min(5, k_classes)]
    return EvalResult(error_rate=1.0 - topk[1], topk_accuracy=topk, confusion=confusion)


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------

def _batch_order(seed: int, cycle: int, n: int) -> np.ndarray:
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, cycle])))
    return rng.permutation(n)


def train_step(model, optimizer: SGD, xb: np.ndarray, yb: np.ndarray, lr: float) -> float:
    """One SGD step; returns the batch loss."""
    optimizer.zero_grad()
    with Tape() as tape:
        logits = model.forward(Tensor(xb))
        loss, _ = softmax_cross_entropy(logits, yb)
    backward(loss, tape)
    optimizer.step(lr)
    return loss.item()


def train(model, train_data: tuple[np.ndarray, np.ndarray],
          test_data: tuple[np.ndarray, np.ndarray], cfg: TrainConfig,
          on_cycle_end: Optional[Callable[[CycleRecord], None]] = None) -> RunMetrics:
    """SGD with momentum and weight decay over ``cfg.cycles`` full passes.

    Captures the loss of every batch and evaluates the test split after each
    cycle; the model is left in eval mode with its final weights.  Raises
    ``DivergenceError`` naming the batch and learning rate if the loss goes
    non-finite.  ``on_cycle_end`` is called with each CycleRecord; returning
    a truthy value stops the run early (used for time-to-accuracy probes).
    """
    x_train, y_train = train_data
    x_test, y_test = test_data
    if model.config.num_classes <= int(np.max(y_train, initial=0)):
        raise ConfigError(
            f"model has {model.config.num_classes} classes but labels reach "
            f"{int(np.max(y_train))}")
    metrics = RunMetrics(config=cfg.to_dict(), model_name=model.name)
    optimizer = SGD(model.parameters(), momentum=cfg.momentum, weight_decay=cfg.weight_decay)
    steps_per_cycle = max(1, math.ceil(len(x_train) / cfg.batch_size))
    global_batch = 0
    run_start = time.perf_counter()

    for cycle in range(cfg.cycles):
        model.train()
        cycle_start = time.perf_counter()
        order = _batch_order(cfg.seed, cycle, len(x_train))
        cycle_losses = []
        for step, start in enumerate(range(0, len(order), cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            lr = schedule_lr(cfg, cycle, step, steps_per_cycle)
            try:
                loss = train_step(model, optimizer, x_train[idx], y_train[idx], lr)
            except NumericError as exc:
                raise DivergenceError(
                    f"non-finite loss at batch {global_batch} (lr={lr:g})") from exc
            if not math.isfinite(loss):
                raise DivergenceError(f"non-finite loss at batch {global_batch} (lr={lr:g})")
            metrics.batch_losses.append((global_batch, loss))
            cycle_losses.append(loss)
            global_batch += 1

        model.eval()
        result = evaluate(model, x_test, y_test)
        record = CycleRecord(
            cycle=cycle + 1,
            train_loss=float(np.mean(cycle_losses)),
            test_error_rate=result.error_rate,
            top1_accuracy=result.top1_accuracy,
            top5_accuracy=result.top5_accuracy,
            wall_seconds=time.perf_counter() - cycle_start,
        )
        metrics.cycle_records.append(record)
        metrics.confusion = result.confusion
        if on_cycle_end is not None and on_cycle_end(record):
            break

    metrics.total_wall_seconds = time.perf_counter() - run_start
    model.eval()
    return metrics


# ---------------------------------------------------------------------------
# Learning-rate range test
# ---------------------------------------------------------------------------

@dataclass
class LrFindResult:
    curve: list[tuple[float, float]]  # (lr, smoothed loss)
    suggested_lr: float
    diverged_at: Optional[float] = None


def lr_find(model, data: tuple[np.ndarray, np.ndarray], lr_min: float, lr_max: float,
            steps: int, batch_size: int = 32, seed: int = 0,
            loss_fn: Optional[Callable] = None) -> LrFindResult:
    """Geometric learning-rate sweep on a throwaway copy of the model.

    One plain SGD step (no momentum, no decay) is taken per batch while the
    lr grows geometrically from lr_min to lr_max; the loss is exponentially
    smoothed (factor 0.98, debiased) and the sweep aborts once the smoothed
    loss exceeds 4x the best seen.  The suggested lr is the point of steepest
    descent of the smoothed curve.
    """
    if not (0 < lr_min < lr_max):
        raise ConfigError(f"need 0 < lr_min < lr_max, got {lr_min}, {lr_max}")
    if lr_max / lr_min < 1.0 + 1e-6:
        raise ConfigError(f"degenerate sweep: lr_max/lr_min = {lr_max / lr_min!r}")
    if steps < 10:
        raise ConfigError(f"steps must be >= 10, got {steps}")

    probe = model.clone()
    probe.train()
    params = probe.parameters()
    x, y = data
    order = _batch_order(seed, 0, len(x))
    ratio = (lr_max / lr_min) ** (1.0 / (steps - 1))
    beta = 0.98

    smoothed = 0.0
    best = math.inf
    curve: list[tuple[float, float]] = []
    diverged_at = None

    for i in range(steps):
        lr = lr_min * ratio ** i
        take = np.arange(i * batch_size, (i + 1) * batch_size) % len(x)
        idx = order[take]
        for _, p in params:
            p.grad = None
        try:
            with Tape() as tape:
                if loss_fn is not None:
                    loss = loss_fn(probe, x[idx], y[idx])
                else:
                    logits = probe.forward(Tensor(x[idx]))
                    loss, _ = softmax_cross_entropy(logits, y[idx])
            backward(loss, tape)
            raw = loss.item()
        except NumericError as exc:
            if i == 0:
                raise ConfigError(f"loss is non-finite at lr_min={lr_min:g}; "
                                  f"lower the sweep start") from exc
            diverged_at = lr
            break
        if not math.isfinite(raw):
            if i == 0:
                raise ConfigError(f"loss is non-finite at lr_min={lr_min:g}")
            diverged_at = lr
            break
        smoothed = beta * smoothed + (1 - beta) * raw
        debiased = smoothed / (1 - beta ** (i + 1))
        curve.append((lr, debiased))
        if debiased < best:
            best = debiased
        elif debiased > 4.0 * best:
            diverged_at = lr
            break
        for _, p in params:
            if p.grad is not None:
                p.data -= lr * p.grad

    if len(curve) < 2:
        raise ConfigError("lr sweep collected fewer than 2 points")
    losses = np.array([v for _, v in curve])
    slopes = np.diff(losses)
    suggested = curve[int(np.argmin(slopes))][0]
    return LrFindResult(curve=curve, suggested_lr=suggested, diverged_at=diverged_at)
