import math

import numpy as np
import pytest

from foodvision.autograd import Tensor, mul, parameter, scale, tsum
from foodvision.errors import ConfigError, DivergenceError, EvaluationError, StatisticsError
from foodvision.models import ModelConfig, build_model
from foodvision.training import (
    ErrorStats,
    RunMetrics,
    SGD,
    TrainConfig,
    evaluate,
    lr_find,
    run_stats,
    schedule_lr,
    topk_hits,
    train,
)

TINY = ModelConfig(family="residual", blocks_per_stage=1, num_classes=4,
                   input_size=(3, 16, 16))


def tiny_data(rng, n_per_class=4, classes=4, size=16):
    """Linearly separable random blobs rendered into image tensors."""
    xs, ys = [], []
    for c in range(classes):
        base = rng.normal(scale=0.3, size=(n_per_class, 3, size, size))
        base[:, c % 3, :, :] += 1.5 * (1 + c // 3)
        xs.append(base)
        ys.extend([c] * n_per_class)
    return np.concatenate(xs).astype(np.float32), np.array(ys, dtype=np.int64)


class IdentityLogitsModel:
    """Eval stub whose logits are the input rows themselves."""

    def __init__(self, num_classes):
        self.config = ModelConfig(num_classes=num_classes, input_size=(3, 8, 8))
        self.training = False
        self.name = "identity-logits"

    def forward(self, x):
        return x


class ConstantLogitsModel(IdentityLogitsModel):
    def forward(self, x):
        return Tensor(np.zeros((x.shape[0], self.config.num_classes), dtype=np.float32))


class TestRunStats:
    def test_basic_series(self):
        stats = run_stats([0.1, 0.2, 0.3])
        assert abs(stats.mean_error - 0.2) < 1e-12
        assert stats.lowest_error == 0.1
        assert abs(stats.std_error - 0.1) < 1e-12

    def test_constant_series(self):
        stats = run_stats([0.25] * 12)
        assert stats.std_error == 0.0
        assert stats.mean_error == 0.25 == stats.lowest_error

    def test_empty_series_rejected(self):
        with pytest.raises(StatisticsError):
            run_stats([])

    def test_matches_independent_recomputation(self):
        rng = np.random.default_rng(0)
        series = rng.uniform(0, 1, size=12).tolist()
        stats = run_stats(series)
        # spreadsheet-style recomputation from first principles
        mean = sum(series) / len(series)
        var = sum((v - mean) ** 2 for v in series) / (len(series) - 1)
        assert abs(stats.mean_error - mean) < 1e-9
        assert abs(stats.lowest_error - min(series)) < 1e-9
        assert abs(stats.std_error - math.sqrt(var)) < 1e-9


class TestEvaluate:
    def test_onehot_oracle_model_scores_perfectly(self):
        y = np.array([0, 1, 2, 3, 1, 2], dtype=np.int64)
        x = np.eye(4, dtype=np.float32)[y]
        result = evaluate(IdentityLogitsModel(4), x, y)
        assert result.error_rate == 0.0
        assert result.top1_accuracy == 1.0
        assert np.array_equal(result.confusion, np.diag(np.bincount(y, minlength=4)))

    def test_constant_logits_symmetric_with_tiebreak(self):
        k = 20
        y = np.arange(k, dtype=np.int64)  # balanced: one sample per class
        x = np.zeros((k, k), dtype=np.float32)
        result = evaluate(ConstantLogitsModel(k), x, y)
        assert abs(result.top1_accuracy - 1 / k) < 1e-9
        assert abs(result.topk_accuracy[5] - 5 / k) < 1e-9  # lowest-index ties

    def test_confusion_rows_sum_to_class_counts(self):
        rng = np.random.default_rng(1)
        y = rng.integers(0, 4, size=40).astype(np.int64)
        x = rng.normal(size=(40, 4)).astype(np.float32)
        result = evaluate(IdentityLogitsModel(4), x, y)
        assert np.array_equal(result.confusion.sum(axis=1), np.bincount(y, minlength=4))

    def test_error_rate_plus_top1_is_one(self):
        rng = np.random.default_rng(2)
        y = rng.integers(0, 4, size=30).astype(np.int64)
        x = rng.normal(size=(30, 4)).astype(np.float32)
        result = evaluate(IdentityLogitsModel(4), x, y)
        assert result.error_rate + result.top1_accuracy == 1.0

    def test_top5_at_least_top1(self):
        rng = np.random.default_rng(3)
        for seed in range(5):
            r = np.random.default_rng(seed)
            y = r.integers(0, 6, size=25).astype(np.int64)
            x = r.normal(size=(25, 6)).astype(np.float32)
            result = evaluate(IdentityLogitsModel(6), x, y)
            assert result.topk_accuracy[5] >= result.topk_accuracy[1]

    def test_empty_split_rejected(self):
        with pytest.raises(EvaluationError):
            evaluate(IdentityLogitsModel(4), np.zeros((0, 4), dtype=np.float32),
                     np.zeros(0, dtype=np.int64))

    def test_labels_beyond_model_classes_rejected(self):
        with pytest.raises(EvaluationError, match="9.*4 classes"):
            evaluate(IdentityLogitsModel(4), np.zeros((2, 4), dtype=np.float32),
                     np.array([0, 9], dtype=np.int64))

    def test_train_mode_model_rejected(self):
        model = build_model(TINY, seed=0).train()
        with pytest.raises(EvaluationError):
            evaluate(model, np.zeros((2, 3, 16, 16), dtype=np.float32),
                     np.zeros(2, dtype=np.int64))

    def test_topk_hits_tiebreak_lowest_index(self):
        logits = np.zeros((1, 6), dtype=np.float32)
        assert topk_hits(logits, np.array([2]), k=3)[0]
        assert not topk_hits(logits, np.array([3]), k=3)[0]


class TestSchedulers:
    def test_step_decays_at_half_and_three_quarters(self):
        cfg = TrainConfig(cycles=12, base_lr=0.4, scheduler="step")
        lrs = [schedule_lr(cfg, cycle, 0, 10) for cycle in range(12)]
        assert lrs[:6] == [0.4] * 6
        assert all(abs(lr - 0.04) < 1e-12 for lr in lrs[6:9])
        assert all(abs(lr - 0.004) < 1e-12 for lr in lrs[9:])

    def test_constant(self):
        cfg = TrainConfig(cycles=3, base_lr=0.05, scheduler="constant")
        assert schedule_lr(cfg, 2, 5, 10) == 0.05

    def test_one_cycle_warms_up_then_anneals(self):
        cfg = TrainConfig(cycles=10, base_lr=1.0, scheduler="one_cycle")
        lrs = [schedule_lr(cfg, c, s, 10) for c in range(10) for s in range(10)]
        peak = max(lrs)
        assert abs(peak - 1.0) < 0.01
        assert lrs[0] < 0.2
        assert lrs[-1] < 0.02
        assert np.argmax(lrs) == pytest.approx(30, abs=2)  # 30% warmup


class TestTrain:
    def test_zero_lr_leaves_parameters_unchanged(self):
        rng = np.random.default_rng(4)
        x, y = tiny_data(rng)
        model = build_model(TINY, seed=1)
        before = [p.data.copy() for _, p in model.parameters()]
        cfg = TrainConfig(cycles=2, batch_size=8, base_lr=0.0, seed=0)
        train(model, (x, y), (x, y), cfg)
        for (name, p), prev in zip(model.parameters(), before):
            assert np.array_equal(p.data, prev), name

    def test_single_sample_memorization(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(1, 3, 16, 16)).astype(np.float32)
        y = np.array([2], dtype=np.int64)
        model = build_model(TINY, seed=2)
        cfg = TrainConfig(cycles=30, batch_size=1, base_lr=0.05, weight_decay=0.0,
                          scheduler="constant", seed=0)
        metrics = train(model, (x, y), (x, y), cfg)
        assert metrics.cycle_records[-1].train_loss < 0.01

    def test_deterministic_metrics_for_same_seeds(self):
        rng = np.random.default_rng(6)
        x, y = tiny_data(rng)

        def run():
            model = build_model(TINY, seed=3)
            cfg = TrainConfig(cycles=2, batch_size=8, base_lr=0.05, seed=9)
            return train(model, (x, y), (x, y), cfg).to_dict()

        a, b = run(), run()
        a.pop("timing")
        b.pop("timing")
        assert a == b

    def test_weight_decay_shrinks_parameter_norm(self):
        rng = np.random.default_rng(7)
        x, y = tiny_data(rng)

        def norm_after(wd):
            model = build_model(TINY, seed=4)
            cfg = TrainConfig(cycles=3, batch_size=8, base_lr=0.05, weight_decay=wd,
                              scheduler="constant", seed=1)
            train(model, (x, y), (x, y), cfg)
            return math.sqrt(sum(float((p.data ** 2).sum()) for _, p in model.parameters()))

        assert norm_after(5e-3) <= norm_after(0.0)

    @pytest.mark.filterwarnings("ignore:overflow")
    def test_divergence_reports_batch_and_lr(self):
        rng = np.random.default_rng(8)
        x, y = tiny_data(rng)
        model = build_model(TINY, seed=5)
        # a step this large overflows the parameters, so the next batch's
        # forward goes non-finite
        cfg = TrainConfig(cycles=1, batch_size=8, base_lr=1e38, scheduler="constant", seed=0)
        with pytest.raises(DivergenceError, match=r"batch \d+ \(lr=1e\+38\)"):
            train(model, (x, y), (x, y), cfg)

    def test_model_left_in_eval_mode(self):
        rng = np.random.default_rng(9)
        x, y = tiny_data(rng)
        model = build_model(TINY, seed=6)
        train(model, (x, y), (x, y), TrainConfig(cycles=1, batch_size=8, seed=0))
        assert not model.training

    def test_label_beyond_model_classes_rejected(self):
        model = build_model(TINY, seed=0)
        x = np.zeros((2, 3, 16, 16), dtype=np.float32)
        y = np.array([0, 7], dtype=np.int64)
        with pytest.raises(ConfigError):
            train(model, (x, y), (x, y), TrainConfig(cycles=1, seed=0))

    def test_batch_losses_recorded_every_batch(self):
        rng = np.random.default_rng(10)
        x, y = tiny_data(rng)  # 16 samples
        model = build_model(TINY, seed=7)
        cfg = TrainConfig(cycles=2, batch_size=8, seed=0)
        metrics = train(model, (x, y), (x, y), cfg)
        assert len(metrics.batch_losses) == 2 * 2
        assert [i for i, _ in metrics.batch_losses] == list(range(4))


class TestMetricsSerialization:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(11)
        x, y = tiny_data(rng)
        model = build_model(TINY, seed=8)
        metrics = train(model, (x, y), (x, y), TrainConfig(cycles=2, batch_size=8, seed=0))
        path = tmp_path / "metrics.json"
        metrics.save(path)
        loaded = RunMetrics.load(path)
        assert loaded.to_dict() == metrics.to_dict()

    def test_wall_clock_isolated_under_timing_key(self, tmp_path):
        rng = np.random.default_rng(12)
        x, y = tiny_data(rng)
        model = build_model(TINY, seed=8)
        metrics = train(model, (x, y), (x, y), TrainConfig(cycles=1, batch_size=8, seed=0))
        d = metrics.to_dict()
        assert "timing" in d
        assert "wall_seconds" not in str(d["cycles"])  # only the timing subtree


class QuadraticModel:
    """One scalar parameter with loss 0.5*c*theta^2; GD diverges at lr >= 2/c."""

    def __init__(self, curvature, theta0=1.0):
        self.curvature = curvature
        self.theta = parameter(np.array([theta0]), dtype=np.float64)

    def parameters(self):
        return [("theta", self.theta)]

    def clone(self):
        return QuadraticModel(self.curvature, float(self.theta.data[0]))

    def train(self):
        return self


def quadratic_loss(model, xb, yb):
    return scale(tsum(mul(model.theta, model.theta)), 0.5 * model.curvature)


class TestLrFind:
    def data(self):
        x = np.zeros((64, 1), dtype=np.float32)
        y = np.zeros(64, dtype=np.int64)
        return x, y

    def test_quadratic_oracle_curve_and_suggestion(self):
        curvature = 10.0  # divergence threshold at 2/c = 0.2
        model = QuadraticModel(curvature)
        result = lr_find(model, self.data(), 1e-3, 2.0, steps=60,
                         batch_size=4, seed=0, loss_fn=quadratic_loss)
        assert result.diverged_at is not None
        assert result.diverged_at > 2.0 / curvature * 0.5
        assert 1e-3 < result.suggested_lr < result.diverged_at
        losses = [v for _, v in result.curve]
        assert min(losses) < losses[0]  # decreased before blowing up

    def test_sweep_never_mutates_original(self):
        model = QuadraticModel(10.0)
        lr_find(model, self.data(), 1e-3, 1.0, steps=20, batch_size=4,
                seed=0, loss_fn=quadratic_loss)
        assert model.theta.data[0] == 1.0

    def test_degenerate_sweep_rejected(self):
        model = QuadraticModel(10.0)
        lr_max = 0.1
        with pytest.raises(ConfigError, match="degenerate"):
            lr_find(model, self.data(), lr_max * (1 - 1e-12), lr_max, steps=20,
                    batch_size=4, seed=0, loss_fn=quadratic_loss)

    def test_identical_seeds_identical_curves(self):
        rng = np.random.default_rng(13)
        x, y = tiny_data(rng)
        model = build_model(TINY, seed=9)
        a = lr_find(model, (x, y), 1e-4, 0.5, steps=12, batch_size=8, seed=3)
        b = lr_find(model, (x, y), 1e-4, 0.5, steps=12, batch_size=8, seed=3)
        assert a.curve == b.curve and a.suggested_lr == b.suggested_lr

    def test_too_few_steps_rejected(self):
        with pytest.raises(ConfigError):
            lr_find(QuadraticModel(1.0), self.data(), 1e-3, 1.0, steps=5,
                    loss_fn=quadratic_loss)

    @pytest.mark.filterwarnings("ignore:overflow")
    def test_non_finite_loss_at_sweep_start_rejected(self):
        # parameters already out of range make the very first loss blow up
        model = QuadraticModel(10.0, theta0=1e308)
        with pytest.raises(ConfigError, match="lr_min"):
            lr_find(model, self.data(), 1e-3, 1.0, steps=20, batch_size=4,
                    seed=0, loss_fn=quadratic_loss)


class TestSGD:
    def test_momentum_accumulates_velocity(self):
        p = parameter(np.array([1.0]), dtype=np.float64)
        opt = SGD([("p", p)], momentum=0.5, weight_decay=0.0)
        p.grad = np.array([1.0])
        opt.step(0.1)  # v=1, p=0.9
        p.grad = np.array([1.0])
        opt.step(0.1)  # v=1.5, p=0.75
        assert abs(p.data[0] - 0.75) < 1e-12

    def test_none_grad_skipped(self):
        p = parameter(np.array([1.0]), dtype=np.float64)
        opt = SGD([("p", p)], momentum=0.9)
        opt.step(0.1)
        assert p.data[0] == 1.0
