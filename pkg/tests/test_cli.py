import json

import pytest

from foodvision.cli import main
from foodvision.ioutil import read_json


def run_gen(tmp_path, classes=3, per_class=4, size=32, seed=5):
    code = main(["gen-data", "--classes", str(classes), "--per-class", str(per_class),
                 "--size", str(size), "--seed", str(seed),
                 "--out", str(tmp_path / "ds")])
    assert code == 0
    return tmp_path / "ds" / "manifest.json"


def run_train(tmp_path, manifest, seed=5, cycles=2, extra=()):
    code = main(["train", "--manifest", str(manifest), "--family", "residual",
                 "--n", "1", "--size", "32", "--cycles", str(cycles),
                 "--batch-size", "4", "--seed", str(seed),
                 "--out-checkpoint", str(tmp_path / "model.ckpt"),
                 "--out-metrics", str(tmp_path / "metrics.json"), *extra])
    assert code == 0
    return tmp_path / "model.ckpt", tmp_path / "metrics.json"


class TestSubcommands:
    def test_gen_train_eval_bench_report_pipeline(self, tmp_path, capsys):
        manifest = run_gen(tmp_path)
        ckpt, metrics = run_train(tmp_path, manifest)
        assert ckpt.exists() and metrics.exists()

        data = read_json(metrics)
        assert data["version"] == 1 and len(data["cycles"]) == 2

        assert main(["eval", "--checkpoint", str(ckpt), "--manifest", str(manifest),
                     "--seed", "5", "--out", str(tmp_path / "eval.json")]) == 0
        eval_data = read_json(tmp_path / "eval.json")
        assert set(eval_data) >= {"error_rate", "top1_accuracy", "top5_accuracy", "confusion"}

        assert main(["bench", "--checkpoint", str(ckpt), "--n-warmup", "1",
                     "--n-runs", "10", "--out", str(tmp_path / "bench.json"),
                     "--seed", "5"]) == 0
        bench = read_json(tmp_path / "bench.json")
        assert bench["model_size_bytes"] > 0
        assert "latency" in bench["timing"]

        assert main(["report", "--metrics", str(metrics),
                     "--out-dir", str(tmp_path / "report")]) == 0
        batch_csv = (tmp_path / "report" / "batch_losses.csv").read_text().splitlines()
        assert batch_csv[0] == "batch,loss" and len(batch_csv) > 2

    def test_lr_find_writes_curve(self, tmp_path):
        manifest = run_gen(tmp_path)
        code = main(["lr-find", "--manifest", str(manifest), "--size", "32",
                     "--batch-size", "4", "--lr-min", "1e-4", "--lr-max", "0.5",
                     "--steps", "12", "--seed", "5",
                     "--out-csv", str(tmp_path / "curve.csv")])
        assert code == 0
        lines = (tmp_path / "curve.csv").read_text().splitlines()
        assert lines[0] == "lr,smoothed_loss" and len(lines) >= 3

    def test_compare_emits_report_with_baselines(self, tmp_path):
        manifest = run_gen(tmp_path)
        code = main(["compare", "--manifest", str(manifest), "--size", "32",
                     "--families", "residual,plain", "--n", "1", "--cycles", "1",
                     "--batch-size", "4", "--seed", "5", "--tta-threshold", "-1",
                     "--out-dir", str(tmp_path / "cmp")])
        assert code == 0
        report = read_json(tmp_path / "cmp" / "report.json")
        assert len(report["records"]) == 2
        assert len(report["paper_baselines"]["rows"]) == 7
        table = (tmp_path / "cmp" / "table.csv").read_text().splitlines()
        assert table[0] == "model,dataset,std_error,lowest_error,mean_error"
        assert len(table) == 3

    def test_determinism_full_pipeline_byte_identical(self, tmp_path):
        outputs = []
        for run_dir in ("one", "two"):
            base = tmp_path / run_dir
            base.mkdir()
            manifest = run_gen(base)
            _, metrics = run_train(base, manifest)
            main(["report", "--metrics", str(metrics), "--out-dir", str(base / "rep")])
            payload = read_json(metrics)
            payload.pop("timing")  # the single wall-clock subtree
            images = b"".join(p.read_bytes()
                              for p in sorted((base / "ds").glob("*/*.ppm")))
            outputs.append({
                "metrics": json.dumps(payload, sort_keys=True),
                "images": images,
                "batch_csv": (base / "rep" / "batch_losses.csv").read_bytes(),
                "ckpt": (base / "model.ckpt").read_bytes(),
            })
        assert outputs[0]["metrics"] == outputs[1]["metrics"]
        assert outputs[0]["images"] == outputs[1]["images"]
        assert outputs[0]["batch_csv"] == outputs[1]["batch_csv"]
        assert outputs[0]["ckpt"] == outputs[1]["ckpt"]

    def test_workdir_resolution(self, tmp_path, monkeypatch):
        monkeypatch.setenv("FOODVISION_WORKDIR", str(tmp_path))
        assert main(["gen-data", "--classes", "2", "--per-class", "2",
                     "--size", "32", "--seed", "1", "--out", "rel_ds"]) == 0
        assert (tmp_path / "rel_ds" / "manifest.json").exists()


class TestErrors:
    def test_unknown_flag_exits_2(self):
        with pytest.raises(SystemExit) as exc:
            main(["train", "--no-such-flag"])
        assert exc.value.code == 2

    def test_missing_subcommand_exits_2(self):
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == 2

    def test_runtime_failure_exits_1_with_message(self, tmp_path, capsys):
        code = main(["eval", "--checkpoint", str(tmp_path / "missing.ckpt"),
                     "--manifest", str(tmp_path / "missing.json")])
        assert code == 1
        err = capsys.readouterr().err
        assert err.startswith("error: ") and err.count("\n") == 1

    def test_invalid_generator_args_exit_1(self, tmp_path, capsys):
        code = main(["gen-data", "--classes", "1", "--per-class", "2",
                     "--out", str(tmp_path / "x")])
        assert code == 1
        assert "n_classes" in capsys.readouterr().err
