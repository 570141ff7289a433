import json
from pathlib import Path

import pytest

from fairga.cli import main


@pytest.fixture(scope="module")
def planted_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("planted")
    assert main(["synth", "--benchmark", "planted", "--n-samples", "250", "--seed", "1", "--out", str(out)]) == 0
    return out


def run_test_command(planted_dir, out, extra):
    args = [
        "test",
        "--data", str(planted_dir / "data.csv"),
        "--schema", str(planted_dir / "schema.json"),
        "--model-file", str(planted_dir / "model.json"),
        "--epsilon", "2",
        "--seed-num", "30",
        "--mr", "0.25",
        "--budget-checks", "400",
        "--n-perturb", "300",
        "--out", str(out),
    ] + extra
    return main(args)


class TestSynthAndTrain:
    def test_synth_writes_benchmark_files(self, planted_dir):
        for name in ("schema.json", "data.csv", "model.json"):
            assert (planted_dir / name).exists()

    def test_train_subcommand(self, planted_dir, tmp_path, capsys):
        model_path = tmp_path / "model.json"
        code = main(
            [
                "train",
                "--data", str(planted_dir / "data.csv"),
                "--schema", str(planted_dir / "schema.json"),
                "--model", "logistic",
                "--epochs", "40",
                "--seed", "0",
                "--out", str(model_path),
            ]
        )
        assert code == 0
        assert model_path.exists()
        assert "training accuracy" in capsys.readouterr().out


class TestTestCommand:
    def test_ga_run_writes_artifacts(self, planted_dir, tmp_path):
        out = tmp_path / "run_ga"
        assert run_test_command(planted_dir, out, ["--mode", "ga", "--seed", "0"]) == 0
        for name in ("records.csv", "metrics.json", "run_config.json"):
            assert (out / name).exists()
        metrics = json.loads((out / "metrics.json").read_text())
        assert metrics["tsn"] == 400
        assert metrics["dsn"] >= 1

    def test_random_mode(self, planted_dir, tmp_path):
        out = tmp_path / "run_rnd"
        assert run_test_command(planted_dir, out, ["--mode", "random", "--seed", "0"]) == 0
        metrics = json.loads((out / "metrics.json").read_text())
        assert metrics["tsn"] == 400

    def test_epsilon_auto_logged(self, planted_dir, tmp_path, capsys):
        out = tmp_path / "run_auto"
        args = [
            "test",
            "--data", str(planted_dir / "data.csv"),
            "--schema", str(planted_dir / "schema.json"),
            "--model-file", str(planted_dir / "model.json"),
            "--epsilon", "auto",
            "--seed-num", "20",
            "--budget-checks", "100",
            "--n-perturb", "300",
            "--out", str(out),
        ]
        assert main(args) == 0
        assert "epsilon (auto):" in capsys.readouterr().out
        config = json.loads((out / "run_config.json").read_text())
        assert isinstance(config["epsilon"], int)
        assert config["epsilon_was_auto"] is True

    def test_run_config_replay_reproduces_records(self, planted_dir, tmp_path):
        first = tmp_path / "first"
        assert run_test_command(planted_dir, first, ["--mode", "ga", "--seed", "7"]) == 0
        replay = tmp_path / "replay"
        code = main(
            [
                "test",
                "--run-config", str(first / "run_config.json"),
                "--out", str(replay),
            ]
        )
        assert code == 0
        assert replay != first
        assert (first / "records.csv").read_bytes() == (replay / "records.csv").read_bytes()
        assert (replay / "records.csv").stat().st_size > 0

    def test_tabular_defaults(self, planted_dir):
        from fairga.cli import _effective_test_config, build_parser

        args = build_parser().parse_args(
            [
                "test",
                "--data", str(planted_dir / "data.csv"),
                "--schema", str(planted_dir / "schema.json"),
                "--model-file", str(planted_dir / "model.json"),
                "--out", "x",
            ]
        )
        config = _effective_test_config(args)
        assert config["cr"] == 0.9
        assert config["mr"] == 0.05
        assert config["budget_seconds"] == 3600.0
        assert config["generations"] is None

    def test_time_budget_terminates_run(self, planted_dir, tmp_path):
        out = tmp_path / "timed"
        code = main(
            [
                "test",
                "--data", str(planted_dir / "data.csv"),
                "--schema", str(planted_dir / "schema.json"),
                "--model-file", str(planted_dir / "model.json"),
                "--epsilon", "2",
                "--seed-num", "20",
                "--budget-seconds", "0.5",
                "--n-perturb", "200",
                "--seed", "0",
                "--out", str(out),
            ]
        )
        assert code == 0
        metrics = json.loads((out / "metrics.json").read_text())
        assert metrics["elapsed"] < 30
        assert metrics["tsn"] >= 0

    def test_missing_model_flag_is_config_error(self, planted_dir, tmp_path):
        code = main(
            [
                "test",
                "--data", str(planted_dir / "data.csv"),
                "--schema", str(planted_dir / "schema.json"),
                "--budget-checks", "10",
                "--out", str(tmp_path / "x"),
            ]
        )
        assert code == 1

    def test_missing_file_is_io_error(self, tmp_path):
        code = main(
            [
                "test",
                "--data", str(tmp_path / "nope.csv"),
                "--schema", str(tmp_path / "nope.json"),
                "--model-file", str(tmp_path / "nope-model.json"),
                "--out", str(tmp_path / "x"),
            ]
        )
        assert code == 2

    def test_dead_adapter_is_protocol_error(self, planted_dir, tmp_path):
        import sys

        dead = tmp_path / "dead.py"
        dead.write_text("import sys; sys.exit(0)")
        code = main(
            [
                "test",
                "--data", str(planted_dir / "data.csv"),
                "--schema", str(planted_dir / "schema.json"),
                "--external", f"{sys.executable} {dead}",
                "--budget-checks", "10",
                "--out", str(tmp_path / "x"),
            ]
        )
        assert code == 2


class TestVerifyAndExplain:
    def test_verify_passes_on_fresh_run(self, planted_dir, tmp_path, capsys):
        out = tmp_path / "run"
        assert run_test_command(planted_dir, out, ["--mode", "ga", "--seed", "0"]) == 0
        code = main(
            [
                "verify",
                "--records", str(out / "records.csv"),
                "--schema", str(planted_dir / "schema.json"),
                "--model-file", str(planted_dir / "model.json"),
            ]
        )
        assert code == 0
        assert "re-verified" in capsys.readouterr().out

    def test_explain_prints_ranking(self, planted_dir, capsys):
        code = main(
            [
                "explain",
                "--data", str(planted_dir / "data.csv"),
                "--schema", str(planted_dir / "schema.json"),
                "--model-file", str(planted_dir / "model.json"),
                "--index", "0",
            ]
        )
        assert code == 0
        out = capsys.readouterr().out
        assert "predicted label" in out
        assert "age_group" in out


class TestRetrainCompareReport:
    def test_full_pipeline(self, planted_dir, tmp_path, capsys):
        runs = []
        for mode, seed in (("ga", 0), ("ga", 1), ("random", 0), ("random", 1)):
            out = tmp_path / f"{mode}{seed}"
            assert run_test_command(planted_dir, out, ["--mode", mode, "--seed", str(seed)]) == 0
            runs.append(out)

        compare_out = tmp_path / "cmp"
        code = main(
            [
                "compare",
                "--runs-a", str(runs[0]), str(runs[1]),
                "--runs-b", str(runs[2]), str(runs[3]),
                "--out", str(compare_out),
            ]
        )
        assert code == 0
        comparison = json.loads((compare_out / "comparison.json").read_text())
        assert {"u", "p", "a12"} <= set(comparison)
        assert (compare_out / "dss_compare.png").exists()

        report_out = tmp_path / "report"
        code = main(["report", "--runs"] + [str(r) for r in runs] + ["--out", str(report_out)])
        assert code == 0
        assert (report_out / "aggregate_metrics.csv").exists()
        assert (report_out / "diversity.csv").exists()
        assert (report_out / "metrics.png").exists()
        assert (report_out / "diversity.png").exists()
        header = (report_out / "diversity.csv").read_text().splitlines()[0]
        assert header == "x,y,label"

    def test_retrain_subcommand(self, planted_dir, tmp_path):
        run_dir = tmp_path / "collect"
        assert run_test_command(
            planted_dir, run_dir, ["--mode", "ga", "--seed", "0", "--budget-checks", "3000"]
        ) == 0
        out = tmp_path / "retrain"
        code = main(
            [
                "retrain",
                "--data", str(planted_dir / "data.csv"),
                "--schema", str(planted_dir / "schema.json"),
                "--records", str(run_dir / "records.csv"),
                "--fraction", "0.05",
                "--model", "logistic",
                "--epochs", "60",
                "--epsilon", "2",
                "--generations", "8",
                "--n-perturb", "300",
                "--seed", "0",
                "--out", str(out),
            ]
        )
        assert code == 0
        report = json.loads((out / "fairness_report.json").read_text())
        assert {"sample_added", "normal_accuracy", "discriminatory_percentage", "dss", "sur"} <= set(report)
