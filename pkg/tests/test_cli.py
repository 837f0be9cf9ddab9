import json
import os

import pytest

from alarm_annotator import cli
from alarm_annotator.ingest import load_dataset_csv


def run(*args):
    return cli.main([str(a) for a in args])


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


def make_streams(workdir, n=90, rate=0.3, seed=11, **extra):
    args = ["synth", "--n-events", n, "--alarm-rate", rate, "--seed", seed,
            "--out-vitals", "v.jsonl", "--out-annotations", "a.jsonl"]
    for flag, value in extra.items():
        args += [f"--{flag.replace('_', '-')}", value]
    assert run(*args) == 0
    return workdir / "v.jsonl", workdir / "a.jsonl"


def make_dataset(workdir, name="train.csv", split="train", ds=1, **synth_kwargs):
    make_streams(workdir, **synth_kwargs)
    assert run("preprocess", "--vitals", "v.jsonl", "--annotations", "a.jsonl",
               "--ds", ds, "--split", split, "--out", name) == 0
    return workdir / name


class TestSynth:
    def test_missing_seed_is_usage_error(self, workdir, capsys):
        assert run("synth", "--n-events", 10) == 2
        assert "seed" in capsys.readouterr().err

    def test_writes_both_streams(self, workdir):
        vitals, annotations = make_streams(workdir)
        assert vitals.exists() and annotations.exists()
        assert len(vitals.read_text().splitlines()) == 90

    def test_dry_run_writes_nothing(self, workdir, capsys):
        assert run("synth", "--n-events", 20, "--seed", 1, "--dry-run") == 0
        out = capsys.readouterr().out
        assert "dry run" in out
        assert not (workdir / "vitals.jsonl").exists()

    def test_byte_identical_for_same_seed(self, workdir):
        a = make_streams(workdir, seed=5)[0].read_bytes()
        b = make_streams(workdir, seed=5)[0].read_bytes()
        assert a == b

    def test_config_file_supplies_settings(self, workdir):
        (workdir / "cfg.json").write_text(json.dumps({"n_events": 30, "seed": 4, "alarm_rate": 0.5}))
        assert run("synth", "--config", "cfg.json", "--out-vitals", "v.jsonl",
                   "--out-annotations", "a.jsonl") == 0
        assert len((workdir / "v.jsonl").read_text().splitlines()) == 30

    def test_flag_overrides_config(self, workdir):
        (workdir / "cfg.json").write_text(json.dumps({"n_events": 30, "seed": 4}))
        assert run("synth", "--config", "cfg.json", "--n-events", 12,
                   "--out-vitals", "v.jsonl", "--out-annotations", "a.jsonl") == 0
        assert len((workdir / "v.jsonl").read_text().splitlines()) == 12

    def test_invalid_rate_is_usage_error(self, workdir):
        assert run("synth", "--seed", 1, "--alarm-rate", 1.7) == 2

    def test_unreadable_config_is_usage_error(self, workdir, capsys):
        assert run("synth", "--config", "missing.json", "--seed", 1) == 2
        assert "missing.json" in capsys.readouterr().err


class TestPreprocess:
    def test_round_trip_ds1(self, workdir):
        path = make_dataset(workdir)
        ds = load_dataset_csv(str(path))
        assert len(ds) == 90
        assert ds.counts()[0] == 27

    def test_ds2_output_loads(self, workdir):
        path = make_dataset(workdir, name="test2.csv", ds=2, split="test")
        ds = load_dataset_csv(str(path), variant="DS2", split="test", resolution="s")
        assert ds.variant == "DS2"

    def test_prints_label_counts(self, workdir, capsys):
        make_dataset(workdir)
        out = capsys.readouterr().out
        assert "true" in out and "false" in out and "total" in out

    def test_missing_input_is_runtime_error(self, workdir, capsys):
        assert run("preprocess", "--vitals", "nope.jsonl", "--annotations", "nope2.jsonl",
                   "--out", "x.csv") == 1
        assert "nope.jsonl" in capsys.readouterr().err

    def test_dry_run_writes_nothing(self, workdir):
        make_streams(workdir)
        assert run("preprocess", "--vitals", "v.jsonl", "--annotations", "a.jsonl",
                   "--out", "t.csv", "--dry-run") == 0
        assert not (workdir / "t.csv").exists()

    def test_malformed_stream_is_runtime_error(self, workdir, capsys):
        (workdir / "v.jsonl").write_text("garbage\n")
        (workdir / "a.jsonl").write_text("")
        assert run("preprocess", "--vitals", "v.jsonl", "--annotations", "a.jsonl",
                   "--out", "t.csv") == 1
        assert "line 1" in capsys.readouterr().err


def train_args(out_dir, agent="dqn", extra=()):
    return ["train", "--dataset", "train.csv", "--test-dataset", "test.csv",
            "--agent", agent, "--downsample", "n3", "--epochs", 2, "--eval-every", 1,
            "--seed", 3, "--out-dir", out_dir, *extra]


@pytest.fixture
def datasets(workdir):
    make_dataset(workdir, name="train.csv")
    assert run("preprocess", "--vitals", "v.jsonl", "--annotations", "a.jsonl",
               "--split", "test", "--out", "test.csv") == 0
    return workdir


class TestTrain:
    def test_run_dir_layout(self, datasets):
        assert run(*train_args("run")) == 0
        root = datasets / "run"
        assert (root / "curve.csv").read_text().startswith("epoch,avg_reward\n")
        assert (root / "curve.png").exists()
        assert (root / "reports.csv").exists()
        assert (root / "reports.json").exists()
        assert (root / "checkpoints" / "final.json").exists()
        assert (root / "checkpoints" / "epoch_00001.json").exists()
        manifest = json.loads((root / "manifest.json").read_text())
        assert manifest["agent"] == "dqn"
        assert manifest["range"] == "n-3"
        assert manifest["curve_figure"] == "curve.png"
        assert len(manifest["config_hash"]) == 64
        assert [c["epoch"] for c in manifest["checkpoints"]] == [1, 2]
        assert "epsilon" in manifest["checkpoints"][0]

    def test_no_figures_flag(self, datasets):
        assert run(*train_args("run", extra=["--no-figures"])) == 0
        assert not (datasets / "run" / "curve.png").exists()
        assert (datasets / "run" / "curve.csv").exists()

    def test_deterministic_artifacts(self, datasets):
        assert run(*train_args("run_a")) == 0
        assert run(*train_args("run_b")) == 0
        for rel in ("curve.csv", "checkpoints/final.json", "reports.csv"):
            assert (datasets / "run_a" / rel).read_bytes() == (datasets / "run_b" / rel).read_bytes()

    def test_a2c_and_baselines_produce_checkpoints(self, datasets):
        for agent in ("a2c", "mlp", "svm"):
            assert run(*train_args(f"run_{agent}", agent=agent)) == 0
            obj = json.loads((datasets / f"run_{agent}" / "checkpoints" / "final.json").read_text())
            assert obj["kind"] == agent
        # baseline curves are loss histories
        text = (datasets / "run_mlp" / "curve.csv").read_text()
        assert text.startswith("epoch,loss\n")

    def test_flag_overrides_config_epochs(self, datasets):
        (datasets / "cfg.json").write_text(json.dumps({"agent": "dqn", "epochs": 7}))
        assert run("train", "--config", "cfg.json", "--dataset", "train.csv",
                   "--downsample", "n3", "--epochs", 1, "--eval-every", 1,
                   "--seed", 0, "--out-dir", "run_c") == 0
        manifest = json.loads((datasets / "run_c" / "manifest.json").read_text())
        assert manifest["settings"]["epochs"] == 1

    def test_config_supplies_agent(self, datasets):
        (datasets / "cfg.json").write_text(json.dumps({"agent": "svm"}))
        assert run("train", "--config", "cfg.json", "--dataset", "train.csv",
                   "--out-dir", "run_d") == 0
        obj = json.loads((datasets / "run_d" / "checkpoints" / "final.json").read_text())
        assert obj["kind"] == "svm"

    def test_missing_agent_is_usage_error(self, datasets, capsys):
        assert run("train", "--dataset", "train.csv", "--out-dir", "x") == 2
        assert "agent" in capsys.readouterr().err

    def test_unknown_agent_in_config_is_usage_error(self, datasets):
        (datasets / "cfg.json").write_text(json.dumps({"agent": "ppo"}))
        assert run("train", "--config", "cfg.json", "--dataset", "train.csv",
                   "--out-dir", "x") == 2

    def test_dry_run_trains_nothing(self, datasets, capsys):
        assert run(*train_args("run_dry", extra=["--dry-run"])) == 0
        assert "dry run" in capsys.readouterr().out
        assert not (datasets / "run_dry").exists()

    def test_missing_dataset_is_runtime_error(self, workdir):
        assert run("train", "--dataset", "absent.csv", "--agent", "dqn", "--out-dir", "x") == 1


class TestEvalCommand:
    def test_eval_prints_and_writes_report(self, datasets, capsys):
        assert run(*train_args("run")) == 0
        assert run("eval", "--checkpoint", "run/checkpoints/final.json",
                   "--dataset", "test.csv", "--out-dir", "eval_out") == 0
        out = capsys.readouterr().out
        assert "auc" in out and "sens" in out
        assert (datasets / "eval_out" / "report.json").exists()
        assert (datasets / "eval_out" / "roc.png").exists()

    def test_eval_without_out_dir_only_prints(self, datasets, capsys):
        assert run(*train_args("run")) == 0
        assert run("eval", "--checkpoint", "run/checkpoints/final.json",
                   "--dataset", "test.csv") == 0
        assert "auc" in capsys.readouterr().out

    def test_missing_checkpoint_lists_path(self, datasets, capsys):
        assert run("eval", "--checkpoint", "run/checkpoints/absent.json",
                   "--dataset", "test.csv") == 1
        assert "run/checkpoints/absent.json" in capsys.readouterr().err


class TestBenchmark:
    def setup_runs(self, workdir):
        assert run(*train_args("run_dqn")) == 0
        assert run(*train_args("run_svm", agent="svm")) == 0
        manifest = {"runs": [
            {"agent": "dqn", "range": "n-3", "dir": "run_dqn"},
            {"agent": "svm", "range": "n-3", "dir": "run_svm"},
        ]}
        (workdir / "bench.json").write_text(json.dumps(manifest))

    def test_table_columns_and_files(self, datasets, capsys):
        self.setup_runs(datasets)
        assert run("benchmark", "--manifest", "bench.json", "--dataset", "test.csv",
                   "-k", 2, "--out-dir", "bench") == 0
        out = capsys.readouterr().out
        assert "agent,range,auc,mcc,sensitivity,specificity" in out
        csv_text = (datasets / "bench" / "benchmark.csv").read_text()
        lines = csv_text.splitlines()
        assert lines[0] == "agent,range,auc,mcc,sensitivity,specificity"
        # two dqn checkpoints (k=2) plus the single svm final
        assert len(lines) == 1 + 2 + 1
        assert (datasets / "bench" / "benchmark.json").exists()
        assert (datasets / "bench" / "benchmark.png").exists()

    def test_rows_sorted_by_range_then_agent(self, datasets):
        self.setup_runs(datasets)
        assert run("benchmark", "--manifest", "bench.json", "--dataset", "test.csv",
                   "-k", 1, "--out-dir", "bench") == 0
        rows = json.loads((datasets / "bench" / "benchmark.json").read_text())
        keys = [(r["range"], r["agent"]) for r in rows]
        assert keys == sorted(keys)

    def test_missing_run_checkpoint_lists_path(self, datasets, capsys):
        self.setup_runs(datasets)
        (datasets / "bench.json").write_text(json.dumps(
            {"runs": [{"agent": "dqn", "range": "n-3", "dir": "gone"}]}
        ))
        assert run("benchmark", "--manifest", "bench.json", "--dataset", "test.csv",
                   "--out-dir", "bench") == 1
        assert "gone" in capsys.readouterr().err

    def test_dry_run_prints_without_files(self, datasets, capsys):
        self.setup_runs(datasets)
        assert run("benchmark", "--manifest", "bench.json", "--dataset", "test.csv",
                   "--out-dir", "bench", "--dry-run") == 0
        assert "dry run" in capsys.readouterr().out
        assert not (datasets / "bench").exists()

    def test_empty_manifest_is_usage_error(self, datasets):
        (datasets / "bench.json").write_text(json.dumps({"runs": []}))
        assert run("benchmark", "--manifest", "bench.json", "--dataset", "test.csv",
                   "--out-dir", "bench") == 2


class TestTopLevel:
    def test_no_command_is_usage_error(self, workdir):
        assert run() == 2

    def test_unknown_command_is_usage_error(self, workdir):
        assert run("frobnicate") == 2

    def test_help_exits_zero(self, workdir):
        assert run("--help") == 0

    def test_log_level_env(self, workdir, monkeypatch, capsys):
        monkeypatch.setenv("ANNOTATOR_LOG", "debug")
        assert run("synth", "--n-events", 5, "--seed", 1, "--dry-run") == 0
        monkeypatch.setenv("ANNOTATOR_LOG", "nonsense")
        assert run("synth", "--n-events", 5, "--seed", 1, "--dry-run") == 0
