"""
Smoke Test: Command-Line Entry Point

Runs every subcommand on tiny configurations and checks that it exits
cleanly and leaves its outputs in the run directory. Accuracy is covered
by the e2e tests.

Focus: "Does it run?" not "Does it work well?"
"""

import pytest

from src.experiments.persistence import read_csv, read_json, read_provenance
from src.main import main

QUIET = ["--log-file", "", "--log-level", "WARNING"]


def only_run_dir(root, command):
    dirs = sorted(root.glob(f"{command}-*"))
    assert len(dirs) == 1, f"expected one {command} run, found {dirs}"
    return dirs[0]


@pytest.mark.smoke
class TestCommandsRun:
    """Each subcommand exits 0 and writes its files."""

    def test_no_command_prints_help(self, capsys):
        assert main([]) == 0
        assert "usage" in capsys.readouterr().out.lower()

    def test_simulate(self, run_root, tiny_cli_args):
        assert main(QUIET + ["simulate"] + tiny_cli_args) == 0
        run = only_run_dir(run_root, "simulate")
        paths = read_csv(run / "paths.csv")
        assert len(paths) == 5 * 3
        assert list(paths.columns) == ["path", "time", "x0"]
        assert paths["x0"].between(0.0, 1.0).all()
        assert read_provenance(run / "paths.csv")["seed"] == "7"

    def test_train_then_sample(self, run_root, tiny_cli_args):
        assert main(QUIET + ["train"] + tiny_cli_args) == 0
        train_dir = only_run_dir(run_root, "train")
        assert len(list((train_dir / "checkpoints").glob("interval_*.ckpt"))) == 6
        assert (train_dir / "train_log.csv").is_file()
        assert len(read_json(train_dir / "metrics.json")["intervals"]) == 6

        assert main(QUIET + ["sample"] + tiny_cli_args) == 0
        sample_dir = only_run_dir(run_root, "sample")
        samples = read_csv(sample_dir / "samples.csv")
        assert len(samples) == 40
        assert read_json(sample_dir / "metrics.json")["score"] == "learned"

    def test_sample_only_overrides_find_training_run(self, run_root, tiny_cli_args):
        assert main(QUIET + ["train"] + tiny_cli_args) == 0
        train_hash = read_json(only_run_dir(run_root, "train") / "config.json")["train_hash"]

        overrides = ["--set", "sample.n_samples=77", "--set", "sample.substeps_per_interval=3"]
        assert main(QUIET + ["sample"] + tiny_cli_args + overrides) == 0
        sample_dir = only_run_dir(run_root, "sample")
        assert len(read_csv(sample_dir / "samples.csv")) == 77
        assert read_json(sample_dir / "config.json")["train_hash"] == train_hash

    def test_exact_sample(self, run_root, tiny_cli_args):
        assert main(QUIET + ["sample"] + tiny_cli_args + ["--set", "sample.score=exact"]) == 0
        metrics = read_json(only_run_dir(run_root, "sample") / "metrics.json")
        assert metrics["score"] == "exact"
        assert metrics["K_intervals"] == 6

    def test_verify(self, run_root, tiny_cli_args):
        assert main(QUIET + ["verify"] + tiny_cli_args) == 0
        reports = only_run_dir(run_root, "verify") / "reports"
        assert [r["name"] for r in read_json(reports / "bounds.json")["reports"]] == ["ergodicity"]
        assert len(read_csv(reports / "bounds.csv")) == 12

    def test_kernel_dump(self, run_root, tiny_cli_args):
        assert main(QUIET + ["kernel-dump"] + tiny_cli_args + ["--plot"]) == 0
        reports = only_run_dir(run_root, "kernel-dump") / "reports"
        table = read_csv(reports / "kernel_dump.csv")
        assert len(table) == 2 * 11
        assert {"t", "x0", "log_p", "score0"} <= set(table.columns)
        assert (reports / "kernel_dump.png").is_file()

    @pytest.mark.slow
    def test_rate_study(self, run_root, tiny_cli_args):
        assert main(QUIET + ["rate-study"] + tiny_cli_args) == 0
        reports = only_run_dir(run_root, "rate-study") / "reports"
        assert read_csv(reports / "rate_table.csv")["n"].tolist() == [32, 64]
        assert "slope" in read_json(reports / "rate_fit.json")


@pytest.mark.smoke
class TestExitCodes:
    """Failures map to documented exit codes."""

    def test_missing_seed(self, run_root):
        assert main(QUIET + ["simulate", "--out", str(run_root)]) == 2

    def test_invalid_config_value(self, tiny_cli_args):
        assert main(QUIET + ["train"] + tiny_cli_args + ["--set", "grid.c=3.0"]) == 2

    def test_missing_config_file(self, tmp_path, tiny_cli_args):
        assert main(QUIET + ["train", "--config", str(tmp_path / "nope.json")] + tiny_cli_args) == 2

    def test_sample_without_checkpoints(self, tiny_cli_args):
        assert main(QUIET + ["sample"] + tiny_cli_args) == 2

    def test_corrupted_checkpoint(self, run_root, tiny_cli_args):
        assert main(QUIET + ["train"] + tiny_cli_args) == 0
        ckpt = only_run_dir(run_root, "train") / "checkpoints" / "interval_3.ckpt"
        ckpt.write_bytes(ckpt.read_bytes()[:-16])
        assert main(QUIET + ["sample"] + tiny_cli_args) == 3
