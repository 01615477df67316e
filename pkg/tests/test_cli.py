"""Command-line client: every verb drives the service and renders its reply."""

import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from inspectsim.cli import main
from inspectsim.config import RunConfig, from_yaml


@pytest.fixture()
def runner(tmp_path, monkeypatch):
    monkeypatch.setenv("INSPECTSIM_OUTPUT_ROOT", str(tmp_path))
    monkeypatch.chdir(tmp_path)
    r = CliRunner()
    r.workdir = tmp_path
    return r


def write_tiny_config(path: Path, **extra_training) -> Path:
    cfg = RunConfig().model_dump(mode="json")
    cfg["episode"].update(point_count=5, max_steps=60)
    cfg["training"].update(total_timesteps=500, rollout_length=250,
                           eval_interval=500, eval_episodes=1,
                           checkpoint_interval=0, **extra_training)
    cfg["evaluation"].update(trials=2)
    import yaml

    path.write_text(yaml.safe_dump(cfg, sort_keys=False))
    return path


def test_config_init_writes_valid_yaml(runner):
    result = runner.invoke(main, ["config", "init", "--output", "cfg.yaml"])
    assert result.exit_code == 0, result.output
    text = (runner.workdir / "cfg.yaml").read_text()
    assert from_yaml(text) == RunConfig()

    # Existing file is protected unless forced; repeated init is byte-stable.
    result = runner.invoke(main, ["config", "init", "--output", "cfg.yaml"])
    assert result.exit_code == 1
    assert "exists" in result.output
    result = runner.invoke(main, ["config", "init", "--output", "cfg.yaml",
                                  "--force", "--preset", "smoke"])
    assert result.exit_code == 0
    assert from_yaml((runner.workdir / "cfg.yaml").read_text()) != RunConfig()


def test_missing_config_file_fails_cleanly(runner):
    result = runner.invoke(main, ["train", "--config", "absent.yaml", "--dry-run"])
    assert result.exit_code == 1
    assert "config error: config file not found" in result.output
    # Nothing was created on the failed path.
    assert list(runner.workdir.iterdir()) == []


def test_invalid_config_file_names_offending_keys(runner):
    bad = runner.workdir / "bad.yaml"
    bad.write_text("training:\n  warp_factor: 9\n")
    result = runner.invoke(main, ["train", "--config", str(bad), "--dry-run"])
    assert result.exit_code == 1
    assert "warp_factor" in result.output


def test_train_dry_run_and_export_plots_flow(runner):
    result = runner.invoke(main, ["train", "--preset", "smoke", "--seed", "0",
                                  "--seed", "1", "--output-dir", "plan",
                                  "--dry-run"])
    assert result.exit_code == 0, result.output
    assert "planned seeds [0, 1]" in result.output
    manifest = json.loads((runner.workdir / "plan" / "manifest.json").read_text())
    assert manifest["dry_run"] is True

    # No curves yet: export-plots reports the absent seeds and fails.
    result = runner.invoke(main, ["export-plots", "plan"])
    assert result.exit_code == 1
    assert "JobError" in result.output
    assert "0" in result.output and "1" in result.output


def test_train_eval_baseline_pipeline(runner):
    cfg = write_tiny_config(runner.workdir / "tiny.yaml")
    result = runner.invoke(main, ["train", "--config", str(cfg), "--seed", "3",
                                  "--output-dir", "run"])
    assert result.exit_code == 0, result.output
    assert "trained seeds [3]" in result.output
    checkpoint = runner.workdir / "run" / "seed_3" / "checkpoint_final.npz"
    assert checkpoint.exists()

    result = runner.invoke(main, ["eval", str(checkpoint), "--config", str(cfg),
                                  "--trials", "2", "--output-dir", "run"])
    assert result.exit_code == 0, result.output
    assert "episodes: 2" in result.output
    assert "inspected_pct" in result.output
    assert (runner.workdir / "run" / "eval_report.json").exists()

    result = runner.invoke(main, ["export-plots", "run"])
    assert result.exit_code == 0, result.output
    assert (runner.workdir / "run" / "plot_inspected_pct.csv").exists()

    result = runner.invoke(main, ["baseline", "zero_thrust", "--config", str(cfg),
                                  "--trials", "2", "--output-dir", "run",
                                  "--no-logs"])
    assert result.exit_code == 0, result.output
    report = json.loads((runner.workdir / "run" / "baseline_zero_thrust.json")
                        .read_text())
    assert report["metrics"]["delta_v"]["iqm"] == 0.0


def test_baseline_rejects_bad_gains_json(runner):
    result = runner.invoke(main, ["baseline", "sun_sync", "--preset", "smoke",
                                  "--gains", "{not json"])
    assert result.exit_code == 1
    assert "config error: --gains is not valid JSON" in result.output


def test_baseline_rejects_unknown_gain_names(runner):
    result = runner.invoke(main, ["baseline", "sun_sync", "--preset", "smoke",
                                  "--trials", "1",
                                  "--gains", '{"warp_factor": 9}'])
    assert result.exit_code == 1
    assert "warp_factor" in result.output


def test_mode_flag_overrides_config(runner):
    cfg = write_tiny_config(runner.workdir / "tiny.yaml")
    result = runner.invoke(main, ["train", "--config", str(cfg), "--mode",
                                  "spectral", "--output-dir", "plan2",
                                  "--dry-run"])
    assert result.exit_code == 0, result.output
    manifest = json.loads((runner.workdir / "plan2" / "manifest.json").read_text())
    assert manifest["mode"] == "spectral"
    assert manifest["config"]["mode"] == "spectral"


def test_eval_requires_checkpoint_argument(runner):
    result = runner.invoke(main, ["eval"])
    assert result.exit_code != 0
    result = runner.invoke(main, ["eval", "ghost.npz", "--preset", "smoke"])
    assert result.exit_code == 1
    assert "JobError" in result.output and "ghost.npz" in result.output
