"""Synchronous job implementations behind the service endpoints.

Each job resolves its output directory against the output root (the
``INSPECTSIM_OUTPUT_ROOT`` environment variable, falling back to the working
directory), writes deterministic artifacts without timestamps, and returns a
JSON-safe summary.  Byte-identical inputs produce byte-identical artifacts.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

from ..baselines import BaselineSpec, make_controller
from ..config import ConfigError, RunConfig, preset_config
from ..evaluation import (
    METRIC_NAMES,
    EvalReport,
    MetricSummary,
    bootstrap_ci,
    compare_to_targets,
    evaluate_controller,
    iqm,
    report_document,
    write_episode_logs,
    write_report,
)
from ..policy import PolicyController, PpoTrainer, load_policy

OUTPUT_ROOT_ENV = "INSPECTSIM_OUTPUT_ROOT"
MANIFEST_NAME = "manifest.json"


class JobError(ValueError):
    """Raised when a job request is invalid (bad paths, unknown ids)."""


def resolve_output_dir(output_dir: str | Path) -> Path:
    """Anchor relative output paths at the configured output root."""
    path = Path(output_dir)
    if path.is_absolute():
        return path
    root = os.environ.get(OUTPUT_ROOT_ENV, ".")
    return Path(root) / path


def build_run_config(document: dict | None, preset: str | None) -> RunConfig:
    """Materialize the run configuration from a document or a preset name."""
    if document is not None and preset is not None:
        raise ConfigError("give either a config document or a preset name, not both")
    if document is not None:
        return RunConfig.model_validate(document)
    return preset_config(preset or "default")


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def run_training(config: RunConfig, seeds: list[int], output_dir: str | Path | None,
                 dry_run: bool = False) -> tuple[dict, Path]:
    """Train one policy per seed; write checkpoints, curves, and a manifest.

    Dry-run mode validates everything and writes only the manifest naming the
    planned artifacts, so full-scale runs can be launched with a known layout.
    """
    if not seeds:
        raise JobError("at least one training seed is required")
    out = resolve_output_dir(output_dir if output_dir is not None else config.output_dir)
    artifacts: dict[str, dict[str, str]] = {}
    for seed in seeds:
        seed_dir = out / f"seed_{seed}"
        checkpoint = seed_dir / "checkpoint_final.npz"
        curve = seed_dir / "curve.json"
        artifacts[str(seed)] = {"checkpoint": str(checkpoint), "curve": str(curve)}
        if dry_run:
            continue
        trainer = PpoTrainer(config.train_config(seed),
                             episode_cfg=config.episode_config(),
                             cw=config.cw_params())
        curves = trainer.train(checkpoint_dir=seed_dir)
        _write_json(curve, {"seed": seed, "mode": config.mode, "records": curves})
    manifest = {
        "command": "train",
        "mode": config.mode,
        "seeds": list(seeds),
        "dry_run": dry_run,
        "config": config.model_dump(mode="json"),
        "artifacts": artifacts,
    }
    out.mkdir(parents=True, exist_ok=True)
    manifest_path = out / MANIFEST_NAME
    _write_json(manifest_path, manifest)
    return manifest, manifest_path


def _merge_reports(all_episodes: list, seeds: list[int], trials: int,
                   bootstrap_seed: int) -> EvalReport:
    """Pool episodes from several checkpoints into one headline report."""
    summaries = {}
    for name in METRIC_NAMES:
        values = [getattr(m, name) for m in all_episodes]
        point = iqm(values)
        if len(values) >= 2:
            low, high = bootstrap_ci(values, seed=bootstrap_seed)
            low, high = min(low, point), max(high, point)
        else:
            low = high = point
        summaries[name] = MetricSummary(iqm=point, ci_low=low, ci_high=high)
    return EvalReport(metrics=summaries, sample_count=len(all_episodes),
                      seeds=tuple(seeds), trials_per_seed=trials, per_seed={})


def run_eval(config: RunConfig, checkpoints: list[str], trials: int | None,
             seeds: list[int] | None, output_dir: str | Path | None,
             collect_logs: bool = False) -> tuple[dict, Path, list[Path]]:
    """Evaluate trained checkpoints; emit the report document and raw rows."""
    if not checkpoints:
        raise JobError("at least one checkpoint path is required")
    trials = trials if trials is not None else config.evaluation.trials
    out = resolve_output_dir(output_dir if output_dir is not None else config.output_dir)
    episode_cfg = config.episode_config()
    cw = config.cw_params()
    bootstrap_seed = config.evaluation.bootstrap_seed

    all_episodes = []
    all_logs: list[list[dict]] = []
    per_checkpoint = {}
    master_seeds = []
    for i, ckpt in enumerate(checkpoints):
        path = Path(ckpt)
        if not path.exists():
            raise JobError(f"checkpoint not found: {path}")
        model, _meta = load_policy(path)
        if seeds is not None:
            master = seeds[i % len(seeds)]
        else:
            master = config.evaluation.seeds[i % len(config.evaluation.seeds)] + i
        master_seeds.append(master)
        report, episodes, logs = evaluate_controller(
            lambda model=model: PolicyController(model, stochastic=False),
            episode_cfg=episode_cfg, cw=cw, seeds=(master,), trials=trials,
            bootstrap_seed=bootstrap_seed, collect_logs=collect_logs)
        per_checkpoint[str(path)] = {
            name: report.metrics[name].iqm for name in METRIC_NAMES}
        all_episodes.extend(episodes)
        all_logs.extend(logs)

    merged = _merge_reports(all_episodes, master_seeds, trials, bootstrap_seed)
    doc = report_document(merged, all_episodes, mode=config.mode)
    doc["checkpoints"] = list(checkpoints)
    doc["per_checkpoint"] = per_checkpoint
    report_path = out / "eval_report.json"
    write_report(doc, report_path)
    log_paths = write_episode_logs(all_logs, out / "episodes") if collect_logs else []
    return doc, report_path, log_paths


def run_baseline(config: RunConfig, controller_id: str, gains: dict,
                 seeds: list[int], trials: int, output_dir: str | Path | None,
                 collect_logs: bool = True) -> tuple[dict, Path, list[Path]]:
    """Run a scripted controller and report the same metrics as eval."""
    spec_gains = dict(gains)
    if controller_id == "sun_sync" and not spec_gains:
        spec_gains = config.sun_sync.model_dump()
    spec = BaselineSpec(controller_id=controller_id, gains=spec_gains)

    out = resolve_output_dir(output_dir if output_dir is not None else config.output_dir)
    report, episodes, logs = evaluate_controller(
        lambda: make_controller(spec),
        episode_cfg=config.episode_config(), cw=config.cw_params(),
        seeds=seeds, trials=trials,
        bootstrap_seed=config.evaluation.bootstrap_seed, collect_logs=collect_logs)
    doc = report_document(report, episodes, mode=config.mode)
    doc["controller"] = controller_id
    doc["gains"] = spec_gains
    report_path = out / f"baseline_{controller_id}.json"
    write_report(doc, report_path)
    log_paths = write_episode_logs(logs, out / f"baseline_{controller_id}_episodes") \
        if collect_logs else []
    return doc, report_path, log_paths


def export_plots(run_dir: str | Path, output_dir: str | Path | None = None
                 ) -> tuple[dict[str, str], list[int]]:
    """Aggregate per-seed training curves into per-metric plot tables.

    Each table is CSV with columns (timestep, iqm, ci_low, ci_high) over the
    intersection of the seeds' evaluation timesteps.
    """
    run_path = resolve_output_dir(run_dir)
    out = resolve_output_dir(output_dir) if output_dir is not None else run_path

    manifest_path = run_path / MANIFEST_NAME
    curves_by_seed: dict[int, list[dict]] = {}
    if manifest_path.exists():
        manifest = json.loads(manifest_path.read_text())
        missing = []
        for seed_str, art in manifest.get("artifacts", {}).items():
            curve_path = Path(art["curve"])
            if not curve_path.is_absolute():
                curve_path = run_path / curve_path
            if not curve_path.exists():
                missing.append(seed_str)
                continue
            curves_by_seed[int(seed_str)] = json.loads(curve_path.read_text())["records"]
        if missing:
            raise JobError(
                f"curve files absent for seeds {sorted(missing)}; "
                f"expected under {run_path}")
    else:
        for curve_path in sorted(run_path.glob("seed_*/curve.json")):
            payload = json.loads(curve_path.read_text())
            curves_by_seed[int(payload["seed"])] = payload["records"]
    if not curves_by_seed:
        raise JobError(f"no training curves found in {run_path}")

    seeds = sorted(curves_by_seed)
    grids = [
        [rec["timestep"] for rec in curves_by_seed[s]] for s in seeds]
    common = sorted(set(grids[0]).intersection(*grids[1:])) if len(grids) > 1 \
        else sorted(grids[0])
    if not common:
        raise JobError("seed curves share no common evaluation timesteps")

    by_seed_at = {
        s: {rec["timestep"]: rec for rec in curves_by_seed[s]} for s in seeds}
    out.mkdir(parents=True, exist_ok=True)
    tables: dict[str, str] = {}
    degenerate = len(seeds) == 1
    for name in METRIC_NAMES:
        lines = [f"# metric: {name}", f"# seeds: {seeds}"]
        if degenerate:
            lines.append("# note: single seed; confidence bounds degenerate to the value")
        lines.append("timestep,iqm,ci_low,ci_high")
        for t in common:
            values = [by_seed_at[s][t][name] for s in seeds]
            point = iqm(values)
            if len(values) >= 2:
                low, high = bootstrap_ci(values, seed=0)
                low, high = min(low, point), max(high, point)
            else:
                low = high = point
            lines.append(f"{t},{point!r},{low!r},{high!r}")
        path = out / f"plot_{name}.csv"
        path.write_text("\n".join(lines) + "\n")
        tables[name] = str(path)
    return tables, seeds


def target_comparison_table(report_doc: dict, mode: str) -> list[dict]:
    """Re-derive the reference-target comparison from a report document."""
    summaries = {
        name: MetricSummary(iqm=entry["iqm"], ci_low=entry["ci_low"],
                            ci_high=entry["ci_high"])
        for name, entry in report_doc["metrics"].items()}
    report = EvalReport(metrics=summaries, sample_count=report_doc["sample_count"],
                        seeds=tuple(report_doc["seeds"]),
                        trials_per_seed=report_doc["trials_per_seed"], per_seed={})
    return compare_to_targets(report, mode)
