"""Command-line interface: a thin HTTP client over the service endpoints.

Every verb (except ``serve``) builds a request, sends it to the service —
in-process by default, or to a remote ``--server`` URL — and renders the
response.  All work happens behind the HTTP boundary, so a remote service
behaves identically to the bundled one.
"""

from __future__ import annotations

import asyncio
import json
import sys
from pathlib import Path

import click
import httpx

from .config import PRESETS


class ServiceClient:
    """Sends one request per CLI invocation, in-process unless a URL is given."""

    def __init__(self, server: str | None = None):
        self.server = server

    async def _request_async(self, method: str, path: str, **kwargs) -> httpx.Response:
        if self.server is None:
            from .service import create_app
            transport = httpx.ASGITransport(app=create_app())
            async with httpx.AsyncClient(transport=transport,
                                         base_url="http://inspectsim.local",
                                         timeout=None) as client:
                return await client.request(method, path, **kwargs)
        async with httpx.AsyncClient(base_url=self.server, timeout=None) as client:
            return await client.request(method, path, **kwargs)

    def request(self, method: str, path: str, **kwargs) -> dict:
        response = asyncio.run(self._request_async(method, path, **kwargs))
        if response.status_code >= 400:
            _fail_from_response(response)
        return response.json()


def _fail_from_response(response: httpx.Response) -> None:
    """Translate an error response into a categorized message and exit 1."""
    try:
        payload = response.json()
    except json.JSONDecodeError:
        payload = {"detail": response.text}
    if response.status_code == 422 and isinstance(payload.get("detail"), list):
        lines = ["invalid request:"]
        for item in payload["detail"]:
            loc = ".".join(str(part) for part in item.get("loc", []) if part != "body")
            lines.append(f"  {loc}: {item.get('msg', 'invalid value')}")
        _fail("\n".join(lines))
    category = payload.get("error", f"HTTP {response.status_code}")
    _fail(f"{category}: {payload.get('detail', 'request failed')}")


def _fail(message: str) -> None:
    click.echo(message, err=True)
    sys.exit(1)


def _load_config_document(config_path: str | None, mode: str | None) -> dict | None:
    """Read the YAML config file into a request document, applying --mode."""
    if config_path is None:
        return {"mode": mode} if mode else None
    path = Path(config_path)
    if not path.exists():
        _fail(f"config error: config file not found: {path}")
    from .config import ConfigError, from_yaml

    try:
        config = from_yaml(path.read_text())
    except ConfigError as exc:
        _fail(f"config error: {exc}")
    except Exception as exc:  # pydantic ValidationError: name the offending keys
        _fail(f"config error: {_format_validation_error(exc)}")
    document = config.model_dump(mode="json")
    if mode:
        document["mode"] = mode
    return document


def _format_validation_error(exc: Exception) -> str:
    errors = getattr(exc, "errors", None)
    if errors is None:
        return str(exc)
    lines = []
    for item in errors():
        loc = ".".join(str(part) for part in item["loc"])
        lines.append(f"{loc}: {item['msg']}")
    return "; ".join(lines) or str(exc)


def _print_metrics(report: dict) -> None:
    click.echo(f"episodes: {report['sample_count']}")
    for name, entry in report["metrics"].items():
        click.echo(f"  {name:15s} IQM {entry['iqm']:10.3f}   "
                   f"95% CI [{entry['ci_low']:.3f}, {entry['ci_high']:.3f}]")
    for row in report.get("target_comparison", []):
        if "within_tolerance" in row:
            verdict = "within" if row["within_tolerance"] else "OUTSIDE"
            click.echo(f"  {row['metric']:15s} target {row['target_iqm']:.2f} -> "
                       f"{verdict} tolerance")


@click.group()
@click.option("--server", default=None, metavar="URL",
              help="Send requests to a running service instead of in-process.")
@click.pass_context
def main(ctx: click.Context, server: str | None) -> None:
    """Spacecraft-inspection simulation: train, evaluate, and analyze."""
    ctx.obj = ServiceClient(server)


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True, type=int)
def serve(host: str, port: int) -> None:
    """Run the HTTP service."""
    import uvicorn

    uvicorn.run("inspectsim.service.app:app", host=host, port=port)


@main.group()
def config() -> None:
    """Configuration helpers."""


@config.command("init")
@click.option("--preset", default="default", show_default=True,
              type=click.Choice(PRESETS))
@click.option("--output", default="run_config.yaml", show_default=True,
              type=click.Path(dir_okay=False))
@click.option("--force", is_flag=True, help="Overwrite an existing file.")
@click.pass_obj
def config_init(client: ServiceClient, preset: str, output: str, force: bool) -> None:
    """Write the full default configuration to a YAML file."""
    path = Path(output)
    if path.exists() and not force:
        _fail(f"config error: {path} exists; use --force to overwrite")
    payload = client.request("GET", "/config/default", params={"preset": preset})
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(payload["yaml"])
    click.echo(f"wrote {preset} configuration to {path}")


@main.command()
@click.option("--config", "config_path", default=None, type=click.Path(dir_okay=False),
              help="Run configuration YAML (config init to generate).")
@click.option("--preset", default=None, type=click.Choice(PRESETS),
              help="Use a named preset instead of a config file.")
@click.option("--seed", "seeds", multiple=True, type=int,
              help="Training seed; repeat for several runs.")
@click.option("--mode", default=None, type=click.Choice(["binary", "spectral"]),
              help="Override the illumination mode.")
@click.option("--output-dir", default=None, type=click.Path(file_okay=False))
@click.option("--dry-run", is_flag=True,
              help="Validate and write the manifest without training.")
@click.pass_obj
def train(client: ServiceClient, config_path: str | None, preset: str | None,
          seeds: tuple[int, ...], mode: str | None, output_dir: str | None,
          dry_run: bool) -> None:
    """Train one policy per seed; writes checkpoints, curves, and a manifest."""
    document = _load_config_document(config_path, mode)
    body = {"config": document, "preset": preset if document is None else None,
            "seeds": list(seeds) or [0], "output_dir": output_dir,
            "dry_run": dry_run}
    payload = client.request("POST", "/train", json=body)
    manifest = payload["manifest"]
    verb = "planned" if manifest["dry_run"] else "trained"
    click.echo(f"{verb} seeds {manifest['seeds']} -> {payload['manifest_path']}")
    for seed, artifact in manifest["artifacts"].items():
        click.echo(f"  seed {seed}: checkpoint {artifact['checkpoint']}")


@main.command("eval")
@click.argument("checkpoints", nargs=-1, required=True,
                type=click.Path(dir_okay=False))
@click.option("--config", "config_path", default=None, type=click.Path(dir_okay=False))
@click.option("--preset", default=None, type=click.Choice(PRESETS))
@click.option("--trials", default=None, type=int,
              help="Episodes per checkpoint (default from config).")
@click.option("--seed", "seeds", multiple=True, type=int,
              help="Evaluation master seed; repeat to vary per checkpoint.")
@click.option("--mode", default=None, type=click.Choice(["binary", "spectral"]))
@click.option("--output-dir", default=None, type=click.Path(file_okay=False))
@click.option("--logs", is_flag=True, help="Write per-episode trajectory logs.")
@click.pass_obj
def eval_cmd(client: ServiceClient, checkpoints: tuple[str, ...],
             config_path: str | None, preset: str | None, trials: int | None,
             seeds: tuple[int, ...], mode: str | None, output_dir: str | None,
             logs: bool) -> None:
    """Evaluate trained checkpoints and write the metrics report."""
    document = _load_config_document(config_path, mode)
    body = {"checkpoints": list(checkpoints), "config": document,
            "preset": preset if document is None else None, "trials": trials,
            "seeds": list(seeds) or None, "output_dir": output_dir,
            "collect_logs": logs}
    payload = client.request("POST", "/eval", json=body)
    _print_metrics(payload["report"])
    click.echo(f"report: {payload['report_path']}")
    if payload["log_paths"]:
        click.echo(f"episode logs: {len(payload['log_paths'])} files")


@main.command()
@click.argument("controller",
                type=click.Choice(["zero_thrust", "random", "sun_sync"]))
@click.option("--config", "config_path", default=None, type=click.Path(dir_okay=False))
@click.option("--preset", default=None, type=click.Choice(PRESETS))
@click.option("--seed", "seeds", multiple=True, type=int)
@click.option("--trials", default=1, show_default=True, type=int)
@click.option("--mode", default=None, type=click.Choice(["binary", "spectral"]))
@click.option("--output-dir", default=None, type=click.Path(file_okay=False))
@click.option("--gains", default=None, metavar="JSON",
              help='Controller parameters, e.g. \'{"station_radius": 45}\'.')
@click.option("--no-logs", is_flag=True, help="Skip trajectory logs.")
@click.pass_obj
def baseline(client: ServiceClient, controller: str, config_path: str | None,
             preset: str | None, seeds: tuple[int, ...], trials: int,
             mode: str | None, output_dir: str | None, gains: str | None,
             no_logs: bool) -> None:
    """Run a scripted controller and report the same metrics as eval."""
    document = _load_config_document(config_path, mode)
    try:
        gains_dict = json.loads(gains) if gains else {}
    except json.JSONDecodeError as exc:
        _fail(f"config error: --gains is not valid JSON: {exc}")
    body = {"controller": controller, "gains": gains_dict, "config": document,
            "preset": preset if document is None else None,
            "seeds": list(seeds) or [0], "trials": trials,
            "output_dir": output_dir, "collect_logs": not no_logs}
    payload = client.request("POST", "/baseline", json=body)
    _print_metrics(payload["report"])
    click.echo(f"report: {payload['report_path']}")


@main.command("export-plots")
@click.argument("run_dir", type=click.Path(file_okay=False))
@click.option("--output-dir", default=None, type=click.Path(file_okay=False))
@click.pass_obj
def export_plots(client: ServiceClient, run_dir: str, output_dir: str | None) -> None:
    """Aggregate training curves into per-metric (timestep, IQM, CI) tables."""
    payload = client.request("POST", "/export-plots",
                             json={"run_dir": run_dir, "output_dir": output_dir})
    click.echo(f"seeds: {payload['seeds']}")
    for metric, path in payload["tables"].items():
        click.echo(f"  {metric}: {path}")


if __name__ == "__main__":
    main()
