"""Command-line client for the experiment runners.

The CLI validates a JSON config, runs the experiment either in-process or
against a running service (--server), and writes report.json plus the
tabular outputs into the chosen directory.

Exit codes: 0 success (for verify: all checks passed), 1 verification
failures, 2 configuration error, 3 data error.
"""

from __future__ import annotations

import csv
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

import click
from pydantic import ValidationError

from .config import parse_experiment_config
from .digits_data import DataError

EXIT_OK = 0
EXIT_SUITE_FAILED = 1
EXIT_CONFIG = 2
EXIT_DATA = 3

_ENDPOINTS = {
    "digits": "/experiments/digits",
    "entanglement": "/experiments/entanglement",
    "equivalence-suite": "/experiments/verify",
}


def _load_config(path: str, task: str, seed, out_dir):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        click.echo(f"config error: cannot read {path}: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    except json.JSONDecodeError as exc:
        click.echo(f"config error: {path} is not valid JSON: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    if not isinstance(raw, dict):
        click.echo("config error: top-level JSON value must be an object", err=True)
        sys.exit(EXIT_CONFIG)
    declared = raw.setdefault("task", task)
    if declared != task:
        click.echo(f"config error: config task {declared!r} does not match command {task!r}", err=True)
        sys.exit(EXIT_CONFIG)
    if seed is not None:
        raw["seed"] = seed
    if out_dir is not None:
        raw["out_dir"] = str(out_dir)
    try:
        return parse_experiment_config(raw)
    except ValidationError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)


def _run(cfg, server: str | None) -> dict:
    if server is None:
        from .experiments import run_experiment

        return run_experiment(cfg)
    import httpx

    url = server.rstrip("/") + _ENDPOINTS[cfg.task]
    response = httpx.post(url, json=json.loads(cfg.model_dump_json()), timeout=None)
    if response.status_code != 200:
        raise DataError(f"server returned {response.status_code}: {response.text[:500]}")
    return response.json()


def _write_csv(path: Path, rows: list[dict]) -> None:
    if not rows:
        return
    fieldnames = list(rows[0].keys())
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# generated {datetime.now(timezone.utc).isoformat()}\n")
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def _emit(result: dict, out_dir: str | None) -> None:
    out = Path(out_dir) if out_dir else Path.cwd()
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "report.json", "w", encoding="utf-8") as fh:
        json.dump(result["report"], fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_csv(out / "metrics.csv", result.get("metrics") or [])
    _write_csv(out / "training.csv", result.get("training") or [])
    _write_csv(out / "trajectories.csv", result.get("trajectories") or [])
    if result.get("checkpoint"):
        with open(out / "checkpoint.json", "w", encoding="utf-8") as fh:
            json.dump(result["checkpoint"], fh)
            fh.write("\n")
    click.echo(f"wrote report.json and metrics to {out}")


def _execute(task: str, config: str, seed, out, server) -> None:
    cfg = _load_config(config, task, seed, out)
    try:
        result = _run(cfg, server)
    except DataError as exc:
        click.echo(f"data error: {exc}", err=True)
        sys.exit(EXIT_DATA)
    _emit(result, cfg.out_dir)
    if task == "equivalence-suite" and not result["report"].get("all_passed", False):
        click.echo("verification failures present", err=True)
        sys.exit(EXIT_SUITE_FAILED)
    sys.exit(EXIT_OK)


@click.group()
def main():
    """Hybrid quantum residual network toolchain."""


_shared = [
    click.option("--config", required=True, type=click.Path(), help="JSON config file"),
    click.option("--seed", type=int, default=None, help="override the config seed"),
    click.option("--out", type=click.Path(), default=None, help="output directory"),
    click.option("--server", default=None, help="service base URL (default: run in-process)"),
]


def _with_shared(fn):
    for option in reversed(_shared):
        fn = option(fn)
    return fn


@main.command()
@_with_shared
def digits(config, seed, out, server):
    """Digit recognition: classical training, reconstruction, shot sweep."""
    _execute("digits", config, seed, out, server)


@main.command()
@_with_shared
def entangle(config, seed, out, server):
    """Entanglement classification depth sweep."""
    _execute("entanglement", config, seed, out, server)


@main.command()
@_with_shared
def verify(config, seed, out, server):
    """Cross-module verification suites."""
    _execute("equivalence-suite", config, seed, out, server)


@main.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", default=8000, type=int)
def serve(host, port):
    """Start the HTTP service."""
    import uvicorn

    uvicorn.run("hqrn.service.app:app", host=host, port=port)


if __name__ == "__main__":
    main()
