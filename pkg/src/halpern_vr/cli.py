"""Command-line client for the benchmark service.

``run`` posts the experiment to the HTTP service (an in-process instance
of the bundled FastAPI app by default, or ``--server URL``) and writes the
returned traces as CSV plus a JSON metadata sidecar.  ``plot`` renders one
or more trace CSVs locally.

Exit codes: 0 success, 2 configuration error, 3 numerical divergence.
"""

from __future__ import annotations

import asyncio
import sys
from typing import Dict, Optional, Tuple

import click
import httpx

from . import harness
from .core import TraceRecord

CONFIG_EXIT = 2
DIVERGENCE_EXIT = 3


def _post_experiment(server: Optional[str], payload: Dict[str, object]) -> httpx.Response:
    if server:
        with httpx.Client(base_url=server, timeout=None) as client:
            return client.post("/experiments", json=payload)

    from .service import app  # imported lazily; only the client path needs it

    async def call() -> httpx.Response:
        transport = httpx.ASGITransport(app=app)
        async with httpx.AsyncClient(
            transport=transport, base_url="http://halpern-vr.local", timeout=None
        ) as client:
            return await client.post("/experiments", json=payload)

    return asyncio.run(call())


@click.group()
def main() -> None:
    """Benchmark runner for variance-reduced monotone-inclusion solvers."""


@main.command("run")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None, help="Flat key=value experiment file; command-line flags override it.")
@click.option("--problem", type=str, default=None, help="matrix-game | ouyang-xu | synthetic-cocoercive")
@click.option("--algorithm", type=str, default=None, help="vr-halpern | inexact-halpern | vr-forb | eg")
@click.option("--m", type=int, default=None, help="Matrix size for the game / quadratic program.")
@click.option("--n", type=int, default=None, help="Component count for synthetic problems.")
@click.option("--d", type=int, default=None, help="Dimension for synthetic problems.")
@click.option("--theta", type=float, default=None, help="Decay parameter of the game matrix.")
@click.option("--problem-seed", type=int, default=None, help="Seed for the problem-generation stream.")
@click.option("--seed", type=int, default=None, help="Single solver seed (shorthand for --seeds).")
@click.option("--seeds", type=str, default=None, help="Comma-separated solver seeds.")
@click.option("--epochs", type=float, default=None, help="Oracle budget in epochs.")
@click.option("--eta", type=float, default=None, help="Step override for the anchored solvers.")
@click.option("--tau", type=float, default=None, help="Step override for eg / vr-forb.")
@click.option("--sampling", type=str, default=None, help="uniform | importance")
@click.option("--inner-schedule", type=str, default=None, help="practical | theoretical")
@click.option("--c0", type=float, default=None, help="Constant of the practical inner schedule.")
@click.option("--log-stride", type=int, default=None, help="Iterations between trace records.")
@click.option("--out", type=click.Path(dir_okay=False), required=True, help="Output CSV path (metadata goes to <out>.meta.json).")
@click.option("--server", type=str, default=None, help="Base URL of a running service; defaults to an in-process instance.")
def run_command(config_path, out, server, seed, seeds, **flags) -> None:
    """Run one experiment and write its trace CSV."""
    values: Dict[str, object] = {}
    try:
        if config_path:
            values.update(harness.parse_config_file(config_path))
        for key, value in flags.items():
            if value is not None:
                values[key] = value
        if seeds is not None:
            values["seeds"] = seeds
        elif seed is not None:
            values["seeds"] = [seed]
        config = harness.config_from_mapping(values)
    except harness.ConfigError as exc:
        click.echo(f"configuration error: {exc}", err=True)
        sys.exit(CONFIG_EXIT)

    request = {k: v for k, v in values.items()}
    request["seeds"] = config.seeds
    request.pop("out", None)

    response = _post_experiment(server, request)
    if response.status_code in (400, 422):
        click.echo(f"configuration error: {response.text}", err=True)
        sys.exit(CONFIG_EXIT)
    if response.status_code == 409:
        click.echo(f"numerical divergence: {response.text}", err=True)
        sys.exit(DIVERGENCE_EXIT)
    response.raise_for_status()

    payload = response.json()
    runs = [
        (
            entry["seed"],
            [
                TraceRecord(
                    iteration=r["iteration"],
                    oracle_epochs=r["oracle_epochs"],
                    residual=r["residual"],
                    elapsed_ms=r["elapsed_ms"],
                )
                for r in entry["records"]
            ],
        )
        for entry in payload["runs"]
    ]
    result = harness.ExperimentResult(
        config=config, metadata=payload["metadata"], runs=runs
    )
    csv_path, meta_path = harness.save_result(result, out)
    click.echo(f"wrote {csv_path} and {meta_path}")


@main.command("plot")
@click.option("--in", "in_paths", type=click.Path(exists=True, dir_okay=False), multiple=True, required=True, help="Trace CSV (repeatable).")
@click.option("--out", type=click.Path(dir_okay=False), required=True, help="Output image path (.svg/.pdf vector formats).")
def plot_command(in_paths: Tuple[str, ...], out: str) -> None:
    """Render residual-vs-epochs curves from trace CSVs."""
    try:
        harness.emit_plot(list(in_paths), out)
    except ValueError as exc:
        click.echo(f"plot error: {exc}", err=True)
        sys.exit(CONFIG_EXIT)
    click.echo(f"wrote {out}")


if __name__ == "__main__":
    main()
