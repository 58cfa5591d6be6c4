"""
Command-line client. Every subcommand goes through the HTTP API: against a
remote server with ``--server URL``, otherwise against an in-process app
that writes artifacts straight into ``--out``.

Exit status: 0 when every declared tolerance passes, 2 on a tolerance
failure, 1 on any error (including config parse errors).
"""

from __future__ import annotations

import logging
import sys
import warnings
from pathlib import Path

import click
import httpx

EXIT_PASS, EXIT_ERROR, EXIT_FAIL = 0, 1, 2


def _client(server: str | None):
    if server:
        return httpx.Client(base_url=server, timeout=None), True
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        from fastapi.testclient import TestClient

    from .service.app import create_app

    return TestClient(create_app(allow_output_dir=True)), False


def _download(client, run: dict, out: Path) -> None:
    dest = out / Path(run["output_dir"]).name
    for name in run["artifacts"]:
        r = client.get(f"/runs/{run['id']}/artifacts/{name}")
        r.raise_for_status()
        path = dest / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(r.content)


def _print_run(run: dict) -> None:
    click.echo(f"run {run['id']} ({run['experiment']}): {run['status']}")
    for m in run["metrics"]:
        verdict = {True: "PASS", False: "FAIL", None: "    "}[m.get("pass")]
        click.echo(f"  {verdict} {m['name']} = {m['value']}  [{m['tolerance']}]")
    if run.get("error"):
        click.echo(f"  error: {run['error']}", err=True)
    click.echo(f"  artifacts: {run['output_dir']}")


def _submit(ctx: click.Context, config: str, kind: str | None, out: str | None, seed: int | None,
            grid: int | None) -> None:
    path = Path(config)
    try:
        text = path.read_bytes().decode("utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        click.echo(f"error: cannot read config {path}: {exc}", err=True)
        ctx.exit(EXIT_ERROR)
    server = ctx.obj["server"]
    client, remote = _client(server)
    body = {"config": text, "kind": kind, "seed": seed, "n": grid}
    if out is not None and not remote:
        body["output_dir"] = out
    try:
        with client:
            r = client.post("/runs", json=body)
            if r.status_code == 422:
                detail = r.json().get("detail")
                click.echo(f"error: {detail if isinstance(detail, str) else detail!r}", err=True)
                ctx.exit(EXIT_ERROR)
            r.raise_for_status()
            run = r.json()
            if remote and out is not None:
                _download(client, run, Path(out))
    except httpx.HTTPError as exc:
        click.echo(f"error: {exc}", err=True)
        ctx.exit(EXIT_ERROR)
    _print_run(run)
    ctx.exit({"pass": EXIT_PASS, "fail": EXIT_FAIL}.get(run["status"], EXIT_ERROR))


def _overrides(f):
    f = click.option("--grid", type=click.IntRange(min=8), default=None, help="Override grid size n.")(f)
    f = click.option("--seed", type=click.IntRange(0, 2**64 - 1), default=None, help="Override the seed.")(f)
    f = click.option("--out", type=click.Path(file_okay=False), default=None, help="Output directory.")(f)
    return click.argument("config", type=click.Path(dir_okay=False))(f)


@click.group()
@click.option("--server", envvar="THINFILM_SERVER", default=None, help="Base URL of a running thinfilm service.")
@click.option("-v", "--verbose", is_flag=True)
@click.pass_context
def main(ctx, server, verbose):
    """Pseudo-spectral thin-film laboratory."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(levelname)s %(message)s")
    ctx.ensure_object(dict)
    ctx.obj["server"] = server


@main.command()
@_overrides
@click.pass_context
def run(ctx, config, out, seed, grid):
    """Run the experiment named in CONFIG."""
    _submit(ctx, config, None, out, seed, grid)


for _name, _kind, _help in [
    ("verify", "verify", "Run the verification suite."),
    ("dissipation", "dissipation_sweep", "Sweep dissipation times over the amplitude ladder."),
    ("blowup", "blowup", "Negative-energy blow-up run and fit."),
    ("suppress", "suppress", "Suppression of blow-up along the shear amplitude ladder."),
]:
    def _make(kind):
        @_overrides
        @click.pass_context
        def cmd(ctx, config, out, seed, grid):
            _submit(ctx, config, kind, out, seed, grid)
        return cmd

    main.command(name=_name, help=_help)(_make(_kind))


@main.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", default=8000, type=int)
@click.option("--runs-dir", default="runs", type=click.Path(file_okay=False))
def serve(host, port, runs_dir):
    """Start the HTTP service."""
    import uvicorn

    from .service.app import create_app

    uvicorn.run(create_app(runs_dir), host=host, port=port)


if __name__ == "__main__":
    sys.exit(main())
