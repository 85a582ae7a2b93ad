"""Command-line client for the gasket-ids service.

By default the CLI talks to an in-process instance of the FastAPI app (no
network); --server points it at a running instance instead. The CLI holds no
logic of its own: every command is a request to the service.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import httpx


def _client(server: str | None) -> httpx.Client:
    if server:
        return httpx.Client(base_url=server, timeout=None)
    from fastapi.testclient import TestClient

    from .service import app
    return TestClient(app)


def _fail(resp: httpx.Response):
    try:
        detail = resp.json().get("detail", resp.text)
    except ValueError:
        detail = resp.text
    raise click.ClickException(f"service error ({resp.status_code}): {detail}")


@click.group()
@click.option("--server", default=None, metavar="URL",
              help="Base URL of a running service (default: in-process).")
@click.pass_context
def main(ctx, server):
    """Numerical laboratory for the IDS of subordinate walks on the gasket."""
    ctx.obj = server


@main.command("run")
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--threads", default=1, show_default=True, type=int)
@click.option("--out", default=None, type=click.Path(file_okay=False))
@click.pass_context
def run_cmd(ctx, config_path, threads, out):
    """Run an experiment from a TOML config file."""
    from .experiments import load_config
    cfg = load_config(config_path)
    payload = cfg.model_dump()
    payload["threads"] = threads
    if out:
        payload["out"] = out
    with _client(ctx.obj) as client:
        resp = client.post("/run", json=payload)
    if resp.status_code != 200:
        _fail(resp)
    body = resp.json()
    click.echo(f"config hash: {body['config_hash']}")
    violated = [r for r in body["summary_rows"] if r["flag"] == "violated"]
    for row in body["summary_rows"]:
        click.echo(f"  {row['key']} = {row['value']}"
                   + (f"  [{row['flag']}]" if row["flag"] else ""))
    for path in body["written"]:
        click.echo(f"wrote {path}")
    if violated:
        sys.exit(1)


@main.command("check-profile")
@click.option("--spec", "spec_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.pass_context
def check_profile_cmd(ctx, spec_path):
    """Check (W2)/(W3) for a profile spec given as a JSON or TOML file."""
    raw = Path(spec_path).read_bytes()
    try:
        payload = json.loads(raw)
    except ValueError:
        try:
            import tomllib
        except ModuleNotFoundError:
            import tomli as tomllib
        payload = tomllib.loads(raw.decode())
    if "profile" not in payload:
        payload = {"profile": payload}
    with _client(ctx.obj) as client:
        resp = client.post("/check-profile", json=payload)
    if resp.status_code != 200:
        _fail(resp)
    body = resp.json()
    click.echo(f"W3 holds: {body['w3_holds']}")
    if not body["w3_holds"]:
        click.echo(f"witness: {body['w3_witnesses'][0]}")
    click.echo(f"W2 terms: {body['w2_terms']}")
    click.echo(f"W2 convergent trend: {body['w2_convergent_trend']}")
    if not (body["w3_holds"] and body["w2_convergent_trend"]):
        sys.exit(1)


@main.command("mesh")
@click.option("--M", "M", required=True, type=int)
@click.option("--n", "n", required=True, type=int)
@click.option("--emit-json", is_flag=True, default=False)
@click.pass_context
def mesh_cmd(ctx, M, n, emit_json):
    """Build the G_M mesh at level n; --emit-json prints the full mesh."""
    with _client(ctx.obj) as client:
        resp = client.post("/mesh", json={"M": M, "n": n})
    if resp.status_code != 200:
        _fail(resp)
    body = resp.json()
    if emit_json:
        click.echo(json.dumps(body, sort_keys=True))
    else:
        click.echo(f"M={body['M']} n={body['n']} "
                   f"vertices={len(body['vertices'])} "
                   f"edges={len(body['edges'])}")


if __name__ == "__main__":
    main()
