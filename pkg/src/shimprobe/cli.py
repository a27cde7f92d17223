"""Command-line client for the campaign service.

Every verb goes through the HTTP API: by default against an in-process
instance of the service (no network), or against a remote server with
--server. The exit code of `run` follows the pipeline contract: zero only
when all requested stages completed and, since the reference shim's
policy is always known ground truth, the recovered classification matched
it exactly.
"""

from __future__ import annotations

import json
import sys

import click


def _client(ctx):
    server = ctx.obj["server"]
    if server:
        import httpx

        return httpx.Client(base_url=server, timeout=600.0)
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DeprecationWarning)
        from fastapi.testclient import TestClient

    from .service import create_app

    return TestClient(create_app(ctx.obj["data_dir"]))


def _die(resp) -> None:
    if resp.status_code >= 400:
        try:
            detail = resp.json().get("detail", resp.text)
        except Exception:
            detail = resp.text
        click.echo(f"error ({resp.status_code}): {detail}", err=True)
        sys.exit(2)


@click.group()
@click.option("--server", default=None, metavar="URL",
              help="Remote service URL; default runs the service in-process.")
@click.option("--data-dir", default="sessions", show_default=True,
              help="Session store for the in-process service.")
@click.pass_context
def main(ctx, server, data_dir):
    """Syscall-interface analyzer for sandboxing middleware."""
    ctx.ensure_object(dict)
    ctx.obj["server"] = server
    ctx.obj["data_dir"] = data_dir


@main.command()
@click.option("--policy", "--preset", default="null", show_default=True,
              help="Preset name (null, libc-like, libos-like, hardened) or policy file path.")
@click.option("--backend", type=click.Choice(["mock", "tracer"]), default="mock", show_default=True)
@click.option("--stages", type=click.Choice(["1", "1+2", "1+2+3", "sfi"]), default="1+2+3",
              show_default=True)
@click.option("--seed", type=int, default=1, show_default=True)
@click.option("--method", type=click.Choice(["wrapper", "direct-trap"]), default="wrapper",
              show_default=True)
@click.option("--catalog", default=None, help="Alternate catalog file.")
@click.option("--rules", "mutation_rules", default=None, help="Mutation-rule file for stage 3.")
@click.option("--iterations", default=None, metavar="S1,S2,S3",
              help="Per-stage iteration counts, e.g. 6,10,6.")
@click.pass_context
def run(ctx, policy, backend, stages, seed, method, catalog, mutation_rules, iterations):
    """Run a staged campaign against the reference shim."""
    body = {
        "policy": policy,
        "backend": backend,
        "stages": stages,
        "seed": seed,
        "method": method,
        "catalog": catalog,
        "mutation_rules": mutation_rules,
    }
    if iterations:
        parts = [int(x) for x in iterations.split(",")]
        body["iterations"] = dict(zip(("stage1", "stage2", "stage3"), parts))
    with _client(ctx) as client:
        resp = client.post("/campaigns", json=body)
        _die(resp)
        manifest = resp.json()
        session = manifest["session"]
        click.echo(f"session {session}")
        report = client.get(f"/campaigns/{session}/report", params={"format": "text"})
        if report.status_code == 200:
            click.echo(report.text)
    summary = manifest["summary"]
    mismatches = summary.get("oracle_mismatches", [])
    if mismatches:
        click.echo(f"ORACLE MISMATCHES ({len(mismatches)}):", err=True)
        for m in mismatches:
            click.echo(f"  {m}", err=True)
        sys.exit(1)
    if summary.get("partial"):
        click.echo("session is partial", err=True)
        sys.exit(1)
    if stages == "sfi" and not summary.get("all_pass", False):
        sys.exit(1)


@main.command()
@click.argument("session")
@click.pass_context
def replay(ctx, session):
    """Re-run a recorded session; verify logs reproduce byte-identically."""
    with _client(ctx) as client:
        resp = client.post(f"/campaigns/{session}/replay")
        _die(resp)
        doc = resp.json()
    click.echo(f"verdict: {doc['verdict']}")
    if doc.get("reason"):
        click.echo(f"reason: {doc['reason']}")
    for d in doc.get("divergences") or []:
        click.echo(f"  {d['log']}:{d['line']} field {d['field']}: "
                   f"recorded={d.get('recorded')!r} replayed={d.get('replayed')!r}")
    sys.exit(0 if doc["verdict"] == "identical" else 1)


@main.command()
@click.argument("session")
@click.pass_context
def analyze(ctx, session):
    """Re-run the analysis pipeline over a session's existing logs."""
    with _client(ctx) as client:
        resp = client.post(f"/campaigns/{session}/analyze")
        _die(resp)
        doc = resp.json()
        report = client.get(f"/campaigns/{session}/report", params={"format": "text"})
        if report.status_code == 200:
            click.echo(report.text)
    mismatches = doc.get("oracle_mismatches", [])
    if mismatches:
        for m in mismatches:
            click.echo(f"mismatch: {m}", err=True)
        sys.exit(1)


@main.command()
@click.argument("session")
@click.option("--format", "fmt", type=click.Choice(["text", "json"]), default="text",
              show_default=True)
@click.pass_context
def report(ctx, session, fmt):
    """Print a session's report."""
    with _client(ctx) as client:
        resp = client.get(f"/campaigns/{session}/report", params={"format": fmt})
        _die(resp)
        if fmt == "text":
            click.echo(resp.text)
        else:
            click.echo(json.dumps(resp.json(), indent=2))


@main.command(name="sfi-verify")
@click.argument("program", type=click.Path(exists=True))
@click.option("--lower", type=str, default=None, help="Store window lower bound (hex ok).")
@click.option("--upper", type=str, default=None, help="Store window upper bound (hex ok).")
@click.pass_context
def sfi_verify(ctx, program, lower, upper):
    """Verify one instrumented program file; print the verdict."""
    body = {"program": open(program, "r", encoding="utf-8").read()}
    if lower or upper:
        bounds = {}
        if lower:
            bounds["lower"] = int(lower, 0)
        if upper:
            bounds["upper"] = int(upper, 0)
        body["bounds"] = bounds
    with _client(ctx) as client:
        resp = client.post("/sfi/verify", json=body)
        _die(resp)
        doc = resp.json()
    click.echo("ACCEPT" if doc["accept"] else "REJECT")
    for v in doc["violations"]:
        click.echo(f"  {v['kind']} at {v['site']}: {v['detail']}")
    sys.exit(0 if doc["accept"] else 1)


@main.command(name="sfi-corpus")
@click.pass_context
def sfi_corpus(ctx):
    """Run the attack corpus through the verifier; print the matrix."""
    with _client(ctx) as client:
        resp = client.get("/sfi/corpus")
        _die(resp)
        doc = resp.json()
    for row in doc["rows"]:
        mark = "OK " if row["pass"] else "FAIL"
        click.echo(f"{mark} {row['program']:<30} expect={row['expected']:<7} "
                   f"got={row['verdict']:<7} {','.join(row['violations']) or '-'}")
    click.echo("functionalities: " + json.dumps(doc["functionalities"]))
    sys.exit(0 if doc["all_pass"] else 1)


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8013, show_default=True)
@click.pass_context
def serve(ctx, host, port):
    """Run the campaign service as a network server."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(ctx.obj["data_dir"]), host=host, port=port)


if __name__ == "__main__":
    main()
