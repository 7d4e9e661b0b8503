"""Thin-client CLI for the compliance-checking service.

Every subcommand reads local files, posts one request to the service API, and
writes the response artifacts to disk. By default the service runs in-process
(no sockets, fully offline); pass ``--server URL`` to target a running
deployment instead. Exit code 0 means the requested artifact set was fully
produced.
"""

from __future__ import annotations

import asyncio
import json
import sys
from pathlib import Path

import click
import httpx

from . import __version__


def _post(path: str, payload: dict, server: str | None) -> dict:
    """POST to a remote server or to an in-process service instance."""
    if server is not None:
        try:
            response = httpx.post(server.rstrip("/") + path, json=payload, timeout=600.0)
        except httpx.HTTPError as exc:
            raise click.ClickException(f"cannot reach server {server}: {exc}") from exc
    else:
        from .service import create_app

        async def go() -> httpx.Response:
            transport = httpx.ASGITransport(app=create_app())
            async with httpx.AsyncClient(transport=transport,
                                         base_url="http://complyscan.local",
                                         timeout=600.0) as client:
                return await client.post(path, json=payload)

        response = asyncio.run(go())

    if response.status_code != 200:
        try:
            detail = response.json().get("detail", response.text)
        except ValueError:
            detail = response.text
        raise click.ClickException(f"{path} failed (HTTP {response.status_code}): {detail}")
    return response.json()


def _read(path: str | Path, what: str) -> str:
    p = Path(path)
    if not p.is_file():
        raise click.ClickException(f"{what} file not found: {p}")
    return p.read_text(encoding="utf-8")


def _write(path: Path, content: str | bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(content, bytes):
        path.write_bytes(content)
    else:
        path.write_text(content, encoding="utf-8")


server_option = click.option("--server", default=None, metavar="URL",
                             help="Base URL of a running service; default runs in-process.")


@click.group()
@click.version_option(version=__version__, prog_name="complyscan")
def main() -> None:
    """Check regulatory artifacts against a compliance-rule catalog."""


@main.command()
@click.option("--input", "input_path", required=True, type=click.Path(), help="UTF-8 text file.")
@click.option("--out", "out_dir", required=True, type=click.Path(), help="Output directory.")
@click.option("--doc-id", default=None, help="Document id; defaults to the file stem.")
@click.option("--title", default=None, help="Document title; defaults to the file stem.")
@click.option("--token-limit", default=3000, show_default=True, type=int)
@server_option
def chunk(input_path: str, out_dir: str, doc_id: str | None, title: str | None,
          token_limit: int, server: str | None) -> None:
    """Segment a document into paragraph and sentence passages."""
    stem = Path(input_path).stem
    payload = {
        "doc_id": doc_id or stem,
        "title": title if title is not None else stem,
        "text": _read(input_path, "input"),
        "config": {"token_limit": token_limit},
    }
    result = _post("/v1/chunk", payload, server)

    out = Path(out_dir)
    for granularity in ("paragraph", "sentence"):
        rows = result[granularity + "s"]
        lines = [json.dumps(r, ensure_ascii=False, sort_keys=True) for r in rows]
        _write(out / f"passages.{granularity}.jsonl", "\n".join(lines) + ("\n" if lines else ""))
    click.echo(f"paragraphs: {result['paragraph_count']}")
    click.echo(f"sentences: {result['sentence_count']}")


@main.command()
@click.option("--input", "input_path", required=True, type=click.Path(), help="UTF-8 text file.")
@click.option("--out", "out_dir", required=True, type=click.Path(), help="Output directory.")
@click.option("--granularity", type=click.Choice(["sentence", "paragraph", "both"]),
              default="paragraph", show_default=True)
@click.option("--doc-id", default=None)
@click.option("--title", default=None)
@click.option("--catalog", "catalog_path", default=None, type=click.Path(),
              help="Rule catalog (JSONL); defaults to the bundled GDPR/DPA catalog.")
@click.option("--template", "template_path", default=None, type=click.Path(),
              help="Template file overriding the built-in template of its variant.")
@click.option("--provider", "provider_name", default="mock", show_default=True,
              help="'mock' for the offline backend, else an HTTP chat provider name.")
@click.option("--model", "model_id", default="mock-model", show_default=True)
@click.option("--endpoint", default="", help="Chat-completion endpoint URL (HTTP providers).")
@click.option("--api-key-env", default="OPENAI_API_KEY", show_default=True,
              help="Environment variable holding the API key (HTTP providers).")
@click.option("--temperature", default=0.2, show_default=True, type=float)
@click.option("--max-in-flight", default=4, show_default=True, type=int)
@click.option("--requests-per-minute", default=None, type=int)
@click.option("--mock-fixture", "mock_fixture_path", default=None, type=click.Path(),
              help="Mock provider fixture (JSON).")
@click.option("--rates", "rates_path", default=None, type=click.Path(),
              help="Rate table for the usage footer; defaults to the bundled table.")
@click.option("--token-limit", default=3000, show_default=True, type=int)
@click.option("--fixed-clock", is_flag=True, default=False,
              help="Use a constant timestamp so report bytes are reproducible.")
@server_option
def check(input_path: str, out_dir: str, granularity: str, doc_id: str | None,
          title: str | None, catalog_path: str | None, template_path: str | None,
          provider_name: str, model_id: str, endpoint: str, api_key_env: str,
          temperature: float, max_in_flight: int, requests_per_minute: int | None,
          mock_fixture_path: str | None, rates_path: str | None, token_limit: int,
          fixed_clock: bool, server: str | None) -> None:
    """Run the full pipeline and write compliance reports."""
    stem = Path(input_path).stem
    provider = {
        "provider_name": provider_name,
        "model_id": model_id,
        "endpoint": endpoint,
        "api_key_env": api_key_env,
        "temperature": temperature,
        "max_in_flight": max_in_flight,
        "requests_per_minute": requests_per_minute,
    }
    if mock_fixture_path is not None:
        try:
            provider["mock_responses"] = json.loads(_read(mock_fixture_path, "mock fixture"))
        except json.JSONDecodeError as exc:
            raise click.ClickException(f"mock fixture is not valid JSON: {exc}") from exc

    payload = {
        "doc_id": doc_id or stem,
        "title": title if title is not None else stem,
        "text": _read(input_path, "input"),
        "granularity": granularity,
        "catalog_text": _read(catalog_path, "catalog") if catalog_path else None,
        "catalog_id": Path(catalog_path).stem if catalog_path else "catalog",
        "template_text": _read(template_path, "template") if template_path else None,
        "chunk_config": {"token_limit": token_limit},
        "provider": provider,
        "rates_text": _read(rates_path, "rate table") if rates_path else None,
        "fixed_clock": fixed_clock,
    }
    result = _post("/v1/check", payload, server)

    out = Path(out_dir)
    all_failed = []
    for run in result["runs"]:
        g = run["granularity"]
        _write(out / f"report.{g}.machine.json", run["machine_report"].encode("utf-8"))
        _write(out / f"report.{g}.human.txt", run["human_report"])
        _write(out / f"verdicts.{g}.jsonl", run["verdicts_jsonl"])
        _write(out / f"ledger.{g}.csv", run["ledger_csv"])
        n = len(run["verdicts"])
        failed = sum(1 for v in run["verdicts"] if v["error"])
        all_failed.append(n > 0 and failed == n)
        status = "complete" if run["complete"] else f"INCOMPLETE ({failed} of {n} passages failed)"
        click.echo(f"{g}: {n} passages, {status}")

    if result.get("rollup_comparison") is not None:
        _write(out / "ablation.json",
               json.dumps(result["rollup_comparison"], indent=2, sort_keys=True) + "\n")

    if all_failed and all(all_failed):
        raise click.ClickException("no passage completed successfully in any run")


@main.command()
@click.option("--gold", "gold_path", required=True, type=click.Path(),
              help="Gold labels: 'passage_id,id;id;...' per line.")
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--catalog", "catalog_path", default=None, type=click.Path())
@click.option("--run", "native_runs", multiple=True, metavar="MODEL:GRANULARITY:PATH",
              help="Native predictions (verdicts JSONL from 'check'); repeatable.")
@click.option("--external", "external_runs", multiple=True, metavar="MODEL:GRANULARITY:PATH",
              help="External predictions in the gold line format; repeatable.")
@server_option
def evaluate(gold_path: str, out_dir: str, catalog_path: str | None,
             native_runs: tuple[str, ...], external_runs: tuple[str, ...],
             server: str | None) -> None:
    """Score prediction runs against gold labels."""
    if not native_runs and not external_runs:
        raise click.ClickException("provide at least one --run or --external")

    def parse_run_spec(spec: str, fmt: str) -> dict:
        parts = spec.split(":", 2)
        if len(parts) != 3 or parts[1] not in ("sentence", "paragraph"):
            raise click.ClickException(
                f"bad run spec {spec!r}; expected MODEL:sentence|paragraph:PATH")
        model, granularity, path = parts
        return {
            "model": model,
            "granularity": granularity,
            "predictions_text": _read(path, "predictions"),
            "format": fmt,
        }

    payload = {
        "gold_text": _read(gold_path, "gold"),
        "catalog_text": _read(catalog_path, "catalog") if catalog_path else None,
        "catalog_id": Path(catalog_path).stem if catalog_path else "catalog",
        "runs": ([parse_run_spec(s, "verdicts_jsonl") for s in native_runs]
                 + [parse_run_spec(s, "external") for s in external_runs]),
    }
    result = _post("/v1/evaluate", payload, server)

    out = Path(out_dir)
    for run in result["runs"]:
        stem = f"metrics.{run['model']}.{run['granularity']}"
        _write(out / f"{stem}.json", json.dumps(run["metrics"], indent=2, sort_keys=True) + "\n")
        _write(out / f"{stem}.txt", run["table"] + "\n")
    if result.get("accuracy_table"):
        _write(out / "accuracy_table.txt", result["accuracy_table"] + "\n")
        click.echo(result["accuracy_table"])
    for ablation in result.get("ablations", []):
        _write(out / f"ablation.{ablation['model']}.json",
               json.dumps(ablation, indent=2, sort_keys=True) + "\n")


@main.command()
@click.option("--ledger", "ledger_path", required=True, type=click.Path(),
              help="Usage ledger CSV written by 'check'.")
@click.option("--rates", "rates_path", default=None, type=click.Path(),
              help="Rate table JSON; defaults to the bundled table.")
@click.option("--provider", "provider_name", required=True)
@click.option("--model", "model_id", required=True)
@click.option("--out", "out_dir", default=None, type=click.Path())
@server_option
def cost(ledger_path: str, rates_path: str | None, provider_name: str, model_id: str,
         out_dir: str | None, server: str | None) -> None:
    """Estimate run cost and throughput from a usage ledger."""
    payload = {
        "ledger_csv": _read(ledger_path, "ledger"),
        "rates_text": _read(rates_path, "rate table") if rates_path else None,
        "provider_name": provider_name,
        "model_id": model_id,
    }
    result = _post("/v1/cost", payload, server)
    click.echo(f"model: {result['provider_name']}/{result['model_id']}")
    click.echo(f"prompt tokens: {result['prompt_tokens']}")
    click.echo(f"completion tokens: {result['completion_tokens']}")
    if result["protocol_overhead_tokens"]:
        click.echo(f"protocol overhead tokens: {result['protocol_overhead_tokens']}")
    click.echo(f"estimated cost: {result['cost']} {result['currency']}")
    click.echo(f"mean latency: {result['mean_latency_seconds']:.3f} s/passage")
    click.echo(f"projected throughput: {result['passages_per_hour']:.0f} passages/hour")
    if out_dir is not None:
        _write(Path(out_dir) / "cost.json", json.dumps(result, indent=2, sort_keys=True) + "\n")


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True, type=int)
def serve(host: str, port: int) -> None:
    """Run the service with uvicorn."""
    import uvicorn

    uvicorn.run("complyscan.service:app", host=host, port=port)


if __name__ == "__main__":
    main()
