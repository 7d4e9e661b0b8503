"""FastAPI service wrapping the compliance pipeline.

Endpoints mirror the CLI subcommands: /v1/chunk, /v1/check, /v1/evaluate,
/v1/cost, plus /health. All domain failures surface as HTTP 400 with a
human-readable detail string.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from . import __version__, schemas
from .accounting import (
    AccountingError,
    RateTable,
    UsageLedger,
    builtin_rate_table,
    estimate_cost,
    parse_rate_table,
    throughput_report,
)
from .corpus import (
    ChunkConfig,
    CorpusError,
    Passage,
    TruncationPolicy,
    chunk_document,
    ingest_text,
)
from .evaluation import (
    EvaluationError,
    MetricsSummary,
    ablation_compare,
    format_metrics_table,
    metrics_to_dict,
    parse_external_predictions,
    parse_gold,
    score,
)
from .pipeline import CheckRun, PipelineError, compare_rollups, run_check
from .prompting import PromptError, PromptVariant, default_templates, parse_template
from .providers import ProviderConfig, ProviderError, build_provider
from .reporting import ReportError, render_report
from .rules import CatalogError, RuleCatalog, builtin_catalog, parse_catalog
from .verdicts import Verdict, VerdictFormatError, parse_verdicts_jsonl, verdicts_to_jsonl

DOMAIN_ERRORS = (
    AccountingError,
    CatalogError,
    CorpusError,
    EvaluationError,
    PipelineError,
    PromptError,
    ProviderError,
    ReportError,
    VerdictFormatError,
    ValueError,
)


def _chunk_config(options: schemas.ChunkOptions) -> ChunkConfig:
    return ChunkConfig(
        heading_max_length=options.heading_max_length,
        heading_numbering_enabled=options.heading_numbering_enabled,
        heading_exclude_terminal_punct=options.heading_exclude_terminal_punct,
        heading_capitalized_ratio=options.heading_capitalized_ratio,
        token_limit=options.token_limit,
        truncation_policy=TruncationPolicy(options.truncation_policy),
    )


def _passage_model(p: Passage) -> schemas.PassageModel:
    return schemas.PassageModel(
        passage_id=p.passage_id,
        doc_id=p.doc_id,
        granularity=p.granularity.value,
        text=p.text,
        start=p.char_span[0],
        end=p.char_span[1],
        ordinal=p.ordinal,
        parent_paragraph_id=p.parent_paragraph_id,
        truncated=p.truncated,
    )


def _catalog_from(text: str | None, catalog_id: str) -> RuleCatalog:
    if text is None:
        return builtin_catalog()
    return parse_catalog(text, catalog_id=catalog_id)


def _rates_from(text: str | None) -> RateTable:
    if text is None:
        return builtin_rate_table()
    return parse_rate_table(text)


def _verdict_model(v: Verdict, error: str | None = None) -> schemas.VerdictModel:
    return schemas.VerdictModel(
        passage_id=v.passage_id,
        satisfied_rule_ids=sorted(v.satisfied_rule_ids),
        justification=v.justification,
        parse_status=v.parse_status.value,
        warnings=list(v.warnings),
        error=error,
    )


def _run_model(run: CheckRun) -> schemas.CheckRunModel:
    errors = {f.passage_id: f.error for f in run.report.findings if f.error}
    return schemas.CheckRunModel(
        granularity=run.granularity,
        complete=run.complete,
        machine_report=render_report(run.report, "machine").decode("utf-8"),
        human_report=render_report(run.report, "human").decode("utf-8"),
        verdicts=[_verdict_model(v, errors.get(v.passage_id)) for v in run.verdicts],
        verdicts_jsonl=verdicts_to_jsonl(list(run.verdicts)),
        ledger_csv=run.ledger.to_csv(),
    )


def _metrics_model(summary: MetricsSummary) -> schemas.MetricsModel:
    payload = metrics_to_dict(summary)
    return schemas.MetricsModel(**payload)


def format_accuracy_table(rows: dict[str, dict[str, float | None]]) -> str:
    """Model x granularity mean-accuracy table (percent)."""
    lines = [f"{'Model':<30} {'Sentence (%)':>14} {'Paragraph (%)':>14}"]
    for model in sorted(rows):
        cells = []
        for granularity in ("sentence", "paragraph"):
            value = rows[model].get(granularity)
            cells.append(f"{value * 100:.1f}" if value is not None else "-")
        lines.append(f"{model:<30} {cells[0]:>14} {cells[1]:>14}")
    return "\n".join(lines)


def create_app() -> FastAPI:
    app = FastAPI(title="complyscan", version=__version__)

    async def domain_error_handler(request: Request, exc: Exception) -> JSONResponse:
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    for exc_type in DOMAIN_ERRORS:
        app.add_exception_handler(exc_type, domain_error_handler)

    @app.get("/health", response_model=schemas.HealthResponse)
    def health() -> schemas.HealthResponse:
        return schemas.HealthResponse(status="ok", version=__version__)

    @app.post("/v1/chunk", response_model=schemas.ChunkResponse)
    def chunk(req: schemas.ChunkRequest) -> schemas.ChunkResponse:
        artifact = ingest_text(req.text, doc_id=req.doc_id, title=req.title)
        paragraphs, sentences = chunk_document(artifact, _chunk_config(req.config))
        return schemas.ChunkResponse(
            doc_id=artifact.doc_id,
            paragraph_count=len(paragraphs),
            sentence_count=len(sentences),
            paragraphs=[_passage_model(p) for p in paragraphs],
            sentences=[_passage_model(s) for s in sentences],
        )

    @app.post("/v1/check", response_model=schemas.CheckResponse)
    def check(req: schemas.CheckRequest) -> schemas.CheckResponse:
        artifact = ingest_text(req.text, doc_id=req.doc_id, title=req.title)
        catalog = _catalog_from(req.catalog_text, req.catalog_id)
        rates = _rates_from(req.rates_text)

        templates = list(default_templates())
        if req.template_text is not None:
            override = parse_template(req.template_text)
            slot = 0 if override.variant is PromptVariant.SENTENCE_LEVEL else 1
            templates[slot] = override

        spec = req.provider
        cfg = ProviderConfig(
            provider_name=spec.provider_name,
            model_id=spec.model_id,
            endpoint=spec.endpoint,
            api_key_env=spec.api_key_env,
            temperature=spec.temperature,
            max_output_tokens=spec.max_output_tokens,
            request_timeout=spec.request_timeout,
            max_attempts=spec.max_attempts,
            backoff_base=spec.backoff_base,
            max_in_flight=spec.max_in_flight,
            requests_per_minute=spec.requests_per_minute,
        )
        provider = build_provider(cfg, mock_fixture=spec.mock_responses)

        wanted = ["sentence", "paragraph"] if req.granularity == "both" else [req.granularity]
        runs = [
            run_check(
                artifact,
                catalog,
                provider,
                granularity,
                chunk_config=_chunk_config(req.chunk_config),
                templates=(templates[0], templates[1]),
                rates=rates,
                fixed_clock=req.fixed_clock,
            )
            for granularity in wanted
        ]

        comparison = None
        if req.granularity == "both":
            rollups = compare_rollups(runs[0], runs[1])
            comparison = schemas.RollupComparisonModel(
                satisfied_sentence=list(rollups.satisfied_sentence),
                satisfied_paragraph=list(rollups.satisfied_paragraph),
                only_sentence=list(rollups.only_sentence),
                only_paragraph=list(rollups.only_paragraph),
                satisfied_both=list(rollups.satisfied_both),
            )

        return schemas.CheckResponse(
            doc_id=artifact.doc_id,
            runs=[_run_model(r) for r in runs],
            rollup_comparison=comparison,
        )

    @app.post("/v1/evaluate", response_model=schemas.EvaluateResponse)
    def evaluate(req: schemas.EvaluateRequest) -> schemas.EvaluateResponse:
        catalog = _catalog_from(req.catalog_text, req.catalog_id)
        gold = parse_gold(req.gold_text, catalog)

        results: list[schemas.EvaluateRunResult] = []
        summaries: dict[tuple[str, str], MetricsSummary] = {}
        for run in req.runs:
            if run.format == "external":
                predictions = parse_external_predictions(run.predictions_text, catalog)
            else:
                predictions = parse_verdicts_jsonl(run.predictions_text)
            summary = score(predictions, gold, catalog)
            summaries[(run.model, run.granularity)] = summary
            results.append(schemas.EvaluateRunResult(
                model=run.model,
                granularity=run.granularity,
                metrics=_metrics_model(summary),
                table=format_metrics_table(summary),
            ))

        table_rows: dict[str, dict[str, float | None]] = {}
        for (model, granularity), summary in summaries.items():
            table_rows.setdefault(model, {})[granularity] = summary.mean_accuracy
        accuracy_table = format_accuracy_table(table_rows) if table_rows else None

        ablations = []
        for model, cells in sorted(table_rows.items()):
            if "sentence" in cells and "paragraph" in cells:
                comparison = ablation_compare(summaries[(model, "sentence")],
                                              summaries[(model, "paragraph")])
                ablations.append(schemas.AblationModel(
                    model=model, deltas=comparison.deltas, improved=comparison.improved))

        return schemas.EvaluateResponse(runs=results, accuracy_table=accuracy_table,
                                        ablations=ablations)

    @app.post("/v1/cost", response_model=schemas.CostResponse)
    def cost(req: schemas.CostRequest) -> schemas.CostResponse:
        ledger = UsageLedger.from_csv(req.ledger_csv)
        rates = _rates_from(req.rates_text)
        amount = estimate_cost(ledger, rates, req.provider_name, req.model_id)
        throughput = throughput_report(ledger)
        return schemas.CostResponse(
            provider_name=req.provider_name,
            model_id=req.model_id,
            currency=rates.currency,
            cost=str(amount),
            prompt_tokens=ledger.prompt_tokens,
            completion_tokens=ledger.completion_tokens,
            protocol_overhead_tokens=ledger.protocol_overhead_tokens,
            mean_latency_seconds=throughput.mean_latency_seconds,
            passages_per_hour=throughput.passages_per_hour,
        )

    return app


app = create_app()

__all__ = ["app", "create_app", "format_accuracy_table", "verdicts_to_jsonl"]
