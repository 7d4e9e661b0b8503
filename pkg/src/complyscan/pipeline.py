"""End-to-end orchestration: chunk -> prompt -> complete -> parse -> report.

Granularity selects how prompts are built, not what gets scored: the unit of
analysis is always the sentence, so sentence-level and paragraph-level runs
share one gold universe and can be compared head to head. ``sentence`` sends
each sentence alone; ``paragraph`` sends each sentence embedded in its parent
paragraph. Classifying whole paragraphs (one verdict per paragraph) remains
available through ``build_prompt`` directly with a paragraph target.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timezone

from .accounting import RateTable, UsageLedger, UsageRecord
from .corpus import ChunkConfig, Passage, RegulatoryArtifact, chunk_document, enforce_token_limit
from .prompting import ChatPrompt, PromptTemplate, PromptVariant, build_prompt, default_templates
from .providers import Provider
from .reporting import (
    ComplianceReport,
    FIXED_CLOCK_TIMESTAMP,
    RunMetadata,
    assemble_report,
)
from .rules import RuleCatalog
from .verdicts import ParseStatus, Verdict, parse_response, validate_verdict

GRANULARITIES = ("sentence", "paragraph")


class PipelineError(Exception):
    pass


@dataclass(frozen=True)
class CheckRun:
    """Everything one granularity run produced."""

    granularity: str
    report: ComplianceReport
    verdicts: tuple[Verdict, ...]
    ledger: UsageLedger
    complete: bool


def _timestamp(fixed_clock: bool) -> str:
    if fixed_clock:
        return FIXED_CLOCK_TIMESTAMP
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def build_prompts_for_run(
    granularity: str,
    paragraphs: list[Passage],
    sentences: list[Passage],
    catalog: RuleCatalog,
    templates: tuple[PromptTemplate, PromptTemplate] | None = None,
) -> tuple[list[ChatPrompt], list[Passage]]:
    """Prompts plus the target passages they assess, in document order."""
    sentence_tmpl, paragraph_tmpl = templates or default_templates()
    paragraphs_by_id = {p.passage_id: p for p in paragraphs}

    prompts: list[ChatPrompt] = []
    if granularity == "sentence":
        for s in sentences:
            prompts.append(build_prompt(sentence_tmpl, catalog, s))
    elif granularity == "paragraph":
        for s in sentences:
            parent = paragraphs_by_id.get(s.parent_paragraph_id or "")
            if parent is None:
                raise PipelineError(f"sentence {s.passage_id} has no parent paragraph")
            prompts.append(build_prompt(paragraph_tmpl, catalog, s, context=parent))
    else:
        raise PipelineError(f"unknown granularity {granularity!r}; expected one of {GRANULARITIES}")
    return prompts, list(sentences)


def run_check(
    artifact: RegulatoryArtifact,
    catalog: RuleCatalog,
    provider: Provider,
    granularity: str,
    chunk_config: ChunkConfig | None = None,
    templates: tuple[PromptTemplate, PromptTemplate] | None = None,
    rates: RateTable | None = None,
    fixed_clock: bool = False,
) -> CheckRun:
    """Run the full pipeline for one granularity over one document."""
    cfg = chunk_config or ChunkConfig()
    paragraphs, sentences = chunk_document(artifact, cfg)
    sentences = [enforce_token_limit(s, cfg.token_limit, provider.token_counter, cfg)
                 for s in sentences]
    paragraphs = [enforce_token_limit(p, cfg.token_limit, provider.token_counter, cfg)
                  for p in paragraphs]

    tmpl_pair = templates or default_templates()
    used_template = tmpl_pair[0] if granularity == "sentence" else tmpl_pair[1]
    meta_base = dict(
        provider_name=provider.cfg.provider_name,
        model_id=provider.cfg.model_id,
        template_id=used_template.template_id,
        catalog_id=catalog.catalog_id,
        granularity=granularity,
        timestamp=_timestamp(fixed_clock),
    )

    if not sentences:
        meta = RunMetadata(**meta_base, complete=True)
        return CheckRun(
            granularity=granularity,
            report=assemble_report(artifact, [], [], catalog, UsageLedger(), meta, rates=rates),
            verdicts=(),
            ledger=UsageLedger(),
            complete=True,
        )

    prompts, targets = build_prompts_for_run(granularity, paragraphs, sentences,
                                             catalog, tmpl_pair)
    results = provider.complete_batch(prompts)

    ledger = UsageLedger()
    verdicts: list[Verdict] = []
    errors: dict[str, str] = {}
    for target, result in zip(targets, results):
        ledger.add(UsageRecord(
            passage_id=target.passage_id,
            prompt_tokens=result.prompt_tokens,
            completion_tokens=result.completion_tokens,
            latency_seconds=result.latency_seconds,
            total_tokens_reported=result.total_tokens_reported,
        ))
        if result.error is not None:
            errors[target.passage_id] = result.error
            verdicts.append(Verdict(
                passage_id=target.passage_id,
                satisfied_rule_ids=frozenset(),
                justification="",
                raw_response="",
                parse_status=ParseStatus.FAILED,
            ))
        else:
            verdicts.append(validate_verdict(
                parse_response(result.text, catalog, target.passage_id), catalog))

    complete = not errors
    meta = RunMetadata(**meta_base, complete=complete)
    report = assemble_report(artifact, targets, verdicts, catalog, ledger, meta,
                             errors=errors, rates=rates)
    return CheckRun(granularity=granularity, report=report, verdicts=tuple(verdicts),
                    ledger=ledger, complete=complete)


@dataclass(frozen=True)
class RollupComparison:
    """Which rules each granularity's rollup marked satisfied (no gold needed)."""

    satisfied_sentence: tuple[int, ...]
    satisfied_paragraph: tuple[int, ...]
    only_sentence: tuple[int, ...]
    only_paragraph: tuple[int, ...]
    satisfied_both: tuple[int, ...]


def compare_rollups(sentence_run: CheckRun, paragraph_run: CheckRun) -> RollupComparison:
    def satisfied(run: CheckRun) -> set[int]:
        return {r.rule_id for r in run.report.rollup
                if r.status.value == "satisfied_somewhere"}

    s, p = satisfied(sentence_run), satisfied(paragraph_run)
    return RollupComparison(
        satisfied_sentence=tuple(sorted(s)),
        satisfied_paragraph=tuple(sorted(p)),
        only_sentence=tuple(sorted(s - p)),
        only_paragraph=tuple(sorted(p - s)),
        satisfied_both=tuple(sorted(s & p)),
    )
