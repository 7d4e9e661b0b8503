"""Assemble per-passage verdicts into a document-level compliance report.

The rule rollup is existential: a rule counts as satisfied somewhere as soon
as one passage's verdict contains it, and every rule the catalog defines shows
up in the rollup exactly once — rules never satisfied anywhere are the
document's potential completeness gaps. Justifications pass through verbatim;
the report never paraphrases model output.

The machine format is canonical JSON (stable key order and separators), so
rendering is deterministic and render -> parse -> render is byte-identical.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from decimal import Decimal
from enum import Enum

from .accounting import RateTable, UsageLedger, estimate_cost, MissingRateError
from .corpus import Granularity, Passage, RegulatoryArtifact
from .rules import RuleCatalog
from .verdicts import ParseStatus, Verdict

SCHEMA_VERSION = 1

FIXED_CLOCK_TIMESTAMP = "1970-01-01T00:00:00+00:00"


class ReportError(Exception):
    pass


class RuleStatus(str, Enum):
    SATISFIED_SOMEWHERE = "satisfied_somewhere"
    NEVER_SATISFIED = "never_satisfied"


@dataclass(frozen=True)
class RunMetadata:
    provider_name: str
    model_id: str
    template_id: str
    catalog_id: str
    granularity: str
    timestamp: str
    complete: bool = True


@dataclass(frozen=True)
class PassageFinding:
    passage_id: str
    ordinal: int
    char_span: tuple[int, int]
    text: str
    satisfied_rule_ids: tuple[int, ...]
    justification: str
    parse_status: str
    warnings: tuple[str, ...] = ()
    error: str | None = None


@dataclass(frozen=True)
class RuleRollup:
    rule_id: int
    description: str
    status: RuleStatus
    witness_passage_ids: tuple[str, ...]


@dataclass(frozen=True)
class UsageSummary:
    passage_count: int
    prompt_tokens: int
    completion_tokens: int
    protocol_overhead_tokens: int
    total_latency_seconds: float
    estimated_cost: str | None = None
    currency: str | None = None


@dataclass(frozen=True)
class ComplianceReport:
    schema_version: int
    doc_id: str
    title: str
    meta: RunMetadata
    findings: tuple[PassageFinding, ...]
    rollup: tuple[RuleRollup, ...]
    usage: UsageSummary


def assemble_report(
    artifact: RegulatoryArtifact,
    passages: list[Passage],
    verdicts: list[Verdict],
    catalog: RuleCatalog,
    ledger: UsageLedger,
    meta: RunMetadata,
    errors: dict[str, str] | None = None,
    rates: RateTable | None = None,
) -> ComplianceReport:
    """Join verdicts with their passages and roll up rule coverage."""
    by_id = {p.passage_id: p for p in passages}
    errors = errors or {}

    findings = []
    witnesses: dict[int, list[str]] = {r.rule_id: [] for r in catalog.rules}
    for verdict in verdicts:
        passage = by_id.get(verdict.passage_id)
        if passage is None:
            raise ReportError(f"verdict references unknown passage {verdict.passage_id}")
        ids = tuple(sorted(verdict.satisfied_rule_ids))
        findings.append(PassageFinding(
            passage_id=passage.passage_id,
            ordinal=passage.ordinal,
            char_span=passage.char_span,
            text=passage.text,
            satisfied_rule_ids=ids,
            justification=verdict.justification,
            parse_status=verdict.parse_status.value,
            warnings=verdict.warnings,
            error=errors.get(verdict.passage_id),
        ))
        for rule_id in ids:
            if rule_id in witnesses:
                witnesses[rule_id].append(passage.passage_id)
    findings.sort(key=lambda f: f.ordinal)

    rollup = tuple(
        RuleRollup(
            rule_id=rule.rule_id,
            description=rule.description,
            status=(RuleStatus.SATISFIED_SOMEWHERE if witnesses[rule.rule_id]
                    else RuleStatus.NEVER_SATISFIED),
            witness_passage_ids=tuple(witnesses[rule.rule_id]),
        )
        for rule in catalog.rules
    )

    estimated_cost = currency = None
    if rates is not None:
        try:
            cost = estimate_cost(ledger, rates, meta.provider_name, meta.model_id)
            estimated_cost, currency = str(cost), rates.currency
        except MissingRateError:
            pass  # cost stays unreported; the cost command surfaces missing rates

    usage = UsageSummary(
        passage_count=len(findings),
        prompt_tokens=ledger.prompt_tokens,
        completion_tokens=ledger.completion_tokens,
        protocol_overhead_tokens=ledger.protocol_overhead_tokens,
        total_latency_seconds=round(ledger.total_latency_seconds, 6),
        estimated_cost=estimated_cost,
        currency=currency,
    )

    return ComplianceReport(
        schema_version=SCHEMA_VERSION,
        doc_id=artifact.doc_id,
        title=artifact.title,
        meta=meta,
        findings=tuple(findings),
        rollup=rollup,
        usage=usage,
    )


def _report_to_dict(report: ComplianceReport) -> dict:
    return {
        "schema_version": report.schema_version,
        "doc_id": report.doc_id,
        "title": report.title,
        "meta": {
            "provider_name": report.meta.provider_name,
            "model_id": report.meta.model_id,
            "template_id": report.meta.template_id,
            "catalog_id": report.meta.catalog_id,
            "granularity": report.meta.granularity,
            "timestamp": report.meta.timestamp,
            "complete": report.meta.complete,
        },
        "findings": [
            {
                "passage_id": f.passage_id,
                "ordinal": f.ordinal,
                "char_span": list(f.char_span),
                "text": f.text,
                "satisfied_rule_ids": list(f.satisfied_rule_ids),
                "justification": f.justification,
                "parse_status": f.parse_status,
                "warnings": list(f.warnings),
                "error": f.error,
            }
            for f in report.findings
        ],
        "rollup": [
            {
                "rule_id": r.rule_id,
                "description": r.description,
                "status": r.status.value,
                "witness_passage_ids": list(r.witness_passage_ids),
            }
            for r in report.rollup
        ],
        "usage": {
            "passage_count": report.usage.passage_count,
            "prompt_tokens": report.usage.prompt_tokens,
            "completion_tokens": report.usage.completion_tokens,
            "protocol_overhead_tokens": report.usage.protocol_overhead_tokens,
            "total_latency_seconds": report.usage.total_latency_seconds,
            "estimated_cost": report.usage.estimated_cost,
            "currency": report.usage.currency,
        },
    }


def parse_report(data: bytes) -> ComplianceReport:
    try:
        payload = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ReportError(f"not a machine report: {exc}") from exc
    if payload.get("schema_version") != SCHEMA_VERSION:
        raise ReportError(f"unsupported schema_version {payload.get('schema_version')!r}")
    meta = payload["meta"]
    return ComplianceReport(
        schema_version=payload["schema_version"],
        doc_id=payload["doc_id"],
        title=payload["title"],
        meta=RunMetadata(
            provider_name=meta["provider_name"],
            model_id=meta["model_id"],
            template_id=meta["template_id"],
            catalog_id=meta["catalog_id"],
            granularity=meta["granularity"],
            timestamp=meta["timestamp"],
            complete=meta["complete"],
        ),
        findings=tuple(
            PassageFinding(
                passage_id=f["passage_id"],
                ordinal=f["ordinal"],
                char_span=(f["char_span"][0], f["char_span"][1]),
                text=f["text"],
                satisfied_rule_ids=tuple(f["satisfied_rule_ids"]),
                justification=f["justification"],
                parse_status=f["parse_status"],
                warnings=tuple(f["warnings"]),
                error=f["error"],
            )
            for f in payload["findings"]
        ),
        rollup=tuple(
            RuleRollup(
                rule_id=r["rule_id"],
                description=r["description"],
                status=RuleStatus(r["status"]),
                witness_passage_ids=tuple(r["witness_passage_ids"]),
            )
            for r in payload["rollup"]
        ),
        usage=UsageSummary(
            passage_count=payload["usage"]["passage_count"],
            prompt_tokens=payload["usage"]["prompt_tokens"],
            completion_tokens=payload["usage"]["completion_tokens"],
            protocol_overhead_tokens=payload["usage"]["protocol_overhead_tokens"],
            total_latency_seconds=payload["usage"]["total_latency_seconds"],
            estimated_cost=payload["usage"]["estimated_cost"],
            currency=payload["usage"]["currency"],
        ),
    )


def _render_human(report: ComplianceReport) -> str:
    satisfied = [r for r in report.rollup if r.status is RuleStatus.SATISFIED_SOMEWHERE]
    gaps = [r for r in report.rollup if r.status is RuleStatus.NEVER_SATISFIED]

    lines = []
    lines.append(f"Compliance report: {report.title or report.doc_id}")
    lines.append("=" * len(lines[0]))
    lines.append("")
    lines.append(f"document:   {report.doc_id}")
    lines.append(f"model:      {report.meta.provider_name}/{report.meta.model_id}")
    lines.append(f"template:   {report.meta.template_id}")
    lines.append(f"catalog:    {report.meta.catalog_id}")
    lines.append(f"granularity:{report.meta.granularity:>10}")
    lines.append(f"timestamp:  {report.meta.timestamp}")
    if not report.meta.complete:
        lines.append("NOTE: this run is INCOMPLETE; some passages failed at the provider.")
    lines.append("")
    lines.append(f"Summary: {len(satisfied)} of {len(report.rollup)} rules satisfied somewhere "
                 f"across {report.usage.passage_count} passages.")
    lines.append("")

    lines.append("Rule rollup")
    lines.append("-----------")
    for r in report.rollup:
        mark = "+" if r.status is RuleStatus.SATISFIED_SOMEWHERE else "-"
        lines.append(f" [{mark}] R{r.rule_id}: {r.description}")
        if r.witness_passage_ids:
            lines.append(f"       witnesses: {', '.join(r.witness_passage_ids)}")
    if gaps:
        lines.append("")
        lines.append(f"Potential completeness gaps (never satisfied): "
                     f"{', '.join('R' + str(r.rule_id) for r in gaps)}")
    lines.append("")

    lines.append("Findings per passage")
    lines.append("--------------------")
    for f in report.findings:
        ids = ", ".join(str(i) for i in f.satisfied_rule_ids) or "none"
        lines.append(f"passage {f.ordinal} ({f.passage_id}) span={f.char_span[0]}..{f.char_span[1]}")
        lines.append(f"  text: {f.text}")
        lines.append(f"  rules satisfied: {ids}   [parse: {f.parse_status}]")
        if f.justification:
            lines.append(f"  justification: {f.justification}")
        for w in f.warnings:
            lines.append(f"  warning: {w}")
        if f.error:
            lines.append(f"  provider error: {f.error}")
        lines.append("")

    lines.append("Usage")
    lines.append("-----")
    lines.append(f"prompt tokens:     {report.usage.prompt_tokens}")
    lines.append(f"completion tokens: {report.usage.completion_tokens}")
    if report.usage.protocol_overhead_tokens:
        lines.append(f"protocol overhead: {report.usage.protocol_overhead_tokens}")
    lines.append(f"total latency:     {report.usage.total_latency_seconds:.3f} s")
    if report.usage.estimated_cost is not None:
        lines.append(f"estimated cost:    {report.usage.estimated_cost} {report.usage.currency}")
    lines.append("")
    return "\n".join(lines)


def render_report(report: ComplianceReport, fmt: str = "machine") -> bytes:
    """Serialize a report. ``machine`` is canonical JSON; ``human`` is plain text."""
    if fmt == "machine":
        text = json.dumps(_report_to_dict(report), sort_keys=True, ensure_ascii=False,
                          separators=(",", ": "), indent=2)
        return (text + "\n").encode("utf-8")
    if fmt == "human":
        return _render_human(report).encode("utf-8")
    raise ReportError(f"unknown report format {fmt!r}; expected 'machine' or 'human'")
