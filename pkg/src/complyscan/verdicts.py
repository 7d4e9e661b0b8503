"""Parse model responses into structured verdicts, tolerating format drift.

The primary grammar is the one the prompt's output-format instructions ask
for: a ``RULES:`` line of comma-separated integers followed by a
``JUSTIFICATION:`` line of free text. Responses that ignore the format fall
back to a lenient scanner; parsing never raises — every outcome is encoded in
``parse_status``.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, replace
from enum import Enum

from .rules import SENTINEL_ID, RuleCatalog


class ParseStatus(str, Enum):
    CLEAN = "clean"
    RECOVERED = "recovered"
    FAILED = "failed"


@dataclass(frozen=True)
class Verdict:
    passage_id: str
    satisfied_rule_ids: frozenset[int]
    justification: str
    raw_response: str
    parse_status: ParseStatus
    warnings: tuple[str, ...] = ()


_RULES_LINE_RE = re.compile(r"^\s*RULES\s*:\s*(?P<ids>[0-9,\s]*)$", re.IGNORECASE)
_JUSTIFICATION_RE = re.compile(r"^\s*JUSTIFICATION\s*:\s*", re.IGNORECASE)
_FALLBACK_TOKEN_RE = re.compile(r"\bR(\d{1,3})\b|\b(\d{1,3})\b")

FALLBACK_SCAN_LINES = 10


def _parse_id_list(ids_text: str) -> frozenset[int] | None:
    """Comma-separated integers; None when the text is not a valid list."""
    stripped = ids_text.strip()
    if not stripped:
        return frozenset()
    parts = [p.strip() for p in stripped.split(",")]
    if any(not p.isdigit() for p in parts):
        return None
    return frozenset(int(p) for p in parts)


def _try_primary(raw: str) -> tuple[frozenset[int], str] | None:
    """Strict grammar: the first non-empty line is RULES:, JUSTIFICATION: follows."""
    lines = raw.splitlines()
    first_content = next((i for i, line in enumerate(lines) if line.strip()), None)
    if first_content is None:
        return None
    m = _RULES_LINE_RE.match(lines[first_content])
    if m is None:
        return None
    ids = _parse_id_list(m.group("ids"))
    if ids is None:
        return None
    for j in range(first_content + 1, len(lines)):
        jm = _JUSTIFICATION_RE.match(lines[j])
        if jm is not None:
            head = lines[j][jm.end():]
            tail = lines[j + 1:]
            justification = "\n".join([head] + tail).strip()
            return ids, justification
        if lines[j].strip():
            return None  # unexpected content between RULES and JUSTIFICATION
    return None


def _try_fallback(raw: str, catalog: RuleCatalog) -> frozenset[int] | None:
    """Scan the first few lines for R<digits> tokens or bare in-range integers."""
    valid = set(catalog.rule_ids) | {SENTINEL_ID}
    found: set[int] = set()
    for line in raw.splitlines()[:FALLBACK_SCAN_LINES]:
        for m in _FALLBACK_TOKEN_RE.finditer(line):
            value = int(m.group(1) or m.group(2))
            if value in valid:
                found.add(value)
    return frozenset(found) if found else None


def parse_response(raw: str, catalog: RuleCatalog, passage_id: str) -> Verdict:
    """Turn one raw model response into a Verdict. Total: never raises."""
    primary = _try_primary(raw)
    if primary is not None:
        ids, justification = primary
        return Verdict(
            passage_id=passage_id,
            satisfied_rule_ids=ids,
            justification=justification,
            raw_response=raw,
            parse_status=ParseStatus.CLEAN,
        )

    fallback = _try_fallback(raw, catalog)
    if fallback is not None:
        return Verdict(
            passage_id=passage_id,
            satisfied_rule_ids=fallback,
            justification=raw.strip(),
            raw_response=raw,
            parse_status=ParseStatus.RECOVERED,
        )

    return Verdict(
        passage_id=passage_id,
        satisfied_rule_ids=frozenset(),
        justification="",
        raw_response=raw,
        parse_status=ParseStatus.FAILED,
    )


def validate_verdict(verdict: Verdict, catalog: RuleCatalog) -> Verdict:
    """Enforce catalog membership and sentinel exclusivity.

    Ids outside the catalog (other than 99) are dropped with a warning. A set
    mixing 99 with real ids keeps the real ids — the model asserted
    applicability — and the status is downgraded to recovered.
    """
    valid = set(catalog.rule_ids)
    ids = set(verdict.satisfied_rule_ids)
    warnings = list(verdict.warnings)
    status = verdict.parse_status

    unknown = {i for i in ids if i != SENTINEL_ID and i not in valid}
    if unknown:
        ids -= unknown
        warnings.append(
            f"dropped rule ids outside catalog {catalog.catalog_id}: "
            f"{', '.join(str(i) for i in sorted(unknown))}")

    if SENTINEL_ID in ids and len(ids) > 1:
        ids.discard(SENTINEL_ID)
        warnings.append("sentinel 99 mixed with real rule ids; kept the real ids")
        if status is ParseStatus.CLEAN:
            status = ParseStatus.RECOVERED

    return replace(verdict, satisfied_rule_ids=frozenset(ids),
                   warnings=tuple(warnings), parse_status=status)


def render_verdict(verdict: Verdict) -> str:
    """Serialize back to the primary grammar (ids ascending)."""
    ids = ", ".join(str(i) for i in sorted(verdict.satisfied_rule_ids))
    return f"RULES: {ids}\nJUSTIFICATION: {verdict.justification}"


def real_rule_ids(ids: frozenset[int]) -> frozenset[int]:
    """The sentinel denotes the empty set of real rules."""
    return frozenset(i for i in ids if i != SENTINEL_ID)


class VerdictFormatError(Exception):
    """Malformed native verdict file (JSON Lines)."""


def verdicts_to_jsonl(verdicts: list[Verdict]) -> str:
    """Native prediction file: one JSON object per verdict per line."""
    lines = [
        json.dumps({
            "passage_id": v.passage_id,
            "satisfied_rule_ids": sorted(v.satisfied_rule_ids),
            "justification": v.justification,
            "parse_status": v.parse_status.value,
        }, ensure_ascii=False, sort_keys=True)
        for v in verdicts
    ]
    return "\n".join(lines) + ("\n" if lines else "")


def parse_verdicts_jsonl(text: str) -> list[Verdict]:
    verdicts: list[Verdict] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            verdicts.append(Verdict(
                passage_id=str(record["passage_id"]),
                satisfied_rule_ids=frozenset(int(i) for i in record["satisfied_rule_ids"]),
                justification=str(record.get("justification", "")),
                raw_response="",
                parse_status=ParseStatus(record.get("parse_status", "clean")),
            ))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise VerdictFormatError(f"line {lineno}: malformed verdict record: {exc}") from exc
    return verdicts
