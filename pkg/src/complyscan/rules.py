"""Compliance-rule catalog: loading, validation, and prompt rendering.

Catalogs ship as data files (JSON Lines, one rule per line) rather than code,
so a catalog can be swapped per run as regulations change. Rule id 99 is a
reserved sentinel meaning "no rule applies" and may never be a real rule id.

The bundled ``gdpr_dpa_rules`` catalog is a reconstruction of a 46-item GDPR
Article 28 checklist for data processing agreements; it is a faithful stand-in
for such catalogs, not a verbatim copy of any proprietary rule set.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

SENTINEL_ID = 99

SENTINEL_LINE = (
    f"R{SENTINEL_ID}: None of the listed rules applies to this passage "
    "(non-applicability sentinel; use alone)."
)


class CatalogError(Exception):
    """Raised for malformed or invalid catalog files; carries a line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class ComplianceRule:
    rule_id: int
    description: str
    tags: tuple[str, ...] = ()

    def __post_init__(self):
        if self.rule_id < 1:
            raise CatalogError(f"rule_id must be >= 1, got {self.rule_id}")
        if self.rule_id == SENTINEL_ID:
            raise CatalogError(f"rule_id {SENTINEL_ID} is reserved as the non-applicability sentinel")
        if not self.description.strip():
            raise CatalogError(f"rule {self.rule_id} has an empty description")
        if "\n" in self.description or "\r" in self.description:
            raise CatalogError(f"rule {self.rule_id} description must be a single line")


@dataclass(frozen=True)
class RuleCatalog:
    catalog_id: str
    rules: tuple[ComplianceRule, ...]
    sentinel_id: int = SENTINEL_ID

    def __post_init__(self):
        seen: set[int] = set()
        for rule in self.rules:
            if rule.rule_id in seen:
                raise CatalogError(f"duplicate rule_id {rule.rule_id}")
            seen.add(rule.rule_id)

    @property
    def rule_ids(self) -> tuple[int, ...]:
        return tuple(r.rule_id for r in self.rules)

    def __contains__(self, rule_id: int) -> bool:
        return rule_id in set(self.rule_ids)


def parse_catalog(text: str, catalog_id: str) -> RuleCatalog:
    """Parse JSONL catalog text: one ``{"id", "description", "tags"?}`` per line."""
    rules: list[ComplianceRule] = []
    seen: set[int] = set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CatalogError(f"invalid JSON: {exc.msg}", line=lineno) from exc
        if not isinstance(record, dict):
            raise CatalogError("rule record must be a JSON object", line=lineno)
        try:
            rule_id = int(record["id"])
            description = str(record["description"])
        except (KeyError, TypeError, ValueError) as exc:
            raise CatalogError(f"rule record needs integer 'id' and string 'description': {exc}",
                               line=lineno) from exc
        if rule_id in seen:
            raise CatalogError(f"duplicate rule_id {rule_id}", line=lineno)
        seen.add(rule_id)
        tags = tuple(str(t) for t in record.get("tags", []))
        try:
            rules.append(ComplianceRule(rule_id=rule_id, description=description, tags=tags))
        except CatalogError as exc:
            raise CatalogError(str(exc), line=lineno) from exc
    return RuleCatalog(catalog_id=catalog_id, rules=tuple(rules))


def load_catalog(path: str | Path) -> RuleCatalog:
    p = Path(path)
    return parse_catalog(p.read_text(encoding="utf-8"), catalog_id=p.stem)


def save_catalog(catalog: RuleCatalog, path: str | Path) -> None:
    lines = [
        json.dumps({"id": r.rule_id, "description": r.description, "tags": list(r.tags)},
                   ensure_ascii=False)
        for r in catalog.rules
    ]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def builtin_catalog() -> RuleCatalog:
    """The bundled 46-rule GDPR/DPA catalog."""
    text = resources.files("complyscan.data").joinpath("gdpr_dpa_rules.jsonl").read_text("utf-8")
    return parse_catalog(text, catalog_id="gdpr_dpa_rules")


def render_rules(catalog: RuleCatalog) -> str:
    """One "R<id>: <description>" line per rule, in catalog order, plus the sentinel line."""
    lines = [f"R{r.rule_id}: {r.description}" for r in catalog.rules]
    lines.append(SENTINEL_LINE)
    return "\n".join(lines)
