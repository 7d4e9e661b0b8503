"""Score predicted verdicts against gold annotations, per rule and aggregated.

Scoring treats every (rule, passage) pair as a binary decision: the rule is in
the predicted set, the gold set, both, or neither. The sentinel label {99}
behaves as the empty set of real rules on either side. Metrics with a zero
denominator are undefined and excluded from macro averages rather than coerced
to 0 or 1, so rare rules do not distort the means. "Mean accuracy" is the
unweighted macro average of per-rule accuracies over active rules (rules with
at least one gold-positive or predicted-positive passage).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Literal

from .rules import SENTINEL_ID, RuleCatalog
from .verdicts import ParseStatus, Verdict, real_rule_ids


class EvaluationError(Exception):
    pass


@dataclass(frozen=True)
class GoldAnnotation:
    passage_id: str
    labels: frozenset[int]


@dataclass(frozen=True)
class DatasetSplit:
    split_name: Literal["train_P", "eval_E"]
    members: tuple[str, ...]


def ensure_disjoint(splits: Iterable[DatasetSplit]) -> None:
    seen: dict[str, str] = {}
    for split in splits:
        for pid in split.members:
            if pid in seen and seen[pid] != split.split_name:
                raise EvaluationError(
                    f"passage {pid} appears in splits {seen[pid]} and {split.split_name}")
            seen[pid] = split.split_name


def select_split(gold: list[GoldAnnotation], split: DatasetSplit) -> list[GoldAnnotation]:
    members = set(split.members)
    return [g for g in gold if g.passage_id in members]


@dataclass(frozen=True)
class ConfusionCounts:
    rule_id: int
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class RuleMetrics:
    counts: ConfusionCounts
    precision: float | None
    recall: float | None
    f_score: float | None
    accuracy: float | None
    active: bool


@dataclass(frozen=True)
class MetricsSummary:
    per_rule: dict[int, RuleMetrics]
    macro_precision: float | None
    macro_recall: float | None
    macro_f: float | None
    mean_accuracy: float | None
    scored_passage_count: int


def _rule_metrics(counts: ConfusionCounts) -> RuleMetrics:
    precision = counts.tp / (counts.tp + counts.fp) if counts.tp + counts.fp > 0 else None
    recall = counts.tp / (counts.tp + counts.fn) if counts.tp + counts.fn > 0 else None
    if precision is None or recall is None:
        f_score = None
    elif precision + recall == 0:
        f_score = 0.0
    else:
        f_score = 2 * precision * recall / (precision + recall)
    accuracy = (counts.tp + counts.tn) / counts.total if counts.total > 0 else None
    active = (counts.tp + counts.fn > 0) or (counts.tp + counts.fp > 0)
    return RuleMetrics(counts=counts, precision=precision, recall=recall,
                       f_score=f_score, accuracy=accuracy, active=active)


def _macro(values: list[float]) -> float | None:
    return math.fsum(values) / len(values) if values else None


def score(predictions: list[Verdict], gold: list[GoldAnnotation],
          catalog: RuleCatalog) -> MetricsSummary:
    """Confusion counts and metrics for every catalog rule over the gold set.

    Passages without a prediction are scored as predicting nothing; a
    prediction whose passage id is not in the gold set is an error.
    """
    gold_by_id: dict[str, frozenset[int]] = {}
    for g in gold:
        if g.passage_id in gold_by_id:
            raise EvaluationError(f"duplicate gold annotation for passage {g.passage_id}")
        gold_by_id[g.passage_id] = real_rule_ids(g.labels)

    pred_by_id: dict[str, frozenset[int]] = {}
    unknown: list[str] = []
    for v in predictions:
        if v.passage_id in pred_by_id:
            raise EvaluationError(f"multiple predictions for passage {v.passage_id}")
        if v.passage_id not in gold_by_id:
            unknown.append(v.passage_id)
        pred_by_id[v.passage_id] = real_rule_ids(v.satisfied_rule_ids)
    if unknown:
        raise EvaluationError(
            "predictions reference passage ids absent from the gold set: "
            + ", ".join(sorted(unknown)))

    per_rule: dict[int, RuleMetrics] = {}
    for rule in catalog.rules:
        tp = fp = tn = fn = 0
        for pid, gold_labels in gold_by_id.items():
            predicted = rule.rule_id in pred_by_id.get(pid, frozenset())
            actual = rule.rule_id in gold_labels
            if predicted and actual:
                tp += 1
            elif predicted:
                fp += 1
            elif actual:
                fn += 1
            else:
                tn += 1
        per_rule[rule.rule_id] = _rule_metrics(
            ConfusionCounts(rule_id=rule.rule_id, tp=tp, fp=fp, tn=tn, fn=fn))

    active = [m for m in per_rule.values() if m.active]
    return MetricsSummary(
        per_rule=per_rule,
        macro_precision=_macro([m.precision for m in active if m.precision is not None]),
        macro_recall=_macro([m.recall for m in active if m.recall is not None]),
        macro_f=_macro([m.f_score for m in active if m.f_score is not None]),
        mean_accuracy=_macro([m.accuracy for m in active if m.accuracy is not None]),
        scored_passage_count=len(gold_by_id),
    )


_COMPARED_METRICS = ("macro_precision", "macro_recall", "macro_f", "mean_accuracy")


@dataclass(frozen=True)
class AblationComparison:
    """Per-metric deltas (paragraph minus sentence) between two scored runs."""

    deltas: dict[str, float | None]
    improved: dict[str, bool]
    scored_passage_count: int


def ablation_compare(sentence_run: MetricsSummary,
                     paragraph_run: MetricsSummary) -> AblationComparison:
    if sentence_run.scored_passage_count != paragraph_run.scored_passage_count:
        raise EvaluationError(
            f"runs scored different passage counts: "
            f"{sentence_run.scored_passage_count} vs {paragraph_run.scored_passage_count}")
    deltas: dict[str, float | None] = {}
    improved: dict[str, bool] = {}
    for name in _COMPARED_METRICS:
        s = getattr(sentence_run, name)
        p = getattr(paragraph_run, name)
        deltas[name] = (p - s) if (s is not None and p is not None) else None
        improved[name] = deltas[name] is not None and deltas[name] > 0
    return AblationComparison(deltas=deltas, improved=improved,
                              scored_passage_count=sentence_run.scored_passage_count)


def _parse_label_row(line: str, lineno: int, catalog: RuleCatalog) -> tuple[str, frozenset[int]]:
    """One record of the line format: ``passage_id,id;id;...``."""
    if "," not in line:
        raise EvaluationError(f"line {lineno}: expected 'passage_id,id;id;...', got {line!r}")
    passage_id, _, labels_text = line.partition(",")
    passage_id = passage_id.strip()
    if not passage_id:
        raise EvaluationError(f"line {lineno}: empty passage_id")
    labels: set[int] = set()
    valid = set(catalog.rule_ids) | {SENTINEL_ID}
    for part in labels_text.split(";"):
        part = part.strip()
        if not part:
            continue
        if not part.isdigit():
            raise EvaluationError(f"line {lineno}: label {part!r} is not an integer")
        value = int(part)
        if value not in valid:
            raise EvaluationError(f"line {lineno}: unknown rule id {value}")
        labels.add(value)
    if SENTINEL_ID in labels and len(labels) > 1:
        raise EvaluationError(f"line {lineno}: sentinel 99 mixed with real rule ids")
    return passage_id, frozenset(labels)


def parse_label_rows(text: str, catalog: RuleCatalog) -> list[tuple[str, frozenset[int]]]:
    rows: list[tuple[str, frozenset[int]]] = []
    seen: set[str] = set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        passage_id, labels = _parse_label_row(line.strip(), lineno, catalog)
        if passage_id in seen:
            raise EvaluationError(f"line {lineno}: duplicate passage_id {passage_id}")
        seen.add(passage_id)
        rows.append((passage_id, labels))
    return rows


def parse_gold(text: str, catalog: RuleCatalog) -> list[GoldAnnotation]:
    return [GoldAnnotation(pid, labels) for pid, labels in parse_label_rows(text, catalog)]


def load_gold(path: str | Path, catalog: RuleCatalog) -> list[GoldAnnotation]:
    return parse_gold(Path(path).read_text(encoding="utf-8"), catalog)


def parse_external_predictions(text: str, catalog: RuleCatalog) -> list[Verdict]:
    """External predictions in the same line format, as clean verdicts.

    Lets any outside system (e.g. a classifier baseline) be scored with the
    same scorer as native pipeline verdicts.
    """
    return [
        Verdict(passage_id=pid, satisfied_rule_ids=labels, justification="",
                raw_response="", parse_status=ParseStatus.CLEAN)
        for pid, labels in parse_label_rows(text, catalog)
    ]


def import_external_predictions(path: str | Path, catalog: RuleCatalog) -> list[Verdict]:
    return parse_external_predictions(Path(path).read_text(encoding="utf-8"), catalog)


def metrics_to_dict(summary: MetricsSummary) -> dict:
    """Machine-readable form of a metrics summary."""
    return {
        "scored_passage_count": summary.scored_passage_count,
        "macro_precision": summary.macro_precision,
        "macro_recall": summary.macro_recall,
        "macro_f": summary.macro_f,
        "mean_accuracy": summary.mean_accuracy,
        "per_rule": {
            str(rule_id): {
                "tp": m.counts.tp, "fp": m.counts.fp, "tn": m.counts.tn, "fn": m.counts.fn,
                "precision": m.precision, "recall": m.recall,
                "f_score": m.f_score, "accuracy": m.accuracy,
                "active": m.active,
            }
            for rule_id, m in sorted(summary.per_rule.items())
        },
    }


def _fmt(value: float | None) -> str:
    return f"{value:.4f}" if value is not None else "n/a"


def format_metrics_table(summary: MetricsSummary) -> str:
    """Human-readable per-rule table with a macro footer."""
    lines = [f"{'rule':>6}  {'tp':>4} {'fp':>4} {'tn':>4} {'fn':>4}  "
             f"{'precision':>9} {'recall':>9} {'f':>9} {'accuracy':>9}"]
    for rule_id, m in sorted(summary.per_rule.items()):
        c = m.counts
        lines.append(f"{rule_id:>6}  {c.tp:>4} {c.fp:>4} {c.tn:>4} {c.fn:>4}  "
                     f"{_fmt(m.precision):>9} {_fmt(m.recall):>9} "
                     f"{_fmt(m.f_score):>9} {_fmt(m.accuracy):>9}")
    lines.append("")
    lines.append(f"passages scored: {summary.scored_passage_count}")
    lines.append(f"macro precision: {_fmt(summary.macro_precision)}   "
                 f"macro recall: {_fmt(summary.macro_recall)}   "
                 f"macro f: {_fmt(summary.macro_f)}   "
                 f"mean accuracy: {_fmt(summary.mean_accuracy)}")
    return "\n".join(lines)
