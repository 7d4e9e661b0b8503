from __future__ import annotations

import itertools
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from complyscan.evaluation import (
    DatasetSplit,
    EvaluationError,
    GoldAnnotation,
    MetricsSummary,
    ablation_compare,
    ensure_disjoint,
    format_metrics_table,
    import_external_predictions,
    metrics_to_dict,
    parse_external_predictions,
    parse_gold,
    score,
    select_split,
)
from complyscan.rules import ComplianceRule, RuleCatalog
from complyscan.verdicts import ParseStatus, Verdict

from oracle import assert_matches_summary, brute_force_score


def catalog_of(*rule_ids: int) -> RuleCatalog:
    return RuleCatalog("test", tuple(ComplianceRule(i, f"Rule number {i}.") for i in rule_ids))


def verdict(pid: str, ids: set[int]) -> Verdict:
    return Verdict(pid, frozenset(ids), "", "", ParseStatus.CLEAN)


def gold(pid: str, ids: set[int]) -> GoldAnnotation:
    return GoldAnnotation(pid, frozenset(ids))


def run_both(gold_map: dict[str, set[int]], pred_map: dict[str, set[int]],
             rule_ids: list[int]) -> MetricsSummary:
    """Score with the implementation and assert exact oracle agreement."""
    catalog = catalog_of(*rule_ids)
    summary = score([verdict(p, ids) for p, ids in pred_map.items()],
                    [gold(p, ids) for p, ids in gold_map.items()],
                    catalog)
    assert_matches_summary(brute_force_score(gold_map, pred_map, rule_ids), summary)
    return summary


class TestScoreBasics:
    def test_perfect_predictions_all_ones(self):
        gold_map = {"p1": {1}, "p2": {2}, "p3": {1, 2}, "p4": set()}
        summary = run_both(gold_map, dict(gold_map), [1, 2])
        assert summary.macro_precision == 1.0
        assert summary.macro_recall == 1.0
        assert summary.macro_f == 1.0
        assert summary.mean_accuracy == 1.0

    def test_half_half_confusion(self):
        # rule 1 over 4 passages: tp=1 (p1), fp=1 (p2), fn=1 (p3), tn=1 (p4)
        gold_map = {"p1": {1}, "p2": set(), "p3": {1}, "p4": set()}
        pred_map = {"p1": {1}, "p2": {1}, "p3": set(), "p4": set()}
        summary = run_both(gold_map, pred_map, [1, 2])
        m = summary.per_rule[1]
        assert (m.counts.tp, m.counts.fp, m.counts.fn, m.counts.tn) == (1, 1, 1, 1)
        assert m.precision == 0.5
        assert m.recall == 0.5
        assert m.f_score == 0.5
        assert m.accuracy == 0.5

    def test_all_sentinel_predictions(self):
        gold_map = {"p1": {1}, "p2": {2}, "p3": set(), "p4": set()}
        pred_map = {p: {99} for p in gold_map}
        summary = run_both(gold_map, pred_map, [1, 2])
        for rule_id in (1, 2):
            m = summary.per_rule[rule_id]
            assert m.recall == 0.0
            # accuracy equals the gold negative rate for that rule
            negatives = sum(1 for ids in gold_map.values() if rule_id not in ids)
            assert m.accuracy == negatives / len(gold_map)

    def test_missing_predictions_score_as_empty(self):
        gold_map = {"p1": {1}, "p2": set()}
        summary = run_both(gold_map, {}, [1])
        assert summary.per_rule[1].counts.fn == 1
        assert summary.per_rule[1].counts.tn == 1

    def test_sentinel_gold_behaves_as_empty(self):
        summary = run_both({"p1": {99}, "p2": {1}}, {"p1": {99}, "p2": {1}}, [1])
        assert summary.per_rule[1].counts.tp == 1
        assert summary.per_rule[1].counts.tn == 1

    def test_empty_catalog_degenerates(self):
        summary = run_both({"p1": {99}}, {"p1": {99}}, [])
        assert summary.per_rule == {}
        assert summary.mean_accuracy is None

    def test_inactive_rules_excluded_from_macros(self):
        # rule 2 never appears in gold or predictions -> inactive
        summary = run_both({"p1": {1}, "p2": set()}, {"p1": {1}, "p2": set()}, [1, 2])
        assert not summary.per_rule[2].active
        assert summary.mean_accuracy == 1.0

    def test_confusion_completeness(self):
        gold_map = {f"p{i}": ({1} if i % 2 else {2}) for i in range(7)}
        pred_map = {f"p{i}": ({1} if i % 3 else set()) for i in range(7)}
        summary = run_both(gold_map, pred_map, [1, 2])
        for m in summary.per_rule.values():
            assert m.counts.total == 7


class TestScoreErrors:
    def test_unknown_passage_listed(self):
        with pytest.raises(EvaluationError, match="ghost"):
            score([verdict("ghost", {1})], [gold("p1", {1})], catalog_of(1))

    def test_duplicate_prediction_rejected(self):
        with pytest.raises(EvaluationError, match="multiple predictions"):
            score([verdict("p1", {1}), verdict("p1", set())],
                  [gold("p1", {1})], catalog_of(1))

    def test_duplicate_gold_rejected(self):
        with pytest.raises(EvaluationError, match="duplicate gold"):
            score([], [gold("p1", {1}), gold("p1", set())], catalog_of(1))


def all_label_grids(n_passages: int, rule_ids: list[int]):
    """Every possible assignment of label sets to passages."""
    passage_ids = [f"p{i}" for i in range(n_passages)]
    subsets = [set(c) for r in range(len(rule_ids) + 1)
               for c in itertools.combinations(rule_ids, r)]
    for assignment in itertools.product(range(len(subsets)), repeat=n_passages):
        yield {pid: subsets[k] for pid, k in zip(passage_ids, assignment)}


class TestOracleEquivalence:
    @pytest.mark.parametrize("n_passages,rule_ids", [
        (1, [1]), (2, [1]), (3, [1]), (1, [1, 2]), (2, [1, 2]), (1, [1, 2, 3]),
    ])
    def test_exhaustive_small_grids(self, n_passages, rule_ids):
        for gold_map in all_label_grids(n_passages, rule_ids):
            for pred_map in all_label_grids(n_passages, rule_ids):
                run_both(gold_map, pred_map, rule_ids)

    def test_randomized_larger_grids(self):
        rng = random.Random(20240731)
        rule_ids = [1, 2, 3]
        for _ in range(300):
            n = rng.randint(1, 5)
            def random_grid():
                return {f"p{i}": {r for r in rule_ids if rng.random() < 0.4}
                        for i in range(n)}
            gold_map, pred_map = random_grid(), random_grid()
            if rng.random() < 0.2:  # sprinkle sentinel labels
                pid = rng.choice(list(gold_map))
                gold_map[pid] = {99}
            run_both(gold_map, pred_map, rule_ids)


@given(
    n=st.integers(min_value=1, max_value=5),
    seed=st.integers(min_value=0, max_value=2**32 - 1),
)
@settings(max_examples=60, deadline=None)
def test_relabeling_symmetry(n, seed):
    rng = random.Random(seed)
    rule_ids = [1, 2, 3]
    gold_map = {f"p{i}": {r for r in rule_ids if rng.random() < 0.5} for i in range(n)}
    pred_map = {f"p{i}": {r for r in rule_ids if rng.random() < 0.5} for i in range(n)}
    mapping = {1: 7, 2: 5, 3: 9}

    base = run_both(gold_map, pred_map, rule_ids)
    relabeled = run_both(
        {p: {mapping[r] for r in ids} for p, ids in gold_map.items()},
        {p: {mapping[r] for r in ids} for p, ids in pred_map.items()},
        [mapping[r] for r in rule_ids],
    )
    assert base.macro_precision == relabeled.macro_precision
    assert base.macro_recall == relabeled.macro_recall
    assert base.macro_f == relabeled.macro_f
    assert base.mean_accuracy == relabeled.mean_accuracy


@given(seed=st.integers(min_value=0, max_value=2**32 - 1))
@settings(max_examples=60, deadline=None)
def test_flipping_fn_to_tp_never_decreases_recall_or_accuracy(seed):
    rng = random.Random(seed)
    rule_ids = [1, 2]
    n = rng.randint(2, 5)
    gold_map = {f"p{i}": {r for r in rule_ids if rng.random() < 0.6} for i in range(n)}
    pred_map = {f"p{i}": {r for r in rule_ids if rng.random() < 0.4} for i in range(n)}

    missed = [(p, r) for p, ids in gold_map.items() for r in ids if r not in pred_map[p]]
    if not missed:
        return
    p_flip, r_flip = rng.choice(missed)
    before = run_both(gold_map, pred_map, rule_ids)
    pred_map[p_flip] = set(pred_map[p_flip]) | {r_flip}
    after = run_both(gold_map, pred_map, rule_ids)

    rb, ra = before.per_rule[r_flip], after.per_rule[r_flip]
    if rb.recall is not None and ra.recall is not None:
        assert ra.recall >= rb.recall
    assert ra.accuracy >= rb.accuracy


class TestAblationCompare:
    def summary_with(self, mean_accuracy: float, count: int = 10) -> MetricsSummary:
        return MetricsSummary(per_rule={}, macro_precision=None, macro_recall=None,
                              macro_f=None, mean_accuracy=mean_accuracy,
                              scored_passage_count=count)

    def test_forty_point_gain(self):
        result = ablation_compare(self.summary_with(0.41), self.summary_with(0.81))
        assert result.deltas["mean_accuracy"] == pytest.approx(0.40)
        assert result.improved["mean_accuracy"]

    def test_identical_runs_zero_delta(self):
        result = ablation_compare(self.summary_with(0.5), self.summary_with(0.5))
        assert result.deltas["mean_accuracy"] == 0.0
        assert not result.improved["mean_accuracy"]

    def test_thirty_three_point_gain(self):
        result = ablation_compare(self.summary_with(0.30), self.summary_with(0.63))
        assert result.deltas["mean_accuracy"] == pytest.approx(0.33)

    def test_mismatched_counts_error(self):
        with pytest.raises(EvaluationError, match="passage counts"):
            ablation_compare(self.summary_with(0.3, count=4), self.summary_with(0.6, count=5))


class TestExternalPredictions:
    def test_basic_rows(self, tmp_path, catalog46):
        f = tmp_path / "preds.csv"
        f.write_text("p1,5;12\np2,99\n", encoding="utf-8")
        verdicts = import_external_predictions(f, catalog46)
        assert [(v.passage_id, v.satisfied_rule_ids) for v in verdicts] == [
            ("p1", frozenset({5, 12})), ("p2", frozenset({99}))]
        assert all(v.parse_status is ParseStatus.CLEAN and v.justification == ""
                   for v in verdicts)

    def test_malformed_row_reports_line(self, catalog46):
        with pytest.raises(EvaluationError, match="line 2"):
            parse_external_predictions("p1,5\nmalformed-without-comma\n", catalog46)

    def test_unknown_rule_id_rejected(self, catalog46):
        with pytest.raises(EvaluationError, match="unknown rule id 47"):
            parse_external_predictions("p1,47\n", catalog46)

    def test_non_integer_label_rejected(self, catalog46):
        with pytest.raises(EvaluationError, match="line 1"):
            parse_external_predictions("p1,abc\n", catalog46)

    def test_duplicate_passage_rejected(self, catalog46):
        with pytest.raises(EvaluationError, match="duplicate"):
            parse_external_predictions("p1,5\np1,6\n", catalog46)

    def test_empty_labels_allowed(self, catalog46):
        (v,) = parse_external_predictions("p1,\n", catalog46)
        assert v.satisfied_rule_ids == frozenset()

    def test_comments_and_blanks_skipped(self, catalog46):
        rows = parse_external_predictions("# header\n\np1,5\n", catalog46)
        assert len(rows) == 1

    def test_sentinel_mixing_rejected(self, catalog46):
        with pytest.raises(EvaluationError, match="sentinel"):
            parse_external_predictions("p1,99;5\n", catalog46)


class TestGoldParsing:
    def test_gold_rows(self, catalog46):
        annotations = parse_gold("p1,5;12\np2,99\np3,\n", catalog46)
        assert [a.labels for a in annotations] == [
            frozenset({5, 12}), frozenset({99}), frozenset()]


class TestSplits:
    def test_disjoint_ok(self):
        ensure_disjoint([DatasetSplit("train_P", ("a", "b")),
                         DatasetSplit("eval_E", ("c",))])

    def test_overlap_rejected(self):
        with pytest.raises(EvaluationError, match="appears in splits"):
            ensure_disjoint([DatasetSplit("train_P", ("a",)),
                             DatasetSplit("eval_E", ("a",))])

    def test_select_split(self):
        annotations = [gold("a", {1}), gold("b", set())]
        picked = select_split(annotations, DatasetSplit("eval_E", ("b",)))
        assert [a.passage_id for a in picked] == ["b"]


def test_reports_render(catalog46):
    gold_map = {"p1": {5}, "p2": set()}
    pred_map = {"p1": {5}, "p2": {7}}
    summary = score([verdict(p, ids) for p, ids in pred_map.items()],
                    [gold(p, ids) for p, ids in gold_map.items()], catalog46)
    payload = metrics_to_dict(summary)
    assert payload["scored_passage_count"] == 2
    assert payload["per_rule"]["5"]["tp"] == 1
    table = format_metrics_table(summary)
    assert "mean accuracy" in table
    assert "passages scored: 2" in table
