from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from complyscan.rules import (
    SENTINEL_LINE,
    CatalogError,
    ComplianceRule,
    RuleCatalog,
    load_catalog,
    parse_catalog,
    render_rules,
    save_catalog,
)


class TestLoadCatalog:
    def test_builtin_has_46_rules_numbered_1_to_46(self, catalog46):
        assert len(catalog46.rules) == 46
        assert catalog46.rule_ids == tuple(range(1, 47))
        assert all(r.description.strip() for r in catalog46.rules)

    def test_duplicate_rule_id_reports_line(self):
        text = ('{"id": 7, "description": "a"}\n'
                '{"id": 8, "description": "b"}\n'
                '{"id": 7, "description": "c"}')
        with pytest.raises(CatalogError, match="line 3.*duplicate"):
            parse_catalog(text, "dup")

    def test_sentinel_id_rejected(self):
        with pytest.raises(CatalogError, match="99"):
            parse_catalog('{"id": 99, "description": "nope"}', "bad")

    def test_empty_description_rejected(self):
        with pytest.raises(CatalogError, match="line 1"):
            parse_catalog('{"id": 1, "description": "  "}', "bad")

    def test_malformed_json_reports_line(self):
        with pytest.raises(CatalogError, match="line 2"):
            parse_catalog('{"id": 1, "description": "ok"}\n{oops', "bad")

    def test_non_object_record_rejected(self):
        with pytest.raises(CatalogError, match="line 1"):
            parse_catalog("[1, 2]", "bad")

    def test_empty_catalog_is_valid(self):
        catalog = parse_catalog("", "empty")
        assert catalog.rules == ()

    def test_blank_lines_skipped(self):
        catalog = parse_catalog('\n{"id": 1, "description": "a"}\n\n', "c")
        assert catalog.rule_ids == (1,)

    def test_multiline_description_rejected(self):
        with pytest.raises(CatalogError, match="single line"):
            ComplianceRule(1, "first\nsecond")

    def test_order_preserved_from_source(self):
        text = '{"id": 5, "description": "five"}\n{"id": 2, "description": "two"}'
        assert parse_catalog(text, "c").rule_ids == (5, 2)


class TestRenderRules:
    def test_single_rule_two_lines(self, one_rule_catalog):
        rendered = render_rules(one_rule_catalog)
        assert rendered.splitlines() == ["R3: The DPA shall X", SENTINEL_LINE]

    def test_builtin_renders_47_lines(self, catalog46):
        assert len(render_rules(catalog46).splitlines()) == 47

    def test_empty_catalog_renders_sentinel_only(self):
        assert render_rules(parse_catalog("", "empty")).splitlines() == [SENTINEL_LINE]

    def test_deterministic(self, catalog46):
        assert render_rules(catalog46) == render_rules(catalog46)


def test_save_load_round_trip(tmp_path, catalog46):
    path = tmp_path / "cat.jsonl"
    save_catalog(catalog46, path)
    loaded = load_catalog(path)
    assert loaded.rules == catalog46.rules
    assert loaded.catalog_id == "cat"


descriptions = st.text(
    alphabet=st.characters(codec="utf-8", exclude_categories=("Cs", "Cc")),
    min_size=1, max_size=40,
).filter(lambda s: s.strip())

catalog_entries = st.lists(
    st.tuples(st.integers(min_value=1, max_value=98), descriptions),
    max_size=8, unique_by=lambda t: t[0],
)


@given(catalog_entries, catalog_entries)
def test_render_is_injective_on_distinct_catalogs(entries_a, entries_b):
    def build(entries):
        return RuleCatalog("c", tuple(ComplianceRule(i, d) for i, d in entries))

    a, b = build(entries_a), build(entries_b)
    normalize = lambda entries: [(i, d.strip()) for i, d in entries]
    if normalize(entries_a) != normalize(entries_b):
        assert render_rules(a) != render_rules(b)


@given(catalog_entries)
def test_catalog_round_trip_property(tmp_path_factory, entries):
    catalog = RuleCatalog("c", tuple(ComplianceRule(i, d) for i, d in entries))
    path = tmp_path_factory.mktemp("cat") / "c.jsonl"
    save_catalog(catalog, path)
    assert load_catalog(path).rules == catalog.rules
