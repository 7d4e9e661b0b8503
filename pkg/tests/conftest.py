from __future__ import annotations

import pytest

from complyscan.rules import ComplianceRule, RuleCatalog, builtin_catalog, parse_catalog

from fixture_docs import SECURITY_SNIPPET  # noqa: F401  (re-exported for tests)


@pytest.fixture(scope="session")
def catalog46() -> RuleCatalog:
    return builtin_catalog()


@pytest.fixture
def mini_catalog() -> RuleCatalog:
    return RuleCatalog(
        catalog_id="mini",
        rules=(
            ComplianceRule(1, "The DPA shall identify the controller."),
            ComplianceRule(2, "The DPA shall identify the processor."),
            ComplianceRule(3, "The DPA shall require appropriate security measures."),
        ),
    )


@pytest.fixture
def one_rule_catalog() -> RuleCatalog:
    return parse_catalog('{"id": 3, "description": "The DPA shall X"}', "one")
