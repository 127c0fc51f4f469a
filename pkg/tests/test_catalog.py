import json

import pytest

from ghaudit import catalog as cat
from ghaudit.catalog import (Catalog, CatalogCorrupt, Compliance, Criterion, Mode,
                             Polarity, Section, Theme, Verdict, compliance_of,
                             load_catalog, render_question)

EXPECTED_SECTIONS = {Section.WORKFLOW: 3, Section.JOBS: 11,
                     Section.STEPS: 15, Section.PERMISSIONS: 1}
EXPECTED_THEMES = {Theme.SECURITY: 6, Theme.PERFORMANCE: 4,
                   Theme.ERROR_FAILURE_HANDLING: 4, Theme.INPUT_VALIDATION: 4,
                   Theme.MAINTAINABILITY: 4, Theme.MODULARITY: 4,
                   Theme.ENVIRONMENT: 2, Theme.CLARITY: 2}

STATIC_IDS = {"W2", "J1", "J2", "J11", "S13", "P1"}
HYBRID_IDS = {"W1", "J3", "J7", "J9", "J10", "S1", "S7", "S11"}


def test_catalog_has_30_criteria(catalog):
    assert len(catalog) == 30


def test_stable_order(catalog):
    ids = catalog.ids
    assert ids[0] == "W1"
    assert ids[-1] == "P1"
    assert list(ids) == (
        [f"W{i}" for i in range(1, 4)]
        + [f"J{i}" for i in range(1, 12)]
        + [f"S{i}" for i in range(1, 16)]
        + ["P1"]
    )


def test_section_counts(catalog):
    assert catalog.section_counts() == EXPECTED_SECTIONS


def test_theme_counts(catalog):
    assert catalog.theme_counts() == EXPECTED_THEMES


def test_mode_partition(catalog):
    static = {c.id for c in catalog.with_mode(Mode.STATIC)}
    hybrid = {c.id for c in catalog.with_mode(Mode.HYBRID)}
    llm = {c.id for c in catalog.with_mode(Mode.LLM)}
    assert static == STATIC_IDS
    assert hybrid == HYBRID_IDS
    assert len(llm) == 16
    assert static | hybrid | llm == set(catalog.ids)


def test_s13_question_rendering(catalog):
    assert "pinned to a commit SHA?" in render_question(catalog.by_id["S13"])


def test_rendering_deterministic(catalog):
    c = catalog.by_id["J5"]
    assert render_question(c) == render_question(c)


def test_all_questions_unique_and_nonempty(catalog):
    questions = [render_question(c) for c in catalog]
    assert all(q.strip() for q in questions)
    assert len(set(questions)) == 30


def test_checksum_stable_across_loads():
    assert load_catalog().checksum == load_catalog().checksum


def test_checksum_depends_on_text(catalog):
    altered = Catalog(tuple(
        Criterion(c.id, c.section, c.theme, c.text + "!", c.question_text,
                  c.polarity, c.mode)
        for c in catalog))
    assert altered.checksum != catalog.checksum


def test_to_json_is_one_source_of_truth(catalog):
    doc = json.loads(catalog.to_json())
    assert doc["checksum"] == catalog.checksum
    assert len(doc["criteria"]) == 30
    first = doc["criteria"][0]
    assert set(first) == {"id", "section", "theme", "text", "question",
                          "polarity", "mode"}
    assert [row["id"] for row in doc["criteria"]] == list(catalog.ids)


def test_corrupt_catalog_rejected(monkeypatch):
    monkeypatch.setattr(cat, "_ENTRIES", cat._ENTRIES[:29])
    with pytest.raises(CatalogCorrupt):
        load_catalog()


def test_compliance_of_examples(catalog):
    s13 = catalog.by_id["S13"]
    assert compliance_of(Verdict.YES, s13) is Compliance.COMPLIANT
    assert compliance_of(Verdict.NO, s13) is Compliance.NONCOMPLIANT
    assert compliance_of(Verdict.NOT_APPLICABLE, s13) is Compliance.EXCLUDED


def test_compliance_of_negative_polarity():
    negative = Criterion(
        id="X1", section=Section.STEPS, theme=Theme.SECURITY,
        text="Secrets are exposed in plaintext.",
        question_text="Are secrets exposed in plaintext?",
        polarity=Polarity.COMPLIANT_WHEN_NO, mode=Mode.LLM)
    assert compliance_of(Verdict.NO, negative) is Compliance.COMPLIANT
    assert compliance_of(Verdict.YES, negative) is Compliance.NONCOMPLIANT
    assert compliance_of(Verdict.NOT_APPLICABLE, negative) is Compliance.EXCLUDED


def test_compliance_of_exhaustive(catalog):
    outcomes = set()
    for polarity in Polarity:
        criterion = Criterion("X1", Section.STEPS, Theme.SECURITY, "t", "q?",
                              polarity, Mode.LLM)
        for verdict in Verdict:
            outcomes.add(compliance_of(verdict, criterion))
    assert outcomes == {Compliance.COMPLIANT, Compliance.NONCOMPLIANT,
                        Compliance.EXCLUDED}
