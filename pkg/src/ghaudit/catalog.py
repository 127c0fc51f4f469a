"""The 30-item compliance checklist for GitHub Actions workflows.

Criteria are organized by workflow section (workflow, jobs, steps,
permissions) and by compliance theme (security, performance, ...). Each
criterion carries an interrogative rendering used to build judge prompts,
a polarity that maps YES/NO answers to compliance outcomes, and an
evaluation mode that routes it to the static analyzers, the judge panel,
or both.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from enum import Enum


class Section(str, Enum):
    WORKFLOW = "WORKFLOW"
    JOBS = "JOBS"
    STEPS = "STEPS"
    PERMISSIONS = "PERMISSIONS"


class Theme(str, Enum):
    CLARITY = "CLARITY"
    ERROR_FAILURE_HANDLING = "ERROR_FAILURE_HANDLING"
    ENVIRONMENT = "ENVIRONMENT"
    MODULARITY = "MODULARITY"
    PERFORMANCE = "PERFORMANCE"
    SECURITY = "SECURITY"
    INPUT_VALIDATION = "INPUT_VALIDATION"
    MAINTAINABILITY = "MAINTAINABILITY"


class Polarity(str, Enum):
    COMPLIANT_WHEN_YES = "COMPLIANT_WHEN_YES"
    COMPLIANT_WHEN_NO = "COMPLIANT_WHEN_NO"


class Mode(str, Enum):
    STATIC = "STATIC"
    LLM = "LLM"
    HYBRID = "HYBRID"


class Verdict(str, Enum):
    """Closed three-value answer domain used by every rater."""

    YES = "YES"
    NO = "NO"
    NOT_APPLICABLE = "NOT_APPLICABLE"


class Compliance(str, Enum):
    COMPLIANT = "COMPLIANT"
    NONCOMPLIANT = "NONCOMPLIANT"
    EXCLUDED = "EXCLUDED"


class CatalogCorrupt(Exception):
    """Embedded checklist data failed an integrity check."""


@dataclass(frozen=True)
class Criterion:
    id: str
    section: Section
    theme: Theme
    text: str
    question_text: str
    polarity: Polarity
    mode: Mode


# id, section, theme, criterion text, question rendering, mode.
# All shipped criteria are phrased positively, so polarity is uniformly
# COMPLIANT_WHEN_YES; the field exists for user-supplied catalogs.
_ENTRIES: tuple[tuple[str, Section, Theme, str, str, Mode], ...] = (
    ("W1", Section.WORKFLOW, Theme.ERROR_FAILURE_HANDLING,
     "Workflow should handle failures properly and provide notifications.",
     "Does the workflow handle failures properly and provide notifications?",
     Mode.HYBRID),
    ("W2", Section.WORKFLOW, Theme.ENVIRONMENT,
     "Workflow should use documented and supported runner environments.",
     "Does the workflow use documented and supported runner environments?",
     Mode.STATIC),
    ("W3", Section.WORKFLOW, Theme.SECURITY,
     "Workflow should follow security and maintainability best practices.",
     "Does the workflow follow security and maintainability best practices?",
     Mode.LLM),
    ("J1", Section.JOBS, Theme.CLARITY,
     "Job names should be clear and unique.",
     "Are job names clear and unique?",
     Mode.STATIC),
    ("J2", Section.JOBS, Theme.CLARITY,
     "All jobs must be defined properly in the main jobs block.",
     "Are all jobs defined properly in the main jobs block?",
     Mode.STATIC),
    ("J3", Section.JOBS, Theme.ERROR_FAILURE_HANDLING,
     "Jobs should enable runner debug logging to allow better diagnosis of job execution.",
     "Do jobs enable runner debug logging to allow better diagnosis of job execution?",
     Mode.HYBRID),
    ("J4", Section.JOBS, Theme.ENVIRONMENT,
     "Runners must be appropriate for each job.",
     "Are runners appropriate for each job?",
     Mode.LLM),
    ("J5", Section.JOBS, Theme.MODULARITY,
     "Jobs should remain modular and separated (setup, test, deploy).",
     "Do jobs remain modular and separated (setup, test, deploy)?",
     Mode.LLM),
    ("J6", Section.JOBS, Theme.MODULARITY,
     "Jobs should be isolated to avoid unintended side effects.",
     "Are jobs isolated to avoid unintended side effects?",
     Mode.LLM),
    ("J7", Section.JOBS, Theme.PERFORMANCE,
     "Dependencies and tools should be cached effectively across jobs.",
     "Are dependencies and tools cached effectively across jobs?",
     Mode.HYBRID),
    ("J8", Section.JOBS, Theme.PERFORMANCE,
     "Caching strategy should be portable across environments.",
     "Is the caching strategy portable across environments?",
     Mode.LLM),
    ("J9", Section.JOBS, Theme.PERFORMANCE,
     "Parallelism settings should be optimized and validated for better resource usage.",
     "Are parallelism settings optimized and validated for better resource usage?",
     Mode.HYBRID),
    ("J10", Section.JOBS, Theme.PERFORMANCE,
     "Caching must be used to reduce build time.",
     "Is caching used to reduce build time?",
     Mode.HYBRID),
    ("J11", Section.JOBS, Theme.SECURITY,
     "Unauthorized runners must not be used.",
     "Are only authorized runners used?",
     Mode.STATIC),
    ("S1", Section.STEPS, Theme.MODULARITY,
     "Any complex run commands should be split into smaller steps for clarity.",
     "Are complex run commands split into smaller steps for clarity?",
     Mode.HYBRID),
    ("S2", Section.STEPS, Theme.MODULARITY,
     "Build/deploy commands should be split into steps with error handling and caching.",
     "Are build/deploy commands split into steps with error handling and caching?",
     Mode.LLM),
    ("S3", Section.STEPS, Theme.INPUT_VALIDATION,
     "Inputs should be validated or sanitized to prevent unexpected behavior.",
     "Are inputs validated or sanitized to prevent unexpected behavior?",
     Mode.LLM),
    ("S4", Section.STEPS, Theme.INPUT_VALIDATION,
     "User inputs for platform parameters should be validated.",
     "Are user inputs for platform parameters validated?",
     Mode.LLM),
    ("S5", Section.STEPS, Theme.INPUT_VALIDATION,
     "Boot JDK platform inputs should be validated.",
     "Are boot JDK platform inputs validated?",
     Mode.LLM),
    ("S6", Section.STEPS, Theme.INPUT_VALIDATION,
     "Validation checks must not be disabled without justification.",
     "Are validation checks only disabled with justification?",
     Mode.LLM),
    ("S7", Section.STEPS, Theme.ERROR_FAILURE_HANDLING,
     "Steps should enable debug logging to make errors clear and easily traced.",
     "Do steps enable debug logging to make errors clear and easily traced?",
     Mode.HYBRID),
    ("S8", Section.STEPS, Theme.ERROR_FAILURE_HANDLING,
     "Command-line tools should detect and report failures properly.",
     "Do command-line tools detect and report failures properly?",
     Mode.LLM),
    ("S9", Section.STEPS, Theme.MAINTAINABILITY,
     "Repository-specific conditions should be avoided or made configurable.",
     "Are repository-specific conditions avoided or made configurable?",
     Mode.LLM),
    ("S10", Section.STEPS, Theme.MAINTAINABILITY,
     "Weak file-change detection (e.g., git status) should be avoided.",
     "Is weak file-change detection (e.g., git status) avoided?",
     Mode.LLM),
    ("S11", Section.STEPS, Theme.MAINTAINABILITY,
     "Conditional jobs should be done using native GitHub strategies like matrix filters.",
     "Are conditional jobs done using native GitHub strategies like matrix filters?",
     Mode.HYBRID),
    ("S12", Section.STEPS, Theme.MAINTAINABILITY,
     "Conditional expressions should be documented and maintainable.",
     "Are conditional expressions documented and maintainable?",
     Mode.LLM),
    ("S13", Section.STEPS, Theme.SECURITY,
     "Third-party actions must be pinned to specific commits SHA.",
     "Are third-party actions pinned to a commit SHA?",
     Mode.STATIC),
    ("S14", Section.STEPS, Theme.SECURITY,
     "Reusable or third-party actions should be kept up to date with stable versions.",
     "Are reusable or third-party actions kept up to date with stable versions?",
     Mode.LLM),
    ("S15", Section.STEPS, Theme.SECURITY,
     "Steps should include dedicated static/dynamic security analysis.",
     "Do steps include dedicated static/dynamic security analysis?",
     Mode.LLM),
    ("P1", Section.PERMISSIONS, Theme.SECURITY,
     "Secrets must be stored securely (no hardcoding).",
     "Are secrets stored securely (no hardcoding)?",
     Mode.STATIC),
)

_EXPECTED_SECTION_COUNTS = {
    Section.WORKFLOW: 3,
    Section.JOBS: 11,
    Section.STEPS: 15,
    Section.PERMISSIONS: 1,
}

_EXPECTED_THEME_COUNTS = {
    Theme.SECURITY: 6,
    Theme.PERFORMANCE: 4,
    Theme.ERROR_FAILURE_HANDLING: 4,
    Theme.INPUT_VALIDATION: 4,
    Theme.MAINTAINABILITY: 4,
    Theme.MODULARITY: 4,
    Theme.ENVIRONMENT: 2,
    Theme.CLARITY: 2,
}


class Catalog:
    """Immutable, content-addressed view of the shipped checklist."""

    def __init__(self, criteria: tuple[Criterion, ...]):
        self.criteria = criteria
        self.by_id = {c.id: c for c in criteria}

    def __len__(self) -> int:
        return len(self.criteria)

    def __iter__(self):
        return iter(self.criteria)

    def __contains__(self, criterion_id: str) -> bool:
        return criterion_id in self.by_id

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(c.id for c in self.criteria)

    @property
    def checksum(self) -> str:
        """SHA-256 over the ordered (id, text) pairs; stable across runs."""
        payload = "\n".join(f"{c.id}\t{c.text}" for c in self.criteria)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    def section_counts(self) -> dict[Section, int]:
        counts: dict[Section, int] = {s: 0 for s in Section}
        for c in self.criteria:
            counts[c.section] += 1
        return counts

    def theme_counts(self) -> dict[Theme, int]:
        counts: dict[Theme, int] = {t: 0 for t in Theme}
        for c in self.criteria:
            counts[c.theme] += 1
        return counts

    def with_mode(self, *modes: Mode) -> tuple[Criterion, ...]:
        return tuple(c for c in self.criteria if c.mode in modes)

    def to_json(self) -> str:
        """Export the catalog as a JSON document (one source of truth for
        prompts and reports)."""
        rows = [
            {
                "id": c.id,
                "section": c.section.value,
                "theme": c.theme.value,
                "text": c.text,
                "question": c.question_text,
                "polarity": c.polarity.value,
                "mode": c.mode.value,
            }
            for c in self.criteria
        ]
        return json.dumps({"checksum": self.checksum, "criteria": rows}, indent=2)


def load_catalog() -> Catalog:
    """Build the catalog from the embedded data, validating its invariants.

    Raises CatalogCorrupt if the embedded entries fail any structural
    check (count, section/theme cardinalities, unique non-empty renderings).
    """
    criteria = tuple(
        Criterion(id=i, section=sec, theme=th, text=txt, question_text=q,
                  polarity=Polarity.COMPLIANT_WHEN_YES, mode=mode)
        for i, sec, th, txt, q, mode in _ENTRIES
    )
    catalog = Catalog(criteria)
    _validate(catalog)
    return catalog


def _validate(catalog: Catalog) -> None:
    if len(catalog) != 30:
        raise CatalogCorrupt(f"expected 30 criteria, found {len(catalog)}")
    if len(catalog.by_id) != 30:
        raise CatalogCorrupt("criterion ids are not unique")
    if catalog.section_counts() != _EXPECTED_SECTION_COUNTS:
        raise CatalogCorrupt(f"bad section counts: {catalog.section_counts()}")
    if catalog.theme_counts() != _EXPECTED_THEME_COUNTS:
        raise CatalogCorrupt(f"bad theme counts: {catalog.theme_counts()}")
    questions = [c.question_text for c in catalog]
    if any(not q.strip() for q in questions) or len(set(questions)) != 30:
        raise CatalogCorrupt("question renderings must be non-empty and unique")
    texts = [c.text for c in catalog]
    if any(not t.strip() for t in texts) or len(set(texts)) != 30:
        raise CatalogCorrupt("criterion texts must be non-empty and unique")
    for c in catalog:
        prefix = {"W": Section.WORKFLOW, "J": Section.JOBS,
                  "S": Section.STEPS, "P": Section.PERMISSIONS}[c.id[0]]
        if c.section is not prefix:
            raise CatalogCorrupt(f"{c.id} filed under {c.section}")


def render_question(criterion: Criterion) -> str:
    """Deterministic interrogative rendering of a criterion."""
    return criterion.question_text


def compliance_of(verdict: Verdict, criterion: Criterion) -> Compliance:
    """Map a rater verdict to a compliance outcome through the criterion's
    polarity. NOT_APPLICABLE is always excluded from rate denominators."""
    if verdict is Verdict.NOT_APPLICABLE:
        return Compliance.EXCLUDED
    if criterion.polarity is Polarity.COMPLIANT_WHEN_YES:
        return Compliance.COMPLIANT if verdict is Verdict.YES else Compliance.NONCOMPLIANT
    return Compliance.COMPLIANT if verdict is Verdict.NO else Compliance.NONCOMPLIANT
