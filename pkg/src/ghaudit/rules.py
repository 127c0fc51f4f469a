"""Versioned rule tables consumed by the static analyzers.

Runner labels, cache-providing action patterns, notification action
patterns, and credential-name patterns all ship as data so deployments can
extend them from a JSON config without touching the checkers. The
credential table is deliberately conservative (false-negative-leaning): it
only fires on literal assignments to credential-looking names, never on
expressions or variable indirection.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

RULESET_VERSION = "ruleset@1"

# GitHub-hosted runner families plus their -latest aliases.
DEFAULT_RUNNER_LABELS = frozenset({
    "ubuntu-latest", "ubuntu-24.04", "ubuntu-22.04", "ubuntu-20.04",
    "ubuntu-24.04-arm", "ubuntu-22.04-arm",
    "macos-latest", "macos-15", "macos-14", "macos-13", "macos-12",
    "macos-latest-large", "macos-latest-xlarge",
    "windows-latest", "windows-2025", "windows-2022", "windows-2019",
})

# `uses:` patterns (matched on owner/repo, ref ignored) that provide caching
# on their own.
DEFAULT_CACHE_ACTIONS = (
    "actions/cache",
    "actions/cache/restore",
    "actions/cache/save",
    "gradle/actions/setup-gradle",
    "gradle/gradle-build-action",
    "swatinem/rust-cache",
)

# Setup actions whose `cache:` input turns on dependency caching.
DEFAULT_CACHE_AWARE_SETUP_ACTIONS = (
    "actions/setup-java",
    "actions/setup-node",
    "actions/setup-python",
    "actions/setup-go",
    "actions/setup-dotnet",
    "ruby/setup-ruby",
)

# `uses:` patterns or step-name keywords that look like failure notifiers.
DEFAULT_NOTIFICATION_ACTIONS = (
    "slackapi/slack-github-action",
    "rtcamp/action-slack-notify",
    "8398a7/action-slack",
    "dawidd6/action-send-mail",
    "peter-evans/create-issue-from-file",
    "jasonetco/create-an-issue",
)
DEFAULT_NOTIFICATION_KEYWORDS = ("notify", "notification", "alert", "slack", "mail", "webhook")

# pattern-id -> regex over a single `name = value` / `name: value`
# assignment; value group must be a literal for the pattern to count.
DEFAULT_CREDENTIAL_PATTERNS: tuple[tuple[str, str], ...] = (
    ("password", r"(?i)\b[\w.-]*passw(or)?d[\w.-]*\b"),
    ("token", r"(?i)\b[\w.-]*token[\w.-]*\b"),
    ("secret", r"(?i)\b[\w.-]*secret[\w.-]*\b"),
    ("api-key", r"(?i)\b[\w.-]*api[-_]?key[\w.-]*\b"),
    ("key", r"(?i)\b[\w.-]*(access|private|auth)[-_]key[\w.-]*\b"),
)

# Values that are clearly not secret material, even under a credential name.
_BENIGN_VALUES = frozenset({"", "true", "false", "yes", "no", "none", "null", "0", "1"})

DEFAULT_RUN_COMPLEXITY_MAX_LINES = 10


@dataclass(frozen=True)
class RuleTables:
    """One bundle of every pattern table the static suite consumes."""

    version: str = RULESET_VERSION
    runner_labels: frozenset[str] = DEFAULT_RUNNER_LABELS
    self_hosted_allowlist: frozenset[str] = frozenset()
    cache_actions: tuple[str, ...] = DEFAULT_CACHE_ACTIONS
    cache_aware_setup_actions: tuple[str, ...] = DEFAULT_CACHE_AWARE_SETUP_ACTIONS
    notification_actions: tuple[str, ...] = DEFAULT_NOTIFICATION_ACTIONS
    notification_keywords: tuple[str, ...] = DEFAULT_NOTIFICATION_KEYWORDS
    credential_patterns: tuple[tuple[str, str], ...] = DEFAULT_CREDENTIAL_PATTERNS
    run_complexity_max_lines: int = DEFAULT_RUN_COMPLEXITY_MAX_LINES

    def is_known_runner(self, label: str) -> bool:
        return label.lower() in self.runner_labels

    def is_allowlisted_self_hosted(self, label: str) -> bool:
        return label.lower() in self.self_hosted_allowlist


DEFAULT_RULES = RuleTables()


def load_rule_tables(path: str | Path) -> RuleTables:
    """Load rule-table overrides from a JSON file; absent keys keep defaults."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return rule_tables_from_dict(data)


def rule_tables_from_dict(data: dict) -> RuleTables:
    kwargs = {}
    if "runner_labels" in data:
        kwargs["runner_labels"] = frozenset(s.lower() for s in data["runner_labels"])
    if "self_hosted_allowlist" in data:
        kwargs["self_hosted_allowlist"] = frozenset(s.lower() for s in data["self_hosted_allowlist"])
    for key in ("cache_actions", "cache_aware_setup_actions",
                "notification_actions", "notification_keywords"):
        if key in data:
            kwargs[key] = tuple(s.lower() for s in data[key])
    if "credential_patterns" in data:
        kwargs["credential_patterns"] = tuple((p["id"], p["regex"]) for p in data["credential_patterns"])
    if "run_complexity_max_lines" in data:
        kwargs["run_complexity_max_lines"] = int(data["run_complexity_max_lines"])
    if "version" in data:
        kwargs["version"] = str(data["version"])
    return RuleTables(**kwargs)


_EXPRESSION_RE = re.compile(r"\$\{\{.*\}\}")
_VARIABLE_RE = re.compile(r"^\$[\w{(]")
_ASSIGNMENT_RE = re.compile(
    r"""^\s*(?:export\s+|set\s+|--?[\w-]+[= ])?(?P<name>[A-Za-z_][\w.-]*)\s*[:=]\s*(?P<value>.+?)\s*$"""
)


def looks_like_expression(value: str) -> bool:
    """True when the value is a workflow expression or env indirection, which
    never counts as a hardcoded credential."""
    v = value.strip().strip("\"'")
    return bool(_EXPRESSION_RE.search(v)) or bool(_VARIABLE_RE.match(v))


def credential_pattern_hit(name: str, value: str,
                           patterns: tuple[tuple[str, str], ...] = DEFAULT_CREDENTIAL_PATTERNS) -> str | None:
    """pattern-id when `name = value` assigns a literal to a credential-like
    name; None otherwise."""
    literal = value.strip().strip("\"'")
    if literal.lower() in _BENIGN_VALUES:
        return None
    if looks_like_expression(value):
        return None
    for pattern_id, regex in patterns:
        if re.search(regex, name):
            return pattern_id
    return None


def scan_credential_assignments(text: str,
                                patterns: tuple[tuple[str, str], ...] = DEFAULT_CREDENTIAL_PATTERNS
                                ) -> list[tuple[str, int]]:
    """Scan script text for literal credential assignments.

    Returns (pattern-id, 1-based line number) per hit. Comment lines are
    skipped; only `NAME=value`-shaped lines are considered.
    """
    hits: list[tuple[str, int]] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        m = _ASSIGNMENT_RE.match(stripped)
        if not m:
            continue
        pattern_id = credential_pattern_hit(m.group("name"), m.group("value"), patterns)
        if pattern_id is not None:
            hits.append((pattern_id, lineno))
    return hits
