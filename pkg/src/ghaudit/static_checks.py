"""Deterministic verdicts for the statically checkable checklist criteria.

For STATIC-mode criteria these findings are authoritative; for HYBRID
criteria they serve as evidence that the adjudication tier compares
against panel consensus. Every check is a pure function of the model and
the rule tables: byte-identical inputs yield byte-identical findings.

A NOT_APPLICABLE verdict is only produced when the criterion's subject is
absent from the workflow (no third-party actions for action pinning, no
run scripts for run complexity, and so on).
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .catalog import Catalog, Mode, Verdict
from .model import ActionKind, JobSpec, RefKind, SecretScope, WorkflowModel, extract_secret_usages
from .rules import DEFAULT_RULES, RuleTables, credential_pattern_hit

Evidence = tuple[str, str]


@dataclass(frozen=True)
class StaticFinding:
    criterion_id: str
    verdict: Verdict
    evidence: tuple[Evidence, ...]
    rule_version: str

    def __post_init__(self):
        if self.verdict is Verdict.NO and not self.evidence:
            raise ValueError(f"{self.criterion_id}: NO finding requires evidence")


_MATRIX_LABEL_RE = re.compile(r"^\$\{\{\s*matrix\.([A-Za-z0-9_-]+)\s*\}\}$")
_EXPRESSION_LABEL_RE = re.compile(r"\$\{\{")
_DEBUG_FLAG_RE = re.compile(r"(--debug\b|--verbose\b|\bset -x\b|\s-vv\b)")
_SHELL_CONTEXT_BRANCH_RE = re.compile(
    r"^\s*(if\b|elif\b|case\b|\[\[?\s).*\bGITHUB_(REF|EVENT_NAME|BASE_REF|HEAD_REF)\b"
)


def _finding(criterion_id: str, verdict: Verdict, evidence: list[Evidence],
             rules: RuleTables) -> StaticFinding:
    return StaticFinding(criterion_id=criterion_id, verdict=verdict,
                         evidence=tuple(evidence), rule_version=rules.version)


def _uses_body(raw: str) -> str:
    return raw.partition("@")[0].lower()


def check_sha_pinning(model: WorkflowModel,
                      rules: RuleTables = DEFAULT_RULES) -> StaticFinding:
    """S13: every third-party (remote) action pinned to a 40-hex commit.

    Local and reusable-workflow references are ignored; they cannot be
    SHA-pinned. NOT_APPLICABLE when no remote references exist.
    """
    remote = [(loc, ref) for loc, ref in model.action_refs()
              if ref.kind is ActionKind.REMOTE]
    if not remote:
        return _finding("S13", Verdict.NOT_APPLICABLE,
                        [("workflow", "no third-party action references")], rules)
    unpinned = [(loc, f"{ref.raw!r} is not pinned to a commit SHA")
                for loc, ref in remote if ref.ref_kind is not RefKind.SHA]
    if unpinned:
        return _finding("S13", Verdict.NO, unpinned, rules)
    pinned = [(loc, f"{ref.raw!r} pinned") for loc, ref in remote]
    return _finding("S13", Verdict.YES, pinned, rules)


def check_secrets_storage(model: WorkflowModel,
                          rules: RuleTables = DEFAULT_RULES) -> StaticFinding:
    """P1: no literal assigned to a credential-looking name anywhere.

    Job- and workflow-level ``${{ secrets.* }}`` references are listed as
    scoping warnings in the evidence but do not change the verdict.
    """
    hits: list[Evidence] = []

    def scan_map(mapping: dict[str, str], location: str) -> None:
        for name, value in mapping.items():
            pattern_id = credential_pattern_hit(name, value, rules.credential_patterns)
            if pattern_id is not None:
                hits.append((f"{location}.{name}",
                             f"literal assigned to credential-like name ({pattern_id})"))

    scan_map(model.global_env, "env")
    for jid, job in model.jobs.items():
        scan_map(job.env, f"jobs.{jid}.env")
        for step in job.steps:
            prefix = f"jobs.{jid}.steps[{step.index}]"
            scan_map(step.env, f"{prefix}.env")
            scan_map(step.with_inputs, f"{prefix}.with")
            if step.run is not None:
                for pattern_id, line in step.run.hardcoded_credential_hits:
                    hits.append((f"{prefix}.run:{line}",
                                 f"literal assigned to credential-like name ({pattern_id})"))

    if hits:
        return _finding("P1", Verdict.NO, hits, rules)

    warnings: list[Evidence] = []
    for usage in extract_secret_usages(model):
        if usage.scope in (SecretScope.JOB_ENV, SecretScope.GLOBAL_ENV):
            warnings.append((usage.location,
                             f"secret referenced at {usage.scope.value}; "
                             "prefer step-scoped references"))
    if not warnings:
        warnings.append(("workflow", "no hardcoded credentials detected"))
    return _finding("P1", Verdict.YES, warnings, rules)


def check_job_identity(model: WorkflowModel,
                       rules: RuleTables = DEFAULT_RULES) -> list[StaticFinding]:
    """J1 (id/display-name uniqueness) and J2 (structural completeness)."""
    if not model.jobs:
        na = [("workflow", "no jobs defined")]
        return [_finding("J1", Verdict.NOT_APPLICABLE, na, rules),
                _finding("J2", Verdict.NOT_APPLICABLE, na, rules)]

    j1_evidence: list[Evidence] = []
    for diag in model.diagnostics:
        if diag.code == "DUPLICATE_JOB_ID":
            j1_evidence.append((diag.location, diag.message))
    names_seen: dict[str, str] = {}
    for jid, job in model.jobs.items():
        if job.display_name is None:
            continue
        if job.display_name in names_seen:
            j1_evidence.append((f"jobs.{jid}",
                                f"display name {job.display_name!r} also used by "
                                f"jobs.{names_seen[job.display_name]}"))
        else:
            names_seen[job.display_name] = jid
    j1 = (_finding("J1", Verdict.NO, j1_evidence, rules) if j1_evidence
          else _finding("J1", Verdict.YES,
                        [("jobs", "job ids and display names are unique")], rules))

    j2_evidence: list[Evidence] = []
    for jid, job in model.jobs.items():
        if job.is_incomplete:
            j2_evidence.append((f"jobs.{jid}", "neither steps nor a reusable-workflow call"))
        elif job.steps and not job.runs_on:
            j2_evidence.append((f"jobs.{jid}", "has steps but no runs-on"))
    j2 = (_finding("J2", Verdict.NO, j2_evidence, rules) if j2_evidence
          else _finding("J2", Verdict.YES,
                        [("jobs", "all jobs structurally complete")], rules))
    return [j1, j2]


def _resolve_runner_labels(job: JobSpec, label: str) -> tuple[str, ...] | None:
    """Concrete labels a runs-on entry denotes; None when unresolvable."""
    m = _MATRIX_LABEL_RE.match(label.strip())
    if m:
        if job.strategy is None:
            return None
        values = job.strategy.values_for(m.group(1))
        return values if values else None
    if _EXPRESSION_LABEL_RE.search(label):
        return None
    return (label,)


def check_runners(model: WorkflowModel,
                  known_runners: RuleTables = DEFAULT_RULES) -> list[StaticFinding]:
    """W2 (documented/supported runner labels) and J11 (no unauthorized
    runners). Self-hosted and runner-group labels count as authorized only
    when allowlisted; a job's auxiliary labels next to `self-hosted` are
    not judged individually."""
    rules = known_runners
    jobs_with_runners = {jid: job for jid, job in model.jobs.items() if job.runs_on}
    if not jobs_with_runners:
        na = [("workflow", "no job declares runs-on")]
        return [_finding("W2", Verdict.NOT_APPLICABLE, na, rules),
                _finding("J11", Verdict.NOT_APPLICABLE, na, rules)]

    w2_evidence: list[Evidence] = []
    j11_evidence: list[Evidence] = []
    for jid, job in jobs_with_runners.items():
        location = f"jobs.{jid}.runs-on"
        self_hosted = [l for l in job.runs_on
                       if l.lower() == "self-hosted" or l.lower().startswith("group:")]
        if self_hosted:
            for label in self_hosted:
                if not rules.is_allowlisted_self_hosted(label):
                    j11_evidence.append((location, f"{label!r} is not allowlisted"))
                    w2_evidence.append((location, f"{label!r} is not a supported environment"))
            continue
        for label in job.runs_on:
            resolved = _resolve_runner_labels(job, label)
            if resolved is None:
                w2_evidence.append((location, f"{label!r} does not resolve to known labels"))
                continue
            for concrete in resolved:
                if not rules.is_known_runner(concrete):
                    w2_evidence.append((location, f"{concrete!r} is not a known runner label"))

    w2 = (_finding("W2", Verdict.NO, w2_evidence, rules) if w2_evidence
          else _finding("W2", Verdict.YES,
                        [("jobs", "all runner labels are documented environments")], rules))
    j11 = (_finding("J11", Verdict.NO, j11_evidence, rules) if j11_evidence
           else _finding("J11", Verdict.YES,
                         [("jobs", "no unauthorized runner labels")], rules))
    return [w2, j11]


def _is_notification_step(step, rules: RuleTables) -> bool:
    if step.uses is not None:
        body = _uses_body(step.uses.raw)
        if any(body.startswith(p) for p in rules.notification_actions):
            return True
    haystack = " ".join(filter(None, (
        step.name or "",
        step.uses.raw if step.uses else "",
        step.run.text if step.run else "",
    ))).lower()
    return any(keyword in haystack for keyword in rules.notification_keywords)


def check_failure_handling(model: WorkflowModel,
                           rules: RuleTables = DEFAULT_RULES) -> StaticFinding:
    """W1: an explicit failure condition, or an always()-guarded
    notification step. always() alone is accepted only when the step looks
    like a notifier, since it also fires on success."""
    steps = list(model.iter_steps())
    if not steps:
        return _finding("W1", Verdict.NOT_APPLICABLE,
                        [("workflow", "no steps defined")], rules)
    evidence: list[Evidence] = []
    for job, step in steps:
        condition = step.condition or ""
        location = f"jobs.{job.id}.steps[{step.index}]"
        if "failure()" in condition:
            evidence.append((location, f"failure-conditioned step ({condition!r})"))
        elif "always()" in condition and _is_notification_step(step, rules):
            evidence.append((location, f"always()-guarded notification step ({condition!r})"))
    if evidence:
        return _finding("W1", Verdict.YES, evidence, rules)
    return _finding("W1", Verdict.NO,
                    [("workflow", "no failure-conditioned or notification steps")], rules)


def _job_has_cache_signal(job: JobSpec, rules: RuleTables) -> list[Evidence]:
    signals: list[Evidence] = []
    for step in job.steps:
        if step.uses is None:
            continue
        body = _uses_body(step.uses.raw)
        location = f"jobs.{job.id}.steps[{step.index}]"
        if any(body.startswith(p) for p in rules.cache_actions):
            signals.append((location, f"cache action {step.uses.raw!r}"))
        elif any(body.startswith(p) for p in rules.cache_aware_setup_actions):
            cache_input = step.with_inputs.get("cache", "").strip()
            if cache_input and cache_input.lower() != "false":
                signals.append((location,
                                f"setup action with cache input ({cache_input!r})"))
    return signals


def check_caching(model: WorkflowModel,
                  rules: RuleTables = DEFAULT_RULES) -> list[StaticFinding]:
    """J10 (any caching at all) and J7 (per-job cache coverage)."""
    jobs_with_steps = [job for job in model.jobs.values() if job.steps]
    if not jobs_with_steps:
        na = [("workflow", "no jobs with steps")]
        return [_finding("J7", Verdict.NOT_APPLICABLE, na, rules),
                _finding("J10", Verdict.NOT_APPLICABLE, na, rules)]

    all_signals: list[Evidence] = []
    uncovered: list[Evidence] = []
    for job in jobs_with_steps:
        signals = _job_has_cache_signal(job, rules)
        all_signals.extend(signals)
        if not signals:
            uncovered.append((f"jobs.{job.id}", "no cache-providing step"))

    j10 = (_finding("J10", Verdict.YES, all_signals, rules) if all_signals
           else _finding("J10", Verdict.NO,
                         [("workflow", "no cache-providing steps detected")], rules))
    j7 = (_finding("J7", Verdict.YES, all_signals, rules) if not uncovered
          else _finding("J7", Verdict.NO, uncovered, rules))
    return [j7, j10]


def check_run_complexity(model: WorkflowModel, threshold: int | None = None,
                         rules: RuleTables = DEFAULT_RULES) -> StaticFinding:
    """S1: run scripts stay under the effective-line threshold; piped or
    chained scripts are held to half of it."""
    limit = threshold if threshold is not None else rules.run_complexity_max_lines
    if limit < 1:
        raise ValueError("threshold must be >= 1")
    scripts = [(job, step) for job, step in model.iter_steps() if step.run is not None]
    if not scripts:
        return _finding("S1", Verdict.NOT_APPLICABLE,
                        [("workflow", "no run scripts")], rules)
    offending: list[Evidence] = []
    for job, step in scripts:
        run = step.run
        location = f"jobs.{job.id}.steps[{step.index}].run"
        if run.line_count > limit:
            offending.append((location, f"{run.line_count} effective lines (limit {limit})"))
        elif run.uses_pipes_or_chaining and run.line_count > limit / 2:
            offending.append((location,
                              f"{run.line_count} piped/chained lines (limit {limit // 2})"))
    if offending:
        return _finding("S1", Verdict.NO, offending, rules)
    return _finding("S1", Verdict.YES,
                    [("workflow", f"all run scripts within {limit} effective lines")], rules)


def check_debug_logging(model: WorkflowModel,
                        rules: RuleTables = DEFAULT_RULES) -> list[StaticFinding]:
    """J3 (runner debug logging) and S7 (step debug logging). Detection is
    via the ACTIONS_*_DEBUG variables and common verbose flags; whether the
    logging is sufficient stays a judgment call, hence HYBRID."""
    debug_vars = ("ACTIONS_RUNNER_DEBUG", "ACTIONS_STEP_DEBUG")

    if not model.jobs:
        na = [("workflow", "no jobs defined")]
        j3 = _finding("J3", Verdict.NOT_APPLICABLE, na, rules)
    else:
        j3_evidence: list[Evidence] = []
        for name in model.global_env:
            if name in debug_vars:
                j3_evidence.append((f"env.{name}", "runner debug variable set"))
        for jid, job in model.jobs.items():
            for name in job.env:
                if name in debug_vars:
                    j3_evidence.append((f"jobs.{jid}.env.{name}", "runner debug variable set"))
        j3 = (_finding("J3", Verdict.YES, j3_evidence, rules) if j3_evidence
              else _finding("J3", Verdict.NO,
                            [("workflow", "no runner debug logging enabled")], rules))

    steps = list(model.iter_steps())
    if not steps:
        s7 = _finding("S7", Verdict.NOT_APPLICABLE,
                      [("workflow", "no steps defined")], rules)
    else:
        s7_evidence: list[Evidence] = []
        for job, step in steps:
            location = f"jobs.{job.id}.steps[{step.index}]"
            for name in step.env:
                if name in debug_vars:
                    s7_evidence.append((f"{location}.env.{name}", "step debug variable set"))
            if step.run is not None and _DEBUG_FLAG_RE.search(step.run.text):
                s7_evidence.append((f"{location}.run", "verbose/debug flag in run script"))
        s7 = (_finding("S7", Verdict.YES, s7_evidence, rules) if s7_evidence
              else _finding("S7", Verdict.NO,
                            [("workflow", "no step debug logging detected")], rules))
    return [j3, s7]


def _transitive_needs(jobs: dict[str, JobSpec]) -> dict[str, frozenset[str]]:
    closure: dict[str, frozenset[str]] = {}

    def visit(jid: str, trail: frozenset[str]) -> frozenset[str]:
        if jid in closure:
            return closure[jid]
        if jid in trail or jid not in jobs:
            return frozenset()
        acc: set[str] = set()
        for dep in jobs[jid].needs:
            acc.add(dep)
            acc |= visit(dep, trail | {jid})
        closure[jid] = frozenset(acc)
        return closure[jid]

    for jid in jobs:
        visit(jid, frozenset())
    return closure


def check_parallelism(model: WorkflowModel,
                      rules: RuleTables = DEFAULT_RULES) -> StaticFinding:
    """J9: a matrix strategy or at least one pair of jobs not ordered by
    needs counts as a parallelism signal."""
    if not model.jobs:
        return _finding("J9", Verdict.NOT_APPLICABLE,
                        [("workflow", "no jobs defined")], rules)
    evidence: list[Evidence] = []
    for jid, job in model.jobs.items():
        if job.strategy is not None and (job.strategy.variables or job.strategy.expression):
            evidence.append((f"jobs.{jid}.strategy", "matrix strategy configured"))
    if not evidence and len(model.jobs) > 1:
        closure = _transitive_needs(model.jobs)
        ids = list(model.jobs)
        for i, a in enumerate(ids):
            for b in ids[i + 1:]:
                if a not in closure.get(b, frozenset()) and b not in closure.get(a, frozenset()):
                    evidence.append(("jobs", f"{a!r} and {b!r} can run in parallel"))
                    break
            if evidence:
                break
    if evidence:
        return _finding("J9", Verdict.YES, evidence, rules)
    reason = ("single job without a matrix strategy" if len(model.jobs) == 1
              else "jobs are fully serialized by needs")
    return _finding("J9", Verdict.NO, [("jobs", reason)], rules)


def check_conditional_strategy(model: WorkflowModel,
                               rules: RuleTables = DEFAULT_RULES) -> StaticFinding:
    """S11: conditional execution expressed natively (if:/matrix filters)
    rather than by shell branching on GitHub context variables."""
    shell_branching: list[Evidence] = []
    native: list[Evidence] = []
    for jid, job in model.jobs.items():
        if job.condition is not None:
            native.append((f"jobs.{jid}.if", f"native job condition ({job.condition!r})"))
        if job.strategy is not None and (job.strategy.include or job.strategy.exclude_count):
            native.append((f"jobs.{jid}.strategy.matrix", "matrix include/exclude filters"))
        for step in job.steps:
            if step.condition is not None:
                native.append((f"jobs.{jid}.steps[{step.index}].if",
                               f"native step condition ({step.condition!r})"))
            if step.run is None:
                continue
            for lineno, line in enumerate(step.run.text.splitlines(), start=1):
                if _SHELL_CONTEXT_BRANCH_RE.search(line):
                    shell_branching.append((f"jobs.{jid}.steps[{step.index}].run:{lineno}",
                                            "shell branching on GitHub context"))
    if shell_branching:
        return _finding("S11", Verdict.NO, shell_branching, rules)
    if native:
        return _finding("S11", Verdict.YES, native, rules)
    return _finding("S11", Verdict.NOT_APPLICABLE,
                    [("workflow", "no conditional execution logic")], rules)


def run_static_suite(model: WorkflowModel, catalog: Catalog,
                     rules: RuleTables = DEFAULT_RULES,
                     run_complexity_threshold: int | None = None) -> dict[str, StaticFinding]:
    """All STATIC and HYBRID findings, keyed by criterion id.

    The key set is exactly the catalog's STATIC and HYBRID criteria; the
    result is a pure function of (model, rule tables, thresholds).
    """
    findings: dict[str, StaticFinding] = {}
    findings["S13"] = check_sha_pinning(model, rules)
    findings["P1"] = check_secrets_storage(model, rules)
    for f in check_job_identity(model, rules):
        findings[f.criterion_id] = f
    for f in check_runners(model, rules):
        findings[f.criterion_id] = f
    findings["W1"] = check_failure_handling(model, rules)
    for f in check_caching(model, rules):
        findings[f.criterion_id] = f
    findings["S1"] = check_run_complexity(model, run_complexity_threshold, rules)
    for f in check_debug_logging(model, rules):
        findings[f.criterion_id] = f
    findings["J9"] = check_parallelism(model, rules)
    findings["S11"] = check_conditional_strategy(model, rules)

    expected = {c.id for c in catalog.with_mode(Mode.STATIC, Mode.HYBRID)}
    missing = expected - findings.keys()
    extra = findings.keys() - expected
    if missing or extra:
        raise RuntimeError(f"static suite drift: missing={missing} extra={extra}")
    return {cid: findings[cid] for cid in catalog.ids if cid in expected}
