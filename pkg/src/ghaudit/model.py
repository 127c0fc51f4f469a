"""Typed, queryable model of one GitHub Actions workflow file.

Parsing is tolerant by design: recoverable irregularities (dangling
`needs`, a step carrying both `uses` and `run`, a missing `runs-on`)
become diagnostics on the model rather than failures, so every valid
YAML document yields either a WorkflowModel or NotAWorkflow. Models are
immutable after construction and safe to share across threads.

Expression text inside ``${{ }}`` is kept verbatim and never evaluated;
downstream analyzers pattern-match only.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

import yaml

from .rules import DEFAULT_CREDENTIAL_PATTERNS, scan_credential_assignments


class MalformedYaml(Exception):
    """The source text is not a parseable YAML document."""


class NotAWorkflow(Exception):
    """Valid YAML, but carries neither a `jobs` nor an `on` key."""


class ActionKind(str, Enum):
    REMOTE = "REMOTE"
    LOCAL = "LOCAL"
    DOCKER = "DOCKER"
    REUSABLE_WORKFLOW = "REUSABLE_WORKFLOW"


class RefKind(str, Enum):
    SHA = "SHA"
    TAG = "TAG"
    BRANCH = "BRANCH"
    NONE = "NONE"


class PermissionMode(str, Enum):
    NONE_DECLARED = "NONE_DECLARED"
    READ_ALL = "READ_ALL"
    WRITE_ALL = "WRITE_ALL"
    SCOPED = "SCOPED"


class SecretScope(str, Enum):
    STEP_ENV = "STEP_ENV"
    JOB_ENV = "JOB_ENV"
    GLOBAL_ENV = "GLOBAL_ENV"
    WITH_INPUT = "WITH_INPUT"
    RUN_BODY = "RUN_BODY"


@dataclass(frozen=True)
class Diagnostic:
    code: str
    location: str
    message: str


@dataclass(frozen=True)
class ActionRef:
    raw: str
    kind: ActionKind
    owner: str | None = None
    repo: str | None = None
    ref: str | None = None
    ref_kind: RefKind = RefKind.NONE


@dataclass(frozen=True)
class PermissionSpec:
    mode: PermissionMode
    scopes: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class RunScript:
    """Verbatim script plus the surface metrics analyzers pattern-match on.

    line_count counts non-empty, non-comment lines and is floored at 1 for
    any present script (a comment-only script still exists as one unit).
    """

    text: str
    line_count: int
    uses_pipes_or_chaining: bool
    references_secrets: tuple[str, ...] = ()
    hardcoded_credential_hits: tuple[tuple[str, int], ...] = ()


@dataclass(frozen=True)
class StepSpec:
    index: int
    name: str | None = None
    uses: ActionRef | None = None
    run: RunScript | None = None
    shell: str | None = None
    condition: str | None = None
    env: dict[str, str] = field(default_factory=dict)
    with_inputs: dict[str, str] = field(default_factory=dict)
    continue_on_error: bool = False


@dataclass(frozen=True)
class MatrixSpec:
    variables: dict[str, tuple[str, ...]] = field(default_factory=dict)
    include: tuple[dict[str, str], ...] = ()
    exclude_count: int = 0
    max_parallel: int | None = None
    fail_fast: bool | None = None
    expression: str | None = None

    def values_for(self, variable: str) -> tuple[str, ...]:
        """All values a matrix variable can take, include entries counted."""
        values = list(self.variables.get(variable, ()))
        for entry in self.include:
            if variable in entry:
                values.append(entry[variable])
        return tuple(values)


@dataclass(frozen=True)
class JobSpec:
    id: str
    display_name: str | None = None
    runs_on: tuple[str, ...] = ()
    needs: tuple[str, ...] = ()
    uses: ActionRef | None = None
    strategy: MatrixSpec | None = None
    permissions: PermissionSpec | None = None
    env: dict[str, str] = field(default_factory=dict)
    steps: tuple[StepSpec, ...] = ()
    condition: str | None = None

    @property
    def is_incomplete(self) -> bool:
        return not self.steps and self.uses is None


@dataclass(frozen=True)
class WorkflowModel:
    source_path: str
    raw_text: str
    name: str | None
    triggers: tuple[str, ...]
    global_permissions: PermissionSpec | None
    global_env: dict[str, str]
    jobs: dict[str, JobSpec]
    diagnostics: tuple[Diagnostic, ...] = ()

    @property
    def workflow_id(self) -> str:
        return self.source_path

    def iter_steps(self):
        for job in self.jobs.values():
            for step in job.steps:
                yield job, step

    def action_refs(self) -> list[tuple[str, ActionRef]]:
        """Every action reference with its dotted location, job-level
        reusable-workflow calls included."""
        refs: list[tuple[str, ActionRef]] = []
        for jid, job in self.jobs.items():
            if job.uses is not None:
                refs.append((f"jobs.{jid}.uses", job.uses))
            for step in job.steps:
                if step.uses is not None:
                    refs.append((f"jobs.{jid}.steps[{step.index}].uses", step.uses))
        return refs


@dataclass(frozen=True)
class SecretUsage:
    location: str
    scope: SecretScope
    expression: str


_SHA40_RE = re.compile(r"^[0-9a-f]{40}$")
_SECRET_EXPR_RE = re.compile(r"\$\{\{\s*secrets\.[A-Za-z0-9_]+\s*\}\}")
_CHAINING_RE = re.compile(r"(\|\||&&|;|\|)")
_COMMON_BRANCHES = frozenset({"main", "master", "develop", "trunk"})


class _DuplicateTrackingLoader(yaml.SafeLoader):
    """SafeLoader that resolves anchors/merge keys normally but records
    duplicate mapping keys (last value wins, mirroring common loaders).

    Duplicates are detected before merge-key flattening so that an
    explicit key overriding a ``<<``-merged one is not misflagged.
    """

    MERGE_TAG = "tag:yaml.org,2002:merge"

    def __init__(self, stream):
        super().__init__(stream)
        self.duplicate_keys: list[tuple[str, int]] = []

    def construct_mapping(self, node, deep=False):
        if isinstance(node, yaml.MappingNode):
            seen: set[Any] = set()
            for key_node, _value in node.value:
                if key_node.tag == self.MERGE_TAG:
                    continue
                key = self.construct_object(key_node, deep=True)
                if isinstance(key, (str, int, float, bool, type(None))):
                    if key in seen:
                        self.duplicate_keys.append(
                            (str(key), key_node.start_mark.line + 1))
                    seen.add(key)
            self.flatten_mapping(node)
        return yaml.constructor.BaseConstructor.construct_mapping(self, node, deep=deep)


def _duplicate_job_ids(source_text: str) -> list[str]:
    """Job ids that appear more than once under the top-level jobs block.

    Works on the composed node tree, which preserves duplicate mapping
    entries that dict construction collapses.
    """
    try:
        root = yaml.compose(source_text, Loader=yaml.SafeLoader)
    except yaml.YAMLError:
        return []
    if not isinstance(root, yaml.MappingNode):
        return []
    for key_node, value_node in root.value:
        if getattr(key_node, "value", None) == "jobs" and isinstance(value_node, yaml.MappingNode):
            seen: set[str] = set()
            dupes: list[str] = []
            for job_key, _ in value_node.value:
                jid = getattr(job_key, "value", None)
                if not isinstance(jid, str):
                    continue
                if jid in seen and jid not in dupes:
                    dupes.append(jid)
                seen.add(jid)
            return dupes
    return []


def classify_action_ref(raw: str) -> ActionRef:
    """Classify a `uses:` reference. Pure: equal input, equal output.

    Branch detection is heuristic (refs/heads/ prefixes and common default
    branch names); anything else with a non-SHA ref is treated as a tag.
    """
    body, at, ref_part = raw.partition("@")
    ref = ref_part if at else None

    if ref is None or ref == "":
        ref = ref if ref else None
        ref_kind = RefKind.NONE
    elif _SHA40_RE.match(ref.lower()):
        ref_kind = RefKind.SHA
    elif ref.startswith("refs/heads/") or ref in _COMMON_BRANCHES:
        ref_kind = RefKind.BRANCH
    else:
        ref_kind = RefKind.TAG

    if raw.startswith("./"):
        return ActionRef(raw=raw, kind=ActionKind.LOCAL, ref=ref, ref_kind=ref_kind)
    if raw.startswith("docker://"):
        return ActionRef(raw=raw, kind=ActionKind.DOCKER, ref=ref, ref_kind=ref_kind)

    parts = body.split("/")
    owner = parts[0] if len(parts) >= 2 and parts[0] else None
    repo = parts[1] if len(parts) >= 2 and parts[1] else None
    kind = ActionKind.REMOTE
    if ".github/workflows/" in body and body.endswith((".yml", ".yaml")):
        kind = ActionKind.REUSABLE_WORKFLOW
    return ActionRef(raw=raw, kind=kind, owner=owner, repo=repo, ref=ref, ref_kind=ref_kind)


def _is_malformed_remote(ref: ActionRef) -> bool:
    return ref.kind is ActionKind.REMOTE and (
        ref.owner is None or ref.repo is None or ref.ref is None
    )


def _as_str(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    return value if isinstance(value, str) else str(value)


def _string_map(value: Any) -> dict[str, str]:
    if not isinstance(value, dict):
        return {}
    return {_as_str(k): ("" if v is None else _as_str(v)) for k, v in value.items()}


def _string_list(value: Any) -> tuple[str, ...]:
    if value is None:
        return ()
    if isinstance(value, (str, int, float, bool)):
        return (_as_str(value),)
    if isinstance(value, list):
        return tuple(_as_str(v) for v in value if isinstance(v, (str, int, float, bool)))
    return ()


def _parse_permissions(value: Any, location: str,
                       diagnostics: list[Diagnostic]) -> PermissionSpec:
    if isinstance(value, str):
        lowered = value.strip().lower()
        if lowered == "read-all":
            return PermissionSpec(mode=PermissionMode.READ_ALL)
        if lowered == "write-all":
            return PermissionSpec(mode=PermissionMode.WRITE_ALL)
        diagnostics.append(Diagnostic("UNKNOWN_PERMISSIONS", location,
                                      f"unrecognized permissions value {value!r}"))
        return PermissionSpec(mode=PermissionMode.NONE_DECLARED)
    if isinstance(value, dict):
        if not value:
            diagnostics.append(Diagnostic("EMPTY_PERMISSIONS", location,
                                          "empty permissions mapping"))
            return PermissionSpec(mode=PermissionMode.NONE_DECLARED)
        return PermissionSpec(mode=PermissionMode.SCOPED, scopes=_string_map(value))
    diagnostics.append(Diagnostic("EMPTY_PERMISSIONS", location,
                                  "permissions key present without a usable value"))
    return PermissionSpec(mode=PermissionMode.NONE_DECLARED)


def build_run_script(text: str,
                     credential_patterns=DEFAULT_CREDENTIAL_PATTERNS) -> RunScript:
    effective = [
        line for line in text.splitlines()
        if line.strip() and not line.strip().startswith("#")
    ]
    chaining = any(_CHAINING_RE.search(line) for line in effective)
    secrets = tuple(m.group(0) for m in _SECRET_EXPR_RE.finditer(text))
    hits = tuple(scan_credential_assignments(text, credential_patterns))
    return RunScript(
        text=text,
        line_count=max(1, len(effective)),
        uses_pipes_or_chaining=chaining,
        references_secrets=secrets,
        hardcoded_credential_hits=hits,
    )


def _parse_matrix(strategy: Any, location: str,
                  diagnostics: list[Diagnostic]) -> MatrixSpec | None:
    if not isinstance(strategy, dict):
        return None
    matrix = strategy.get("matrix")
    max_parallel = strategy.get("max-parallel")
    fail_fast = strategy.get("fail-fast")
    max_parallel = max_parallel if isinstance(max_parallel, int) else None
    fail_fast = fail_fast if isinstance(fail_fast, bool) else None
    if matrix is None and max_parallel is None and fail_fast is None:
        return None
    if isinstance(matrix, str):
        return MatrixSpec(expression=matrix, max_parallel=max_parallel, fail_fast=fail_fast)
    variables: dict[str, tuple[str, ...]] = {}
    include: list[dict[str, str]] = []
    exclude_count = 0
    if isinstance(matrix, dict):
        for key, value in matrix.items():
            key = _as_str(key)
            if key == "include":
                if isinstance(value, list):
                    include = [_string_map(e) for e in value if isinstance(e, dict)]
            elif key == "exclude":
                exclude_count = len(value) if isinstance(value, list) else 0
            else:
                variables[key] = _string_list(value)
    elif matrix is not None:
        diagnostics.append(Diagnostic("BAD_MATRIX", location, "matrix is not a mapping"))
    return MatrixSpec(variables=variables, include=tuple(include),
                      exclude_count=exclude_count, max_parallel=max_parallel,
                      fail_fast=fail_fast)


def _parse_step(raw: Any, job_id: str, index: int,
                diagnostics: list[Diagnostic]) -> StepSpec:
    location = f"jobs.{job_id}.steps[{index}]"
    if not isinstance(raw, dict):
        diagnostics.append(Diagnostic("BAD_STEP", location, "step entry is not a mapping"))
        return StepSpec(index=index)

    uses_raw = raw.get("uses")
    run_raw = raw.get("run")
    uses = None
    run = None
    if isinstance(uses_raw, str) and uses_raw:
        uses = classify_action_ref(uses_raw)
        if _is_malformed_remote(uses):
            diagnostics.append(Diagnostic("UNKNOWN_ACTION_SHAPE", f"{location}.uses",
                                          f"unrecognized action reference {uses_raw!r}"))
    if run_raw is not None:
        run = build_run_script(_as_str(run_raw))
    if uses is not None and run is not None:
        diagnostics.append(Diagnostic("STEP_USES_AND_RUN", location,
                                      "step carries both `uses` and `run`; keeping `uses`"))
        run = None

    condition = raw.get("if")
    coe = raw.get("continue-on-error", False)
    return StepSpec(
        index=index,
        name=_as_str(raw["name"]) if raw.get("name") is not None else None,
        uses=uses,
        run=run,
        shell=_as_str(raw["shell"]) if raw.get("shell") is not None else None,
        condition=_as_str(condition) if condition is not None else None,
        env=_string_map(raw.get("env")),
        with_inputs=_string_map(raw.get("with")),
        continue_on_error=coe if isinstance(coe, bool) else _as_str(coe).lower() == "true",
    )


def _parse_job(job_id: str, raw: Any, diagnostics: list[Diagnostic]) -> JobSpec:
    location = f"jobs.{job_id}"
    if not isinstance(raw, dict):
        diagnostics.append(Diagnostic("BAD_JOB", location, "job entry is not a mapping"))
        return JobSpec(id=job_id)

    uses_raw = raw.get("uses")
    uses = None
    if isinstance(uses_raw, str) and uses_raw:
        uses = classify_action_ref(uses_raw)
        if _is_malformed_remote(uses):
            diagnostics.append(Diagnostic("UNKNOWN_ACTION_SHAPE", f"{location}.uses",
                                          f"unrecognized workflow reference {uses_raw!r}"))

    runs_on_raw = raw.get("runs-on")
    if isinstance(runs_on_raw, dict):
        labels = list(_string_list(runs_on_raw.get("labels")))
        group = runs_on_raw.get("group")
        if group is not None:
            labels.append(f"group:{_as_str(group)}")
        runs_on = tuple(labels)
    else:
        runs_on = _string_list(runs_on_raw)

    steps_raw = raw.get("steps")
    steps: list[StepSpec] = []
    if isinstance(steps_raw, list):
        for i, entry in enumerate(steps_raw):
            steps.append(_parse_step(entry, job_id, i, diagnostics))
    elif steps_raw is not None:
        diagnostics.append(Diagnostic("BAD_STEPS", f"{location}.steps",
                                      "steps is not a sequence"))

    permissions = None
    if "permissions" in raw:
        permissions = _parse_permissions(raw["permissions"], f"{location}.permissions",
                                         diagnostics)

    condition = raw.get("if")
    job = JobSpec(
        id=job_id,
        display_name=_as_str(raw["name"]) if raw.get("name") is not None else None,
        runs_on=runs_on,
        needs=_string_list(raw.get("needs")),
        uses=uses,
        strategy=_parse_matrix(raw.get("strategy"), f"{location}.strategy", diagnostics),
        permissions=permissions,
        env=_string_map(raw.get("env")),
        steps=tuple(steps),
        condition=_as_str(condition) if condition is not None else None,
    )

    if job.steps and uses is not None:
        diagnostics.append(Diagnostic("JOB_STEPS_AND_USES", location,
                                      "job mixes `steps` with a reusable-workflow `uses`"))
    if job.is_incomplete:
        diagnostics.append(Diagnostic("INCOMPLETE_JOB", location,
                                      "job has neither steps nor a reusable-workflow call"))
    if job.steps and not job.runs_on:
        diagnostics.append(Diagnostic("MISSING_RUNS_ON", location,
                                      "job has steps but no runs-on"))
    return job


def parse_workflow(source_text: str, source_path: str = "<memory>") -> WorkflowModel:
    """Parse workflow YAML into a WorkflowModel.

    Raises MalformedYaml for unparseable documents and NotAWorkflow for
    valid YAML without `jobs` or `on`. Everything else is represented,
    with irregularities recorded as diagnostics.
    """
    loader = _DuplicateTrackingLoader(source_text)
    try:
        try:
            data = loader.get_single_data()
        finally:
            loader.dispose()
    except yaml.YAMLError as exc:
        raise MalformedYaml(str(exc)) from exc

    if not isinstance(data, dict):
        raise NotAWorkflow(f"{source_path}: top level is not a mapping")
    # YAML 1.1 resolves a bare `on` key to boolean True.
    has_on = "on" in data or True in data
    if "jobs" not in data and not has_on:
        raise NotAWorkflow(f"{source_path}: no `jobs` and no `on` key")

    diagnostics: list[Diagnostic] = []
    for key, line in loader.duplicate_keys:
        diagnostics.append(Diagnostic("DUPLICATE_KEY", f"line {line}",
                                      f"duplicate key {key!r}; last value wins"))
    for jid in _duplicate_job_ids(source_text):
        diagnostics.append(Diagnostic("DUPLICATE_JOB_ID", f"jobs.{jid}",
                                      f"job id {jid!r} defined more than once"))

    on_value = data.get("on", data.get(True))
    if isinstance(on_value, str):
        triggers: tuple[str, ...] = (on_value,)
    elif isinstance(on_value, list):
        triggers = tuple(_as_str(t) for t in on_value)
    elif isinstance(on_value, dict):
        triggers = tuple(_as_str(t) for t in on_value)
    else:
        triggers = ()

    global_permissions = None
    if "permissions" in data:
        global_permissions = _parse_permissions(data["permissions"], "permissions",
                                                diagnostics)

    jobs: dict[str, JobSpec] = {}
    jobs_raw = data.get("jobs")
    if isinstance(jobs_raw, dict):
        for jid, raw_job in jobs_raw.items():
            jid = _as_str(jid)
            jobs[jid] = _parse_job(jid, raw_job, diagnostics)
    elif jobs_raw is not None:
        diagnostics.append(Diagnostic("BAD_JOBS_BLOCK", "jobs",
                                      "jobs is not a mapping"))

    for jid, job in jobs.items():
        for needed in job.needs:
            if needed not in jobs:
                diagnostics.append(Diagnostic("DANGLING_NEEDS", f"jobs.{jid}.needs",
                                              f"references unknown job {needed!r}"))

    return WorkflowModel(
        source_path=source_path,
        raw_text=source_text,
        name=_as_str(data["name"]) if data.get("name") is not None else None,
        triggers=triggers,
        global_permissions=global_permissions,
        global_env=_string_map(data.get("env")),
        jobs=jobs,
        diagnostics=tuple(diagnostics),
    )


def extract_secret_usages(model: WorkflowModel) -> list[SecretUsage]:
    """One record per ``${{ secrets.* }}`` occurrence, tagged by scope."""
    usages: list[SecretUsage] = []

    def scan(value: str, location: str, scope: SecretScope) -> None:
        for m in _SECRET_EXPR_RE.finditer(value):
            usages.append(SecretUsage(location=location, scope=scope,
                                      expression=m.group(0)))

    for name, value in model.global_env.items():
        scan(value, f"env.{name}", SecretScope.GLOBAL_ENV)
    for jid, job in model.jobs.items():
        for name, value in job.env.items():
            scan(value, f"jobs.{jid}.env.{name}", SecretScope.JOB_ENV)
        for step in job.steps:
            prefix = f"jobs.{jid}.steps[{step.index}]"
            for name, value in step.env.items():
                scan(value, f"{prefix}.env.{name}", SecretScope.STEP_ENV)
            for name, value in step.with_inputs.items():
                scan(value, f"{prefix}.with.{name}", SecretScope.WITH_INPUT)
            if step.run is not None:
                for expr in step.run.references_secrets:
                    usages.append(SecretUsage(location=f"{prefix}.run",
                                              scope=SecretScope.RUN_BODY,
                                              expression=expr))
    return usages
