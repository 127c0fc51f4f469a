"""End-to-end audit orchestration.

One audit run parses the workflow files, runs the static suite, optionally
fans the judge panel out across workflows, adjudicates panel verdicts into
final labels, and writes every artifact (JSONL stores plus rendered
reports) under the output directory.

Adjudication is replayable: tie-breaker verdicts are memoized in a JSONL
cache keyed by (workflow, criterion), so re-running over the same inputs
reproduces identical labels without re-querying.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping

from .adjudicate import (FinalLabel, ItemKey, ReviewQueueEntry, Stage,
                         TiebreakerUnavailable, decide, static_label, utc_now_iso)
from .catalog import Catalog, Compliance, Mode, Verdict, compliance_of, load_catalog
from .judge import (EndpointRole, EndpointUnavailable, ModelEndpoint, PanelError,
                    PanelResult, Unparseable, build_prompt, endpoint_from_dict,
                    parse_verdicts, query_model, run_panel)
from .model import MalformedYaml, NotAWorkflow, WorkflowModel, parse_workflow
from .report import ComplianceReport, build_report, render_tables
from .rules import DEFAULT_RULES, RuleTables, rule_tables_from_dict
from .static_checks import StaticFinding, run_static_suite
from .stats import RatingMatrix, band_counts_of, fleiss_kappa_details
from .store import (JsonlStore, audit_record, finding_to_record, label_to_record,
                    load_labels, load_sheets, review_to_record, sheet_to_record)

logger = logging.getLogger(__name__)

EXCERPT_MAX_CHARS = 2000
TIEBREAKER_SCHEMA = "tiebreaker@1"


@dataclass
class AuditConfig:
    endpoints: list[ModelEndpoint] = field(default_factory=list)
    rules: RuleTables = DEFAULT_RULES
    run_complexity_threshold: int | None = None
    judge: bool = False
    strict: bool = False
    out_dir: Path = Path("ghaudit-out")
    report_format: str = "markdown"
    panel_workers: int = 4
    clock: Callable[[], str] = utc_now_iso

    @property
    def panelists(self) -> list[ModelEndpoint]:
        return [e for e in self.endpoints if e.role is EndpointRole.PANELIST]

    @property
    def tiebreaker(self) -> ModelEndpoint | None:
        for e in self.endpoints:
            if e.role is EndpointRole.TIEBREAKER:
                return e
        return None


def load_config(path: str | Path, **overrides) -> AuditConfig:
    """AuditConfig from a JSON file (endpoints, rule tables, thresholds)."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    config = AuditConfig(
        endpoints=[endpoint_from_dict(e) for e in data.get("endpoints", [])],
        rules=rule_tables_from_dict(data.get("rules", {})),
    )
    if "run_complexity_threshold" in data:
        config.run_complexity_threshold = int(data["run_complexity_threshold"])
    for key, value in overrides.items():
        setattr(config, key, value)
    return config


@dataclass
class AuditOutcome:
    models: list[WorkflowModel]
    findings: dict[str, dict[str, StaticFinding]]  # workflow_id -> criterion -> finding
    labels: list[FinalLabel]
    queue: list[ReviewQueueEntry]
    panels: list[PanelResult]
    report: ComplianceReport
    exit_status: int
    errors: list[tuple[str, str]] = field(default_factory=list)


class MemoizedTiebreaker:
    """Tie-breaker client with a persistent (workflow, criterion) cache.

    Adjudication is blind: the tie-breaker gets the standard audit prompt
    restricted to the disputed criterion, never the panel's answers.
    """

    def __init__(self, endpoint: ModelEndpoint | None, catalog: Catalog,
                 models: Mapping[str, WorkflowModel],
                 cache_store: JsonlStore | None = None):
        self.endpoint = endpoint
        self.catalog = catalog
        self.models = models
        self.cache_store = cache_store
        self.cache: dict[ItemKey, Verdict] = {}
        if cache_store is not None:
            for record in cache_store.records():
                if record.get("schema") != TIEBREAKER_SCHEMA:
                    continue
                key = ItemKey(record["workflow_id"], record["criterion_id"])
                self.cache[key] = Verdict(record["verdict"])

    def __call__(self, key: ItemKey) -> Verdict:
        if key in self.cache:
            return self.cache[key]
        if self.endpoint is None:
            raise TiebreakerUnavailable("no TIEBREAKER endpoint configured")
        workflow = self.models.get(key.workflow_id)
        if workflow is None:
            raise TiebreakerUnavailable(f"no parsed workflow for {key.workflow_id}")
        criterion = self.catalog.by_id[key.criterion_id]
        prompt = build_prompt(workflow, self.catalog, criteria=[criterion])
        try:
            raw = query_model(self.endpoint, prompt)
            verdict = parse_verdicts(raw, self.catalog).get(key.criterion_id)
        except (EndpointUnavailable, Unparseable) as exc:
            raise TiebreakerUnavailable(str(exc)) from exc
        if verdict is None:
            raise TiebreakerUnavailable(f"tie-breaker gave no answer for {key}")
        self.cache[key] = verdict
        if self.cache_store is not None:
            self.cache_store.append({
                "schema": TIEBREAKER_SCHEMA,
                "workflow_id": key.workflow_id,
                "criterion_id": key.criterion_id,
                "verdict": verdict.value,
                "model_id": self.endpoint.model_id,
                "raw_response": raw,
            })
        return verdict


def panel_verdicts_for(panel_result: PanelResult, criterion_id: str) -> dict[str, Verdict]:
    """Per-model verdicts for one criterion, skipping INCOMPLETE sheets
    entirely (they are excluded from banding and adjudicated off-size)."""
    verdicts: dict[str, Verdict] = {}
    for sheet in panel_result.sheets:
        if sheet.incomplete:
            continue
        verdict = sheet.verdicts.get(criterion_id)
        if verdict is not None:
            verdicts[sheet.model_id] = verdict
    return verdicts


def adjudicate_workflow(workflow: WorkflowModel, panel_result: PanelResult,
                        findings: Mapping[str, StaticFinding], catalog: Catalog,
                        tiebreaker: Callable[[ItemKey], Verdict],
                        clock: Callable[[], str] = utc_now_iso
                        ) -> tuple[list[FinalLabel], list[ReviewQueueEntry]]:
    """Final labels for all 30 criteria of one workflow.

    STATIC criteria take their finding verbatim; LLM and HYBRID criteria
    run the decision tiers, HYBRID ones with the static finding attached
    as a conflict detector.
    """
    labels: list[FinalLabel] = []
    queue: list[ReviewQueueEntry] = []
    excerpt = workflow.raw_text[:EXCERPT_MAX_CHARS]
    for criterion in catalog:
        key = ItemKey(workflow.workflow_id, criterion.id)
        if criterion.mode is Mode.STATIC:
            labels.append(static_label(key, findings[criterion.id], clock=clock))
            continue
        panel = panel_verdicts_for(panel_result, criterion.id)
        static_finding = findings.get(criterion.id) if criterion.mode is Mode.HYBRID else None
        if not panel:
            labels.append(FinalLabel(key=key, verdict=None, stage=Stage.UNRESOLVED,
                                     decided_at=clock(), off_size_panel=True))
            continue
        decision = decide(key, panel, tiebreaker, static_finding=static_finding,
                          workflow_excerpt=excerpt, clock=clock)
        if isinstance(decision, FinalLabel):
            labels.append(decision)
        else:
            # queued items stay UNRESOLVED until a reviewer's label
            # supersedes this one in the store
            queue.append(decision)
            labels.append(FinalLabel(key=key, verdict=None, stage=Stage.UNRESOLVED,
                                     decided_at=clock(),
                                     off_size_panel=decision.off_size_panel))
    return labels, queue


def _parse_paths(paths: list[str | Path]) -> tuple[list[WorkflowModel], list[tuple[str, str]]]:
    models: list[WorkflowModel] = []
    errors: list[tuple[str, str]] = []
    for path in paths:
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
            models.append(parse_workflow(text, source_path=str(path)))
        except (OSError, MalformedYaml, NotAWorkflow) as exc:
            errors.append((str(path), f"{type(exc).__name__}: {exc}"))
    return models, errors


def _lint_status(labels: list[FinalLabel], catalog: Catalog, strict: bool) -> int:
    """Nonzero iff a STATIC criterion is noncompliant; --strict widens the
    gate to every label, so advisory judgments can also fail CI."""
    for label in labels:
        if label.verdict is None:
            continue
        criterion = catalog.by_id[label.key.criterion_id]
        if not strict and criterion.mode is not Mode.STATIC:
            continue
        if compliance_of(label.verdict, criterion) is Compliance.NONCOMPLIANT:
            return 1
    return 0


def replay_aggregates(store_dir: str | Path) -> dict:
    """Recompute aggregate statistics from previously recorded stores.

    Reads sheets.jsonl (and labels.jsonl when present) under `store_dir`
    and returns band counts, Fleiss' kappa, and the stage progression, so
    an external raw-output drop can be checked against published numbers.
    """
    base = Path(store_dir)
    sheets = [s for s in load_sheets(base / "sheets.jsonl") if not s.incomplete]
    if not sheets:
        raise ValueError(f"no complete sheets in {base / 'sheets.jsonl'}")
    raters = sorted({s.model_id for s in sheets})
    cells: dict[tuple[ItemKey, str], Verdict] = {}
    for sheet in sheets:
        for criterion_id, verdict in sheet.verdicts.items():
            cells[(ItemKey(sheet.workflow_id, criterion_id), sheet.model_id)] = verdict
    matrix, dropped = RatingMatrix.build(raters, cells)
    kappa, degenerate = fleiss_kappa_details(matrix)

    result: dict = {
        "raters": raters,
        "item_count": len(matrix.items),
        "dropped_items": dropped,
        "band_counts": ({band.value: count
                         for band, count in band_counts_of(matrix).items()}
                        if len(raters) == 4 else {}),
        "fleiss_kappa": kappa,
        "fleiss_degenerate": degenerate,
    }

    labels_path = base / "labels.jsonl"
    if labels_path.exists():
        labels = load_labels(labels_path)
        report = build_report(labels, load_catalog())
        result["label_count"] = len(labels)
        result["progression"] = [
            {"stage": s.stage_name, "resolved": s.resolved, "compliant": s.compliant}
            for s in report.stage_progression.stages
        ]
    return result


def audit(paths: list[str | Path], config: AuditConfig) -> AuditOutcome:
    """Run the full pipeline over workflow files and write all artifacts.

    Without judge mode the static suite alone produces labels (all carry
    the STATIC provenance stage; HYBRID findings are advisory there). With
    judge mode every criterion receives a final label through the panel
    and the adjudication tiers.
    """
    catalog = load_catalog()
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "catalog.json").write_text(catalog.to_json() + "\n", encoding="utf-8")

    models, errors = _parse_paths(paths)
    for path, message in errors:
        logger.error("skipping %s: %s", path, message)
    if not models:
        raise ValueError(f"no auditable workflows among {len(paths)} path(s): {errors}")

    findings_store = JsonlStore(out_dir / "static_findings.jsonl")
    all_findings: dict[str, dict[str, StaticFinding]] = {}
    for model in models:
        suite = run_static_suite(model, catalog, rules=config.rules,
                                 run_complexity_threshold=config.run_complexity_threshold)
        all_findings[model.workflow_id] = suite
        for finding in suite.values():
            findings_store.append(finding_to_record(model.workflow_id, finding))

    labels: list[FinalLabel] = []
    queue: list[ReviewQueueEntry] = []
    panels: list[PanelResult] = []

    if config.judge:
        panelists = config.panelists
        if len(panelists) != 4:
            logger.warning("panel has %d panelists; the decision tiers assume 4",
                           len(panelists))
        sheets_store = JsonlStore(out_dir / "sheets.jsonl")
        models_by_id = {m.workflow_id: m for m in models}
        tiebreaker = MemoizedTiebreaker(config.tiebreaker, catalog, models_by_id,
                                        cache_store=JsonlStore(out_dir / "tiebreaker.jsonl"))

        def judge_one(model: WorkflowModel) -> PanelResult:
            return run_panel(model, panelists, catalog)

        with ThreadPoolExecutor(max_workers=max(1, config.panel_workers)) as pool:
            futures = {pool.submit(judge_one, m): m for m in models}
            for future, model in futures.items():
                try:
                    panels.append(future.result())
                except PanelError as exc:
                    errors.append((model.workflow_id, str(exc)))

        panels.sort(key=lambda p: p.workflow_id)
        for panel_result in panels:
            for sheet in panel_result.sheets:
                sheets_store.append(sheet_to_record(sheet))
            wf_labels, wf_queue = adjudicate_workflow(
                models_by_id[panel_result.workflow_id], panel_result,
                all_findings[panel_result.workflow_id], catalog, tiebreaker,
                clock=config.clock)
            labels.extend(wf_labels)
            queue.extend(wf_queue)
    else:
        for model in models:
            for criterion_id, finding in all_findings[model.workflow_id].items():
                labels.append(static_label(ItemKey(model.workflow_id, criterion_id),
                                           finding, clock=config.clock))

    labels.sort(key=lambda l: l.key)
    queue.sort(key=lambda e: e.key)

    labels_store = JsonlStore(out_dir / "labels.jsonl")
    for label in labels:
        labels_store.append(label_to_record(label))
    queue_store = JsonlStore(out_dir / "review_queue.jsonl")
    for entry in queue:
        queue_store.append(review_to_record(entry))
    audit_log = JsonlStore(out_dir / "audit_log.jsonl")
    audit_log.append(audit_record(
        "audit_run", config.clock(),
        workflows=len(models), labels=len(labels), queued=len(queue),
        judge=config.judge, parse_errors=len(errors)))

    report = build_report(labels, catalog)
    for fmt, filename in (("markdown", "report.md"), ("csv", "report.csv"),
                          ("json", "report.json")):
        (out_dir / filename).write_text(render_tables(report, fmt), encoding="utf-8")

    return AuditOutcome(
        models=models,
        findings=all_findings,
        labels=labels,
        queue=queue,
        panels=panels,
        report=report,
        exit_status=_lint_status(labels, catalog, config.strict),
        errors=errors,
    )
