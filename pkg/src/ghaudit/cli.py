"""Command-line interface.

Subcommands mirror the pipeline stages so each can run standalone:

    audit       parse + static suite (+ panel with --judge) -> labels, report
    judge       query the panel only; persists verdict sheets
    adjudicate  turn persisted sheets into final labels
    review      interactive queue review (y/n/a/skip)
    stats       agreement statistics from the persisted stores
    report      re-render the compliance report from the label store
    sample      corpus filtering and stratified sampling

All artifacts are JSONL files with versioned schemas under --out-dir.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .adjudicate import ItemKey, ReviewStatus, apply_manual_verdict, skip_entry, utc_now_iso
from .catalog import Verdict, load_catalog, render_question
from .judge import PanelResult
from .pipeline import (AuditConfig, MemoizedTiebreaker, adjudicate_workflow, audit,
                       load_config)
from .report import FORMATS, build_report, render_tables
from .sampling import (RepoRecord, discover_workflows, filter_repos, make_plan,
                       stratified_sample)
from .stats import RatingMatrix, compute_agreement_report
from .store import (JsonlStore, audit_record, label_to_record, load_labels,
                    load_review_queue, load_sheets, review_to_record)


def _common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, default=None,
                        help="endpoint/rule-table JSON config")
    parser.add_argument("--out-dir", type=Path, default=Path("ghaudit-out"),
                        help="artifact directory (default: ghaudit-out)")
    parser.add_argument("--format", choices=FORMATS, default="markdown")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--strict", action="store_true",
                        help="exit nonzero on any noncompliant label, not just static ones")


def _build_config(args: argparse.Namespace, judge: bool = False) -> AuditConfig:
    if args.config is not None:
        config = load_config(args.config)
    else:
        config = AuditConfig()
    config.out_dir = args.out_dir
    config.report_format = args.format
    config.strict = args.strict
    config.judge = judge
    if getattr(args, "s1_threshold", None) is not None:
        config.run_complexity_threshold = args.s1_threshold
    return config


def _expand_paths(paths: list[Path]) -> list[Path]:
    out: list[Path] = []
    for path in paths:
        if path.is_dir():
            found = discover_workflows(path)
            out.extend(found if found else sorted(
                p for p in path.iterdir() if p.suffix in (".yml", ".yaml")))
        else:
            out.append(path)
    return out


def cmd_audit(args: argparse.Namespace) -> int:
    config = _build_config(args, judge=args.judge)
    paths = _expand_paths(args.paths)
    if not paths:
        print("no workflow files found", file=sys.stderr)
        return 2
    outcome = audit(paths, config)
    for path, message in outcome.errors:
        print(f"error: {path}: {message}", file=sys.stderr)
    print(f"audited {len(outcome.models)} workflow(s); "
          f"{len(outcome.labels)} label(s), {len(outcome.queue)} queued for review")
    print(f"artifacts in {config.out_dir}")
    if outcome.exit_status:
        print("static compliance violations found", file=sys.stderr)
    return outcome.exit_status


def cmd_judge(args: argparse.Namespace) -> int:
    from .judge import PanelError, run_panel
    from .pipeline import _parse_paths
    from .store import sheet_to_record

    config = _build_config(args, judge=True)
    if not config.panelists:
        print("judge requires PANELIST endpoints in --config", file=sys.stderr)
        return 2
    paths = _expand_paths(args.paths)
    catalog = load_catalog()
    config.out_dir.mkdir(parents=True, exist_ok=True)
    sheets_store = JsonlStore(config.out_dir / "sheets.jsonl")

    models, errors = _parse_paths(paths)
    for path, message in errors:
        print(f"error: {path}: {message}", file=sys.stderr)
    total = 0
    wholesale_failures = 0
    for model in models:
        try:
            result = run_panel(model, config.panelists, catalog)
        except PanelError as exc:
            print(f"error: {exc}", file=sys.stderr)
            wholesale_failures += 1
            continue
        for sheet in result.sheets:
            sheets_store.append(sheet_to_record(sheet))
            total += 1
        for model_id, failure in result.failures.items():
            print(f"panelist {model_id} failed on {model.workflow_id}: {failure}",
                  file=sys.stderr)
    print(f"wrote {total} sheet(s) to {config.out_dir / 'sheets.jsonl'}")
    return 0 if total and wholesale_failures == 0 else (2 if not total else 1)


def cmd_adjudicate(args: argparse.Namespace) -> int:
    from .pipeline import _parse_paths
    from .static_checks import run_static_suite

    config = _build_config(args)
    catalog = load_catalog()
    sheets = load_sheets(config.out_dir / "sheets.jsonl")
    if not sheets:
        print(f"no sheets in {config.out_dir / 'sheets.jsonl'}", file=sys.stderr)
        return 2

    by_workflow: dict[str, PanelResult] = {}
    for sheet in sheets:
        by_workflow.setdefault(sheet.workflow_id,
                               PanelResult(workflow_id=sheet.workflow_id)).sheets.append(sheet)

    models, errors = _parse_paths(sorted(by_workflow))
    for path, message in errors:
        print(f"error: {path}: {message}", file=sys.stderr)
    models_by_id = {m.workflow_id: m for m in models}

    tiebreaker = MemoizedTiebreaker(config.tiebreaker, catalog, models_by_id,
                                    cache_store=JsonlStore(config.out_dir / "tiebreaker.jsonl"))
    labels_store = JsonlStore(config.out_dir / "labels.jsonl")
    queue_store = JsonlStore(config.out_dir / "review_queue.jsonl")

    all_labels = []
    queued = 0
    for workflow_id, panel_result in sorted(by_workflow.items()):
        model = models_by_id.get(workflow_id)
        if model is None:
            continue
        findings = run_static_suite(model, catalog, rules=config.rules,
                                    run_complexity_threshold=config.run_complexity_threshold)
        labels, queue = adjudicate_workflow(model, panel_result, findings,
                                            catalog, tiebreaker)
        for label in labels:
            labels_store.append(label_to_record(label))
        for entry in queue:
            queue_store.append(review_to_record(entry))
            queued += 1
        all_labels.extend(labels)
    print(f"adjudicated {len(all_labels)} item(s); {queued} queued for review")
    return 0


def cmd_review(args: argparse.Namespace) -> int:
    config = _build_config(args)
    entries = [e for e in load_review_queue(config.out_dir / "review_queue.jsonl")
               if e.status is ReviewStatus.PENDING]
    if not entries:
        print("review queue is empty")
        return 0
    catalog = load_catalog()
    labels_store = JsonlStore(config.out_dir / "labels.jsonl")
    queue_store = JsonlStore(config.out_dir / "review_queue.jsonl")
    audit_log = JsonlStore(config.out_dir / "audit_log.jsonl")

    key_map = {"y": Verdict.YES, "n": Verdict.NO, "a": Verdict.NOT_APPLICABLE}
    print(f"{len(entries)} pending item(s); keys: y=yes n=no a=not-applicable "
          "s=skip q=quit")
    for entry in entries:
        criterion = catalog.by_id[entry.key.criterion_id]
        print("\n" + "=" * 72)
        print(f"{entry.key.workflow_id} :: {entry.key.criterion_id}")
        print(f"Q: {render_question(criterion)}")
        panel = ", ".join(f"{m}={v.value}" for m, v in sorted(entry.panel_verdicts.items()))
        print(f"panel: {panel}")
        tb = entry.tiebreaker_verdict.value if entry.tiebreaker_verdict else "none"
        print(f"tie-breaker: {tb}")
        excerpt = entry.workflow_excerpt.strip().splitlines()[:20]
        print("-" * 72)
        for line in excerpt:
            print(f"  {line}")
        print("-" * 72)

        while True:
            choice = input("[y/n/a/s/q]> ").strip().lower()
            if choice in ("y", "n", "a", "s", "q"):
                break
        if choice == "q":
            break
        if choice == "s":
            label = skip_entry(entry)
        else:
            label = apply_manual_verdict(entry, key_map[choice], args.reviewer)
        labels_store.append(label_to_record(label))
        queue_store.append(review_to_record(entry))
        audit_log.append(audit_record(
            "manual_review", utc_now_iso(), reviewer=args.reviewer,
            workflow_id=entry.key.workflow_id, criterion_id=entry.key.criterion_id,
            verdict=label.verdict.value if label.verdict else None,
            status=entry.status.value))
        print(f"recorded {entry.status.value}")
    return 0


def cmd_stats(args: argparse.Namespace) -> int:
    config = _build_config(args)
    sheets = [s for s in load_sheets(config.out_dir / "sheets.jsonl") if not s.incomplete]
    if not sheets:
        print(f"no complete sheets in {config.out_dir / 'sheets.jsonl'}", file=sys.stderr)
        return 2
    raters = sorted({s.model_id for s in sheets})
    cells = {}
    for sheet in sheets:
        for criterion_id, verdict in sheet.verdicts.items():
            cells[(ItemKey(sheet.workflow_id, criterion_id), sheet.model_id)] = verdict
    matrix, dropped = RatingMatrix.build(raters, cells)

    labels = load_labels(config.out_dir / "labels.jsonl") or None
    truth = None
    if labels:
        manual = {l.key: l.verdict for l in labels
                  if l.stage.value == "MANUAL" and l.verdict is not None}
        truth = manual or None

    agreement = compute_agreement_report(matrix, filtered_items=dropped,
                                         labels=labels, truth=truth)
    out_path = config.out_dir / "agreement.json"
    out_path.write_text(json.dumps(agreement.to_dict(), indent=2) + "\n",
                        encoding="utf-8")

    print(f"items: {agreement.item_count} (filtered incomplete: {agreement.filtered_items})")
    for band, count in agreement.band_counts.items():
        share = count / agreement.item_count if agreement.item_count else 0.0
        print(f"  {band.value}: {count} ({share:.0%})")
    degen = " (degenerate)" if agreement.fleiss_degenerate else ""
    print(f"Fleiss' kappa: {agreement.fleiss_kappa:.3f}{degen}")
    for (a, b), (ck, p) in sorted(agreement.pairwise.items()):
        print(f"  {a} vs {b}: Cohen's kappa={ck:.2f} McNemar p={p:.2f}")
    for model, rate in sorted(agreement.per_model_agreement_rate.items()):
        print(f"  agreement rate {model}: {rate:.0%}")
    if agreement.metrics_vs_truth:
        for model, metrics in sorted(agreement.metrics_vs_truth.items()):
            print(f"  vs truth {model}: acc={metrics.accuracy:.3f} "
                  f"macro-F1={metrics.macro_f1:.3f}")
    print(f"wrote {out_path}")
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    config = _build_config(args)
    labels = load_labels(config.out_dir / "labels.jsonl")
    if not labels:
        print(f"no labels in {config.out_dir / 'labels.jsonl'}", file=sys.stderr)
        return 2
    catalog = load_catalog()
    report = build_report(labels, catalog)
    print(render_tables(report, config.report_format), end="")
    return 0


def cmd_sample(args: argparse.Namespace) -> int:
    records = []
    with open(args.manifest, "r", encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            records.append(RepoRecord(
                full_name=row["full_name"],
                stars=int(row.get("stars", 0)),
                workflow_run_count=int(row.get("workflow_run_count", 0)),
                default_branch=row.get("default_branch", "main"),
            ))
    kept = filter_repos(records)
    plan = make_plan(len(kept), confidence=args.confidence, margin=args.margin)
    selected = stratified_sample(
        kept, stratum_of=lambda r: r.full_name.split("/", 1)[0],
        n=plan.sample_n, min_per_stratum=args.min_per_stratum, seed=args.seed
    ) if args.stratify else stratified_sample(
        kept, stratum_of=lambda r: "all", n=plan.sample_n,
        min_per_stratum=min(args.min_per_stratum, plan.sample_n), seed=args.seed)

    out_path = Path(args.out) if args.out else None
    lines = [json.dumps({
        "full_name": r.full_name, "stars": r.stars,
        "workflow_run_count": r.workflow_run_count,
        "default_branch": r.default_branch,
    }, sort_keys=True) for r in selected]
    if out_path:
        out_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        print(f"kept {len(kept)}/{len(records)} repos; sampled {len(selected)} "
              f"(plan n={plan.sample_n}) -> {out_path}")
    else:
        for line in lines:
            print(line)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ghaudit",
        description="Checklist-based compliance auditor for GitHub Actions workflows")
    sub = parser.add_subparsers(dest="command", required=True)

    p_audit = sub.add_parser("audit", help="run the audit pipeline over workflow files")
    p_audit.add_argument("paths", nargs="+", type=Path,
                         help="workflow files, or directories to scan")
    p_audit.add_argument("--judge", action="store_true",
                         help="also run the judge panel and adjudication tiers")
    p_audit.add_argument("--s1-threshold", type=int, default=None,
                         help="run-complexity line threshold override")
    _common_flags(p_audit)
    p_audit.set_defaults(func=cmd_audit)

    p_judge = sub.add_parser("judge", help="query the judge panel; write verdict sheets")
    p_judge.add_argument("paths", nargs="+", type=Path)
    _common_flags(p_judge)
    p_judge.set_defaults(func=cmd_judge)

    p_adj = sub.add_parser("adjudicate", help="resolve persisted sheets into final labels")
    _common_flags(p_adj)
    p_adj.set_defaults(func=cmd_adjudicate)

    p_review = sub.add_parser("review", help="interactively review queued disagreements")
    p_review.add_argument("--reviewer", required=True, help="reviewer id for the audit trail")
    _common_flags(p_review)
    p_review.set_defaults(func=cmd_review)

    p_stats = sub.add_parser("stats", help="agreement statistics from persisted stores")
    _common_flags(p_stats)
    p_stats.set_defaults(func=cmd_stats)

    p_report = sub.add_parser("report", help="render the compliance report from labels")
    _common_flags(p_report)
    p_report.set_defaults(func=cmd_report)

    p_sample = sub.add_parser("sample", help="filter a repo manifest and draw a sample")
    p_sample.add_argument("--manifest", required=True, help="JSONL of repo records")
    p_sample.add_argument("--confidence", type=float, default=0.95)
    p_sample.add_argument("--margin", type=float, default=0.10)
    p_sample.add_argument("--min-per-stratum", type=int, default=2)
    p_sample.add_argument("--stratify", action="store_true",
                          help="stratify by repository owner")
    p_sample.add_argument("--out", default=None, help="output JSONL path")
    _common_flags(p_sample)
    p_sample.set_defaults(func=cmd_sample)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
