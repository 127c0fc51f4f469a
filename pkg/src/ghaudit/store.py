"""Append-only JSONL stores for sheets, labels, the review queue, and the
audit trail.

Every record carries a versioned `schema` tag. Stores are single-writer:
appends are serialized behind a lock and flushed per record so a crashed
run leaves at worst a truncated final line, which readers skip. Status
changes (review queue) are modeled as new records; readers keep the last
record per key.
"""

from __future__ import annotations

import json
import threading
from pathlib import Path
from typing import Iterator

from .adjudicate import FinalLabel, ItemKey, ReviewQueueEntry, ReviewStatus, Stage
from .catalog import Verdict
from .judge import VerdictSheet
from .static_checks import StaticFinding

SHEET_SCHEMA = "sheet@1"
LABEL_SCHEMA = "label@1"
REVIEW_SCHEMA = "review@1"
AUDIT_SCHEMA = "audit@1"
FINDING_SCHEMA = "finding@1"


class JsonlStore:
    """One append-only JSONL file."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()

    def append(self, record: dict) -> None:
        line = json.dumps(record, sort_keys=True, ensure_ascii=False)
        with self._lock:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as handle:
                handle.write(line + "\n")
                handle.flush()

    def records(self) -> Iterator[dict]:
        if not self.path.exists():
            return
        with self.path.open("r", encoding="utf-8") as handle:
            for line in handle:
                line = line.strip()
                if not line:
                    continue
                try:
                    record = json.loads(line)
                except json.JSONDecodeError:
                    continue  # tolerate a truncated trailing line
                if isinstance(record, dict):
                    yield record


def sheet_to_record(sheet: VerdictSheet) -> dict:
    return {
        "schema": SHEET_SCHEMA,
        "model_id": sheet.model_id,
        "workflow_id": sheet.workflow_id,
        "verdicts": {cid: v.value for cid, v in sorted(sheet.verdicts.items())},
        "raw_response": sheet.raw_response,
        "latency": round(sheet.latency, 6),
        "attempt": sheet.attempt,
        "expected_ids": list(sheet.expected_ids),
        "incomplete": sheet.incomplete,
    }


def record_to_sheet(record: dict) -> VerdictSheet:
    return VerdictSheet(
        model_id=record["model_id"],
        workflow_id=record["workflow_id"],
        verdicts={cid: Verdict(v) for cid, v in record.get("verdicts", {}).items()},
        raw_response=record.get("raw_response", ""),
        latency=float(record.get("latency", 0.0)),
        attempt=int(record.get("attempt", 1)),
        expected_ids=tuple(record.get("expected_ids", ())),
    )


def label_to_record(label: FinalLabel) -> dict:
    return {
        "schema": LABEL_SCHEMA,
        "workflow_id": label.key.workflow_id,
        "criterion_id": label.key.criterion_id,
        "verdict": label.verdict.value if label.verdict else None,
        "stage": label.stage.value,
        "supporting_models": list(label.supporting_models),
        "tiebreaker_verdict": (label.tiebreaker_verdict.value
                               if label.tiebreaker_verdict else None),
        "reviewer": label.reviewer,
        "decided_at": label.decided_at,
        "off_size_panel": label.off_size_panel,
    }


def record_to_label(record: dict) -> FinalLabel:
    return FinalLabel(
        key=ItemKey(record["workflow_id"], record["criterion_id"]),
        verdict=Verdict(record["verdict"]) if record.get("verdict") else None,
        stage=Stage(record["stage"]),
        supporting_models=tuple(record.get("supporting_models", ())),
        tiebreaker_verdict=(Verdict(record["tiebreaker_verdict"])
                            if record.get("tiebreaker_verdict") else None),
        reviewer=record.get("reviewer"),
        decided_at=record.get("decided_at", ""),
        off_size_panel=bool(record.get("off_size_panel", False)),
    )


def review_to_record(entry: ReviewQueueEntry) -> dict:
    return {
        "schema": REVIEW_SCHEMA,
        "workflow_id": entry.key.workflow_id,
        "criterion_id": entry.key.criterion_id,
        "workflow_excerpt": entry.workflow_excerpt,
        "panel_verdicts": {m: v.value for m, v in sorted(entry.panel_verdicts.items())},
        "tiebreaker_verdict": (entry.tiebreaker_verdict.value
                               if entry.tiebreaker_verdict else None),
        "status": entry.status.value,
        "off_size_panel": entry.off_size_panel,
    }


def record_to_review(record: dict) -> ReviewQueueEntry:
    return ReviewQueueEntry(
        key=ItemKey(record["workflow_id"], record["criterion_id"]),
        workflow_excerpt=record.get("workflow_excerpt", ""),
        panel_verdicts={m: Verdict(v) for m, v in record.get("panel_verdicts", {}).items()},
        tiebreaker_verdict=(Verdict(record["tiebreaker_verdict"])
                            if record.get("tiebreaker_verdict") else None),
        status=ReviewStatus(record.get("status", "PENDING")),
        off_size_panel=bool(record.get("off_size_panel", False)),
    )


def finding_to_record(workflow_id: str, finding: StaticFinding) -> dict:
    return {
        "schema": FINDING_SCHEMA,
        "workflow_id": workflow_id,
        "criterion_id": finding.criterion_id,
        "verdict": finding.verdict.value,
        "evidence": [list(e) for e in finding.evidence],
        "rule_version": finding.rule_version,
    }


def audit_record(event: str, at: str, **details) -> dict:
    record = {"schema": AUDIT_SCHEMA, "event": event, "at": at}
    record.update(details)
    return record


def load_labels(path: str | Path) -> list[FinalLabel]:
    """Labels from a store, keeping the last record per item key."""
    store = JsonlStore(path)
    by_key: dict[ItemKey, FinalLabel] = {}
    for record in store.records():
        if record.get("schema") != LABEL_SCHEMA:
            continue
        label = record_to_label(record)
        by_key[label.key] = label
    return [by_key[k] for k in sorted(by_key)]


def load_sheets(path: str | Path) -> list[VerdictSheet]:
    store = JsonlStore(path)
    out: list[VerdictSheet] = []
    for record in store.records():
        if record.get("schema") == SHEET_SCHEMA:
            out.append(record_to_sheet(record))
    return out


def load_review_queue(path: str | Path) -> list[ReviewQueueEntry]:
    """Queue entries with the last-written status per item key."""
    store = JsonlStore(path)
    by_key: dict[ItemKey, ReviewQueueEntry] = {}
    for record in store.records():
        if record.get("schema") != REVIEW_SCHEMA:
            continue
        entry = record_to_review(record)
        by_key[entry.key] = entry
    return [by_key[k] for k in sorted(by_key)]
