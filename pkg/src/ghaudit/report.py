"""Compliance-rate aggregation and table rendering.

Rates are computed per section, per theme, and per criterion — three
partitions of the same label set, so their compliant totals always
agree. NOT_APPLICABLE labels are excluded from every denominator, and a
0/0 rate renders as n/a rather than 0. Report generation is a pure
function of the label store.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

from .adjudicate import FinalLabel, Progression, Stage, progression_snapshot
from .catalog import Catalog, Compliance, Section, Theme, compliance_of


class UnknownFormat(Exception):
    pass


FORMATS = ("markdown", "csv", "json")


@dataclass
class RateRow:
    compliant: int = 0
    assessed: int = 0

    @property
    def rate(self) -> float | None:
        return self.compliant / self.assessed if self.assessed else None


@dataclass
class CriterionRow(RateRow):
    text: str = ""
    share_of_compliant: float | None = None


@dataclass
class ComplianceReport:
    per_section: dict[str, RateRow]
    per_theme: dict[str, RateRow]
    per_criterion: dict[str, CriterionRow]
    na_count: int
    na_rate: float
    unresolved_count: int
    overall_compliant: int
    overall_assessed: int
    stage_progression: Progression
    label_count: int = 0
    catalog_checksum: str = ""

    @property
    def overall_rate(self) -> float | None:
        return (self.overall_compliant / self.overall_assessed
                if self.overall_assessed else None)

    def to_dict(self) -> dict:
        def row(r: RateRow) -> dict:
            return {"compliant": r.compliant, "assessed": r.assessed, "rate": r.rate}

        return {
            "schema": "report@1",
            "catalog_checksum": self.catalog_checksum,
            "label_count": self.label_count,
            "overall": {"compliant": self.overall_compliant,
                        "assessed": self.overall_assessed,
                        "rate": self.overall_rate},
            "na_count": self.na_count,
            "na_rate": self.na_rate,
            "unresolved_count": self.unresolved_count,
            "per_section": {k: row(v) for k, v in self.per_section.items()},
            "per_theme": {k: row(v) for k, v in self.per_theme.items()},
            "per_criterion": {
                k: {**row(v), "text": v.text, "share_of_compliant": v.share_of_compliant}
                for k, v in self.per_criterion.items()
            },
            "stage_progression": [
                {"stage": s.stage_name, "resolved": s.resolved,
                 "compliant": s.compliant, "total": self.stage_progression.total_items}
                for s in self.stage_progression.stages
            ],
        }


REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema", "overall", "na_count", "na_rate", "per_section",
                 "per_theme", "per_criterion", "stage_progression"],
    "properties": {
        "schema": {"const": "report@1"},
        "catalog_checksum": {"type": "string"},
        "label_count": {"type": "integer", "minimum": 0},
        "overall": {"$ref": "#/$defs/rate_row"},
        "na_count": {"type": "integer", "minimum": 0},
        "na_rate": {"type": "number", "minimum": 0, "maximum": 1},
        "unresolved_count": {"type": "integer", "minimum": 0},
        "per_section": {"type": "object",
                        "additionalProperties": {"$ref": "#/$defs/rate_row"}},
        "per_theme": {"type": "object",
                      "additionalProperties": {"$ref": "#/$defs/rate_row"}},
        "per_criterion": {"type": "object",
                          "additionalProperties": {"$ref": "#/$defs/criterion_row"}},
        "stage_progression": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["stage", "resolved", "compliant", "total"],
                "properties": {
                    "stage": {"type": "string"},
                    "resolved": {"type": "integer", "minimum": 0},
                    "compliant": {"type": "integer", "minimum": 0},
                    "total": {"type": "integer", "minimum": 0},
                },
            },
        },
    },
    "$defs": {
        "rate_row": {
            "type": "object",
            "required": ["compliant", "assessed", "rate"],
            "properties": {
                "compliant": {"type": "integer", "minimum": 0},
                "assessed": {"type": "integer", "minimum": 0},
                "rate": {"type": ["number", "null"], "minimum": 0, "maximum": 1},
            },
        },
        "criterion_row": {
            "type": "object",
            "required": ["compliant", "assessed", "rate", "text"],
            "properties": {
                "compliant": {"type": "integer", "minimum": 0},
                "assessed": {"type": "integer", "minimum": 0},
                "rate": {"type": ["number", "null"], "minimum": 0, "maximum": 1},
                "text": {"type": "string"},
                "share_of_compliant": {"type": ["number", "null"]},
            },
        },
    },
}


def build_report(labels: list[FinalLabel], catalog: Catalog) -> ComplianceReport:
    """Aggregate final labels into section/theme/criterion compliance rates.

    UNRESOLVED labels and NOT_APPLICABLE verdicts never enter a
    denominator. Criterion rows are ordered by descending compliant count
    (the most-frequently-satisfied view), and each carries both its own
    rate and its share of all compliant items, since the two are easy to
    conflate.
    """
    per_section = {s.value: RateRow() for s in Section}
    per_theme = {t.value: RateRow() for t in Theme}
    per_criterion = {c.id: CriterionRow(text=c.text) for c in catalog}

    na_count = 0
    unresolved = 0
    for label in labels:
        if label.stage is Stage.UNRESOLVED or label.verdict is None:
            unresolved += 1
            continue
        criterion = catalog.by_id[label.key.criterion_id]
        outcome = compliance_of(label.verdict, criterion)
        if outcome is Compliance.EXCLUDED:
            na_count += 1
            continue
        hit = 1 if outcome is Compliance.COMPLIANT else 0
        for bucket in (per_section[criterion.section.value],
                       per_theme[criterion.theme.value],
                       per_criterion[criterion.id]):
            bucket.assessed += 1
            bucket.compliant += hit

    total_compliant = sum(r.compliant for r in per_criterion.values())
    total_assessed = sum(r.assessed for r in per_criterion.values())
    for row in per_criterion.values():
        row.share_of_compliant = (row.compliant / total_compliant
                                  if total_compliant else None)

    ordered = dict(sorted(per_criterion.items(),
                          key=lambda kv: (-kv[1].compliant, kv[0])))
    return ComplianceReport(
        per_section=per_section,
        per_theme=per_theme,
        per_criterion=ordered,
        na_count=na_count,
        na_rate=na_count / len(labels) if labels else 0.0,
        unresolved_count=unresolved,
        overall_compliant=total_compliant,
        overall_assessed=total_assessed,
        stage_progression=progression_snapshot(labels, catalog),
        label_count=len(labels),
        catalog_checksum=catalog.checksum,
    )


def _fmt_rate(rate: float | None) -> str:
    return f"{rate:.0%}" if rate is not None else "n/a"


def _render_markdown(report: ComplianceReport) -> str:
    lines = ["# Compliance Report", ""]
    overall = _fmt_rate(report.overall_rate)
    lines.append(f"- Labels: {report.label_count} "
                 f"(unresolved: {report.unresolved_count})")
    lines.append(f"- Overall: {report.overall_compliant}/{report.overall_assessed} "
                 f"compliant ({overall})")
    lines.append(f"- N/A: {report.na_count} ({report.na_rate:.0%} of labels), "
                 "excluded from all rates")
    lines.append("")

    lines += ["## Section-wise", "", "| Section | Compliant | Assessed | Rate |",
              "| --- | ---: | ---: | ---: |"]
    for name, row in report.per_section.items():
        lines.append(f"| {name} | {row.compliant} | {row.assessed} | {_fmt_rate(row.rate)} |")

    lines += ["", "## Theme-wise", "", "| Theme | Compliant | Assessed | Rate |",
              "| --- | ---: | ---: | ---: |"]
    for name, row in report.per_theme.items():
        lines.append(f"| {name} | {row.compliant} | {row.assessed} | {_fmt_rate(row.rate)} |")

    lines += ["", "## Top 5 Criterion-wise", "",
              "| Criterion | Compliant | Assessed | Rate | Share of compliant |",
              "| --- | ---: | ---: | ---: | ---: |"]
    for cid, row in list(report.per_criterion.items())[:5]:
        share = _fmt_rate(row.share_of_compliant)
        lines.append(f"| {cid}: {row.text} | {row.compliant} | {row.assessed} | "
                     f"{_fmt_rate(row.rate)} | {share} |")

    lines += ["", "## Stage Progression", "",
              "| Stage | Compliant | Total | Rate |", "| --- | ---: | ---: | ---: |"]
    total = report.stage_progression.total_items
    for stage in report.stage_progression.stages:
        rate = stage.compliant / total if total else None
        lines.append(f"| {stage.stage_name} | {stage.compliant} | {total} | "
                     f"{_fmt_rate(rate)} |")
    lines.append("")
    return "\n".join(lines)


def _render_csv(report: ComplianceReport) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["block", "key", "compliant", "assessed", "rate", "extra"])
    writer.writerow(["overall", "overall", report.overall_compliant,
                     report.overall_assessed, report.overall_rate, ""])
    writer.writerow(["na", "na", report.na_count, report.label_count,
                     report.na_rate, ""])
    for name, row in report.per_section.items():
        writer.writerow(["section", name, row.compliant, row.assessed, row.rate, ""])
    for name, row in report.per_theme.items():
        writer.writerow(["theme", name, row.compliant, row.assessed, row.rate, ""])
    for cid, crow in report.per_criterion.items():
        writer.writerow(["criterion", cid, crow.compliant, crow.assessed,
                         crow.rate, crow.share_of_compliant])
    total = report.stage_progression.total_items
    for stage in report.stage_progression.stages:
        writer.writerow(["progression", stage.stage_name, stage.compliant,
                         total, stage.compliant / total if total else None,
                         stage.resolved])
    return buffer.getvalue()


def render_tables(report: ComplianceReport, fmt: str = "markdown") -> str:
    """Render the report in one of markdown, csv, or json.

    Layout is deterministic: three rate blocks (section, theme, top-5
    criterion) plus the stage-progression block.
    """
    if fmt == "markdown":
        return _render_markdown(report)
    if fmt == "csv":
        return _render_csv(report)
    if fmt == "json":
        return json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"
    raise UnknownFormat(f"format must be one of {FORMATS}, got {fmt!r}")
