"""Tiered resolution of panel verdicts into final labels.

Tier 1: unanimous or near-unanimous panels become CONSENSUS labels.
Tier 2: split panels go to the tie-breaker model; a tie-breaker verdict
matching at least two panelists becomes an ADJUDICATED label.
Tier 3: everything else lands in the human review queue; reviewed entries
become MANUAL labels, skipped ones stay UNRESOLVED and are excluded from
compliance rates.

Criteria checked statically never enter this engine (their finding is
final and recorded with the STATIC provenance stage); HYBRID criteria
pass their static finding in as a conflict detector only: a consensus
label that contradicts it is escalated to the tie-breaker as if split.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from datetime import datetime, timezone
from enum import Enum
from typing import Callable, Mapping

from .catalog import Catalog, Compliance, Verdict, compliance_of
from .static_checks import StaticFinding

PANEL_SIZE = 4


class WrongPanelSize(Exception):
    pass


class TiebreakerUnavailable(Exception):
    pass


class AlreadyDecided(Exception):
    pass


class AgreementBand(str, Enum):
    UNANIMOUS = "UNANIMOUS"
    NEAR_UNANIMOUS = "NEAR_UNANIMOUS"
    SPLIT = "SPLIT"


class Stage(str, Enum):
    STATIC = "STATIC"
    CONSENSUS = "CONSENSUS"
    ADJUDICATED = "ADJUDICATED"
    MANUAL = "MANUAL"
    UNRESOLVED = "UNRESOLVED"


class ReviewStatus(str, Enum):
    PENDING = "PENDING"
    DONE = "DONE"
    SKIPPED = "SKIPPED"


@dataclass(frozen=True, order=True)
class ItemKey:
    workflow_id: str
    criterion_id: str


@dataclass(frozen=True)
class FinalLabel:
    key: ItemKey
    verdict: Verdict | None
    stage: Stage
    supporting_models: tuple[str, ...] = ()
    tiebreaker_verdict: Verdict | None = None
    reviewer: str | None = None
    decided_at: str = ""
    off_size_panel: bool = False

    def __post_init__(self):
        if self.stage is Stage.UNRESOLVED and self.verdict is not None:
            raise ValueError("UNRESOLVED labels carry no verdict")
        if self.stage is not Stage.UNRESOLVED and self.verdict is None:
            raise ValueError(f"{self.stage.value} labels require a verdict")
        if self.stage is Stage.MANUAL and not self.reviewer:
            raise ValueError("MANUAL labels require a reviewer")


@dataclass
class ReviewQueueEntry:
    key: ItemKey
    workflow_excerpt: str
    panel_verdicts: dict[str, Verdict]
    tiebreaker_verdict: Verdict | None
    status: ReviewStatus = ReviewStatus.PENDING
    off_size_panel: bool = False


def utc_now_iso() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def band_of(verdicts: list[Verdict] | tuple[Verdict, ...]) -> AgreementBand:
    """Agreement band of a size-4 verdict multiset.

    Top multiplicity 4 is unanimous, 3 near-unanimous, anything else
    (2/2 or 2/1/1) split. Panels of any other size are rejected.
    """
    if len(verdicts) != PANEL_SIZE:
        raise WrongPanelSize(f"expected {PANEL_SIZE} verdicts, got {len(verdicts)}")
    top = Counter(verdicts).most_common(1)[0][1]
    if top == 4:
        return AgreementBand.UNANIMOUS
    if top == 3:
        return AgreementBand.NEAR_UNANIMOUS
    return AgreementBand.SPLIT


def _majority(panel: Mapping[str, Verdict]) -> tuple[Verdict, tuple[str, ...]]:
    counts = Counter(panel.values())
    verdict = counts.most_common(1)[0][0]
    supporters = tuple(sorted(m for m, v in panel.items() if v == verdict))
    return verdict, supporters


def decide(key: ItemKey,
           panel: Mapping[str, Verdict],
           tiebreaker: Callable[[ItemKey], Verdict],
           static_finding: StaticFinding | None = None,
           workflow_excerpt: str = "",
           clock: Callable[[], str] = utc_now_iso) -> FinalLabel | ReviewQueueEntry:
    """Resolve one (workflow, criterion) item through the decision tiers.

    `panel` maps model id to verdict. Off-size panels (a panelist failed
    or returned an incomplete sheet) skip banding and go straight to the
    tie-breaker, flagged as off-size. A TiebreakerUnavailable outcome
    parks the item as UNRESOLVED; it can be retried later.
    """
    if not panel:
        raise WrongPanelSize("empty panel")
    off_size = len(panel) != PANEL_SIZE

    escalate = off_size
    if not off_size:
        band = band_of(list(panel.values()))
        if band is not AgreementBand.SPLIT:
            verdict, supporters = _majority(panel)
            conflict = (static_finding is not None
                        and static_finding.verdict is not verdict)
            if not conflict:
                return FinalLabel(key=key, verdict=verdict, stage=Stage.CONSENSUS,
                                  supporting_models=supporters, decided_at=clock())
            escalate = True
        else:
            escalate = True

    try:
        tb_verdict = tiebreaker(key)
    except TiebreakerUnavailable:
        return FinalLabel(key=key, verdict=None, stage=Stage.UNRESOLVED,
                          decided_at=clock(), off_size_panel=off_size)

    agreeing = tuple(sorted(m for m, v in panel.items() if v == tb_verdict))
    if len(agreeing) >= 2:
        return FinalLabel(key=key, verdict=tb_verdict, stage=Stage.ADJUDICATED,
                          supporting_models=agreeing, tiebreaker_verdict=tb_verdict,
                          decided_at=clock(), off_size_panel=off_size)
    return ReviewQueueEntry(key=key, workflow_excerpt=workflow_excerpt,
                            panel_verdicts=dict(panel), tiebreaker_verdict=tb_verdict,
                            off_size_panel=off_size)


def static_label(key: ItemKey, finding: StaticFinding,
                 clock: Callable[[], str] = utc_now_iso) -> FinalLabel:
    """Final label for a STATIC-mode criterion; the finding is authoritative."""
    return FinalLabel(key=key, verdict=finding.verdict, stage=Stage.STATIC,
                      decided_at=clock())


def apply_manual_verdict(entry: ReviewQueueEntry, verdict: Verdict, reviewer: str,
                         clock: Callable[[], str] = utc_now_iso) -> FinalLabel:
    """Record a reviewer decision for a pending queue entry.

    The entry advances to DONE; applying a second decision raises
    AlreadyDecided. Callers append the returned label (and an audit line)
    to their stores.
    """
    if entry.status is not ReviewStatus.PENDING:
        raise AlreadyDecided(f"{entry.key} already {entry.status.value}")
    entry.status = ReviewStatus.DONE
    return FinalLabel(key=entry.key, verdict=verdict, stage=Stage.MANUAL,
                      supporting_models=tuple(sorted(
                          m for m, v in entry.panel_verdicts.items() if v == verdict)),
                      tiebreaker_verdict=entry.tiebreaker_verdict,
                      reviewer=reviewer, decided_at=clock())


def skip_entry(entry: ReviewQueueEntry,
               clock: Callable[[], str] = utc_now_iso) -> FinalLabel:
    """Mark a queue entry skipped; the item stays UNRESOLVED and is
    excluded from compliance rates."""
    if entry.status is not ReviewStatus.PENDING:
        raise AlreadyDecided(f"{entry.key} already {entry.status.value}")
    entry.status = ReviewStatus.SKIPPED
    return FinalLabel(key=entry.key, verdict=None, stage=Stage.UNRESOLVED,
                      decided_at=clock())


@dataclass(frozen=True)
class StageProgress:
    stage_name: str
    resolved: int
    compliant: int


@dataclass(frozen=True)
class Progression:
    """Cumulative counts as labels consolidate through the tiers."""

    total_items: int
    stages: tuple[StageProgress, ...]

    def as_rows(self) -> list[tuple[str, int, int]]:
        return [(s.stage_name, s.compliant, self.total_items) for s in self.stages]


_STAGE_ORDER = (
    ("initial_consensus", (Stage.STATIC, Stage.CONSENSUS)),
    ("after_adjudication", (Stage.STATIC, Stage.CONSENSUS, Stage.ADJUDICATED)),
    ("after_manual_review", (Stage.STATIC, Stage.CONSENSUS, Stage.ADJUDICATED, Stage.MANUAL)),
)


def progression_snapshot(labels: list[FinalLabel], catalog: Catalog) -> Progression:
    """Counts of items resolved and compliant at each cumulative stage.

    Static-final labels count toward the initial stage: they are settled
    before any adjudication tier runs.
    """
    snapshots = []
    for name, stages in _STAGE_ORDER:
        resolved = [l for l in labels if l.stage in stages]
        compliant = sum(
            1 for l in resolved
            if l.verdict is not None
            and compliance_of(l.verdict, catalog.by_id[l.key.criterion_id]) is Compliance.COMPLIANT
        )
        snapshots.append(StageProgress(stage_name=name, resolved=len(resolved),
                                       compliant=compliant))
    return Progression(total_items=len(labels), stages=tuple(snapshots))
