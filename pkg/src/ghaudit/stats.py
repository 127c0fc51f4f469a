"""Inter-rater agreement and classification statistics for panel verdicts.

Implements the three-category (YES / NO / NOT_APPLICABLE) forms of
Fleiss' kappa, pairwise Cohen's kappa, and McNemar's paired test, plus
per-model agreement rates against final labels and one-vs-rest
precision/recall/F1 against manually validated ground truth.

McNemar is applied to three-category raters by binarizing each rater's
verdicts as agreeing/disagreeing with the final label, which matches the
agreement-rate framing and yields a proper paired binary design.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .adjudicate import AgreementBand, FinalLabel, ItemKey, Stage, band_of
from .catalog import Verdict

CATEGORIES: tuple[Verdict, ...] = (Verdict.YES, Verdict.NO, Verdict.NOT_APPLICABLE)

# Discordant-pair count below which McNemar uses the exact binomial form.
EXACT_MCNEMAR_LIMIT = 25


class EmptyMatrix(Exception):
    pass


class LengthMismatch(Exception):
    pass


@dataclass(frozen=True)
class RatingMatrix:
    """Complete item-by-rater verdict grid over the fixed category set.

    Incomplete items are filtered out before construction; use `build` to
    get the filtered count for reporting.
    """

    items: tuple[ItemKey, ...]
    raters: tuple[str, ...]
    rows: tuple[tuple[Verdict, ...], ...]  # aligned with items x raters

    def __post_init__(self):
        if len(self.rows) != len(self.items):
            raise ValueError("one row per item required")
        if any(len(r) != len(self.raters) for r in self.rows):
            raise ValueError("every row must cover every rater")

    @classmethod
    def build(cls, raters: Sequence[str],
              cells: Mapping[tuple[ItemKey, str], Verdict]) -> tuple["RatingMatrix", int]:
        """Assemble a matrix from sparse cells, dropping items that lack a
        verdict from every rater. Returns (matrix, dropped_item_count)."""
        raters = tuple(raters)
        item_keys = sorted({key for key, _ in cells})
        rows: list[tuple[Verdict, ...]] = []
        kept: list[ItemKey] = []
        dropped = 0
        for item in item_keys:
            row = [cells.get((item, rater)) for rater in raters]
            if any(v is None for v in row):
                dropped += 1
                continue
            kept.append(item)
            rows.append(tuple(row))  # type: ignore[arg-type]
        return cls(items=tuple(kept), raters=raters, rows=tuple(rows)), dropped

    def column(self, rater: str) -> tuple[Verdict, ...]:
        idx = self.raters.index(rater)
        return tuple(row[idx] for row in self.rows)

    def verdicts_by_item(self, rater: str) -> dict[ItemKey, Verdict]:
        idx = self.raters.index(rater)
        return {item: row[idx] for item, row in zip(self.items, self.rows)}

    def category_counts(self) -> list[tuple[int, int, int]]:
        out = []
        for row in self.rows:
            c = Counter(row)
            out.append(tuple(c.get(cat, 0) for cat in CATEGORIES))
        return out


def fleiss_kappa_details(matrix: RatingMatrix) -> tuple[float, bool]:
    """(kappa, degenerate). Degenerate means expected agreement is exactly
    1 (single-category data); kappa is 1.0 by convention there."""
    if not matrix.items or len(matrix.raters) < 2:
        raise EmptyMatrix("need at least 1 item and 2 raters")
    n = len(matrix.raters)
    N = len(matrix.items)
    counts = matrix.category_counts()

    p_observed = sum(
        (sum(c * c for c in row) - n) / (n * (n - 1)) for row in counts
    ) / N
    totals = [sum(row[j] for row in counts) for j in range(len(CATEGORIES))]
    p_j = [t / (N * n) for t in totals]
    p_expected = sum(p * p for p in p_j)

    if p_expected >= 1.0:
        return 1.0, True
    return (p_observed - p_expected) / (1.0 - p_expected), False


def fleiss_kappa(matrix: RatingMatrix) -> float:
    """Chance-corrected agreement among all raters over all items."""
    kappa, _ = fleiss_kappa_details(matrix)
    return kappa


def cohen_kappa(a: Sequence[Verdict], b: Sequence[Verdict]) -> float:
    """Two-rater kappa with marginal-product expected agreement."""
    if len(a) != len(b) or not a:
        raise LengthMismatch(f"need equal non-empty sequences, got {len(a)} and {len(b)}")
    n = len(a)
    p_observed = sum(1 for x, y in zip(a, b) if x == y) / n
    p_expected = 0.0
    for cat in CATEGORIES:
        p_expected += (sum(1 for x in a if x == cat) / n) * (sum(1 for y in b if y == cat) / n)
    if p_expected >= 1.0:
        # both raters constant on the same category; observed is 1 too
        return 1.0
    return (p_observed - p_expected) / (1.0 - p_expected)


def mcnemar(a: Sequence[Verdict], b: Sequence[Verdict],
            reference: Sequence[Verdict]) -> float:
    """Paired test on discordant correctness between two raters.

    Each rater is binarized as correct/incorrect against the reference
    labels; the p-value comes from the two-sided exact binomial on the
    discordant counts when they are few, otherwise from the
    continuity-corrected chi-square approximation.
    """
    if not (len(a) == len(b) == len(reference)):
        raise LengthMismatch("sequences and reference must align")
    b_count = sum(1 for x, y, r in zip(a, b, reference) if x == r and y != r)
    c_count = sum(1 for x, y, r in zip(a, b, reference) if x != r and y == r)
    discordant = b_count + c_count
    if discordant == 0:
        return 1.0
    if discordant < EXACT_MCNEMAR_LIMIT:
        k = min(b_count, c_count)
        tail = sum(math.comb(discordant, i) for i in range(k + 1))
        return min(1.0, 2.0 * tail / 2.0**discordant)
    chi2 = (abs(b_count - c_count) - 1.0) ** 2 / discordant
    return math.erfc(math.sqrt(chi2 / 2.0))  # survival function of chi2(df=1)


def agreement_rate(verdicts_by_item: Mapping[ItemKey, Verdict],
                   labels: Iterable[FinalLabel]) -> float:
    """Fraction of resolved items where the rater matches the final label."""
    matched = assessed = 0
    for label in labels:
        if label.stage is Stage.UNRESOLVED or label.verdict is None:
            continue
        rater_verdict = verdicts_by_item.get(label.key)
        if rater_verdict is None:
            continue
        assessed += 1
        if rater_verdict is label.verdict:
            matched += 1
    return matched / assessed if assessed else 0.0


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class ClassificationMetrics:
    accuracy: float
    per_class: dict[Verdict, ClassMetrics]
    macro_precision: float
    macro_recall: float
    macro_f1: float
    absent_classes: tuple[Verdict, ...] = ()


def classification_metrics(pred: Sequence[Verdict],
                           truth: Sequence[Verdict]) -> ClassificationMetrics:
    """Three-class one-vs-rest metrics; macro values are unweighted class
    means. Classes absent from the truth contribute zero and are flagged."""
    if len(pred) != len(truth) or not pred:
        raise LengthMismatch(f"need equal non-empty sequences, got {len(pred)} and {len(truth)}")
    n = len(pred)
    accuracy = sum(1 for p, t in zip(pred, truth) if p == t) / n

    per_class: dict[Verdict, ClassMetrics] = {}
    absent: list[Verdict] = []
    for cat in CATEGORIES:
        tp = sum(1 for p, t in zip(pred, truth) if p == cat and t == cat)
        fp = sum(1 for p, t in zip(pred, truth) if p == cat and t != cat)
        fn = sum(1 for p, t in zip(pred, truth) if p != cat and t == cat)
        support = tp + fn
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / support if support else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        per_class[cat] = ClassMetrics(precision=precision, recall=recall, f1=f1,
                                      support=support)
        if support == 0:
            absent.append(cat)

    k = len(CATEGORIES)
    return ClassificationMetrics(
        accuracy=accuracy,
        per_class=per_class,
        macro_precision=sum(m.precision for m in per_class.values()) / k,
        macro_recall=sum(m.recall for m in per_class.values()) / k,
        macro_f1=sum(m.f1 for m in per_class.values()) / k,
        absent_classes=tuple(absent),
    )


@dataclass(frozen=True)
class AgreementReport:
    item_count: int
    filtered_items: int
    band_counts: dict[AgreementBand, int]
    fleiss_kappa: float
    fleiss_degenerate: bool
    pairwise: dict[tuple[str, str], tuple[float, float]] = field(default_factory=dict)
    per_model_agreement_rate: dict[str, float] = field(default_factory=dict)
    metrics_vs_truth: dict[str, ClassificationMetrics] | None = None

    def to_dict(self) -> dict:
        return {
            "item_count": self.item_count,
            "filtered_items": self.filtered_items,
            "band_counts": {band.value: self.band_counts.get(band, 0)
                            for band in AgreementBand},
            "fleiss_kappa": self.fleiss_kappa,
            "fleiss_degenerate": self.fleiss_degenerate,
            "pairwise": [
                {"models": list(pair), "cohen_kappa": ck, "mcnemar_p": p}
                for pair, (ck, p) in sorted(self.pairwise.items())
            ],
            "per_model_agreement_rate": dict(sorted(self.per_model_agreement_rate.items())),
            "metrics_vs_truth": {
                model: {
                    "accuracy": m.accuracy,
                    "macro_precision": m.macro_precision,
                    "macro_recall": m.macro_recall,
                    "macro_f1": m.macro_f1,
                    "per_class": {
                        cat.value: {
                            "precision": cm.precision, "recall": cm.recall,
                            "f1": cm.f1, "support": cm.support,
                        }
                        for cat, cm in m.per_class.items()
                    },
                    "absent_classes": [c.value for c in m.absent_classes],
                }
                for model, m in sorted((self.metrics_vs_truth or {}).items())
            } if self.metrics_vs_truth is not None else None,
        }


def band_counts_of(matrix: RatingMatrix) -> dict[AgreementBand, int]:
    """Band tally per item; only defined for four-rater matrices."""
    counts: dict[AgreementBand, int] = {band: 0 for band in AgreementBand}
    for row in matrix.rows:
        counts[band_of(list(row))] += 1
    return counts


def compute_agreement_report(matrix: RatingMatrix,
                             filtered_items: int = 0,
                             labels: list[FinalLabel] | None = None,
                             truth: Mapping[ItemKey, Verdict] | None = None) -> AgreementReport:
    """Assemble the full agreement report from one rating matrix.

    `labels` enables per-model agreement rates and McNemar binarization;
    without them, pairwise entries carry NaN p-values. `truth` (manual
    labels) enables classification metrics.
    """
    kappa, degenerate = fleiss_kappa_details(matrix)
    bands = (band_counts_of(matrix) if len(matrix.raters) == 4
             else {band: 0 for band in AgreementBand})

    label_by_key = {l.key: l for l in (labels or [])}
    reference: list[Verdict] | None = None
    if labels is not None:
        reference = []
        ref_items = []
        for item in matrix.items:
            label = label_by_key.get(item)
            if label is not None and label.verdict is not None:
                reference.append(label.verdict)
                ref_items.append(item)
        ref_index = {item: i for i, item in enumerate(ref_items)}

    pairwise: dict[tuple[str, str], tuple[float, float]] = {}
    for i, ma in enumerate(matrix.raters):
        for mb in matrix.raters[i + 1:]:
            ck = cohen_kappa(matrix.column(ma), matrix.column(mb))
            p = float("nan")
            if reference:
                a_seq = [matrix.verdicts_by_item(ma)[item] for item in ref_index]
                b_seq = [matrix.verdicts_by_item(mb)[item] for item in ref_index]
                p = mcnemar(a_seq, b_seq, reference)
            pairwise[(ma, mb)] = (ck, p)

    rates: dict[str, float] = {}
    if labels is not None:
        for rater in matrix.raters:
            rates[rater] = agreement_rate(matrix.verdicts_by_item(rater), labels)

    metrics: dict[str, ClassificationMetrics] | None = None
    if truth:
        metrics = {}
        truth_items = [item for item in matrix.items if item in truth]
        if truth_items:
            truth_seq = [truth[item] for item in truth_items]
            for rater in matrix.raters:
                by_item = matrix.verdicts_by_item(rater)
                pred_seq = [by_item[item] for item in truth_items]
                metrics[rater] = classification_metrics(pred_seq, truth_seq)

    return AgreementReport(
        item_count=len(matrix.items),
        filtered_items=filtered_items,
        band_counts=bands,
        fleiss_kappa=kappa,
        fleiss_degenerate=degenerate,
        pairwise=pairwise,
        per_model_agreement_rate=rates,
        metrics_vs_truth=metrics,
    )
