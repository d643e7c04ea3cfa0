"""Score predicted annotations against gold.

Four layers, each on top of the previous one:

    compare_instance   one (gold, pred) pair -> span-level counts + errors
    aggregate          many pairs -> ConfusionCounts (footnote exclusion)
    metrics            counts -> precision/recall/F1 per category
    evaluate_pairs     everything at once -> EvalReport

Category semantics follow the published protocol: per-tag counts are summed
only over instances whose GOLD asserts the act; gold no-act instances are
scored solely through the binary NO-ACT category (TP = both sides no-act,
FN = gold no-act but predicted act, FP = the reverse). A 0/0 metric is
UNDEFINED (None), rendered as an em-dash, never as 0 or 100.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

from .errors import DataError, UsageError
from .scheme import Annotation, TagSpan

NO_ACT_CATEGORY = "NO-ACT"
UNDEFINED_GLYPH = "—"

MISSED = "MISSED"
SPURIOUS = "SPURIOUS"
BOUNDARY = "BOUNDARY"
WRONG_LABEL = "WRONG_LABEL"
ACT_DISAGREEMENT = "ACT_DISAGREEMENT"


@dataclass(frozen=True)
class MatchPolicy:
    """How predicted spans are matched to gold spans.

    exact: identical tag, start and end. overlap: same tag and token-level
    Jaccard overlap at or above overlap_threshold (sensitivity analysis).
    """

    mode: str = "exact"
    overlap_threshold: Optional[float] = None

    def __post_init__(self) -> None:
        if self.mode not in ("exact", "overlap"):
            raise UsageError(f"unknown match policy mode {self.mode!r}")
        if self.mode == "overlap":
            t = self.overlap_threshold
            if t is None or not 0 < t <= 1:
                raise UsageError("overlap mode needs overlap_threshold in (0, 1]")


EXACT = MatchPolicy("exact")


@dataclass
class Cell:
    """TP/FP/FN for one category."""

    tp: int = 0
    fp: int = 0
    fn: int = 0

    def add(self, other: "Cell") -> None:
        self.tp += other.tp
        self.fp += other.fp
        self.fn += other.fn

    def to_dict(self) -> dict[str, int]:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn}


@dataclass
class ConfusionCounts:
    """Per-tag cells plus the binary NO-ACT cell."""

    per_tag: dict[str, Cell] = field(default_factory=dict)
    no_act: Cell = field(default_factory=Cell)

    def tag_cell(self, tag: str) -> Cell:
        return self.per_tag.setdefault(tag, Cell())


@dataclass(frozen=True)
class TagMetrics:
    """Fractions in [0,1]; None means undefined (0/0)."""

    precision: Optional[float]
    recall: Optional[float]
    f1: Optional[float]


@dataclass(frozen=True)
class EvalError:
    """One taxonomy entry describing a span- or act-level disagreement."""

    instance_id: str
    tag: str
    kind: str

    def to_dict(self) -> dict[str, str]:
        return {"instance_id": self.instance_id, "tag": self.tag, "kind": self.kind}


@dataclass
class EvalReport:
    """Everything the score run produced, renderable as table or JSON."""

    n_instances: int
    n_correct: int
    instance_accuracy: Optional[float]
    counts: ConfusionCounts
    metrics: dict[str, TagMetrics]
    errors: list[EvalError]
    category_order: tuple[str, ...]


def _spans_overlap(a: TagSpan, b: TagSpan) -> bool:
    return a.start < b.end and b.start < a.end


def _jaccard(a: TagSpan, b: TagSpan) -> float:
    inter = min(a.end, b.end) - max(a.start, b.start)
    if inter <= 0:
        return 0.0
    union = max(a.end, b.end) - min(a.start, b.start)
    return inter / union


def _span_matches(gold: TagSpan, pred: TagSpan, policy: MatchPolicy) -> bool:
    if gold.tag != pred.tag:
        return False
    if policy.mode == "exact":
        return gold.start == pred.start and gold.end == pred.end
    return _jaccard(gold, pred) >= (policy.overlap_threshold or 1.0)


def compare_instance(
    gold: Annotation, pred: Annotation, policy: MatchPolicy = EXACT
) -> tuple[dict[str, Cell], bool, list[EvalError]]:
    """Span-level confusion for one instance pair.

    Matching is one-to-one: each gold span absorbs at most one predicted
    span and vice versa. Unmatched predictions are FPs, classified as
    BOUNDARY (overlaps an unmatched same-tag gold span), WRONG_LABEL
    (overlaps a gold span of another tag) or SPURIOUS; unmatched gold spans
    are FNs, logged MISSED unless already represented by a BOUNDARY pair.
    """
    if gold.instance_id != pred.instance_id:
        raise UsageError(
            f"compared annotations for different instances: "
            f"{gold.instance_id!r} vs {pred.instance_id!r}"
        )
    counts: dict[str, Cell] = {}
    errors: list[EvalError] = []
    iid = gold.instance_id

    if gold.act_present != pred.act_present:
        errors.append(EvalError(iid, NO_ACT_CATEGORY, ACT_DISAGREEMENT))
        if gold.act_present:
            for g in gold.spans:
                counts.setdefault(g.tag, Cell()).fn += 1
        else:
            for p in pred.spans:
                counts.setdefault(p.tag, Cell()).fp += 1
        return counts, False, errors
    if not gold.act_present:
        return counts, True, errors

    matched_gold: set[int] = set()
    matched_pred: set[int] = set()
    for pi, p in enumerate(pred.spans):
        for gi, g in enumerate(gold.spans):
            if gi in matched_gold:
                continue
            if _span_matches(g, p, policy):
                matched_gold.add(gi)
                matched_pred.add(pi)
                counts.setdefault(p.tag, Cell()).tp += 1
                break

    boundary_gold: set[int] = set()
    for pi, p in enumerate(pred.spans):
        if pi in matched_pred:
            continue
        counts.setdefault(p.tag, Cell()).fp += 1
        boundary_gi = next(
            (
                gi
                for gi, g in enumerate(gold.spans)
                if gi not in matched_gold
                and gi not in boundary_gold
                and g.tag == p.tag
                and _spans_overlap(g, p)
            ),
            None,
        )
        if boundary_gi is not None:
            boundary_gold.add(boundary_gi)
            errors.append(EvalError(iid, p.tag, BOUNDARY))
        elif any(g.tag != p.tag and _spans_overlap(g, p) for g in gold.spans):
            errors.append(EvalError(iid, p.tag, WRONG_LABEL))
        else:
            errors.append(EvalError(iid, p.tag, SPURIOUS))

    for gi, g in enumerate(gold.spans):
        if gi in matched_gold:
            continue
        counts.setdefault(g.tag, Cell()).fn += 1
        if gi not in boundary_gold:
            errors.append(EvalError(iid, g.tag, MISSED))

    correct = all(c.fp == 0 and c.fn == 0 for c in counts.values())
    return counts, correct, errors


def aggregate(
    pairs: Sequence[tuple[Annotation, Annotation]], policy: MatchPolicy = EXACT
) -> ConfusionCounts:
    """Sum confusion over pairs, applying the gold-no-act exclusion rule."""
    out = ConfusionCounts()
    seen: set[str] = set()
    for gold, pred in pairs:
        if gold.instance_id in seen:
            raise DataError(f"duplicate instance id in evaluation: {gold.instance_id!r}")
        seen.add(gold.instance_id)
        if not gold.act_present and not pred.act_present:
            out.no_act.tp += 1
        elif not gold.act_present:
            out.no_act.fn += 1
        elif not pred.act_present:
            out.no_act.fp += 1
        if gold.act_present:
            per_tag, _, _ = compare_instance(gold, pred, policy)
            for tag, cell in per_tag.items():
                out.tag_cell(tag).add(cell)
    return out


def _metric(num: int, den: int) -> Optional[float]:
    return None if den == 0 else num / den


def cell_metrics(cell: Cell) -> TagMetrics:
    precision = _metric(cell.tp, cell.tp + cell.fp)
    recall = _metric(cell.tp, cell.tp + cell.fn)
    if precision is None or recall is None or precision + recall == 0:
        f1 = None
    else:
        f1 = 2 * precision * recall / (precision + recall)
    return TagMetrics(precision, recall, f1)


def metrics(counts: ConfusionCounts) -> dict[str, TagMetrics]:
    """Per-category metrics; the NO-ACT cell appears under NO_ACT_CATEGORY."""
    out = {tag: cell_metrics(cell) for tag, cell in counts.per_tag.items()}
    out[NO_ACT_CATEGORY] = cell_metrics(counts.no_act)
    return out


def evaluate_pairs(
    pairs: Sequence[tuple[Annotation, Annotation]],
    policy: MatchPolicy = EXACT,
    tag_order: Sequence[str] = (),
) -> EvalReport:
    """Full evaluation: counts, metrics, accuracy, error taxonomy."""
    counts = aggregate(pairs, policy)
    n_correct = 0
    errors: list[EvalError] = []
    for gold, pred in pairs:
        _, correct, errs = compare_instance(gold, pred, policy)
        n_correct += int(correct)
        errors.extend(errs)
    n = len(pairs)
    order = [NO_ACT_CATEGORY]
    order.extend(tag_order)
    order.extend(t for t in sorted(counts.per_tag) if t not in order)
    return EvalReport(
        n_instances=n,
        n_correct=n_correct,
        instance_accuracy=None if n == 0 else n_correct / n,
        counts=counts,
        metrics=metrics(counts),
        errors=errors,
        category_order=tuple(dict.fromkeys(order)),
    )


def _cell_for(report: EvalReport, category: str) -> Cell:
    if category == NO_ACT_CATEGORY:
        return report.counts.no_act
    return report.counts.per_tag.get(category, Cell())


def _pct(value: Optional[float]) -> str:
    return UNDEFINED_GLYPH if value is None else f"{value * 100:.2f}"


def report_to_dict(report: EvalReport, no_act_label: str = NO_ACT_CATEGORY) -> dict[str, Any]:
    rows = []
    for category in report.category_order:
        cell = _cell_for(report, category)
        m = report.metrics.get(category, TagMetrics(None, None, None))
        rows.append(
            {
                "category": no_act_label if category == NO_ACT_CATEGORY else category,
                "tp": cell.tp,
                "fp": cell.fp,
                "fn": cell.fn,
                "precision": m.precision,
                "recall": m.recall,
                "f1": m.f1,
            }
        )
    return {
        "n_instances": report.n_instances,
        "n_correct": report.n_correct,
        "instance_accuracy": report.instance_accuracy,
        "rows": rows,
        "errors": [e.to_dict() for e in report.errors],
    }


def render_report(
    report: EvalReport, format: str = "table", no_act_label: str = NO_ACT_CATEGORY
) -> str:
    """table: fixed-width human-readable; structured: JSON with fractions."""
    if format == "structured":
        return json.dumps(report_to_dict(report, no_act_label), indent=2) + "\n"
    if format != "table":
        raise UsageError(f"unknown report format {format!r}")
    acc = (
        UNDEFINED_GLYPH
        if report.instance_accuracy is None
        else f"{report.instance_accuracy * 100:.2f}"
    )
    lines = [
        f"Instances: {report.n_instances}    "
        f"Correct: {report.n_correct}    "
        f"Instance accuracy (%): {acc}",
        "",
    ]
    header = f"{'Category':<16} {'Precision (%)':>13} {'Recall (%)':>10} {'F1 (%)':>8} {'TP':>5} {'FP':>5} {'FN':>5}"
    lines.append(header)
    lines.append("-" * len(header))
    for category in report.category_order:
        cell = _cell_for(report, category)
        m = report.metrics.get(category, TagMetrics(None, None, None))
        label = no_act_label if category == NO_ACT_CATEGORY else category
        lines.append(
            f"{label:<16} {_pct(m.precision):>13} {_pct(m.recall):>10} "
            f"{_pct(m.f1):>8} {cell.tp:>5} {cell.fp:>5} {cell.fn:>5}"
        )
    if report.errors:
        kinds: dict[str, int] = {}
        for e in report.errors:
            kinds[e.kind] = kinds.get(e.kind, 0) + 1
        summary = ", ".join(f"{k}={kinds[k]}" for k in sorted(kinds))
        lines.extend(["", f"Errors: {summary}"])
    return "\n".join(lines) + "\n"


def load_annotations(path: str | Path) -> list[Annotation]:
    """Read an annotations JSONL file (one Annotation per line)."""
    out: list[Annotation] = []
    try:
        fh = Path(path).open("r", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read annotations {path}: {exc}") from exc
    with fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            try:
                out.append(Annotation.from_dict(data))
            except DataError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
    return out


def pair_annotations(
    gold: Iterable[Annotation], pred: Iterable[Annotation]
) -> list[tuple[Annotation, Annotation]]:
    """Join gold and predictions on instance_id; any mismatch is a data error."""
    gold_by_id = {g.instance_id: g for g in gold}
    pred_by_id = {p.instance_id: p for p in pred}
    missing = sorted(set(gold_by_id) - set(pred_by_id))
    extra = sorted(set(pred_by_id) - set(gold_by_id))
    if missing:
        raise DataError(f"no prediction for gold instance(s): {', '.join(missing[:5])}")
    if extra:
        raise DataError(f"prediction for unknown instance(s): {', '.join(extra[:5])}")
    return [(gold_by_id[i], pred_by_id[i]) for i in gold_by_id]
