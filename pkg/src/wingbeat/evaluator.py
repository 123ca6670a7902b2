"""Classification metrics, confusion rendering, greedy parameter sweep."""

from __future__ import annotations

import io
import csv
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

Confusion = tuple[int, int, int, int]  # (TP, FP, FN, TN)


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    degenerate: tuple[str, ...] = ()

    def as_dict(self) -> dict:
        return {"accuracy": self.accuracy, "precision": self.precision,
                "recall": self.recall, "f1": self.f1,
                "degenerate": list(self.degenerate)}


def metrics(confusion: Confusion) -> MetricsReport:
    """Accuracy, precision, recall, F1 from (TP, FP, FN, TN) counts.

    Zero denominators yield 0.0 for the affected metric, flagged in
    ``degenerate`` so aggregates stay total.
    """
    tp, fp, fn, tn = confusion
    if min(tp, fp, fn, tn) < 0:
        raise ValueError(f"negative confusion counts: {confusion}")
    total = tp + fp + fn + tn
    if total == 0:
        raise ValueError("empty confusion matrix")
    degenerate = []
    accuracy = (tp + tn) / total
    if tp + fp > 0:
        precision = tp / (tp + fp)
    else:
        precision = 0.0
        degenerate.append("precision")
    if tp + fn > 0:
        recall = tp / (tp + fn)
    else:
        recall = 0.0
        degenerate.append("recall")
    if precision + recall > 0:
        f1 = 2.0 * precision * recall / (precision + recall)
    else:
        f1 = 0.0
        degenerate.append("f1")
    return MetricsReport(accuracy, precision, recall, f1, tuple(degenerate))


def confusion_render(confusion: Confusion) -> tuple[str, str]:
    """2x2 table, true labels in rows and predictions in columns.

    Returns (plain text, CSV) with TP at [pos][pos].
    """
    tp, fp, fn, tn = confusion
    text = ("          pred_pos  pred_neg\n"
            f"true_pos  {tp:8d}  {fn:8d}\n"
            f"true_neg  {fp:8d}  {tn:8d}\n")
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["", "pred_pos", "pred_neg"])
    writer.writerow(["true_pos", tp, fn])
    writer.writerow(["true_neg", fp, tn])
    return text, buf.getvalue()


def parse_confusion_csv(text: str) -> Confusion:
    rows = list(csv.reader(io.StringIO(text)))
    tp, fn = int(rows[1][1]), int(rows[1][2])
    fp, tn = int(rows[2][1]), int(rows[2][2])
    return (tp, fp, fn, tn)


@dataclass(frozen=True)
class SweepPlan:
    """Ordered axes of candidate values around a baseline configuration."""

    axes: tuple[tuple[str, tuple], ...]
    baseline: dict

    def __post_init__(self):
        if not self.axes:
            raise ValueError("sweep plan needs at least one axis")
        for name, candidates in self.axes:
            if len(candidates) < 2:
                raise ValueError(f"axis {name!r} needs >= 2 candidates")


@dataclass
class SweepEntry:
    config: dict
    report: MetricsReport
    axis: str
    candidate: object


@dataclass
class SweepLog:
    entries: list[SweepEntry] = field(default_factory=list)
    best_config: dict = field(default_factory=dict)


def greedy_sweep(plan: SweepPlan, run: Callable[[dict], MetricsReport],
                 size_of: Callable[[dict], int] | None = None) -> SweepLog:
    """Axis-by-axis greedy search: evaluate every candidate on one axis with
    the other axes at their current-best values, fix the winner, move on.

    The winner is the highest mean F1; ties go to the smaller model (when
    ``size_of`` is given) and then to the earlier-listed candidate.  Exactly
    sum(len(axis candidates)) evaluations are performed and all are logged.
    """
    log = SweepLog()
    current = dict(plan.baseline)
    for axis, candidates in plan.axes:
        best_key = None
        best_value = None
        for pos, cand in enumerate(candidates):
            cfg = dict(current)
            cfg[axis] = cand
            report = run(cfg)
            log.entries.append(SweepEntry(cfg, report, axis, cand))
            size = size_of(cfg) if size_of is not None else 0
            key = (-report.f1, size, pos)
            if best_key is None or key < best_key:
                best_key, best_value = key, cand
        current[axis] = best_value
    log.best_config = current
    return log
