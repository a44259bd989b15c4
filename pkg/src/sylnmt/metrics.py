"""Token-level multiclass confusion counts with support-weighted averages."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class MetricsError(ValueError):
    pass


class LengthMismatch(MetricsError):
    pass


class IdOutOfRange(MetricsError):
    pass


class EmptyCounts(MetricsError):
    pass


@dataclass(frozen=True)
class ConfusionCounts:
    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray
    n: int

    @property
    def support(self) -> np.ndarray:
        return self.tp + self.fn

    @property
    def tn(self) -> np.ndarray:
        return self.n - self.tp - self.fp - self.fn


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    precision_w: float
    recall_w: float
    f1_w: float

    HEADER = ("Accuracy", "Precision", "Recall", "F1-Score")

    def as_tuple(self):
        return (self.accuracy, self.precision_w, self.recall_w, self.f1_w)

    def format_row(self, name: str = "", width: int = 10) -> str:
        cells = "".join(f"{v:>{width}.4f}" for v in self.as_tuple())
        return f"{name:<10}{cells}" if name else cells.lstrip()


def format_table(rows: dict[str, MetricsReport], width: int = 10) -> str:
    head = f"{'Model':<10}" + "".join(f"{h:>{width}}" for h in MetricsReport.HEADER)
    return "\n".join([head] + [r.format_row(name, width) for name, r in rows.items()])


def confusion(y_true, y_pred, num_classes: int) -> ConfusionCounts:
    y_true = np.asarray(y_true, dtype=np.int64).reshape(-1)
    y_pred = np.asarray(y_pred, dtype=np.int64).reshape(-1)
    if y_true.shape != y_pred.shape:
        raise LengthMismatch(f"{y_true.size} targets vs {y_pred.size} predictions")
    for arr in (y_true, y_pred):
        if arr.size and (arr.min() < 0 or arr.max() >= num_classes):
            raise IdOutOfRange(f"class ids must lie in [0, {num_classes})")
    hit = y_true == y_pred
    tp = np.bincount(y_true[hit], minlength=num_classes)
    fp = np.bincount(y_pred[~hit], minlength=num_classes)
    fn = np.bincount(y_true[~hit], minlength=num_classes)
    return ConfusionCounts(tp, fp, fn, int(y_true.size))


def report(counts: ConfusionCounts) -> MetricsReport:
    if counts.n < 1:
        raise EmptyCounts("no positions counted")
    tp = counts.tp.astype(np.float64)
    support = counts.support.astype(np.float64)
    pred = tp + counts.fp
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(pred > 0, tp / pred, 0.0)
        r = np.where(support > 0, tp / support, 0.0)
        f1 = np.where(p + r > 0, 2 * p * r / (p + r), 0.0)
    w = support / counts.n
    return MetricsReport(
        accuracy=float(tp.sum() / counts.n),
        precision_w=float(w @ p),
        recall_w=float(w @ r),
        f1_w=float(w @ f1),
    )


def score(y_true, y_pred, num_classes: int) -> MetricsReport:
    return report(confusion(y_true, y_pred, num_classes))
