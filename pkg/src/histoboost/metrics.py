"""Binary classification metrics: confusion counts, accuracy, balanced
accuracy, F1, ROC curves, trapezoidal AUC, and report assembly.

Percent rendering rounds half up to two decimals, with the averaging done in
decimal arithmetic so printed averages match hand arithmetic on the printed
per-column values (e.g. mean of 96.83, 95.84, 97.01, 96.15 renders 96.46).
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from typing import Iterable, Sequence

import numpy as np


@dataclass(frozen=True)
class ConfusionCounts:
    """TP/TN/FP/FN tallies; positive = malignant = label 1."""

    tp: int
    tn: int
    fp: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.tn, self.fp, self.fn) < 0:
            raise ValueError("confusion counts must be nonnegative")

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


@dataclass(frozen=True, eq=False)
class RocCurve:
    """Operating points from a descending threshold sweep.

    Starts at (0,0) with threshold +inf, ends at (1,1); tied scores collapse
    to one point, so the curve is independent of intra-tie row order.
    """

    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray

    def __post_init__(self):
        fpr = np.asarray(self.fpr, dtype=np.float64)
        tpr = np.asarray(self.tpr, dtype=np.float64)
        thr = np.asarray(self.thresholds, dtype=np.float64)
        if not (len(fpr) == len(tpr) == len(thr)):
            raise ValueError("fpr, tpr and thresholds must have equal length")
        if len(fpr) < 2 or fpr[0] != 0 or tpr[0] != 0 or fpr[-1] != 1 or tpr[-1] != 1:
            raise ValueError("curve must run from (0,0) to (1,1)")
        if np.any(np.diff(fpr) < 0) or np.any(np.diff(tpr) < 0):
            raise ValueError("fpr and tpr must be non-decreasing")
        for arr in (fpr, tpr, thr):
            arr.flags.writeable = False
        object.__setattr__(self, "fpr", fpr)
        object.__setattr__(self, "tpr", tpr)
        object.__setattr__(self, "thresholds", thr)


def confusion(true_labels, predicted_labels) -> ConfusionCounts:
    y = np.asarray(true_labels)
    p = np.asarray(predicted_labels)
    if y.shape != p.shape:
        raise ValueError(f"length mismatch: {y.shape} vs {p.shape}")
    if not np.all((y == 0) | (y == 1)) or not np.all((p == 0) | (p == 1)):
        raise ValueError("labels must be 0 or 1")
    return ConfusionCounts(
        tp=int(np.sum((y == 1) & (p == 1))),
        tn=int(np.sum((y == 0) & (p == 0))),
        fp=int(np.sum((y == 0) & (p == 1))),
        fn=int(np.sum((y == 1) & (p == 0))),
    )


def accuracy(cc: ConfusionCounts) -> float:
    if cc.total == 0:
        raise ValueError("accuracy undefined on empty counts")
    return (cc.tp + cc.tn) / cc.total


def balanced_accuracy(cc: ConfusionCounts) -> float:
    if cc.tp + cc.fn == 0 or cc.tn + cc.fp == 0:
        raise ValueError("balanced accuracy needs both classes in the evaluation set")
    return 0.5 * (cc.tp / (cc.tp + cc.fn) + cc.tn / (cc.tn + cc.fp))


def f1(cc: ConfusionCounts) -> float:
    denom = cc.tp + 0.5 * (cc.fp + cc.fn)
    if denom == 0:
        raise ValueError("f1 undefined when tp + fp + fn = 0")
    return cc.tp / denom


def roc_curve(true_labels, scores) -> RocCurve:
    """Threshold sweep over distinct score values in decreasing order."""
    y = np.asarray(true_labels)
    s = np.asarray(scores, dtype=np.float64)
    if y.shape != s.shape:
        raise ValueError("labels and scores must have equal length")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 or 1")
    n_pos = int(np.sum(y == 1))
    n_neg = int(np.sum(y == 0))
    if n_pos == 0 or n_neg == 0:
        raise ValueError("roc curve needs both classes")
    order = np.argsort(-s, kind="stable")
    s_sorted = s[order]
    y_sorted = y[order]
    tps = np.cumsum(y_sorted == 1)
    fps = np.cumsum(y_sorted == 0)
    # keep only the last row of each tied-score run
    last_of_run = np.r_[s_sorted[1:] != s_sorted[:-1], True]
    tps = tps[last_of_run]
    fps = fps[last_of_run]
    thresholds = s_sorted[last_of_run]
    return RocCurve(
        fpr=np.r_[0.0, fps / n_neg],
        tpr=np.r_[0.0, tps / n_pos],
        thresholds=np.r_[np.inf, thresholds],
    )


def auc(curve: RocCurve) -> float:
    """Trapezoidal area; with collapsed ties this equals the Mann-Whitney
    statistic with the 1/2-tie convention."""
    return float(np.trapezoid(curve.tpr, curve.fpr))


def render_percent(value) -> str:
    """Two-decimal percent string, round half up. Accepts a Decimal or the
    number itself (interpreted through its shortest decimal form)."""
    d = value if isinstance(value, Decimal) else Decimal(str(value))
    return str(d.quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def fraction_as_percent(fraction: float) -> Decimal:
    """Exact decimal percent of a [0,1] fraction (scaling done in decimal)."""
    return Decimal(str(fraction)) * 100


def mean_percent(values: Iterable) -> Decimal:
    """Unweighted decimal mean of percent values (floats go through their
    shortest decimal form, so 95.64 means exactly 95.64)."""
    ds = [v if isinstance(v, Decimal) else Decimal(str(v)) for v in values]
    if not ds:
        raise ValueError("mean of no values")
    return sum(ds) / len(ds)


@dataclass(frozen=True, eq=False)
class MagnificationEval:
    """Metrics of one magnification's test set."""

    tag: str
    counts: ConfusionCounts
    accuracy: float
    balanced_accuracy: float
    f1: float
    auc: float | None = None


def evaluate(counts: ConfusionCounts, curve: RocCurve | None = None, tag: str = "") -> MagnificationEval:
    return MagnificationEval(
        tag=tag,
        counts=counts,
        accuracy=accuracy(counts),
        balanced_accuracy=balanced_accuracy(counts),
        f1=f1(counts),
        auc=auc(curve) if curve is not None else None,
    )


def report(evals: Sequence[MagnificationEval]) -> dict:
    """JSON-ready report: per-magnification metrics plus, when several
    magnifications are present, their unweighted average."""
    if not evals:
        raise ValueError("report needs at least one evaluation")
    per_mag = []
    for ev in evals:
        per_mag.append(
            {
                "magnification": ev.tag,
                "accuracy": ev.accuracy,
                "balanced_accuracy": ev.balanced_accuracy,
                "f1": ev.f1,
                "auc": ev.auc,
                "tp": ev.counts.tp,
                "tn": ev.counts.tn,
                "fp": ev.counts.fp,
                "fn": ev.counts.fn,
                "accuracy_pct": render_percent(fraction_as_percent(ev.accuracy)),
                "balanced_accuracy_pct": render_percent(
                    fraction_as_percent(ev.balanced_accuracy)
                ),
                "f1_pct": render_percent(fraction_as_percent(ev.f1)),
            }
        )
    doc: dict = {"per_magnification": per_mag}
    if len(evals) > 1:
        acc_mean = mean_percent(fraction_as_percent(e.accuracy) for e in evals)
        bal_mean = mean_percent(fraction_as_percent(e.balanced_accuracy) for e in evals)
        f1_mean = mean_percent(fraction_as_percent(e.f1) for e in evals)
        aucs = [e.auc for e in evals if e.auc is not None]
        doc["average"] = {
            "accuracy": float(np.mean([e.accuracy for e in evals])),
            "balanced_accuracy": float(np.mean([e.balanced_accuracy for e in evals])),
            "f1": float(np.mean([e.f1 for e in evals])),
            "auc": float(np.mean(aucs)) if len(aucs) == len(evals) else None,
            "accuracy_pct": render_percent(acc_mean),
            "balanced_accuracy_pct": render_percent(bal_mean),
            "f1_pct": render_percent(f1_mean),
        }
    return doc


def roc_points_csv(curve: RocCurve) -> str:
    """`fpr,tpr,threshold` rows for external plotting."""
    lines = ["fpr,tpr,threshold"]
    for i in range(len(curve.fpr)):
        thr = curve.thresholds[i]
        thr_text = "inf" if np.isinf(thr) else repr(float(thr))
        lines.append(f"{float(curve.fpr[i])!r},{float(curve.tpr[i])!r},{thr_text}")
    return "\n".join(lines) + "\n"
