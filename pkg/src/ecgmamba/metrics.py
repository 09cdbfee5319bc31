"""Per-class and macro-averaged AUPRC / AUROC for multilabel scores."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata


class UndefinedMetric(ValueError):
    """The metric has no value for this label column (e.g. no positives)."""


def _validate(scores, labels):
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel()
    if s.shape != y.shape:
        raise ValueError(f"scores and labels differ in length: {s.shape} vs {y.shape}")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0/1")
    return s, y.astype(bool)


def average_precision(scores, labels) -> float:
    """Step-interpolated area under the precision-recall curve.

    Sum over distinct descending thresholds of ``(R_k - R_{k-1}) * P_k``;
    tied scores form a single threshold.
    """
    s, y = _validate(scores, labels)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise UndefinedMetric("average precision needs at least one positive")
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    last = np.r_[np.flatnonzero(np.diff(s)), len(s) - 1]
    tp = np.cumsum(y)[last]
    precision = tp / (last + 1)
    recall_gain = np.diff(np.r_[0, tp]) / n_pos
    return float(np.sum(recall_gain * precision))


def auroc(scores, labels) -> float:
    """Mann-Whitney AUROC: P(score_pos > score_neg) + 0.5 P(tie)."""
    s, y = _validate(scores, labels)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetric("AUROC needs both positives and negatives")
    ranks = rankdata(s)  # mid-ranks for ties
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


@dataclass
class ClassMetrics:
    class_index: int
    auprc: float
    auroc: float
    n_pos: int
    n_neg: int


@dataclass
class MetricReport:
    per_class: list[ClassMetrics]
    macro_auprc: float
    macro_auroc: float
    skipped_classes: list[int] = field(default_factory=list)

    def to_text(self, class_names: list[str] | None = None) -> str:
        rows = [f"{'class':<12}{'n_pos':>7}{'n_neg':>7}{'AUPRC':>9}{'AUROC':>9}"]
        for c in self.per_class:
            name = class_names[c.class_index] if class_names else str(c.class_index)
            rows.append(f"{name:<12}{c.n_pos:>7}{c.n_neg:>7}{c.auprc:>9.4f}{c.auroc:>9.4f}")
        rows.append(f"{'macro':<26}{self.macro_auprc:>9.4f}{self.macro_auroc:>9.4f}")
        if self.skipped_classes:
            rows.append("skipped: " + " ".join(map(str, self.skipped_classes)))
        return "\n".join(rows) + "\n"

    def to_kv(self) -> str:
        lines = [
            f"macro_auprc={self.macro_auprc!r}",
            f"macro_auroc={self.macro_auroc!r}",
            "skipped_classes=" + ",".join(map(str, self.skipped_classes)),
        ]
        for c in self.per_class:
            i = c.class_index
            lines += [f"class.{i}.auprc={c.auprc!r}", f"class.{i}.auroc={c.auroc!r}"]
            lines += [f"class.{i}.n_pos={c.n_pos}", f"class.{i}.n_neg={c.n_neg}"]
        return "\n".join(lines) + "\n"


def macro_report(score_matrix, label_matrix) -> MetricReport:
    """Column-wise metrics; a class lacking positives or negatives is skipped
    and left out of both macro means."""
    S = np.asarray(score_matrix, dtype=np.float64)
    Y = np.asarray(label_matrix)
    if S.ndim != 2 or S.shape != Y.shape:
        raise ValueError(f"score and label matrices must share a 2-D shape, got {S.shape} and {Y.shape}")
    per_class, skipped = [], []
    for c in range(S.shape[1]):
        n_pos = int(Y[:, c].sum())
        n_neg = len(Y) - n_pos
        try:
            per_class.append(ClassMetrics(c, average_precision(S[:, c], Y[:, c]), auroc(S[:, c], Y[:, c]), n_pos, n_neg))
        except UndefinedMetric:
            skipped.append(c)
    if not per_class:
        raise ValueError("every class was skipped; no macro metric is defined")
    return MetricReport(
        per_class,
        float(np.mean([c.auprc for c in per_class])),
        float(np.mean([c.auroc for c in per_class])),
        skipped,
    )
