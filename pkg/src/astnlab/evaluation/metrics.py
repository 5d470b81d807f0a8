from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np


@dataclass(frozen=True)
class RocCurve:
    """ROC points from (0, 0) to (1, 1); ``thresholds[0]`` is +inf."""

    thresholds: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray
    tps: np.ndarray
    fps: np.ndarray
    n_pos: int
    n_neg: int
    auc: float

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))

    def rows(self) -> list[tuple[float, float, float]]:
        return list(zip(self.thresholds.tolist(), self.fpr.tolist(), self.tpr.tolist()))


def roc_auc(scores, labels) -> RocCurve:
    """ROC curve over every distinct score, with trapezoidal AUC.

    Equal scores form a single step, so ties contribute half credit.
    """
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    if scores.shape != labels.shape:
        raise ValueError(f"{scores.size} scores but {labels.size} labels")
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    pos = labels != 0
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC needs both classes present")

    order = np.argsort(-scores, kind="mergesort")
    s, y = scores[order], pos[order]
    last_of_group = np.r_[np.nonzero(np.diff(s))[0], s.size - 1]
    tps = np.r_[0, np.cumsum(y)[last_of_group]]
    fps = np.r_[0, np.cumsum(~y)[last_of_group]]
    thresholds = np.r_[np.inf, s[last_of_group]]
    tpr = tps / n_pos
    fpr = fps / n_neg
    auc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))
    return RocCurve(thresholds, fpr, tpr, tps, fps, n_pos, n_neg, auc)


def pairwise_auc(scores, labels) -> float:
    """P(score+ > score-) + 0.5 P(tie) by exhaustive comparison."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels) != 0
    sp, sn = scores[labels], scores[~labels]
    greater = (sp[:, None] > sn[None, :]).sum()
    ties = (sp[:, None] == sn[None, :]).sum()
    return float((greater + 0.5 * ties) / (sp.size * sn.size))


@dataclass(frozen=True)
class MetricReport:
    auc: float
    youden_j: float
    sensitivity: float
    specificity: float
    fpr: float
    fnr: float
    lr_positive: float
    lr_negative: float
    accuracy: float
    threshold: float

    @classmethod
    def from_rates(cls, sensitivity: float, specificity: float, auc: float = math.nan,
                   accuracy: float = math.nan, threshold: float = math.nan) -> "MetricReport":
        return cls(
            auc=auc,
            youden_j=sensitivity + specificity - 1.0,
            sensitivity=sensitivity,
            specificity=specificity,
            fpr=1.0 - specificity,
            fnr=1.0 - sensitivity,
            lr_positive=sensitivity / (1.0 - specificity) if specificity < 1 else math.inf,
            lr_negative=(1.0 - sensitivity) / specificity if specificity > 0 else math.inf,
            accuracy=accuracy,
            threshold=threshold,
        )

    def to_json(self) -> dict:
        # JSON has no infinity; unbounded likelihood ratios become null
        return {k: (None if isinstance(v, float) and math.isinf(v) else v) for k, v in asdict(self).items()}

    @classmethod
    def from_json(cls, d: dict) -> "MetricReport":
        return cls(**{k: (math.inf if v is None else float(v)) for k, v in d.items()})


def check_identities(report: MetricReport, tol: float = 1e-12) -> list[str]:
    """Names of the report identities that do not hold (empty when consistent)."""
    bad = []
    close = lambda a, b: (math.isinf(a) and math.isinf(b)) or abs(a - b) <= tol
    if not close(report.fpr, 1 - report.specificity):
        bad.append("fpr")
    if not close(report.fnr, 1 - report.sensitivity):
        bad.append("fnr")
    if not close(report.youden_j, report.sensitivity + report.specificity - 1):
        bad.append("youden_j")
    if report.specificity < 1 and not close(report.lr_positive, report.sensitivity / (1 - report.specificity)):
        bad.append("lr_positive")
    if report.specificity > 0 and not close(report.lr_negative, (1 - report.sensitivity) / report.specificity):
        bad.append("lr_negative")
    return bad


def youden_threshold(roc: RocCurve) -> MetricReport:
    """Operating point maximizing sensitivity + specificity - 1.

    Ties go to the higher sensitivity, then to the lower threshold. The +inf
    sentinel (nothing predicted positive) is never chosen.
    """
    tpr, fpr, thr = roc.tpr[1:], roc.fpr[1:], roc.thresholds[1:]
    j = tpr - fpr
    # lexicographic: max J, then max tpr, then min threshold
    best = np.lexsort((thr, -tpr, -j))[0] + 1
    sens = float(roc.tpr[best])
    spec = float(1.0 - roc.fpr[best])
    correct = roc.tps[best] + (roc.n_neg - roc.fps[best])
    acc = float(correct / (roc.n_pos + roc.n_neg))
    return MetricReport.from_rates(sens, spec, auc=roc.auc, accuracy=acc, threshold=float(roc.thresholds[best]))


def binary_report(scores, labels) -> MetricReport:
    """ROC AUC plus every operating-point metric at the Youden threshold.

    Single-score input (all scores equal) yields AUC 0.5 by the tie rule.
    """
    return youden_threshold(roc_auc(scores, labels))
