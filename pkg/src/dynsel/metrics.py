"""Confusion-matrix and score-based metrics for binary credit scoring.

Class 1 (bad customer) is the positive class. Ratios with a zero
denominator evaluate to 0 so that result tables stay total.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import betainc
from scipy.stats import rankdata

METRIC_NAMES = ("Acc", "AUC", "F1", "G-mean", "H_measure", "Brier score")
# metrics where a lower value is better
LOWER_IS_BETTER = frozenset({"Brier score"})


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class ConfusionMatrix:
    TP: int
    FN: int
    FP: int
    TN: int

    @property
    def total(self) -> int:
        return self.TP + self.FN + self.FP + self.TN


def _binary(labels, name) -> np.ndarray:
    a = np.asarray(labels)
    if a.ndim != 1:
        raise MetricError(f"{name} must be 1-D")
    if not np.isin(a, (0, 1)).all():
        raise MetricError(f"{name} must contain only 0 and 1")
    return a.astype(np.int64)


def confusion(labels, predictions) -> ConfusionMatrix:
    y = _binary(labels, "labels")
    p = _binary(predictions, "predictions")
    if y.shape != p.shape:
        raise MetricError(f"{y.size} labels vs {p.size} predictions")
    if y.size == 0:
        raise MetricError("need at least one sample")
    return ConfusionMatrix(TP=int(np.sum((y == 1) & (p == 1))),
                           FN=int(np.sum((y == 1) & (p == 0))),
                           FP=int(np.sum((y == 0) & (p == 1))),
                           TN=int(np.sum((y == 0) & (p == 0))))


def _ratio(num, den) -> float:
    return num / den if den else 0.0


def accuracy(cm: ConfusionMatrix) -> float:
    return _ratio(cm.TP + cm.TN, cm.total)


def precision(cm: ConfusionMatrix) -> float:
    return _ratio(cm.TP, cm.TP + cm.FP)


def recall(cm: ConfusionMatrix) -> float:
    return _ratio(cm.TP, cm.TP + cm.FN)


sensitivity = recall


def specificity(cm: ConfusionMatrix) -> float:
    return _ratio(cm.TN, cm.TN + cm.FP)


def f1(cm: ConfusionMatrix) -> float:
    p, r = precision(cm), recall(cm)
    return _ratio(2.0 * p * r, p + r)


def gmean(cm: ConfusionMatrix) -> float:
    return math.sqrt(recall(cm) * specificity(cm))


def _scored(scores, labels):
    s = np.asarray(scores, dtype=float)
    y = _binary(labels, "labels")
    if s.shape != y.shape:
        raise MetricError(f"{s.size} scores vs {y.size} labels")
    if not np.isfinite(s).all():
        raise MetricError("scores must be finite")
    return s, y


def _both_classes(y):
    n1 = int(y.sum())
    if n1 == 0 or n1 == y.size:
        raise MetricError("both classes must be present")
    return y.size - n1, n1


def auc(scores, labels) -> float:
    """Mann-Whitney estimate of P(score of a positive > score of a negative), ties count 1/2."""
    s, y = _scored(scores, labels)
    n0, n1 = _both_classes(y)
    ranks = rankdata(s)
    return float((ranks[y == 1].sum() - n1 * (n1 + 1) / 2.0) / (n0 * n1))


def roc_points(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    """ROC vertices ``(FPR, TPR)`` from (0, 0) to (1, 1), one per distinct threshold."""
    s, y = _scored(scores, labels)
    n0, n1 = _both_classes(y)
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    last = np.r_[np.flatnonzero(np.diff(s) != 0), s.size - 1]
    tp = np.cumsum(y)[last]
    fp = (last + 1) - tp
    return np.r_[0.0, fp / n0], np.r_[0.0, tp / n1]


def _convex_hull_upper(fpr, tpr):
    pts = sorted(set(zip(fpr.tolist(), tpr.tolist())))
    hull: list[tuple[float, float]] = []
    for p in pts:
        while len(hull) >= 2:
            (x1, y1), (x2, y2) = hull[-2], hull[-1]
            # drop hull[-1] unless it lies strictly above the chord hull[-2] -> p
            if (x2 - x1) * (p[1] - y1) - (y2 - y1) * (p[0] - x1) >= 0:
                hull.pop()
            else:
                break
        hull.append(p)
    h = np.array(hull)
    return h[:, 0], h[:, 1]


def h_measure(scores, labels, a: float = 2.0, b: float = 2.0) -> float:
    """Hand's H-measure with misclassification cost ``c ~ Beta(a, b)``.

    At cost ``c`` a false positive costs ``c`` and a false negative ``1 - c``;
    the minimum expected loss over thresholds is attained on the ROC convex
    hull and integrated in closed form with regularised incomplete betas.
    """
    if not (a > 0 and b > 0):
        raise MetricError("beta parameters must be positive")
    s, y = _scored(scores, labels)
    n0, n1 = _both_classes(y)
    pi0, pi1 = n0 / y.size, n1 / y.size
    F, T = _convex_hull_upper(*roc_points(s, y))
    # along the hull (FPR ascending) the optimal vertex is reached as c falls
    dF, dT = np.diff(F), np.diff(T)
    cuts = pi1 * dT / (pi1 * dT + pi0 * dF)
    upper = np.r_[1.0, cuts]
    lower = np.r_[cuts, 0.0]
    mean_c = a / (a + b)

    def inc(alpha, beta, hi, lo):
        return betainc(alpha, beta, hi) - betainc(alpha, beta, lo)

    int_c = mean_c * inc(a + 1, b, upper, lower)
    int_1mc = (1.0 - mean_c) * inc(a, b + 1, upper, lower)
    loss = float(np.sum(pi0 * F * int_c + pi1 * (1.0 - T) * int_1mc))
    # scoreless classifier: all-negative while c*pi0 > (1-c)*pi1, else all-positive
    c_star = pi1
    loss_max = pi0 * mean_c * betainc(a + 1, b, c_star) + \
        pi1 * (1.0 - mean_c) * (1.0 - betainc(a, b + 1, c_star))
    return float(1.0 - loss / loss_max)


def brier(scores, labels) -> float:
    s, y = _scored(scores, labels)
    if s.size == 0:
        raise MetricError("need at least one sample")
    return float(np.mean((s - y) ** 2))


def evaluate(labels, predictions, scores, a: float = 2.0, b: float = 2.0) -> dict[str, float]:
    """All six report metrics keyed by their table row names."""
    cm = confusion(labels, predictions)
    return {"Acc": accuracy(cm), "AUC": auc(scores, labels), "F1": f1(cm),
            "G-mean": gmean(cm), "H_measure": h_measure(scores, labels, a, b),
            "Brier score": brier(scores, labels)}
