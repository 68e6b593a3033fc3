"""Binary classification metrics. Class 1 (high performance) is the positive class."""

import math
import warnings
from typing import Optional, Sequence

import numpy as np
from sklearn.exceptions import UndefinedMetricWarning
from sklearn.metrics import accuracy_score, auc as trapezoid_area, confusion_matrix, mean_squared_error, roc_curve

from src.errors import MetricsError
from src.models import Metrics, RocPoint


def _as_labels(values, name: str) -> np.ndarray:
    arr = np.asarray(values)
    if arr.ndim != 1:
        raise MetricsError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if not np.all(np.isin(arr, (0, 1))):
        raise MetricsError(f"{name} must contain only 0 and 1")
    return arr.astype(np.int64)


def roc(true_labels, prob_high) -> list[RocPoint]:
    """ROC points from the strictest threshold to the loosest.

    Thresholds are the distinct scores in descending order (a sample is
    positive when its score is >= the threshold), preceded by ``(0, 0, inf)``.
    Rates with an empty denominator are 0.
    """
    truth = _as_labels(true_labels, "true_labels")
    scores = np.asarray(prob_high, dtype=np.float64)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UndefinedMetricWarning)
        fpr, tpr, thresholds = roc_curve(truth, scores, pos_label=1, drop_intermediate=False)
    fpr = np.nan_to_num(fpr, nan=0.0)
    tpr = np.nan_to_num(tpr, nan=0.0)
    thresholds = thresholds.astype(np.float64)
    thresholds[0] = math.inf
    return [RocPoint(fpr=float(f), tpr=float(t), threshold=float(th)) for f, t, th in zip(fpr, tpr, thresholds)]


def auc(points: Sequence[RocPoint]) -> float:
    """Trapezoidal area under ROC points ordered by non-decreasing fpr."""
    if len(points) < 2:
        return 0.0
    return float(trapezoid_area([p.fpr for p in points], [p.tpr for p in points]))


def evaluate(predicted_labels, predicted_prob_high, true_labels) -> Metrics:
    """Accuracy, hard-label RMSE, precision/recall/F1, confusion matrix, ROC and AUC.

    Args:
        predicted_labels: Hard predictions in {0, 1}.
        predicted_prob_high: Predicted probability of class 1, in [0, 1].
        true_labels: Ground truth in {0, 1}.

    Returns:
        Metrics. ``f1`` is 0 with ``f1_defined=False`` when TP + FP or TP + FN
        is zero; ``auc`` is 0 with ``auc_defined=False`` when the truth has a
        single class.

    Raises:
        MetricsError: on empty or mismatched inputs, or out-of-range values.
    """
    pred = _as_labels(predicted_labels, "predicted_labels")
    truth = _as_labels(true_labels, "true_labels")
    prob = np.asarray(predicted_prob_high, dtype=np.float64)
    if not (len(pred) == len(truth) == len(prob)):
        raise MetricsError(f"length mismatch: {len(pred)} predictions, {len(prob)} probabilities, {len(truth)} labels")
    if len(truth) == 0:
        raise MetricsError("cannot evaluate zero samples")
    if not np.all(np.isfinite(prob)) or np.any((prob < 0.0) | (prob > 1.0)):
        raise MetricsError("probabilities must be finite and within [0, 1]")

    tn, fp, fn, tp = (int(v) for v in confusion_matrix(truth, pred, labels=[0, 1]).ravel())
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1_defined = bool(tp + fp and tp + fn)
    f1 = 2.0 * precision * recall / (precision + recall) if f1_defined and precision + recall else 0.0

    auc_defined = bool(0 < truth.sum() < len(truth))
    points = roc(truth, prob)
    return Metrics(
        accuracy=float(accuracy_score(truth, pred)),
        rmse=math.sqrt(mean_squared_error(truth, pred)),
        precision=precision,
        recall=recall,
        f1=f1,
        f1_defined=f1_defined,
        auc=auc(points) if auc_defined else 0.0,
        auc_defined=auc_defined,
        confusion=[[tn, fp], [fn, tp]],
        support=len(truth),
        roc=points,
    )


def evaluate_by_group(predicted_labels, predicted_prob_high, true_labels,
                      groups: Sequence[Optional[str]]) -> dict[str, Metrics]:
    """:func:`evaluate` restricted to each non-empty group tag (e.g. mission A and B)."""
    groups = np.asarray([g or "" for g in groups])
    pred, prob, truth = np.asarray(predicted_labels), np.asarray(predicted_prob_high), np.asarray(true_labels)
    if len(groups) != len(truth):
        raise MetricsError(f"{len(groups)} group tags for {len(truth)} samples")
    out = {}
    for tag in sorted(set(groups.tolist()) - {""}):
        mask = groups == tag
        out[tag] = evaluate(pred[mask], prob[mask], truth[mask])
    return out
