# scripts/roc.py
"""ROC curve and trapezoidal AUROC for threshold classifiers."""
from typing import Sequence, Tuple

import numpy as np

from cgap_errors import ValidationError


def roc_curve(scores: Sequence[float], labels: Sequence[int]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Sweep the threshold over every distinct score, from above the largest to below the smallest.

    A sample is predicted positive when its score is at least the threshold.

    Args:
        scores: Classifier score per sample
        labels: 1 for positive samples, 0 for negative ones

    Returns:
        (fpr, tpr, thresholds), nondecreasing in fpr and starting at (0, 0)

    Raises:
        ValidationError: mismatched lengths, or a class with no samples
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if scores.shape != labels.shape:
        raise ValidationError(f"{scores.size} scores for {labels.size} labels")
    positives = int(np.count_nonzero(labels == 1))
    negatives = int(labels.size - positives)
    if positives == 0 or negatives == 0:
        raise ValidationError("ROC needs at least one positive and one negative sample")

    order = np.argsort(-scores, kind="stable")
    ranked, hits = scores[order], labels[order] == 1
    tp = np.cumsum(hits)
    fp = np.cumsum(~hits)
    # keep the last sample of every tie group
    last = np.r_[ranked[1:] != ranked[:-1], True]
    tpr = np.r_[0.0, tp[last] / positives]
    fpr = np.r_[0.0, fp[last] / negatives]
    thresholds = np.r_[np.inf, ranked[last]]
    return fpr, tpr, thresholds


def auc(fpr: np.ndarray, tpr: np.ndarray) -> float:
    """Trapezoidal area under a curve given by nondecreasing x points."""
    fpr, tpr = np.asarray(fpr, dtype=np.float64), np.asarray(tpr, dtype=np.float64)
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))


def auroc(scores: Sequence[float], labels: Sequence[int]) -> float:
    fpr, tpr, _ = roc_curve(scores, labels)
    return auc(fpr, tpr)
