"""Evaluation metrics: accuracy, macro-averaged F1, Welch's t-test."""

from __future__ import annotations

import numpy as np
from scipy.special import stdtr


def accuracy(preds, labels):
    preds = np.asarray(preds)
    labels = np.asarray(labels)
    if preds.shape != labels.shape or preds.size == 0:
        raise ValueError("predictions and labels must be equal-length and nonempty")
    return float((preds == labels).mean())


def macro_f1(preds, labels, n_classes):
    """Unweighted mean of per-class F1.  A class with neither predicted nor
    actual positives contributes 0."""
    preds = np.asarray(preds)
    labels = np.asarray(labels)
    if preds.shape != labels.shape or preds.size == 0:
        raise ValueError("predictions and labels must be equal-length and nonempty")
    if labels.min() < 0 or labels.max() >= n_classes:
        raise ValueError("labels must lie in [0, %d)" % n_classes)
    total = 0.0
    for c in range(n_classes):
        tp = int(np.sum((preds == c) & (labels == c)))
        fp = int(np.sum((preds == c) & (labels != c)))
        fn = int(np.sum((preds != c) & (labels == c)))
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        total += f1
    return total / n_classes


def welch_t_test(sample_a, sample_b):
    """Two-sample unequal-variance t-test.

    Returns (t, degrees of freedom, two-sided p).  The p-value comes from
    the Student-t survival function at the Welch-Satterthwaite df.
    """
    a = np.asarray(sample_a, dtype=np.float64)
    b = np.asarray(sample_b, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise ValueError("each sample needs at least 2 observations")
    va = a.var(ddof=1)
    vb = b.var(ddof=1)
    if va == 0.0 and vb == 0.0:
        raise ValueError("both samples have zero variance")
    na, nb = a.size, b.size
    se2 = va / na + vb / nb
    t = (a.mean() - b.mean()) / np.sqrt(se2)
    df = se2 * se2 / ((va / na) ** 2 / (na - 1) + (vb / nb) ** 2 / (nb - 1))
    p = 2.0 * float(stdtr(df, -abs(t)))
    return float(t), float(df), p
