"""Evaluation metrics: micro/macro F1 for classification, RMSE for
regression."""
from __future__ import annotations

import numpy as np


def _confusion_counts(y_true, y_pred, num_classes: int):
    tp = np.zeros(num_classes)
    fp = np.zeros(num_classes)
    fn = np.zeros(num_classes)
    for t, p in zip(np.asarray(y_true), np.asarray(y_pred)):
        if t == p:
            tp[t] += 1
        else:
            fp[p] += 1
            fn[t] += 1
    return tp, fp, fn


def micro_f1(y_true, y_pred, num_classes: int) -> float:
    tp, fp, fn = _confusion_counts(y_true, y_pred, num_classes)
    denom = 2 * tp.sum() + fp.sum() + fn.sum()
    return float(2 * tp.sum() / denom) if denom > 0 else 0.0


def macro_f1(y_true, y_pred, num_classes: int) -> float:
    tp, fp, fn = _confusion_counts(y_true, y_pred, num_classes)
    scores = np.zeros(num_classes)
    for c in range(num_classes):
        denom = 2 * tp[c] + fp[c] + fn[c]
        scores[c] = 2 * tp[c] / denom if denom > 0 else 0.0
    return float(scores.mean())


def rmse(y_true, y_pred) -> float:
    t = np.asarray(y_true, dtype=np.float64)
    p = np.asarray(y_pred, dtype=np.float64)
    return float(np.sqrt(np.mean((t - p) ** 2)))
