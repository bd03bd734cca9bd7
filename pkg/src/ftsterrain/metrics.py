from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, ShapeError
from .preprocessing import canonical_classes


@dataclass(frozen=True)
class Confusion:
    """Counts and row-normalized percentages; rows are true classes."""

    classes: tuple
    counts: np.ndarray
    percent: np.ndarray
    accuracy: float

    @property
    def per_class_accuracy(self) -> np.ndarray:
        return np.diag(self.percent).copy()


def confusion_from_counts(counts, classes) -> Confusion:
    counts = np.asarray(counts, dtype=np.int64)
    totals = counts.sum(axis=1, keepdims=True)
    # classes never seen as ground truth keep an all-zero row
    percent = np.divide(100.0 * counts, totals, out=np.zeros(counts.shape), where=totals > 0)
    total = counts.sum()
    if total == 0:
        raise DataError("confusion matrix is empty")
    return Confusion(tuple(classes), counts, percent, float(np.trace(counts) / total))


def confusion_matrix(pred, truth, classes=None) -> Confusion:
    """Row-normalized confusion matrix (percent) and overall accuracy (fraction)."""
    pred = np.asarray(pred, dtype=object).astype(str)
    truth = np.asarray(truth, dtype=object).astype(str)
    if pred.shape != truth.shape:
        raise ShapeError(f"{pred.size} predictions for {truth.size} labels")
    if truth.size == 0:
        raise DataError("confusion matrix needs at least one prediction")
    if classes is None:
        classes = canonical_classes(np.concatenate([truth, pred]))
    index = {c: i for i, c in enumerate(classes)}
    counts = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for t, p in zip(truth, pred):
        counts[index[t], index[p]] += 1
    return confusion_from_counts(counts, classes)


def accuracy(pred, truth) -> float:
    pred = np.asarray(pred, dtype=object).astype(str)
    truth = np.asarray(truth, dtype=object).astype(str)
    if truth.size == 0:
        raise DataError("accuracy of an empty set is undefined")
    return float(np.mean(pred == truth))
