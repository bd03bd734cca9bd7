"""Feature scaling, class ordering and the stratified train/test split."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .telemetry import TERRAINS


def canonical_classes(labels) -> tuple:
    """Distinct labels, terrains first in their natural order, then the rest sorted."""
    present = {str(v) for v in labels}
    known = [t for t in TERRAINS if t in present]
    return tuple(known + sorted(present.difference(TERRAINS)))


@dataclass(frozen=True)
class Scaler:
    """Per-feature z-score standardization. Constant columns keep unit scale."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, X) -> "Scaler":
        X = np.asarray(X, dtype=np.float64)
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        std = np.where(std > 0, std, 1.0)
        return cls(mean, std)

    @property
    def n_features(self) -> int:
        return self.mean.size

    def transform(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features:
            raise ShapeError(f"expected {self.n_features} features, got {X.shape[1]}")
        return (X - self.mean) / self.std

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d) -> "Scaler":
        return cls(np.asarray(d["mean"], dtype=np.float64), np.asarray(d["std"], dtype=np.float64))


def stratified_split(y, test_fraction: float = 0.25, seed: int = 42):
    """Deterministic per-class shuffle split.

    Each class contributes ``round(test_fraction * n_class)`` samples to the
    test side (at least one stays in training). Returns sorted index arrays
    ``(train_idx, test_idx)``.
    """
    y = np.asarray(y, dtype=object)
    rng = np.random.default_rng(seed)
    train, test = [], []
    for c in canonical_classes(y):
        idx = np.flatnonzero(y == c)
        idx = idx[rng.permutation(idx.size)]
        n_test = int(np.floor(test_fraction * idx.size + 0.5))
        n_test = min(n_test, idx.size - 1)
        test.append(idx[:n_test])
        train.append(idx[n_test:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))
