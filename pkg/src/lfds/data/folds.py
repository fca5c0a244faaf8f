"""Stratified k-fold assignment."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ParameterError


@dataclass
class FoldSplit:
    fold_count: int
    assignments: np.ndarray
    seed: int

    def test_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments != fold)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignments, minlength=self.fold_count)


def make_folds(labels, fold_count: int = 10, seed: int = 0) -> FoldSplit:
    """Deal each class's shuffled members round-robin over the folds.

    The deal counter carries over between classes, so fold sizes never
    differ by more than one.  ``labels`` may be a label array or a Dataset.
    """
    labels = np.asarray(getattr(labels, "labels", labels), dtype=np.int64)
    n = len(labels)
    if fold_count < 1 or fold_count > n:
        raise ParameterError(f"fold_count must be in [1, {n}], got {fold_count}")
    rng = np.random.default_rng(seed)
    assignments = np.empty(n, dtype=np.int64)
    cursor = 0
    for c in np.unique(labels):
        members = rng.permutation(np.flatnonzero(labels == c))
        assignments[members] = (cursor + np.arange(len(members))) % fold_count
        cursor += len(members)
    return FoldSplit(fold_count, assignments, seed)
