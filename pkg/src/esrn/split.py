"""Representative train/test partitioning by maximum-dissimilarity selection.

The training set is grown with the Kennard-Stone rule on z-scored columns:
start from the two mutually farthest samples, then repeatedly add the sample
whose nearest selected neighbour is farthest away.  The per-column minimum
and maximum samples are added right after the first pair; without them the
max-min rule alone can leave a column extreme in the test set.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .dataset import COLUMNS, DataError, Sample, to_columns


@dataclass(frozen=True)
class Split:
    train: list
    test: list
    train_fraction: float
    train_indices: tuple = ()
    test_indices: tuple = ()
    seed: Optional[int] = None
    columns: tuple = COLUMNS

    def manifest(self) -> dict:
        return {
            "method": "kennard-stone",
            "distance": "euclidean",
            "standardized": True,
            "columns": list(self.columns),
            "includes_target": "Dl" in self.columns,
            "train_fraction": self.train_fraction,
            "seed": self.seed,
            "n": len(self.train) + len(self.test),
            "n_train": len(self.train),
            "n_test": len(self.test),
            "train_indices": list(self.train_indices),
            "test_indices": list(self.test_indices),
        }


def standardize(samples_or_matrix, names: Sequence[str] = COLUMNS) -> np.ndarray:
    """Column z-scores with the population standard deviation.

    Raises :class:`DataError` if any column is constant.
    """
    if isinstance(samples_or_matrix, np.ndarray):
        X = np.asarray(samples_or_matrix, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
    else:
        cols = to_columns(samples_or_matrix, names)
        X = np.column_stack([cols[c] for c in names])
    std = X.std(axis=0)
    if np.any(std == 0):
        raise DataError("cannot standardize a constant column")
    return (X - X.mean(axis=0)) / std


def train_size(n: int, fraction: float) -> int:
    """``round(fraction * n)`` with halves rounded up, kept within [2, n-1]."""
    return min(max(int(math.floor(fraction * n + 0.5)), 2), n - 1)


def column_extremes(X: np.ndarray) -> list[int]:
    """Row of the minimum then maximum of each column (first row on ties)."""
    out = []
    for j in range(X.shape[1]):
        for k in (int(np.argmin(X[:, j])), int(np.argmax(X[:, j]))):
            if k not in out:
                out.append(k)
    return out


def kennard_stone(X: np.ndarray, n_select: int, keep_extremes: bool = True) -> list[int]:
    """Indices chosen by Kennard-Stone, in selection order.

    Ties are broken by the lowest row index (``argmax`` returns the first
    maximum), so the result is a pure function of ``X``.  With
    ``keep_extremes`` the column extremes follow the initial pair, which
    guarantees every column's unselected values lie within the selected range
    whenever ``n_select`` covers them.
    """
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    if not 2 <= n_select <= n:
        raise ValueError("n_select must lie in [2, n]")
    dist = cdist(X, X)
    far = np.argmax(dist)
    i, j = divmod(int(far), n)
    selected = [min(i, j), max(i, j)]
    if keep_extremes:
        selected += [k for k in column_extremes(X) if k not in selected]
        selected = selected[:n_select]
    chosen = np.zeros(n, dtype=bool)
    chosen[selected] = True
    nearest = dist[selected].min(axis=0)
    while len(selected) < n_select:
        masked = np.where(chosen, -np.inf, nearest)
        k = int(np.argmax(masked))
        selected.append(k)
        chosen[k] = True
        nearest = np.minimum(nearest, dist[k])
    return selected


def ssmd_split(
    samples: Sequence[Sample],
    train_fraction: float = 0.7,
    seed: int = 0,
    names: Sequence[str] = COLUMNS,
) -> Split:
    """Split samples into a range-spanning training set and an interior test set.

    ``seed`` is recorded for provenance; tie-breaking is by row index and
    never needs it.
    """
    samples = list(samples)
    n = len(samples)
    if n < 4:
        raise DataError("ssmd_split needs at least 4 samples")
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must lie in (0, 1)")
    cols = to_columns(samples, names)
    X = np.column_stack([cols[c] for c in names])
    if np.all(X == X[0]):
        raise DataError("all samples are identical")
    std = X.std(axis=0)
    Z = (X - X.mean(axis=0)) / np.where(std == 0, 1.0, std)
    picked = kennard_stone(Z, train_size(n, train_fraction))
    train_idx = sorted(picked)
    in_train = set(train_idx)
    test_idx = [i for i in range(n) if i not in in_train]
    return Split(
        train=[samples[i] for i in train_idx],
        test=[samples[i] for i in test_idx],
        train_fraction=train_fraction,
        train_indices=tuple(train_idx),
        test_indices=tuple(test_idx),
        seed=seed,
        columns=tuple(names),
    )
