"""Rank-based classification metrics and macro averaging."""
from __future__ import annotations

from collections.abc import Sequence

import numpy as np


def rank_from_scores(scores: np.ndarray) -> np.ndarray:
    """Classes ordered by descending score, ties by lower class id (row-wise)."""
    scores = np.asarray(scores)
    return np.argsort(-scores, axis=-1, kind="stable")


def true_ranks(rankings: np.ndarray, labels: Sequence[int]) -> np.ndarray:
    """1-based position of each item's label in its ranking."""
    rankings = np.asarray(rankings)
    labels = np.asarray(labels)
    hits = rankings == labels[:, None]
    if not np.all(hits.sum(axis=1) == 1):
        raise ValueError("each ranking must contain its label exactly once")
    return hits.argmax(axis=1) + 1


def accuracy_at_k(rankings, labels, k: int) -> float:
    if k < 1:
        raise ValueError("k must be >= 1")
    return 100.0 * float(np.mean(true_ranks(rankings, labels) <= k))


def mean_rank(rankings, labels) -> float:
    return float(np.mean(true_ranks(rankings, labels)))


def macro_mean(values: Sequence[float], groups: Sequence[int]) -> tuple[float, dict[int, float]]:
    """Mean within each group first, then across groups."""
    values = np.asarray(values, dtype=np.float64)
    groups = np.asarray(groups)
    per_group = {int(g): float(values[groups == g].mean()) for g in np.unique(groups)}
    return float(np.mean(list(per_group.values()))), per_group
