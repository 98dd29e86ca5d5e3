"""Average precision and MAP over head-entity query groups."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DataError, KgchainsError


class NoPositives(KgchainsError):
    """Raised for a group without positives; callers skip such groups."""


@dataclass
class RankedResult:
    key: object
    items: list[tuple[float, int]]


def average_precision(items: Sequence[tuple[float, int]]) -> float:
    """AP with scores sorted descending; ties keep the original item order."""
    if not items:
        raise NoPositives("empty group")
    for score, _ in items:
        if not np.isfinite(score):
            raise DataError("non-finite score in ranking")
    ranked = sorted(items, key=lambda item: -item[0])
    hits = 0
    precision_sum = 0.0
    for rank, (_, label) in enumerate(ranked, start=1):
        if label == 1:
            hits += 1
            precision_sum += hits / rank
    if hits == 0:
        raise NoPositives("group has no positive items")
    return precision_sum / hits


def map_score(groups: Sequence[RankedResult]) -> float:
    """Unweighted mean AP over groups that contain at least one positive."""
    aps = []
    for group in groups:
        try:
            aps.append(average_precision(group.items))
        except NoPositives:
            continue
    if not aps:
        raise DataError("no group with a positive item; MAP undefined")
    return float(np.mean(aps))


def group_results(
    keys: Sequence, scores: Sequence[float], labels: Sequence[int], group_by: str = "head"
) -> list[RankedResult]:
    """Bucket (score, label) items by key, preserving input order within groups."""
    if group_by == "global":
        return [RankedResult(key=None, items=list(zip(scores, labels)))]
    if group_by != "head":
        raise ValueError(f"unknown grouping: {group_by!r}")
    buckets: dict[object, list[tuple[float, int]]] = {}
    for key, score, label in zip(keys, scores, labels):
        buckets.setdefault(key, []).append((float(score), int(label)))
    return [RankedResult(key=k, items=v) for k, v in buckets.items()]


def paired_permutation_test(
    aps_a: Sequence[float], aps_b: Sequence[float], rounds: int = 10000, seed: int = 0
) -> float:
    """Two-sided sign-flip permutation test on paired per-group AP differences.

    Returns the add-one-smoothed p-value for the observed mean difference.
    """
    if len(aps_a) != len(aps_b):
        raise ValueError("paired score lists must have equal length")
    diffs = np.asarray(aps_a, dtype=np.float64) - np.asarray(aps_b, dtype=np.float64)
    observed = abs(diffs.mean())
    rng = np.random.default_rng(seed)
    signs = rng.choice([-1.0, 1.0], size=(rounds, len(diffs)))
    perm_means = np.abs((signs * diffs).mean(axis=1))
    exceed = int((perm_means >= observed - 1e-12).sum())
    return (exceed + 1) / (rounds + 1)
