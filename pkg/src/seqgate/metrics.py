"""Ranking and regression metrics for next-step evaluation.

Ranking metrics take a full descending ranking (an array of item indices)
and a single relevant target, so the ideal DCG is 1 and NDCG reduces to
the reciprocal log-discount of the target's 1-based rank.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DataError


def rank_of(ranked, target: int) -> int:
    """1-based position of target in the ranking; target must be present."""
    ranked = np.asarray(ranked)
    pos = np.flatnonzero(ranked == target)
    if pos.size == 0:
        raise DataError("target item missing from ranking")
    return int(pos[0]) + 1


def hit_rate_at_k(ranked, target: int, k: int) -> float:
    """1.0 iff the target appears in the top k."""
    return 1.0 if target in np.asarray(ranked)[:k] else 0.0


def ndcg_at_k(ranked, target: int, k: int) -> float:
    """Single-target NDCG: 1/log2(rank + 1) inside the top k, else 0."""
    r = rank_of(ranked, target)
    if r > k:
        return 0.0
    return 1.0 / math.log2(r + 1)


def mrr(ranked, target: int) -> float:
    """Reciprocal of the target's 1-based rank."""
    return 1.0 / rank_of(ranked, target)


def continuous_metrics(preds, targets, baselines=None):
    """(mse, mae, direction_accuracy) for next-value predictions.

    Direction accuracy compares sign(pred - baseline) against
    sign(target - baseline), where the baseline is the last observed input
    value. Zero deltas count as correct only when both are zero. Returns
    direction accuracy as NaN when baselines are not supplied.
    """
    preds = np.asarray(preds, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if preds.shape != targets.shape:
        raise DataError("prediction/target length mismatch")
    if preds.size == 0:
        raise DataError("no predictions to score")
    err = preds - targets
    mse = float((err**2).mean())
    mae = float(np.abs(err).mean())
    if baselines is None:
        return mse, mae, float("nan")
    baselines = np.asarray(baselines, dtype=np.float64)
    if baselines.shape != preds.shape:
        raise DataError("baseline length mismatch")
    direction = float(
        (np.sign(preds - baselines) == np.sign(targets - baselines)).mean()
    )
    return mse, mae, direction
