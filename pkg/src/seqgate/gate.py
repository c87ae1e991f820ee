"""Percentile-rank confidence over minimum centroid distance and the
binary archetype-activation decision.

Confidence for a sequence is 1 minus the fraction of training minimum
distances that are <= its own minimum distance (ties count). The gate is
all-or-nothing: when it is off, downstream scoring must fall back to the
backbone unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import DISCRETE
from .errors import ConfigError, DataError
from .validation import check_embeddings, check_vector

REASON_ACTIVE = "active"
REASON_BELOW_THETA = "below_theta"
REASON_PHASE0 = "phase0"


@dataclass(frozen=True)
class GateConfig:
    """Gate threshold, phase-length boundaries, and the hybrid weight."""

    theta: float = 0.4
    phase0_max_len: int = 3
    phase1_max_len: int = 10
    hybrid_weight: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.theta <= 1.0:
            raise ConfigError("theta must be in [0, 1]")
        if not 0.0 <= self.hybrid_weight <= 1.0:
            raise ConfigError("hybrid_weight must be in [0, 1]")
        if self.phase0_max_len >= self.phase1_max_len:
            raise ConfigError("phase0_max_len must be < phase1_max_len")


@dataclass(frozen=True)
class GateDecision:
    confidence: float
    d_min: float
    nearest_archetype: int
    active: bool
    phase: int
    reason: str


@dataclass(frozen=True)
class DistanceDistribution:
    """Ascending training minimum-centroid distances."""

    sorted_dmins: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.sorted_dmins, dtype=np.float64)
        if d.ndim != 1 or d.shape[0] < 1:
            raise DataError("distance distribution needs at least one value")
        if not np.all(np.isfinite(d)) or np.any(d < 0):
            raise DataError("distances must be finite and nonnegative")
        if np.any(np.diff(d) < 0):
            d = np.sort(d)
        object.__setattr__(self, "sorted_dmins", d)

    @property
    def n(self) -> int:
        return int(self.sorted_dmins.shape[0])

    def percentile(self, d_min: float) -> float:
        """Fraction of training distances <= d_min (right bisection)."""
        count = int(np.searchsorted(self.sorted_dmins, d_min, side="right"))
        return count / self.n

    @property
    def mean(self) -> float:
        return float(self.sorted_dmins.mean())


def min_distances(embeddings: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Per-row minimum euclidean distance to any centroid."""
    X = check_embeddings(embeddings)
    d = np.linalg.norm(X[:, None, :] - centroids[None, :, :], axis=2)
    return d.min(axis=1)


def fit_distance_distribution(embeddings: np.ndarray, centroids: np.ndarray) -> DistanceDistribution:
    """Training distribution of minimum centroid distances, sorted ascending."""
    return DistanceDistribution(np.sort(min_distances(embeddings, centroids)))


def confidence(e: np.ndarray, centroids: np.ndarray, dist: DistanceDistribution):
    """(confidence, d_min, nearest archetype index) for one embedding."""
    e = check_vector(e, "embedding")
    d = np.linalg.norm(centroids - e, axis=1)
    nearest = int(d.argmin())
    d_min = float(d[nearest])
    conf = 1.0 - dist.percentile(d_min)
    return conf, d_min, nearest


def phase_for_length(seq_len: int, cfg: GateConfig) -> int:
    if seq_len <= cfg.phase0_max_len:
        return 0
    if seq_len <= cfg.phase1_max_len:
        return 1
    return 2


def decide(
    conf: float,
    seq_len: int,
    cfg: GateConfig,
    d_min: float = float("nan"),
    nearest: int = -1,
    gating_enabled: bool = True,
    phases_enabled: bool = True,
) -> GateDecision:
    """Binary activation decision. conf == theta activates (inclusive).

    Phase 0 disables archetypes regardless of confidence. The ablation
    switches force the phase to 2 (phases_enabled=False) or skip the
    confidence test (gating_enabled=False); both default on.
    """
    phase = phase_for_length(seq_len, cfg) if phases_enabled else 2
    if phase == 0:
        return GateDecision(conf, d_min, nearest, False, phase, REASON_PHASE0)
    if gating_enabled and conf < cfg.theta:
        return GateDecision(conf, d_min, nearest, False, phase, REASON_BELOW_THETA)
    return GateDecision(conf, d_min, nearest, True, phase, REASON_ACTIVE)


def threshold_grid(lo: float, hi: float, step: float) -> list:
    if step <= 0 or hi < lo:
        raise ConfigError("invalid threshold grid")
    n = int(round((hi - lo) / step))
    grid = [round(lo + i * step, 10) for i in range(n + 1)]
    grid = [t for t in grid if 0.0 <= t <= 1.0]
    if not grid:
        raise ConfigError("empty threshold grid")
    return grid


def calibrate_threshold(
    predictor,
    val_ds,
    grid_lo: float = 0.2,
    grid_hi: float = 0.6,
    grid_step: float = 0.1,
):
    """Grid-search theta on validation data; returns (theta, report rows).

    Each row is (theta, activation coverage, quality metric), the metric
    being HR@10 for discrete data and MSE for continuous. The chosen theta
    maximises quality (minimises MSE), breaking ties toward the largest
    theta so equal-quality grids pick the most conservative gate. The
    caller freezes the returned value; test evaluation must not re-tune.
    """
    from .experiments import evaluate  # local import, avoids a module cycle

    grid = threshold_grid(grid_lo, grid_hi, grid_step)
    discrete = val_ds.mode == DISCRETE
    rows = []
    best_theta, best_metric = None, None
    for theta in grid:
        candidate = predictor.variant(theta=theta)
        metrics, coverage = evaluate(candidate, val_ds)
        quality = metrics.hr[10] if discrete else metrics.mse
        rows.append((theta, coverage, quality))
        better = (
            best_metric is None
            or (discrete and quality >= best_metric)
            or (not discrete and quality <= best_metric)
        )
        if better:
            best_theta, best_metric = theta, quality
    return best_theta, rows
