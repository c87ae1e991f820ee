"""Full gated hybrid predictor: backbone + archetypes + confidence gate +
popularity prior + length-phase policy, assembled behind one estimator.

Scoring contract: when the confidence gate is off for a phase-1/2
sequence, the output IS the backbone score array, bit for bit. Phase-0
(ultra-cold start) sequences always blend the backbone with the popularity
prior and never use archetypes. Phase-1 activations mix the archetype
scores into that popularity blend instead of the raw backbone scores.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .archetypes import ArchetypeModel
from .data import CONTINUOUS, DISCRETE, Sequence, SequenceDataset
from .errors import ConfigError, DataError
from .gate import (
    GateConfig,
    GateDecision,
    REASON_BELOW_THETA,
    confidence,
    decide,
    fit_distance_distribution,
    phase_for_length,
)
from .lstm import LSTMBackbone
from .validation import check_dataset, check_sequence


@dataclass(frozen=True)
class PopularityPrior:
    """Normalized global item frequencies from the training set."""

    scores: np.ndarray

    @classmethod
    def from_dataset(cls, dataset: SequenceDataset) -> "PopularityPrior":
        counts = np.zeros(dataset.n_items)
        for s in dataset.sequences:
            np.add.at(counts, s.items, 1.0)
        total = counts.sum()
        if total <= 0:
            raise DataError("empty dataset")
        return cls(counts / total)


@dataclass(frozen=True)
class Prediction:
    """Scores plus the ranking and gate decision that produced them."""

    scores: object  # (V,) array in discrete mode, float in continuous mode
    topk: np.ndarray | None
    decision: GateDecision


def rank_items(scores: np.ndarray) -> np.ndarray:
    """Full descending ranking; equal scores break toward the lower index."""
    return np.argsort(-scores, kind="stable")


class GatedHybridPredictor(BaseEstimator):
    """Sequence predictor with confidence-gated archetype scoring.

    fit() trains the backbone, extracts training behavior embeddings,
    clusters them into archetypes, fits per-archetype structure, and
    freezes the training minimum-distance distribution used for the
    percentile-rank confidence. All fitted components are immutable, so
    cheap flag variants (see variant()) can share them safely.
    """

    def __init__(
        self,
        embed_dim: int = 32,
        hidden_dim: int = 64,
        epochs: int = 5,
        batch_size: int = 256,
        learning_rate: float = 0.001,
        n_archetypes: int = 5,
        alpha: float = 1.0,
        theta: float = 0.4,
        hybrid_weight: float = 0.5,
        phase0_max_len: int = 3,
        phase1_max_len: int = 10,
        popularity_weight: float = 0.5,
        archetypes_enabled: bool = True,
        gating_enabled: bool = True,
        phases_enabled: bool = True,
        seed: int = 0,
        kmeans_max_iters: int = 100,
        kmeans_tol: float = 1e-6,
        clip_norm: float = 5.0,
        optimizer: str = "sgd",
    ):
        self.embed_dim = embed_dim
        self.hidden_dim = hidden_dim
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.n_archetypes = n_archetypes
        self.alpha = alpha
        self.theta = theta
        self.hybrid_weight = hybrid_weight
        self.phase0_max_len = phase0_max_len
        self.phase1_max_len = phase1_max_len
        self.popularity_weight = popularity_weight
        self.archetypes_enabled = archetypes_enabled
        self.gating_enabled = gating_enabled
        self.phases_enabled = phases_enabled
        self.seed = seed
        self.kmeans_max_iters = kmeans_max_iters
        self.kmeans_tol = kmeans_tol
        self.clip_norm = clip_norm
        self.optimizer = optimizer

    # ------------------------------------------------------------------

    @property
    def gate_config(self) -> GateConfig:
        return GateConfig(
            theta=self.theta,
            phase0_max_len=self.phase0_max_len,
            phase1_max_len=self.phase1_max_len,
            hybrid_weight=self.hybrid_weight,
        )

    def _require_fitted(self):
        if not hasattr(self, "backbone_"):
            raise NotFittedError("predictor is not fitted")

    def variant(self, **overrides) -> "GatedHybridPredictor":
        """Shallow copy with different hyperparameters, sharing fitted state.

        Only valid for parameters that do not invalidate fitting (theta,
        hybrid_weight, ablation flags, phase boundaries, popularity_weight).
        """
        allowed = {
            "theta",
            "hybrid_weight",
            "popularity_weight",
            "phase0_max_len",
            "phase1_max_len",
            "archetypes_enabled",
            "gating_enabled",
            "phases_enabled",
        }
        bad = set(overrides) - allowed
        if bad:
            raise ConfigError(f"variant() cannot override fitted parameters: {sorted(bad)}")
        clone = copy.copy(self)
        for key, value in overrides.items():
            setattr(clone, key, value)
        return clone

    # ------------------------------------------------------------------
    # fitting

    def fit(self, dataset: SequenceDataset):
        check_dataset(dataset)
        self.gate_config  # validates theta/phase bounds before training starts
        self.mode_ = dataset.mode
        self.n_items_ = dataset.n_items if self.mode_ == DISCRETE else 0
        self.vocab_ = dataset.vocab
        self.norm_stats_ = dataset.norm_stats

        self.backbone_ = LSTMBackbone(
            embed_dim=self.embed_dim,
            hidden_dim=self.hidden_dim,
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            seed=self.seed,
            mode=self.mode_,
            clip_norm=self.clip_norm,
            optimizer=self.optimizer,
        ).fit(dataset)

        trainable = [s for s in dataset.sequences if len(s) >= 2]
        train_windows = SequenceDataset(
            dataset.mode, trainable, vocab=dataset.vocab, norm_stats=dataset.norm_stats
        )
        embeddings = self.backbone_.transform(trainable)
        self.archetypes_ = ArchetypeModel(
            n_archetypes=self.n_archetypes,
            alpha=self.alpha,
            seed=self.seed,
            max_iters=self.kmeans_max_iters,
            tol=self.kmeans_tol,
        ).fit(train_windows, embeddings)
        self.distribution_ = fit_distance_distribution(embeddings, self.archetypes_.centroids_)
        self.popularity_ = (
            PopularityPrior.from_dataset(dataset) if self.mode_ == DISCRETE else None
        )
        return self

    # ------------------------------------------------------------------
    # scoring

    def _off_decision(self, seq_len: int) -> GateDecision:
        phase = phase_for_length(seq_len, self.gate_config) if self.phases_enabled else 2
        return GateDecision(0.0, float("inf"), -1, False, phase, REASON_BELOW_THETA)

    def _decide(self, e: np.ndarray, seq_len: int) -> GateDecision:
        conf, d_min, nearest = confidence(e, self.archetypes_.centroids_, self.distribution_)
        return decide(
            conf,
            seq_len,
            self.gate_config,
            d_min=d_min,
            nearest=nearest,
            gating_enabled=self.gating_enabled,
            phases_enabled=self.phases_enabled,
        )

    def _popularity_blend(self, backbone_scores: np.ndarray) -> np.ndarray:
        w = self.popularity_weight
        return (1.0 - w) * backbone_scores + w * self.popularity_.scores

    def _compose(self, seq: Sequence, backbone_scores, e: np.ndarray, dec: GateDecision):
        lam = self.hybrid_weight
        if self.mode_ == CONTINUOUS:
            if not dec.active:
                return backbone_scores
            arch = self.archetypes_.predict_value(self.archetypes_.soft_assign(e))
            return lam * backbone_scores + (1.0 - lam) * arch
        if dec.phase == 0:
            return self._popularity_blend(backbone_scores)
        if not dec.active:
            return backbone_scores
        arch = self.archetypes_.score_items(self.archetypes_.soft_assign(e), int(seq.items[-1]))
        base = self._popularity_blend(backbone_scores) if dec.phase == 1 else backbone_scores
        return lam * base + (1.0 - lam) * arch

    def score_sequence(self, seq: Sequence) -> Prediction:
        """Score the next event after `seq` and report the gate decision."""
        self._require_fitted()
        check_sequence(seq, self.mode_, min_len=1,
                       n_items=self.n_items_ if self.mode_ == DISCRETE else None)
        _, e = self.backbone_.forward(seq)
        backbone_scores = self.backbone_._project(e)
        if not self.archetypes_enabled:
            dec = self._off_decision(len(seq))
            scores = backbone_scores
        else:
            dec = self._decide(e, len(seq))
            scores = self._compose(seq, backbone_scores, e, dec)
        topk = rank_items(scores) if self.mode_ == DISCRETE else None
        return Prediction(scores, topk, dec)

    def predict_topk(self, seq: Sequence, k: int) -> np.ndarray:
        """Top-k items from a full ranking over the whole catalog."""
        self._require_fitted()
        if self.mode_ != DISCRETE:
            raise DataError("top-k ranking requires discrete mode")
        if k > self.n_items_:
            raise ConfigError(f"k={k} exceeds catalog size {self.n_items_}")
        return self.score_sequence(seq).topk[:k]

    def predict_next(self, sequences) -> np.ndarray:
        """Top-1 item (discrete) or predicted value (continuous) per sequence."""
        preds = [self.score_sequence(s) for s in sequences]
        if self.mode_ == DISCRETE:
            return np.array([int(p.topk[0]) for p in preds], dtype=np.int64)
        return np.array([p.scores for p in preds], dtype=np.float64)

    def decisions(self, dataset: SequenceDataset, leave_last_out: bool = True):
        """Gate decisions for every evaluable sequence (length >= 2)."""
        self._require_fitted()
        out = []
        for s in dataset.sequences:
            if len(s) < 2:
                continue
            probe = s.head(len(s) - 1) if leave_last_out else s
            if not self.archetypes_enabled:
                out.append(self._off_decision(len(probe)))
                continue
            _, e = self.backbone_.forward(probe)
            out.append(self._decide(e, len(probe)))
        return out

    def activation_rate(self, dataset: SequenceDataset) -> float:
        """Fraction of evaluable sequences whose gate decision is active."""
        decs = self.decisions(dataset)
        if not decs:
            raise DataError("no evaluable sequences")
        return float(np.mean([d.active for d in decs]))
