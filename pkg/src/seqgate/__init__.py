"""Confidence-gated hybrid sequential prediction.

A from-scratch LSTM next-step model is augmented with behavioral
archetypes (k-means clusters over sequence embeddings, each carrying its
own transition structure). A percentile-rank confidence score gates the
archetype contribution on or off per sequence; when the gate is off the
system falls back to the backbone's scores unchanged.
"""

from .archetypes import ArchetypeModel, kmeans_fit
from .data import (
    CONTINUOUS,
    DISCRETE,
    ItemVocab,
    Sequence,
    SequenceDataset,
    SplitSpec,
    build_vocab,
    dataset_from_events,
    kfold_split,
    load_events,
    load_series,
    temporal_split,
    window_continuous,
)
from .errors import ConfigError, DataError, NumericalError, SeqgateError
from .experiments import (
    EvalReport,
    MetricSet,
    ablation_suite,
    evaluate,
    multi_seed_run,
)
from .gate import (
    DistanceDistribution,
    GateConfig,
    GateDecision,
    calibrate_threshold,
    confidence,
    decide,
    fit_distance_distribution,
)
from .hybrid import GatedHybridPredictor, PopularityPrior, Prediction
from .lstm import LSTMBackbone, grad_check
from .metrics import continuous_metrics, hit_rate_at_k, mrr, ndcg_at_k
from .persistence import load_bundle, save_bundle
from .stats import paired_t_test, regularized_incomplete_beta
from .synth import SynthSpec, best_label_agreement, gen_dataset, gen_shifted

__version__ = "0.1.0"

__all__ = [
    "ArchetypeModel",
    "CONTINUOUS",
    "ConfigError",
    "DISCRETE",
    "DataError",
    "DistanceDistribution",
    "EvalReport",
    "GateConfig",
    "GateDecision",
    "GatedHybridPredictor",
    "ItemVocab",
    "LSTMBackbone",
    "MetricSet",
    "NumericalError",
    "PopularityPrior",
    "Prediction",
    "Sequence",
    "SequenceDataset",
    "SeqgateError",
    "SplitSpec",
    "SynthSpec",
    "ablation_suite",
    "best_label_agreement",
    "build_vocab",
    "calibrate_threshold",
    "confidence",
    "continuous_metrics",
    "dataset_from_events",
    "decide",
    "evaluate",
    "fit_distance_distribution",
    "gen_dataset",
    "gen_shifted",
    "grad_check",
    "hit_rate_at_k",
    "kfold_split",
    "kmeans_fit",
    "load_bundle",
    "load_events",
    "load_series",
    "mrr",
    "multi_seed_run",
    "ndcg_at_k",
    "paired_t_test",
    "regularized_incomplete_beta",
    "save_bundle",
    "temporal_split",
    "window_continuous",
]
