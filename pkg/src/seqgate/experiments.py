"""Evaluation protocol: leave-last-out scoring, multi-seed paired runs,
and the four-arm ablation suite.

Every test sequence is evaluated by predicting its final event from all
preceding events, with the full catalog ranked (no sampled negatives).
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .data import DISCRETE, SequenceDataset
from .errors import DataError, SeqgateError
from .hybrid import GatedHybridPredictor
from .metrics import continuous_metrics, hit_rate_at_k, mrr, ndcg_at_k
from .stats import TTestResult, paired_t_test

CUTOFFS = (5, 10, 20)


@dataclass(frozen=True, eq=False)
class MetricSet:
    """Per-run metric values; ranking fields in discrete mode, error
    fields in continuous mode. Equality compares populated fields only,
    so untouched NaN placeholders do not break comparisons."""

    hr: dict = field(default_factory=dict)
    ndcg: dict = field(default_factory=dict)
    mrr: float = float("nan")
    mse: float = float("nan")
    mae: float = float("nan")
    direction_accuracy: float = float("nan")

    def __eq__(self, other):
        if not isinstance(other, MetricSet):
            return NotImplemented
        return self.flat() == other.flat()

    def flat(self) -> dict:
        """Flatten to name -> value for reporting and pairing."""
        out = {}
        for k in sorted(self.hr):
            out[f"hr@{k}"] = self.hr[k]
        for k in sorted(self.ndcg):
            out[f"ndcg@{k}"] = self.ndcg[k]
        if not np.isnan(self.mrr):
            out["mrr"] = self.mrr
        if not np.isnan(self.mse):
            out["mse"] = self.mse
            out["mae"] = self.mae
            out["direction_accuracy"] = self.direction_accuracy
        return out


@dataclass(frozen=True)
class SeedResult:
    seed: int
    baseline: MetricSet
    hybrid: MetricSet
    activation_rate: float


@dataclass(frozen=True)
class EvalReport:
    per_seed: tuple
    aggregate: dict  # metric -> {baseline_mean, baseline_std, hybrid_mean, hybrid_std}
    improvement: dict  # metric -> (mean %, std %)
    tests: dict  # metric -> TTestResult

    @property
    def seeds(self):
        return [r.seed for r in self.per_seed]


def evaluate(predictor, test: SequenceDataset):
    """Leave-last-out metrics over every evaluable sequence.

    Returns (MetricSet, activation_rate). The predictor only needs a
    `score_sequence(seq) -> Prediction` method and a mode, so stub scorers
    can stand in for trained models in tests.
    """
    evaluable = [s for s in test.sequences if len(s) >= 2]
    if not evaluable:
        raise DataError("no evaluable sequences (all shorter than 2 events)")
    active = []
    if test.mode == DISCRETE:
        hr = {k: 0.0 for k in CUTOFFS}
        ndcg = {k: 0.0 for k in CUTOFFS}
        rr = 0.0
        for s in evaluable:
            target = int(s.items[-1])
            pred = predictor.score_sequence(s.head(len(s) - 1))
            ranked = pred.topk
            for k in CUTOFFS:
                hr[k] += hit_rate_at_k(ranked, target, k)
                ndcg[k] += ndcg_at_k(ranked, target, k)
            rr += mrr(ranked, target)
            active.append(pred.decision.active)
        n = len(evaluable)
        metrics = MetricSet(
            hr={k: v / n for k, v in hr.items()},
            ndcg={k: v / n for k, v in ndcg.items()},
            mrr=rr / n,
        )
    else:
        preds, targets, baselines = [], [], []
        for s in evaluable:
            pred = predictor.score_sequence(s.head(len(s) - 1))
            preds.append(pred.scores)
            targets.append(float(s.values[-1]))
            baselines.append(float(s.values[-2]))
            active.append(pred.decision.active)
        mse, mae, direction = continuous_metrics(preds, targets, baselines)
        metrics = MetricSet(mse=mse, mae=mae, direction_accuracy=direction)
    return metrics, float(np.mean(active))


def run_seed(train: SequenceDataset, test: SequenceDataset, params: dict, seed: int) -> SeedResult:
    """Train one seed and evaluate the paired baseline/hybrid arms.

    The baseline shares the hybrid's backbone weights with archetypes
    disabled, so per-seed differences isolate the archetype contribution.
    """
    predictor = GatedHybridPredictor(**params, seed=seed).fit(train)
    baseline = predictor.variant(archetypes_enabled=False)
    base_metrics, _ = evaluate(baseline, test)
    hyb_metrics, activation = evaluate(predictor, test)
    return SeedResult(seed, base_metrics, hyb_metrics, activation)


def _aggregate(results) -> EvalReport:
    keys = list(results[0].baseline.flat().keys())
    aggregate, improvement, tests = {}, {}, {}
    for key in keys:
        base = np.array([r.baseline.flat()[key] for r in results])
        hyb = np.array([r.hybrid.flat()[key] for r in results])
        aggregate[key] = {
            "baseline_mean": float(base.mean()),
            "baseline_std": float(base.std(ddof=1)) if len(base) > 1 else 0.0,
            "hybrid_mean": float(hyb.mean()),
            "hybrid_std": float(hyb.std(ddof=1)) if len(hyb) > 1 else 0.0,
        }
        with np.errstate(divide="ignore", invalid="ignore"):
            rel = np.where(base != 0, (hyb - base) / base * 100.0, np.nan)
        improvement[key] = (
            float(np.nanmean(rel)) if not np.all(np.isnan(rel)) else float("nan"),
            float(np.nanstd(rel, ddof=1)) if len(rel) > 1 and not np.all(np.isnan(rel)) else 0.0,
        )
        if len(results) >= 2:
            tests[key] = paired_t_test(hyb - base)
        else:
            tests[key] = TTestResult(float("nan"), float("nan"), degenerate=True)
    return EvalReport(tuple(results), aggregate, improvement, tests)


def multi_seed_run(
    train: SequenceDataset,
    test: SequenceDataset,
    params: dict,
    seeds,
    workers: int = 1,
) -> EvalReport:
    """Paired baseline-vs-hybrid runs over several seeds.

    Data splits are shared; the seed only controls model initialization
    and batch shuffling. Any failing seed aborts the whole run.
    """
    seeds = list(seeds)
    if not seeds:
        raise DataError("no seeds given")
    results = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(run_seed, train, test, params, s) for s in seeds]
            for seed, fut in zip(seeds, futures):
                results.append(_checked_result(seed, fut.result))
    else:
        for seed in seeds:
            results.append(_checked_result(seed, lambda s=seed: run_seed(train, test, params, s)))
    return _aggregate(results)


def _checked_result(seed: int, thunk) -> SeedResult:
    try:
        return thunk()
    except SeqgateError as exc:
        raise type(exc)(f"seed {seed}: {exc}") from exc
    except Exception as exc:  # noqa: BLE001 - annotate the failing seed
        raise DataError(f"seed {seed} failed: {exc}") from exc


ABLATION_ARMS = (
    ("lstm_only", {"archetypes_enabled": False}),
    ("archetypes_no_gating", {"gating_enabled": False, "phases_enabled": False}),
    ("archetypes_gated", {"phases_enabled": False}),
    ("full_hybrid", {}),
)


@dataclass(frozen=True)
class AblationRow:
    name: str
    per_seed: tuple  # MetricSet per seed
    activation: tuple

    def mean_of(self, key: str) -> float:
        return float(np.mean([m.flat()[key] for m in self.per_seed]))

    def std_of(self, key: str) -> float:
        vals = [m.flat()[key] for m in self.per_seed]
        return float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0


def ablation_suite(train: SequenceDataset, test: SequenceDataset, params: dict, seeds):
    """Evaluate the four configuration arms with shared backbone per seed.

    Arm order: backbone only; archetypes always on; confidence gating;
    full system with the length-phase policy.
    """
    seeds = list(seeds)
    if not seeds:
        raise DataError("no seeds given")
    per_arm = {name: [] for name, _ in ABLATION_ARMS}
    per_arm_act = {name: [] for name, _ in ABLATION_ARMS}
    for seed in seeds:
        full = GatedHybridPredictor(**params, seed=seed).fit(train)
        for name, flags in ABLATION_ARMS:
            arm = full.variant(**flags)
            metrics, activation = evaluate(arm, test)
            per_arm[name].append(metrics)
            per_arm_act[name].append(activation)
    return [
        AblationRow(name, tuple(per_arm[name]), tuple(per_arm_act[name]))
        for name, _ in ABLATION_ARMS
    ]
