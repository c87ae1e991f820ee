"""Acceptance suite: one test per criterion, each printing a PASS line
with its measured numbers (run with -s to see them live).

Criteria 1, 2 and the shifted half of 4 run in continuous mode, where the
distribution-shift geometry (distance ratios, refusal) is realized; 3 and
the first half of 4 run in discrete mode. 10 is the optional full-scale
run and only executes when MOVIELENS_RATINGS points at a ratings file.
"""

import math
import os
import time
from pathlib import Path

import numpy as np
import pytest

from seqgate.archetypes import ArchetypeModel, kmeans_fit
from seqgate.data import (
    DISCRETE,
    ItemVocab,
    Sequence,
    SequenceDataset,
    SplitSpec,
    temporal_split,
)
from seqgate.experiments import ablation_suite, evaluate, multi_seed_run
from seqgate.gate import min_distances
from seqgate.hybrid import GatedHybridPredictor
from seqgate.lstm import LSTMBackbone, grad_check
from seqgate.metrics import hit_rate_at_k, mrr, ndcg_at_k
from seqgate.synth import SynthSpec, gen_dataset, gen_shifted

# Desk-scale acceptance configs. The discrete backbone is deliberately
# trained to a mid-strength level: archetype gains exist exactly when the
# backbone has not internalized the global transition structure itself.
DISCRETE_SPEC = SynthSpec(n_items=50, n_archetypes=3, n_sequences=2000,
                          len_range=(12, 30), seed=0)
DISCRETE_PARAMS = dict(
    embed_dim=32, hidden_dim=64, epochs=10, batch_size=64,
    learning_rate=1.0, optimizer="sgd", n_archetypes=5, theta=0.4,
)
CONTINUOUS_SPEC = SynthSpec(mode="continuous", n_items=50, n_archetypes=3,
                            n_sequences=2000, len_range=(12, 30), seed=0)
CONTINUOUS_PARAMS = dict(
    embed_dim=32, hidden_dim=64, epochs=10, batch_size=64,
    learning_rate=0.01, optimizer="adam", n_archetypes=5, theta=0.4,
)
SHIFT_MAGNITUDE = 2.0


def report(num, name, detail):
    print(f"\nACCEPTANCE {num} [{name}]: PASS ({detail})")


@pytest.fixture(scope="module")
def continuous_setup():
    train, _ = gen_dataset(CONTINUOUS_SPEC)
    predictor = GatedHybridPredictor(**CONTINUOUS_PARAMS, seed=0).fit(train)
    shifted, _ = gen_shifted(
        SynthSpec(**{**CONTINUOUS_SPEC.__dict__, "sample_seed": 3}), SHIFT_MAGNITUDE
    )
    return train, predictor, shifted


@pytest.fixture(scope="module")
def discrete_setup():
    train, _ = gen_dataset(DISCRETE_SPEC)
    test, _ = gen_dataset(SynthSpec(**{**DISCRETE_SPEC.__dict__, "sample_seed": 2}))
    return train, test


def test_criterion_1_fallback_identity(continuous_setup):
    """Gated-off scoring must BE the backbone scoring, bit for bit."""
    t0 = time.time()
    _, predictor, shifted = continuous_setup
    backbone_arm = predictor.variant(archetypes_enabled=False)

    activation = predictor.activation_rate(shifted)
    assert activation == 0.0

    for s in shifted.sequences:
        inp = s.head(len(s) - 1)
        assert predictor.score_sequence(inp).scores == backbone_arm.backbone_.score_next(inp)

    hyb, _ = evaluate(predictor, shifted)
    base, _ = evaluate(backbone_arm, shifted)
    assert hyb.flat() == base.flat()
    report(1, "fallback identity",
           f"activation 0%, {len(shifted.sequences)} sequences bitwise-equal, "
           f"{time.time() - t0:.0f}s")


def test_criterion_2_refusal_under_shift(continuous_setup):
    """Shifted data: mean d_min ratio >= 2, activation 0%, mean conf < 0.4."""
    t0 = time.time()
    _, predictor, shifted = continuous_setup
    inputs = [s.head(len(s) - 1) for s in shifted.sequences if len(s) >= 2]
    emb = predictor.backbone_.transform(inputs)
    dmins = min_distances(emb, predictor.archetypes_.centroids_)
    ratio = float(dmins.mean() / predictor.distribution_.mean)
    confs = np.array([1.0 - predictor.distribution_.percentile(d) for d in dmins])
    activation = predictor.activation_rate(shifted)

    assert ratio >= 2.0
    assert activation == 0.0
    assert confs.mean() < 0.4
    report(2, "refusal under shift",
           f"d_min ratio {ratio:.2f}, activation 0%, mean conf {confs.mean():.3f}, "
           f"{time.time() - t0:.0f}s")


def test_criterion_3_activation_with_gain(discrete_setup):
    """5 seeds: every-seed gain, mean >= +10%, p < 0.05, activation > 50%."""
    t0 = time.time()
    train, test = discrete_setup
    result = multi_seed_run(train, test, DISCRETE_PARAMS, seeds=range(5))

    per_seed = [
        (r.baseline.hr[10], r.hybrid.hr[10], r.activation_rate) for r in result.per_seed
    ]
    assert all(h > b for b, h, _ in per_seed)
    imp_mean, _ = result.improvement["hr@10"]
    assert imp_mean >= 10.0
    ttest = result.tests["hr@10"]
    assert ttest.p_value < 0.05
    assert all(a > 0.5 for _, _, a in per_seed)
    report(3, "activation with gain",
           f"improvement {imp_mean:+.1f}%, p={ttest.p_value:.2e}, "
           f"activation {np.mean([a for _, _, a in per_seed]):.2f}, "
           f"{time.time() - t0:.0f}s")


def test_criterion_4_ablation_ordering(discrete_setup, continuous_setup):
    """Mean HR@10 ordering over 5 seeds; exact gated fallback on shifted MSE."""
    t0 = time.time()
    train, test = discrete_setup
    rows = {r.name: r for r in ablation_suite(train, test, DISCRETE_PARAMS, seeds=range(5))}
    no_gating = rows["archetypes_no_gating"].mean_of("hr@10")
    gated = rows["archetypes_gated"].mean_of("hr@10")
    lstm_only = rows["lstm_only"].mean_of("hr@10")
    assert no_gating >= gated >= lstm_only

    _, predictor, shifted = continuous_setup
    forced, _ = evaluate(predictor.variant(gating_enabled=False, phases_enabled=False), shifted)
    gated_m, _ = evaluate(predictor, shifted)
    backbone_m, _ = evaluate(predictor.variant(archetypes_enabled=False), shifted)
    assert forced.mse > backbone_m.mse  # ungated archetypes hurt under shift
    assert gated_m.mse == backbone_m.mse and gated_m.mae == backbone_m.mae
    report(4, "ablation ordering",
           f"HR@10 {no_gating:.3f} >= {gated:.3f} >= {lstm_only:.3f}; "
           f"shifted MSE forced {forced.mse:.2f} > backbone {backbone_m.mse:.2f} "
           f"== gated exactly, {time.time() - t0:.0f}s")


def test_criterion_5_metric_oracle_equivalence():
    """HR/NDCG/MRR match brute-force scans exactly on 1000 random cases."""
    t0 = time.time()

    def brute_hit(ranked, target, k):
        return 1.0 if target in list(ranked)[:k] else 0.0

    def brute_ndcg(ranked, target, k):
        ranked = list(ranked)
        pos = ranked.index(target)
        return 1.0 / math.log2(pos + 2) if pos < k else 0.0

    def brute_mrr(ranked, target):
        return 1.0 / (list(ranked).index(target) + 1)

    rng = np.random.default_rng(42)
    for _ in range(1000):
        v = int(rng.integers(21, 200))
        ranked = rng.permutation(v)
        target = int(rng.integers(v))
        for k in (5, 10, 20):
            assert hit_rate_at_k(ranked, target, k) == brute_hit(ranked, target, k)
            assert ndcg_at_k(ranked, target, k) == brute_ndcg(ranked, target, k)
        assert mrr(ranked, target) == brute_mrr(ranked, target)
    report(5, "metric oracle equivalence", f"1000 cases exact, {time.time() - t0:.1f}s")


def test_criterion_6_gradient_correctness():
    """BPTT vs central differences: max rel error < 1e-4 over 10 seeds."""
    t0 = time.time()
    worst = 0.0
    for seed in range(10):
        rng = np.random.default_rng(seed)
        items = rng.integers(0, 3, size=8)
        seqs = [Sequence(owner=0, items=items)]
        ds = SequenceDataset(DISCRETE, seqs, vocab=ItemVocab.identity(3))
        model = LSTMBackbone(embed_dim=2, hidden_dim=2, epochs=1, batch_size=2,
                             seed=seed).fit(ds)
        n_params = sum(p.size for p in model.params_.values())
        assert n_params <= 200
        worst = max(worst, grad_check(model, seqs[0], 1e-5))
    assert worst < 1e-4
    report(6, "gradient correctness",
           f"max rel error {worst:.2e} over 10 seeds, {time.time() - t0:.0f}s")


def test_criterion_7_probability_invariants(discrete_setup):
    """>= 10^4 transition rows sum to 1 within 1e-9; >= 10^4 gate-ON hybrid
    vectors sum to 1 within 1e-6."""
    t0 = time.time()
    rng = np.random.default_rng(7)

    # transition rows: 25 random models x 5 archetypes x 80 items = 10^4
    worst_row = 0.0
    for trial in range(25):
        v = 80
        seqs = [
            Sequence(owner=i, items=rng.integers(0, v, size=int(rng.integers(2, 10))))
            for i in range(30)
        ]
        ds = SequenceDataset(DISCRETE, seqs, vocab=ItemVocab.identity(v))
        emb = rng.normal(size=(30, 4))
        model = ArchetypeModel(
            n_archetypes=5, alpha=float(rng.uniform(0.1, 3.0)), seed=trial
        ).fit(ds, emb)
        for k in range(5):
            for item in range(v):
                row = model.transition_row(k, item)
                worst_row = max(worst_row, abs(float(row.sum()) - 1.0))
                assert row.min() > 0
    assert worst_row < 1e-9

    # hybrid gate-ON vectors over fresh sequences, gating forced on
    train, _ = discrete_setup
    small = GatedHybridPredictor(
        embed_dim=8, hidden_dim=12, epochs=2, batch_size=128,
        learning_rate=0.5, n_archetypes=5, seed=1,
        gating_enabled=False, phases_enabled=False,
    ).fit(train)
    probe, _ = gen_dataset(SynthSpec(**{**DISCRETE_SPEC.__dict__,
                                        "n_sequences": 10_000, "sample_seed": 11}))
    worst_vec = 0.0
    n_checked = 0
    for s in probe.sequences:
        pred = small.score_sequence(s.head(len(s) - 1))
        assert pred.decision.active
        worst_vec = max(worst_vec, abs(float(pred.scores.sum()) - 1.0))
        n_checked += 1
    assert n_checked >= 10_000
    assert worst_vec < 1e-6
    report(7, "probability invariants",
           f"10000 rows (max dev {worst_row:.1e}), {n_checked} gate-ON vectors "
           f"(max dev {worst_vec:.1e}), {time.time() - t0:.0f}s")


def test_criterion_8_confidence_calibration(continuous_setup):
    """Training replay: mean percentile 0.5 +- 0.05; conf non-increasing."""
    t0 = time.time()
    train, predictor, _ = continuous_setup
    seqs = [s for s in train.sequences if len(s) >= 2]
    emb = predictor.backbone_.transform(seqs)
    dmins = min_distances(emb, predictor.archetypes_.centroids_)
    percentiles = np.array([predictor.distribution_.percentile(d) for d in dmins])
    assert abs(percentiles.mean() - 0.5) < 0.05

    probes = np.linspace(0.0, float(dmins.max()) * 2.0, 500)
    confs = [1.0 - predictor.distribution_.percentile(d) for d in probes]
    assert all(a >= b for a, b in zip(confs, confs[1:]))
    report(8, "confidence calibration",
           f"mean percentile {percentiles.mean():.3f}, monotone over 500 probes, "
           f"{time.time() - t0:.0f}s")


def test_criterion_9_kmeans_properties():
    """Inertia non-increasing; exhaustive optimum reached on <= 8 points."""
    t0 = time.time()
    rng = np.random.default_rng(9)
    for seed in range(5):
        X = rng.normal(size=(50, 6))
        _, _, history = kmeans_fit(X, 4, seed=seed)
        assert all(a >= b - 1e-9 for a, b in zip(history, history[1:]))

    X = np.vstack([rng.normal(0, 0.4, (4, 2)), rng.normal(6, 0.4, (4, 2))])
    best = np.inf
    for bits in range(1, 2**8 - 1):
        mask = np.array([(bits >> i) & 1 for i in range(8)], dtype=bool)
        inertia = sum(
            float(((part - part.mean(axis=0)) ** 2).sum()) for part in (X[mask], X[~mask])
        )
        best = min(best, inertia)
    _, _, history = kmeans_fit(X, 2, seed=0)
    assert history[-1] == pytest.approx(best, rel=1e-9)
    report(9, "k-means properties",
           f"monotone inertia, exhaustive optimum {best:.4f} reached, "
           f"{time.time() - t0:.0f}s")


@pytest.mark.skipif(
    "MOVIELENS_RATINGS" not in os.environ,
    reason="optional full-scale run; set MOVIELENS_RATINGS=/path/to/ratings.dat",
)
def test_criterion_10_movielens_full_run():
    """Optional: frozen canonical config on MovieLens 1M, >= 5 seeds,
    HR@10 improvement > +15%. Runtime is hours; never gates CI."""
    path = Path(os.environ["MOVIELENS_RATINGS"])
    events = []
    with path.open(encoding="latin-1") as fh:
        for line in fh:
            user, item, _, ts = line.strip().split("::")
            events.append((user, item, float(ts)))
    from seqgate.data import dataset_from_events

    ds = dataset_from_events(events)
    assert ds.n_items == 3706
    train, _, test = temporal_split(ds, SplitSpec(0.8, 0.1, 0.1))
    params = dict(
        embed_dim=32, hidden_dim=64, epochs=5, batch_size=256,
        learning_rate=0.001, optimizer="adam", n_archetypes=5,
        theta=0.4, hybrid_weight=0.5,
    )
    result = multi_seed_run(train, test, params, seeds=range(5))
    imp_mean, _ = result.improvement["hr@10"]
    assert imp_mean > 15.0
    report(10, "full-scale run", f"HR@10 improvement {imp_mean:+.1f}% over 5 seeds")
