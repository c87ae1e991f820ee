"""Shared fixtures: small trained predictors kept session-scoped because
training is the expensive step. Treat them as read-only."""

import pytest

from seqgate.hybrid import GatedHybridPredictor
from seqgate.synth import SynthSpec, gen_dataset

SMALL_DISCRETE = SynthSpec(n_items=30, n_archetypes=3, n_sequences=300, len_range=(12, 20), seed=7)
SMALL_CONTINUOUS = SynthSpec(
    mode="continuous", n_archetypes=3, n_sequences=300, len_range=(12, 20), seed=7
)


@pytest.fixture(scope="session")
def small_discrete_data():
    train, labels = gen_dataset(SMALL_DISCRETE)
    test, _ = gen_dataset(SynthSpec(**{**SMALL_DISCRETE.__dict__, "sample_seed": 99}))
    return train, test, labels


@pytest.fixture(scope="session")
def small_discrete_predictor(small_discrete_data):
    train, _, _ = small_discrete_data
    return GatedHybridPredictor(
        embed_dim=8,
        hidden_dim=12,
        epochs=4,
        batch_size=64,
        learning_rate=0.5,
        n_archetypes=3,
        seed=0,
    ).fit(train)


@pytest.fixture(scope="session")
def small_continuous_data():
    train, labels = gen_dataset(SMALL_CONTINUOUS)
    test, _ = gen_dataset(SynthSpec(**{**SMALL_CONTINUOUS.__dict__, "sample_seed": 99}))
    return train, test, labels


@pytest.fixture(scope="session")
def small_continuous_predictor(small_continuous_data):
    train, _, _ = small_continuous_data
    return GatedHybridPredictor(
        embed_dim=8,
        hidden_dim=12,
        epochs=6,
        batch_size=64,
        learning_rate=0.01,
        optimizer="adam",
        n_archetypes=3,
        seed=0,
    ).fit(train)
