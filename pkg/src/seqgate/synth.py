"""Synthetic archetype-structured corpora with controllable distribution
shift, for desk-scale validation of activation and refusal behavior.

Each sequence is generated from one ground-truth archetype: a Markov walk
over that archetype's transition matrix (discrete) or an AR(1)-style walk
around its level (continuous). The generating structure (matrices, levels,
shift permutations) derives from `seed` alone, while per-sequence sampling
streams derive from `sample_seed` (falling back to `seed`), so fresh
corpora from the same process just use a different sample_seed.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace

import numpy as np

from .data import CONTINUOUS, DISCRETE, ItemVocab, Sequence, SequenceDataset
from .errors import ConfigError, DataError


@dataclass(frozen=True)
class SynthSpec:
    mode: str = DISCRETE
    n_items: int = 50
    n_archetypes: int = 3
    n_sequences: int = 2000
    len_range: tuple = (12, 30)
    concentration: float = 0.85  # probability mass on the preferred successor
    transitions: object = None  # optional explicit (K, V, V) row-stochastic array
    levels: tuple | None = None  # continuous archetype levels
    ar_coef: float = 0.8
    noise: float = 0.25
    # Continuous level offset per unit of magnitude. Larger than the
    # default level span so a magnitude-2 shift clears every training
    # level instead of landing one archetype on another's old territory.
    level_shift: float = 5.0
    shift_magnitude: float = 0.0
    seed: int = 0
    sample_seed: int | None = None

    def __post_init__(self):
        if self.mode not in (DISCRETE, CONTINUOUS):
            raise ConfigError(f"unknown mode '{self.mode}'")
        if self.n_archetypes < 1 or self.n_sequences < 1:
            raise ConfigError("n_archetypes and n_sequences must be >= 1")
        if self.len_range[0] < 2 or self.len_range[0] > self.len_range[1]:
            raise ConfigError("len_range must satisfy 2 <= lo <= hi")
        if self.shift_magnitude < 0:
            raise ConfigError("shift_magnitude must be >= 0")
        if self.transitions is not None:
            t = np.asarray(self.transitions, dtype=np.float64)
            if t.shape != (self.n_archetypes, self.n_items, self.n_items):
                raise ConfigError("transitions must have shape (K, V, V)")
            if not np.allclose(t.sum(axis=2), 1.0, atol=1e-9):
                raise ConfigError("ground-truth transition rows must sum to 1")
            object.__setattr__(self, "transitions", t)


def default_transition_matrices(spec: SynthSpec) -> np.ndarray:
    """Per-archetype matrices: mass `concentration` on a permuted successor,
    the rest uniform. Distinct seeded permutations per archetype."""
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 0x5EED]))
    v, k, q = spec.n_items, spec.n_archetypes, spec.concentration
    mats = np.full((k, v, v), (1.0 - q) / v)
    for j in range(k):
        perm = rng.permutation(v)
        mats[j, np.arange(v), perm] += q
    return mats


def default_levels(spec: SynthSpec) -> np.ndarray:
    if spec.levels is not None:
        levels = np.asarray(spec.levels, dtype=np.float64)
        if levels.shape[0] != spec.n_archetypes:
            raise ConfigError("levels length must equal n_archetypes")
        return levels
    k = spec.n_archetypes
    return (np.arange(k) - (k - 1) / 2.0) * 3.0


def _shifted_matrices(spec: SynthSpec, base: np.ndarray) -> np.ndarray:
    """Mix each matrix toward its column-permuted copy plus uniform noise.

    The blend weight grows with shift magnitude and saturates at full
    scramble for magnitude >= 2, so learned transitions degrade smoothly.
    """
    if spec.shift_magnitude == 0:
        return base
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 0x0FF5E7]))
    v = spec.n_items
    w = min(1.0, spec.shift_magnitude / 2.0)
    out = np.empty_like(base)
    for j in range(base.shape[0]):
        sigma = rng.permutation(v)
        scrambled = 0.5 * base[j][:, sigma] + 0.5 / v
        out[j] = (1.0 - w) * base[j] + w * scrambled
    return out


def gen_dataset(spec: SynthSpec):
    """Generate (dataset, ground-truth archetype labels) from the spec."""
    sample_seed = spec.seed if spec.sample_seed is None else spec.sample_seed
    children = np.random.SeedSequence(sample_seed).spawn(spec.n_sequences)
    magnitude = spec.shift_magnitude
    labels = np.empty(spec.n_sequences, dtype=np.int64)
    lo, hi = spec.len_range

    if spec.mode == DISCRETE:
        base = (
            spec.transitions
            if spec.transitions is not None
            else default_transition_matrices(spec)
        )
        cdf = np.cumsum(_shifted_matrices(spec, base), axis=2)
        seqs = []
        for i, child in enumerate(children):
            rng = np.random.default_rng(child)
            k = int(rng.integers(spec.n_archetypes))
            length = int(rng.integers(lo, hi + 1))
            items = np.empty(length, dtype=np.int64)
            items[0] = rng.integers(spec.n_items)
            u = rng.random(length - 1)
            for t in range(1, length):
                items[t] = np.searchsorted(cdf[k, items[t - 1]], u[t - 1])
            labels[i] = k
            seqs.append(Sequence(owner=i, items=items))
        ds = SequenceDataset(DISCRETE, seqs, vocab=ItemVocab.identity(spec.n_items))
        return ds, labels

    levels = default_levels(spec) + magnitude * spec.level_shift
    noise = spec.noise * (1.0 + magnitude)
    seqs = []
    for i, child in enumerate(children):
        rng = np.random.default_rng(child)
        k = int(rng.integers(spec.n_archetypes))
        length = int(rng.integers(lo, hi + 1))
        eps = rng.standard_normal(length)
        values = np.empty(length)
        values[0] = levels[k] + noise * eps[0]
        for t in range(1, length):
            values[t] = levels[k] + spec.ar_coef * (values[t - 1] - levels[k]) + noise * eps[t]
        labels[i] = k
        seqs.append(Sequence(owner=i, values=values))
    return SequenceDataset(CONTINUOUS, seqs), labels


def gen_shifted(spec: SynthSpec, magnitude: float):
    """Corpus from the same generating structure, shifted by `magnitude`.

    Magnitude 0 with the same seed reproduces gen_dataset exactly.
    """
    if magnitude < 0:
        raise ConfigError("shift magnitude must be >= 0")
    return gen_dataset(replace(spec, shift_magnitude=magnitude))


def best_label_agreement(true_labels, pred_labels, k: int) -> float:
    """Max labeling accuracy over all k! relabelings of the predictions.

    Intended for small k (<= 5); used to check that clustering recovers
    the ground-truth archetype partition.
    """
    if k > 6:
        raise ConfigError("label agreement search is factorial in k; use k <= 6")
    true_labels = np.asarray(true_labels)
    pred_labels = np.asarray(pred_labels)
    if true_labels.shape != pred_labels.shape:
        raise DataError("label arrays must align")
    best = 0.0
    for perm in itertools.permutations(range(k)):
        mapped = np.asarray(perm)[pred_labels]
        best = max(best, float((mapped == true_labels).mean()))
    return best
