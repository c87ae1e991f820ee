"""Sequence containers, vocabulary handling, ingestion, and splitting.

Datasets come in two modes: "discrete" (item-index sequences over a fixed
catalog) and "continuous" (real-valued windows). Both are immutable after
construction and safe to share across workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import DataError

DISCRETE = "discrete"
CONTINUOUS = "continuous"


@dataclass(frozen=True)
class ItemVocab:
    """Dense item vocabulary: raw id <-> index in [0, size)."""

    forward: dict
    reverse: tuple

    @property
    def size(self) -> int:
        return len(self.reverse)

    def index(self, raw) -> int:
        return self.forward[raw]

    def raw(self, idx: int):
        return self.reverse[idx]

    @classmethod
    def identity(cls, n: int) -> "ItemVocab":
        """Vocabulary where raw ids are already dense integers 0..n-1."""
        return cls({i: i for i in range(n)}, tuple(range(n)))


def build_vocab(raw_events) -> ItemVocab:
    """Build a dense vocabulary over (user, item, timestamp) events.

    Indices are assigned in first-occurrence order, so the mapping is
    deterministic for a fixed event list.
    """
    if not raw_events:
        raise DataError("empty dataset")
    forward: dict = {}
    reverse: list = []
    for _, item, _ in raw_events:
        if item not in forward:
            forward[item] = len(reverse)
            reverse.append(item)
    return ItemVocab(forward, tuple(reverse))


@dataclass(frozen=True)
class Sequence:
    """One ordered behavior window. Exactly one of items/values is set."""

    owner: object
    items: np.ndarray | None = None
    values: np.ndarray | None = None
    timestamps: np.ndarray | None = None

    def __post_init__(self):
        if (self.items is None) == (self.values is None):
            raise DataError("sequence must have exactly one of items/values")
        if self.items is not None:
            object.__setattr__(self, "items", np.asarray(self.items, dtype=np.int64))
        else:
            object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))
        if self.timestamps is not None:
            ts = np.asarray(self.timestamps, dtype=np.float64)
            if ts.shape[0] != len(self):
                raise DataError("timestamps length does not match events")
            if np.any(np.diff(ts) < 0):
                raise DataError("timestamps must be non-decreasing")
            object.__setattr__(self, "timestamps", ts)

    @property
    def mode(self) -> str:
        return DISCRETE if self.items is not None else CONTINUOUS

    def __len__(self) -> int:
        arr = self.items if self.items is not None else self.values
        return int(arr.shape[0])

    def head(self, n: int) -> "Sequence":
        """First n events as a new sequence (used for leave-last-out inputs)."""
        ts = self.timestamps[:n] if self.timestamps is not None else None
        if self.items is not None:
            return Sequence(self.owner, items=self.items[:n], timestamps=ts)
        return Sequence(self.owner, values=self.values[:n], timestamps=ts)


@dataclass(frozen=True)
class SequenceDataset:
    """Collection of sequences with a uniform mode.

    norm_stats holds the training-portion (mean, std) used for z-scoring
    continuous data; it is carried along so test data reuses the same
    statistics instead of leaking its own.
    """

    mode: str
    sequences: tuple
    vocab: ItemVocab | None = None
    norm_stats: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "sequences", tuple(self.sequences))
        if self.mode not in (DISCRETE, CONTINUOUS):
            raise DataError(f"unknown mode '{self.mode}'")
        if self.mode == DISCRETE and self.vocab is None:
            raise DataError("discrete dataset requires a vocabulary")
        for s in self.sequences:
            if s.mode != self.mode:
                raise DataError("mixed sequence modes in dataset")
            if self.mode == DISCRETE and len(s) and (
                s.items.min() < 0 or s.items.max() >= self.vocab.size
            ):
                raise DataError("item index outside vocabulary")

    @property
    def n_items(self) -> int:
        return self.vocab.size if self.vocab is not None else 0

    def __len__(self) -> int:
        return len(self.sequences)


@dataclass(frozen=True)
class SplitSpec:
    """Fractional temporal split. Fractions must sum to 1 within 1e-9."""

    train_frac: float = 0.8
    val_frac: float = 0.1
    test_frac: float = 0.1

    def __post_init__(self):
        fracs = (self.train_frac, self.val_frac, self.test_frac)
        if any(f < 0 for f in fracs):
            raise DataError("split fractions must be nonnegative")
        if abs(sum(fracs) - 1.0) > 1e-9:
            raise DataError(f"split fractions sum to {sum(fracs)}, expected 1")


def prefix_split_counts(n: int, spec: SplitSpec) -> tuple:
    """Event counts (train, val, test) for a sequence of length n.

    Rounding rule: floor for train, round-half-down for val, remainder to
    test. This keeps test non-empty whenever test_frac > 0 and n >= 3.
    """
    n_train = int(math.floor(n * spec.train_frac + 1e-9))
    n_val = int(math.ceil(n * spec.val_frac - 0.5 - 1e-9))
    n_val = max(0, min(n_val, n - n_train))
    return n_train, n_val, n - n_train - n_val


def _subset(ds: SequenceDataset, sequences) -> SequenceDataset:
    return replace(ds, sequences=tuple(sequences))


def temporal_split(ds: SequenceDataset, spec: SplitSpec):
    """Per-sequence chronological prefix split into (train, val, test).

    Each sequence's earliest events go to train, the next slice to val and
    the remainder to test. Partition slices shorter than 2 events are
    dropped from that partition (they cannot form an input+target pair).
    """
    parts = ([], [], [])
    for s in ds.sequences:
        n_train, n_val, _ = prefix_split_counts(len(s), spec)
        bounds = (0, n_train, n_train + n_val, len(s))
        for p in range(3):
            lo, hi = bounds[p], bounds[p + 1]
            if hi - lo >= 2:
                ts = s.timestamps[lo:hi] if s.timestamps is not None else None
                if s.items is not None:
                    parts[p].append(Sequence(s.owner, items=s.items[lo:hi], timestamps=ts))
                else:
                    parts[p].append(Sequence(s.owner, values=s.values[lo:hi], timestamps=ts))
    if not parts[0]:
        raise DataError("temporal split produced an empty train partition")
    return tuple(_subset(ds, p) for p in parts)


def kfold_split(ds: SequenceDataset, k: int, fold: int, seed: int):
    """Seeded k-fold partition over whole sequences -> (train, test)."""
    n = len(ds.sequences)
    if k < 2:
        raise DataError("k-fold requires k >= 2")
    if k > n:
        raise DataError(f"k={k} exceeds number of sequences ({n})")
    if not 0 <= fold < k:
        raise DataError(f"fold index {fold} outside [0, {k})")
    perm = np.random.default_rng(seed).permutation(n)
    groups = np.array_split(perm, k)
    test_idx = set(groups[fold].tolist())
    train = [ds.sequences[i] for i in range(n) if i not in test_idx]
    test = [ds.sequences[i] for i in sorted(test_idx)]
    return _subset(ds, train), _subset(ds, test)


def window_continuous(
    series,
    window: int,
    normalize: bool = True,
    difference: bool = False,
    stats: tuple | None = None,
) -> SequenceDataset:
    """Cut a real-valued series into rolling windows of a fixed length.

    If difference is set, consecutive differences are taken first. If
    normalize is set, values are z-scored; the (mean, std) come from the
    series itself when stats is None (the training pass) and are stored on
    the returned dataset, otherwise the provided training stats are reused.
    """
    x = np.asarray(series, dtype=np.float64)
    if x.ndim != 1:
        raise DataError("series must be 1-d")
    if window < 2:
        raise DataError("window must be >= 2")
    if difference:
        x = np.diff(x)
    if x.shape[0] <= window:
        raise DataError(f"series too short ({x.shape[0]} points) for window {window}")
    norm_stats = None
    if normalize:
        if stats is None:
            mean, std = float(x.mean()), float(x.std())
            if std < 1e-12:
                raise DataError("degenerate series: zero variance under normalization")
        else:
            mean, std = stats
        x = (x - mean) / std
        norm_stats = (mean, std)
    view = np.lib.stride_tricks.sliding_window_view(x, window)
    seqs = [Sequence(owner=i, values=view[i].copy()) for i in range(view.shape[0])]
    return SequenceDataset(CONTINUOUS, seqs, norm_stats=norm_stats)


def _looks_numeric(token: str) -> bool:
    try:
        float(token)
        return True
    except ValueError:
        return False


def _split_line(line: str):
    fields = line.rstrip("\n").split("\t")
    if len(fields) == 1:
        fields = line.split()
    return fields


def load_events(path) -> list:
    """Read `user<TAB>item<TAB>timestamp` lines; header auto-detected."""
    path = Path(path)
    events = []
    with path.open() as fh:
        for lineno, line in enumerate(fh):
            if not line.strip():
                continue
            fields = _split_line(line)
            if lineno == 0 and fields and not _looks_numeric(fields[0]):
                continue  # header
            if len(fields) < 3:
                raise DataError(f"{path}:{lineno + 1}: expected user, item, timestamp")
            events.append((fields[0], fields[1], float(fields[2])))
    if not events:
        raise DataError("empty dataset")
    return events


def load_series(path) -> np.ndarray:
    """Read one real value per line; header auto-detected."""
    path = Path(path)
    values = []
    with path.open() as fh:
        for lineno, line in enumerate(fh):
            token = line.strip()
            if not token:
                continue
            if lineno == 0 and not _looks_numeric(token):
                continue  # header
            values.append(float(token))
    if not values:
        raise DataError("empty dataset")
    return np.asarray(values, dtype=np.float64)


def dataset_from_events(events) -> SequenceDataset:
    """Group events into per-user sequences ordered by timestamp.

    Users appear in first-occurrence order; within a user the sort is
    stable, so equal timestamps keep file order.
    """
    vocab = build_vocab(events)
    by_user: dict = {}
    order = []
    for user, item, ts in events:
        if user not in by_user:
            by_user[user] = []
            order.append(user)
        by_user[user].append((ts, vocab.index(item)))
    seqs = []
    for user in order:
        rows = by_user[user]
        rows.sort(key=lambda r: r[0])  # stable
        items = np.array([r[1] for r in rows], dtype=np.int64)
        ts = np.array([r[0] for r in rows], dtype=np.float64)
        seqs.append(Sequence(owner=user, items=items, timestamps=ts))
    return SequenceDataset(DISCRETE, seqs, vocab=vocab)
