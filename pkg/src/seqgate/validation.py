"""Input validation helpers used by the estimators."""

from __future__ import annotations

import numpy as np

from .errors import DataError


def check_embeddings(X, dim: int | None = None) -> np.ndarray:
    """Coerce to a finite 2-d float64 matrix, optionally checking the width."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise DataError(f"expected a 2-d embedding matrix, got ndim={X.ndim}")
    if X.shape[0] == 0:
        raise DataError("empty embedding matrix")
    if not np.all(np.isfinite(X)):
        raise DataError("embeddings contain NaN or Inf")
    if dim is not None and X.shape[1] != dim:
        raise DataError(f"embedding dimension {X.shape[1]} != expected {dim}")
    return X


def check_vector(x, name: str = "vector") -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DataError(f"{name} must be 1-d, got ndim={x.ndim}")
    if not np.all(np.isfinite(x)):
        raise DataError(f"{name} contains NaN or Inf")
    return x


def check_dataset(ds, mode: str | None = None, min_sequences: int = 1):
    """Validate a SequenceDataset against an expected mode and size."""
    if mode is not None and ds.mode != mode:
        raise DataError(f"dataset mode '{ds.mode}' does not match expected '{mode}'")
    if len(ds.sequences) < min_sequences:
        raise DataError(f"dataset has {len(ds.sequences)} sequences, need >= {min_sequences}")
    return ds


def check_sequence(seq, mode: str, min_len: int = 1, n_items: int | None = None):
    """Validate a single sequence for scoring or embedding extraction."""
    if seq.mode != mode:
        raise DataError(f"sequence mode '{seq.mode}' does not match model mode '{mode}'")
    if len(seq) < min_len:
        raise DataError(f"sequence has {len(seq)} events, need >= {min_len}")
    if mode == "discrete" and n_items is not None:
        items = seq.items
        if items.min() < 0 or items.max() >= n_items:
            raise DataError("out-of-vocab item index in sequence")
    return seq
