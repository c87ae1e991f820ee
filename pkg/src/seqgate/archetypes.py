"""Behavioral archetypes: k-means over behavior embeddings plus
per-archetype predictive structure (transition counts or pattern means).

Transition probabilities are Laplace-smoothed on the fly from sparse raw
counts, so memory stays proportional to observed transitions rather than
K * V * V.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .data import CONTINUOUS, DISCRETE, SequenceDataset
from .errors import DataError
from .validation import check_dataset, check_embeddings, check_vector


def _kmeans_pp_init(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: spread initial centroids by squared distance."""
    n = X.shape[0]
    centroids = np.empty((k, X.shape[1]))
    centroids[0] = X[rng.integers(n)]
    d2 = ((X - centroids[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            idx = rng.integers(n)  # all points identical to chosen centroids
        else:
            idx = rng.choice(n, p=d2 / total)
        centroids[j] = X[idx]
        d2 = np.minimum(d2, ((X - centroids[j]) ** 2).sum(axis=1))
    return centroids


def kmeans_fit(
    X: np.ndarray,
    k: int,
    seed: int = 0,
    max_iters: int = 100,
    tol: float = 1e-6,
):
    """Lloyd iterations with k-means++ seeding.

    Returns (centroids, labels, inertia_history). Ties in the assignment
    step go to the lowest centroid index; an empty cluster is re-seeded at
    the point farthest from its nearest centroid. The inertia history is
    recorded after each assignment step and is non-increasing.
    """
    X = check_embeddings(X)
    n = X.shape[0]
    if k < 1:
        raise DataError("k must be >= 1")
    if n < k:
        raise DataError(f"cannot fit {k} archetypes to {n} embeddings")
    rng = np.random.default_rng(seed)
    centroids = _kmeans_pp_init(X, k, rng)
    history = []
    labels = np.zeros(n, dtype=np.int64)
    for _ in range(max_iters):
        d2 = ((X[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        labels = d2.argmin(axis=1)  # argmin -> lowest index on ties
        dmin = d2[np.arange(n), labels]
        history.append(float(dmin.sum()))

        new_centroids = centroids.copy()
        counts = np.bincount(labels, minlength=k)
        for j in range(k):
            if counts[j] > 0:
                new_centroids[j] = X[labels == j].mean(axis=0)
        if np.any(counts == 0):
            spare = dmin.copy()
            for j in np.flatnonzero(counts == 0):
                far = int(spare.argmax())
                new_centroids[j] = X[far]
                spare[far] = 0.0
        shift = float(np.linalg.norm(new_centroids - centroids))
        centroids = new_centroids
        if shift < tol:
            break
    # final assignment so labels are a fixed point of the returned centroids
    d2 = ((X[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    labels = d2.argmin(axis=1)
    return centroids, labels, history


def nearest_centroid(e: np.ndarray, centroids: np.ndarray):
    """(index, distance) of the closest centroid; ties go to the lowest index."""
    d = np.linalg.norm(centroids - e, axis=1)
    k = int(d.argmin())
    return k, float(d[k])


def soft_assign_distances(distances: np.ndarray) -> np.ndarray:
    """softmax(-d) over centroid distances, numerically stabilised."""
    z = -distances
    z = z - z.max()
    ez = np.exp(z)
    return ez / ez.sum()


class ArchetypeModel(BaseEstimator):
    """K archetypes discovered by k-means, each with its own predictor.

    Discrete mode keeps sparse item-to-item transition counts per archetype
    and exposes Laplace-smoothed rows; continuous mode keeps one pattern
    mean per archetype. Counting uses hard (nearest-centroid) assignment;
    scoring mixes archetypes by soft assignment.
    """

    def __init__(
        self,
        n_archetypes: int = 5,
        alpha: float = 1.0,
        seed: int = 0,
        max_iters: int = 100,
        tol: float = 1e-6,
    ):
        self.n_archetypes = n_archetypes
        self.alpha = alpha
        self.seed = seed
        self.max_iters = max_iters
        self.tol = tol

    def _require_fitted(self):
        if not hasattr(self, "centroids_"):
            raise NotFittedError("archetype model is not fitted")

    def fit(self, dataset: SequenceDataset, embeddings: np.ndarray):
        """Cluster the per-sequence embeddings and fit per-archetype structure.

        `embeddings` must align row-for-row with `dataset.sequences`.
        """
        if self.alpha <= 0:
            raise DataError("smoothing alpha must be > 0")
        check_dataset(dataset)
        X = check_embeddings(embeddings)
        if X.shape[0] != len(dataset.sequences):
            raise DataError("one embedding per sequence required")
        self.mode_ = dataset.mode
        self.centroids_, labels, self.inertia_history_ = kmeans_fit(
            X, self.n_archetypes, seed=self.seed, max_iters=self.max_iters, tol=self.tol
        )
        self.labels_ = labels
        if self.mode_ == DISCRETE:
            self.n_items_ = dataset.n_items
            self._fit_transitions(dataset, labels)
        else:
            self._fit_pattern_means(dataset, labels)
        return self

    def _fit_transitions(self, dataset: SequenceDataset, labels: np.ndarray):
        k = self.n_archetypes
        counts = [dict() for _ in range(k)]
        totals = [dict() for _ in range(k)]
        for seq, lab in zip(dataset.sequences, labels):
            items = seq.items
            if items.shape[0] < 2:
                continue
            rows = counts[lab]
            tots = totals[lab]
            for a, b in zip(items[:-1].tolist(), items[1:].tolist()):
                row = rows.setdefault(a, {})
                row[b] = row.get(b, 0.0) + 1.0
                tots[a] = tots.get(a, 0.0) + 1.0
        self.transition_counts_ = counts
        self.row_totals_ = totals

    def _fit_pattern_means(self, dataset: SequenceDataset, labels: np.ndarray):
        finals = np.array([s.values[-1] for s in dataset.sequences])
        self.global_mean_ = float(finals.mean())
        means = np.full(self.n_archetypes, self.global_mean_)
        for j in range(self.n_archetypes):
            mask = labels == j
            if mask.any():
                means[j] = float(finals[mask].mean())
        self.pattern_means_ = means

    # ------------------------------------------------------------------
    # assignment

    def hard_assign(self, e: np.ndarray):
        self._require_fitted()
        return nearest_centroid(check_vector(e, "embedding"), self.centroids_)

    def soft_assign(self, e: np.ndarray) -> np.ndarray:
        """p(k | sequence) proportional to exp(-||e - c_k||)."""
        self._require_fitted()
        d = np.linalg.norm(self.centroids_ - check_vector(e, "embedding"), axis=1)
        return soft_assign_distances(d)

    # ------------------------------------------------------------------
    # scoring

    def transition_row(self, k: int, item: int) -> np.ndarray:
        """Laplace-smoothed next-item distribution for archetype k and item."""
        self._require_fitted()
        if self.mode_ != DISCRETE:
            raise DataError("transition rows exist only in discrete mode")
        total = self.row_totals_[k].get(item, 0.0)
        denom = total + self.alpha * self.n_items_
        row = np.full(self.n_items_, self.alpha / denom)
        for j, c in self.transition_counts_[k].get(item, {}).items():
            row[j] = (c + self.alpha) / denom
        return row

    def score_items(self, assignment: np.ndarray, last_item: int) -> np.ndarray:
        """Mixture of per-archetype transition rows for the current item."""
        self._require_fitted()
        if not 0 <= last_item < self.n_items_:
            raise DataError("out-of-vocab item index")
        out = np.zeros(self.n_items_)
        for k, w in enumerate(assignment):
            out += w * self.transition_row(k, last_item)
        return out

    def predict_value(self, assignment: np.ndarray) -> float:
        """Assignment-weighted mixture of pattern means (continuous mode)."""
        self._require_fitted()
        if self.mode_ != CONTINUOUS:
            raise DataError("pattern means exist only in continuous mode")
        return float(np.dot(assignment, self.pattern_means_))
