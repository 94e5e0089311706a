"""Regions of competence: feature-space k-NN, k-means cells, output-profile k-NN."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._distance import nearest, pairwise_euclidean
from .pool import DselCache, Pool

EPS = 1e-12


class RegionError(ValueError):
    pass


@dataclass(frozen=True)
class RegionOfCompetence:
    """DSEL indices nearest to a query, nearest first, with 1/d weights."""

    indices: np.ndarray
    distances: np.ndarray

    def __post_init__(self):
        if self.indices.size < 1:
            raise RegionError("a region of competence needs at least one sample")

    @property
    def weights(self) -> np.ndarray:
        return 1.0 / np.maximum(self.distances, EPS)

    def __len__(self) -> int:
        return self.indices.size

    def head(self, k: int) -> "RegionOfCompetence":
        return RegionOfCompetence(self.indices[:k], self.distances[:k])


def _check_k(K: int, n: int):
    if not 1 <= K <= n:
        raise RegionError(f"region size K={K} must be in [1, {n}]")


def knn_regions(dsel_X: np.ndarray, X: np.ndarray, K: int) -> tuple[np.ndarray, np.ndarray]:
    """Batch form of `knn_region`: ``(indices, distances)`` arrays of shape ``(n, K)``."""
    dsel_X = np.asarray(dsel_X, dtype=float)
    _check_k(K, dsel_X.shape[0])
    D = pairwise_euclidean(X, dsel_X)
    idx = nearest(D, K)
    return idx, np.take_along_axis(D, idx, axis=1)


def knn_region(dsel, x, K: int) -> RegionOfCompetence:
    """The ``K`` DSEL samples closest to ``x``; equal distances favour lower indices.

    ``dsel`` is a `Dataset`, a `DselCache` or a raw feature matrix.
    """
    idx, dist = knn_regions(getattr(dsel, "X", dsel), np.asarray(x, dtype=float)[None, :], K)
    return RegionOfCompetence(idx[0], dist[0])


@dataclass(frozen=True)
class ClusterModel:
    centroids: np.ndarray
    labels: np.ndarray
    inertia_history: tuple[float, ...]
    n_iter: int

    @property
    def k(self) -> int:
        return self.centroids.shape[0]


def _inertia(X, centroids, labels):
    return float(((X - centroids[labels]) ** 2).sum())


def _kmeans_pp(X, k, rng):
    n = X.shape[0]
    centroids = [X[rng.integers(n)]]
    d2 = ((X - centroids[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total == 0.0:
            i = rng.integers(n)
        else:
            i = rng.choice(n, p=d2 / total)
        centroids.append(X[i])
        d2 = np.minimum(d2, ((X - X[i]) ** 2).sum(axis=1))
    return np.array(centroids, dtype=float)


def fit_kmeans(dsel, k: int, seed: int, tol: float = 1e-6, max_iter: int = 300) -> ClusterModel:
    """Lloyd's algorithm from a seeded k-means++ start.

    Stops once no centroid moves more than ``tol`` or after ``max_iter``
    rounds. A cluster that empties is reseeded at the point farthest from its
    nearest centroid.
    """
    X = np.asarray(getattr(dsel, "X", dsel), dtype=float)
    n = X.shape[0]
    if not 1 <= k <= n:
        raise RegionError(f"k={k} clusters must be in [1, {n}]")
    rng = np.random.default_rng(seed)
    centroids = _kmeans_pp(X, k, rng)
    history = []
    labels = None
    it = 0
    for it in range(1, max_iter + 1):
        D = pairwise_euclidean(X, centroids)
        labels = np.argmin(D, axis=1)
        history.append(_inertia(X, centroids, labels))
        new = centroids.copy()
        counts = np.bincount(labels, minlength=k)
        for c in range(k):
            if counts[c]:
                new[c] = X[labels == c].mean(axis=0)
        for c in np.flatnonzero(counts == 0):
            near = np.min(pairwise_euclidean(X, new), axis=1)
            far = int(np.argmax(near))
            new[c] = X[far]
            labels[far] = c
        shift = float(np.max(np.linalg.norm(new - centroids, axis=1)))
        centroids = new
        if shift < tol:
            break
    labels = np.argmin(pairwise_euclidean(X, centroids), axis=1)
    history.append(_inertia(X, centroids, labels))
    return ClusterModel(centroids, labels, tuple(history), it)


def assign_cluster(model: ClusterModel, x) -> int:
    """Nearest centroid; ties go to the lower cluster index."""
    d = pairwise_euclidean(np.asarray(x, dtype=float)[None, :], model.centroids)[0]
    return int(np.argmin(d))


@dataclass(frozen=True)
class OutputProfile:
    hard: np.ndarray
    soft: np.ndarray

    @property
    def n_members(self) -> int:
        return self.hard.size

    @classmethod
    def from_proba(cls, proba: np.ndarray) -> "OutputProfile":
        """``proba`` is the ``(M, L)`` block of member posteriors for one sample."""
        proba = np.asarray(proba, dtype=float)
        return cls(np.argmax(proba, axis=1), proba.reshape(-1))


def output_profile(source, item) -> OutputProfile:
    """Profile of a feature vector under a `Pool`, or of DSEL sample ``item`` in a `DselCache`."""
    if isinstance(source, DselCache):
        return OutputProfile(source.hard[:, int(item)].copy(),
                             source.soft[:, int(item), :].reshape(-1))
    if isinstance(source, Pool):
        proba = source.member_proba(np.asarray(item, dtype=float)[None, :])[:, 0, :]
        return OutputProfile.from_proba(proba)
    raise TypeError(f"expected a Pool or DselCache, got {type(source).__name__}")


def profile_similarity(a: OutputProfile, b: OutputProfile) -> float:
    """Fraction of members whose labels agree between the two profiles."""
    if a.hard.shape != b.hard.shape:
        raise RegionError(f"profiles have {a.hard.size} and {b.hard.size} members")
    return float(np.mean(a.hard == b.hard))


def knop_regions(cache: DselCache, query_soft: np.ndarray, K: int):
    """Batch decision-space neighbourhoods for ``(n, M*L)`` soft query profiles."""
    _check_k(K, cache.n_samples)
    D = pairwise_euclidean(query_soft, cache.profiles)
    idx = nearest(D, K)
    return idx, np.take_along_axis(D, idx, axis=1)


def knop_region(cache: DselCache, query: OutputProfile, K: int) -> RegionOfCompetence:
    """The ``K`` DSEL samples whose soft output profiles are closest to ``query``."""
    idx, dist = knop_regions(cache, query.soft[None, :], K)
    return RegionOfCompetence(idx[0], dist[0])
