"""Per-member competence estimates over a region of competence.

Each function returns a length-``M`` vector for one query. ``region`` lists
DSEL indices nearest first; weights are the region's inverse distances.
"""
from __future__ import annotations

import numpy as np

from ..pool import DselCache
from ..region import RegionOfCompetence


def _true_class_proba(cache: DselCache, idx: np.ndarray) -> np.ndarray:
    """``P(true label of x_k | x_k, c_i)`` as an ``(M, K)`` matrix."""
    return cache.soft[:, idx, :][:, np.arange(idx.size), cache.labels[idx]]


def competence_rank(cache: DselCache, region: RegionOfCompetence) -> np.ndarray:
    """Length of the run of correct answers starting at the nearest neighbour."""
    wrong = ~cache.correct[:, region.indices]
    K = wrong.shape[1]
    return np.where(wrong.any(axis=1), wrong.argmax(axis=1), K).astype(float)


def competence_ola(cache: DselCache, region: RegionOfCompetence) -> np.ndarray:
    return cache.correct[:, region.indices].mean(axis=1)


def competence_lca(cache: DselCache, region: RegionOfCompetence, predicted) -> np.ndarray:
    """Share of region samples labelled ``predicted[i]`` by member i that truly are.

    ``predicted`` is each member's label for the query (scalar or length M).
    A member that never outputs its class inside the region scores 0.
    """
    idx = region.indices
    w = np.broadcast_to(np.asarray(predicted), (cache.n_members,))[:, None]
    says = cache.hard[:, idx] == w
    hits = (says & (cache.labels[idx][None, :] == w)).sum(axis=1)
    total = says.sum(axis=1)
    return np.divide(hits, total, out=np.zeros(cache.n_members), where=total > 0)


def competence_apriori(cache: DselCache, region: RegionOfCompetence) -> np.ndarray:
    """Distance-weighted mean posterior of the true class."""
    W = region.weights
    return (_true_class_proba(cache, region.indices) * W).sum(axis=1) / W.sum()


def competence_aposteriori(cache: DselCache, region: RegionOfCompetence,
                           predicted) -> np.ndarray:
    """Weighted share of the posterior mass for ``predicted[i]`` falling on samples of that class."""
    idx = region.indices
    W = region.weights
    w = np.broadcast_to(np.asarray(predicted, dtype=np.int64), (cache.n_members,))
    p = cache.soft[:, idx, :][np.arange(cache.n_members)[:, None],
                              np.arange(idx.size)[None, :], w[:, None]]
    mass = p * W
    num = (mass * (cache.labels[idx][None, :] == w[:, None])).sum(axis=1)
    den = mass.sum(axis=1)
    return np.divide(num, den, out=np.zeros(cache.n_members), where=den > 0)


def competence_mla(cache: DselCache, region: RegionOfCompetence) -> np.ndarray:
    """Unnormalised distance-weighted sum of true-class posteriors."""
    return (_true_class_proba(cache, region.indices) * region.weights).sum(axis=1)


def select_single_best(competence, gap: float | None) -> int | None:
    """Index of the most competent member, or ``None`` to fall back to the whole pool.

    With ``gap`` set, the winner must lead the runner-up by more than ``gap``.
    Ties go to the lowest index.
    """
    d = np.asarray(competence, dtype=float)
    best = int(np.argmax(d))
    if gap is None or d.size == 1:
        return best
    runner_up = np.max(np.delete(d, best))
    return best if d[best] - runner_up > gap else None
