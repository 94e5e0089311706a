"""Selection + combination step of each technique for a single query.

Every function receives the DSEL cache, the query's region of competence and
the query's output profile under the pool, and returns a `Decision`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..pool import DselCache, VoteResult, majority_vote
from ..region import ClusterModel, OutputProfile, RegionOfCompetence
from . import competence as comp


class DsError(ValueError):
    pass


@dataclass(frozen=True)
class DsConfig:
    K: int = 7
    gap: float = 0.1
    zeta: float = 0.7
    pct_accuracy: float = 0.5
    pct_diversity: float = 0.3
    N: int | None = None
    J: int | None = None
    n_clusters: int = 5
    hc: float = 0.7
    Kp: int = 5
    meta_learner: str = "GNB"
    meta_validation: float = 0.25
    meta_options: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.K < 1 or self.Kp < 1 or self.n_clusters < 1:
            raise DsError("K, Kp and n_clusters must be positive")
        if not 0.0 < self.zeta <= 1.0:
            raise DsError(f"zeta must be in (0, 1], got {self.zeta}")
        if not 0.0 <= self.hc <= 1.0:
            raise DsError(f"hc must be in [0, 1], got {self.hc}")

    def n_j(self, M: int) -> tuple[int, int]:
        """Accuracy / diversity cut sizes for a pool of ``M`` members."""
        N = self.N if self.N is not None else math.ceil(self.pct_accuracy * M)
        J = self.J if self.J is not None else math.ceil(self.pct_diversity * M)
        if not 1 <= J <= N <= M:
            raise DsError(f"need 1 <= J <= N <= M, got J={J}, N={N}, M={M}")
        return N, J

    @property
    def meta_feature_length(self) -> int:
        return 2 * self.K + self.Kp + 2


@dataclass(frozen=True)
class Decision:
    label: int
    proba: np.ndarray
    selected: tuple[int, ...]
    competence: np.ndarray | None = None

    @classmethod
    def from_vote(cls, vote: VoteResult, competence=None) -> "Decision":
        return cls(vote.label, vote.proba, vote.selected, competence)


def pool_vote(query: OutputProfile, competence=None) -> Decision:
    return Decision.from_vote(majority_vote(query.hard), competence)


def members_vote(query: OutputProfile, members, weights=None, competence=None) -> Decision:
    members = np.asarray(members, dtype=np.int64)
    w = None if weights is None else np.asarray(weights, dtype=float)[members]
    vote = majority_vote(query.hard[members], w, selected=members)
    return Decision.from_vote(vote, competence)


def _dcs(query, competence, gap):
    best = comp.select_single_best(competence, gap)
    if best is None:
        return pool_vote(query, competence)
    return members_vote(query, [best], competence=competence)


def rank_select(cache, region, query, config: DsConfig) -> Decision:
    return _dcs(query, comp.competence_rank(cache, region), None)


def ola_select(cache, region, query, config: DsConfig) -> Decision:
    return _dcs(query, comp.competence_ola(cache, region), None)


def lca_select(cache, region, query, config: DsConfig) -> Decision:
    return _dcs(query, comp.competence_lca(cache, region, query.hard), None)


def mla_select(cache, region, query, config: DsConfig) -> Decision:
    return _dcs(query, comp.competence_mla(cache, region), None)


def apriori_select(cache, region, query, config: DsConfig) -> Decision:
    return _dcs(query, comp.competence_apriori(cache, region), config.gap)


def aposteriori_select(cache, region, query, config: DsConfig) -> Decision:
    return _dcs(query, comp.competence_aposteriori(cache, region, query.hard), config.gap)


def mcb_select(cache: DselCache, region: RegionOfCompetence, query: OutputProfile,
               config: DsConfig) -> Decision:
    """Keep region samples whose label profile agrees with the query's on more
    than ``zeta`` of the members, then apply OLA with the gap rule."""
    similarity = (cache.hard[:, region.indices] == query.hard[:, None]).mean(axis=0)
    keep = similarity > config.zeta
    filtered = region if not keep.any() else RegionOfCompetence(
        region.indices[keep], region.distances[keep])
    return _dcs(query, comp.competence_ola(cache, filtered), config.gap)


def knora_eliminate(cache: DselCache, region: RegionOfCompetence, query: OutputProfile,
                    config: DsConfig | None = None) -> Decision:
    """Members correct on the whole region, shrinking it from the far end until one exists."""
    correct = cache.correct[:, region.indices]
    for k in range(correct.shape[1], 0, -1):
        oracles = np.flatnonzero(correct[:, :k].all(axis=1))
        if oracles.size:
            return members_vote(query, oracles, competence=correct[:, :k].sum(axis=1) / k)
    return pool_vote(query, np.zeros(cache.n_members))


def _union_vote(correct: np.ndarray, query: OutputProfile) -> Decision:
    votes = correct.sum(axis=1).astype(float)
    chosen = np.flatnonzero(votes > 0)
    if chosen.size == 0:
        return pool_vote(query, votes)
    return members_vote(query, chosen, weights=votes, competence=votes)


def knora_union(cache: DselCache, region: RegionOfCompetence, query: OutputProfile,
                config: DsConfig | None = None) -> Decision:
    """Each member votes once per region sample it classifies correctly."""
    return _union_vote(cache.correct[:, region.indices], query)


def desp_select(cache: DselCache, region: RegionOfCompetence, query: OutputProfile,
                config: DsConfig | None = None, n_classes: int = 2) -> Decision:
    """Members whose local accuracy beats a uniform random guesser."""
    delta = comp.competence_ola(cache, region) - 1.0 / n_classes
    chosen = np.flatnonzero(delta > 0)
    if chosen.size == 0:
        return pool_vote(query, delta)
    return members_vote(query, chosen, competence=delta)


def accuracy_diversity_ranking(correct: np.ndarray, N: int, J: int) -> tuple[np.ndarray, np.ndarray]:
    """Top-``N`` by accuracy, then the ``J`` of those with the lowest mean double fault.

    ``correct`` is ``(M, n)``. Ties in either ranking go to the lower member
    index. Returns ``(selected members ascending, accuracy vector)``.
    """
    M = correct.shape[0]
    acc = correct.mean(axis=1)
    top = np.lexsort((np.arange(M), -acc))[:N]
    wrong = ~correct[top].astype(bool)
    # integer double-fault counts keep ties exact; the common 1/(n*(N-1))
    # factor of the mean does not change the order
    both = (wrong[:, None, :] & wrong[None, :, :]).sum(axis=2)
    np.fill_diagonal(both, 0)
    chosen = top[np.lexsort((top, both.sum(axis=1)))[:J]]
    return np.sort(chosen), acc


def desknn_select(cache: DselCache, region: RegionOfCompetence, query: OutputProfile,
                  config: DsConfig) -> Decision:
    N, J = config.n_j(cache.n_members)
    chosen, acc = accuracy_diversity_ranking(cache.correct[:, region.indices], N, J)
    return members_vote(query, chosen, competence=acc)


@dataclass(frozen=True)
class ClusterSelection:
    """k-means partition of the DSEL with the member subset chosen for each cell."""

    clusters: ClusterModel
    chosen: tuple[np.ndarray, ...]
    accuracy: tuple[np.ndarray, ...]


def fit_descluster(cache: DselCache, clusters: ClusterModel, config: DsConfig) -> ClusterSelection:
    N, J = config.n_j(cache.n_members)
    global_sel = accuracy_diversity_ranking(cache.correct, N, J)
    chosen, accuracy = [], []
    for c in range(clusters.k):
        rows = np.flatnonzero(clusters.labels == c)
        sel, acc = (accuracy_diversity_ranking(cache.correct[:, rows], N, J)
                    if rows.size else global_sel)
        chosen.append(sel)
        accuracy.append(acc)
    return ClusterSelection(clusters, tuple(chosen), tuple(accuracy))


def descluster_select(selection: ClusterSelection, cluster: int, query: OutputProfile) -> Decision:
    return members_vote(query, selection.chosen[cluster],
                        competence=selection.accuracy[cluster])


def knop_select(cache: DselCache, profile_region: RegionOfCompetence,
                query: OutputProfile, config: DsConfig | None = None) -> Decision:
    """KNORA-U weighting over the decision-space neighbourhood."""
    return _union_vote(cache.correct[:, profile_region.indices], query)
