"""Dynamic classifier / ensemble selection techniques.

Typical use::

    state = fit_state(pool, dsel, DsConfig(), techniques=TECHNIQUES, seed=0)
    decision = classify("knorau", state, x)
    labels, proba = classify_batch("knorau", state, X_test)
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .._distance import pairwise_euclidean
from ..data import Dataset
from ..pool import DselCache, Pool, build_dsel_cache
from ..region import (OutputProfile, RegionOfCompetence, assign_cluster, fit_kmeans,
                      knn_regions, knop_regions)
from . import selection as sel
from .competence import (competence_aposteriori, competence_apriori, competence_lca,
                         competence_mla, competence_ola, competence_rank,
                         select_single_best)
from .metades import MetaDesModel, meta_features, metades_select, metades_train
from .selection import ClusterSelection, Decision, DsConfig, DsError

TECHNIQUES = ("rank", "ola", "lca", "apriori", "aposteriori", "mcb", "mla",
              "descluster", "desknn", "knorae", "knorau", "desp", "knop", "metades")

# techniques whose decision depends on a feature-space region
_REGION_RULES = {
    "rank": sel.rank_select,
    "ola": sel.ola_select,
    "lca": sel.lca_select,
    "apriori": sel.apriori_select,
    "aposteriori": sel.aposteriori_select,
    "mcb": sel.mcb_select,
    "mla": sel.mla_select,
    "desknn": sel.desknn_select,
    "knorae": sel.knora_eliminate,
    "knorau": sel.knora_union,
    "desp": sel.desp_select,
}


@dataclass(frozen=True)
class FittedState:
    """Everything a technique needs at query time; immutable once built."""

    pool: Pool
    cache: DselCache
    config: DsConfig
    clusters: ClusterSelection | None = None
    metades: MetaDesModel | None = None


def fit_state(pool: Pool, dsel: Dataset, config: DsConfig = DsConfig(),
              techniques: Iterable[str] = TECHNIQUES, seed: int = 0,
              meta_train: Dataset | None = None) -> FittedState:
    """Build the DSEL cache plus the fitted parts of DES-Clustering and META-DES.

    META-DES is meta-trained on ``meta_train`` when given, otherwise on the
    DSEL itself with each sample left out of its own neighbourhoods.
    """
    techniques = tuple(techniques)
    for t in techniques:
        _check_tag(t)
    cache = build_dsel_cache(pool, dsel)
    clusters = fit_clusters(cache, config, seed) if "descluster" in techniques else None
    metades = fit_metades(pool, cache, dsel, config, seed, meta_train) \
        if "metades" in techniques else None
    return FittedState(pool, cache, config, clusters, metades)


def fit_clusters(cache: DselCache, config: DsConfig, seed: int) -> ClusterSelection:
    km = fit_kmeans(cache.X, min(config.n_clusters, cache.n_samples), seed)
    return sel.fit_descluster(cache, km, config)


def fit_metades(pool: Pool, cache: DselCache, dsel: Dataset, config: DsConfig, seed: int,
                meta_train: Dataset | None = None) -> MetaDesModel:
    if meta_train is None:
        return metades_train(pool, cache, dsel.X, dsel.y, config, seed, exclude_self=True)
    return metades_train(pool, cache, meta_train.X, meta_train.y, config, seed)


def _check_tag(tag: str):
    if tag not in TECHNIQUES:
        raise DsError(f"unknown technique {tag!r}; expected one of {TECHNIQUES}")


def decide(tag: str, state: FittedState, query_proba: np.ndarray,
           region: RegionOfCompetence | None = None,
           profile_region: RegionOfCompetence | None = None,
           cluster: int | None = None) -> Decision:
    """Apply technique ``tag`` given the query's ``(M, L)`` member posteriors.

    ``region`` is the feature-space neighbourhood (used by every technique
    except knop and descluster), ``profile_region`` the decision-space one
    (knop, metades) and ``cluster`` the query's k-means cell (descluster).
    """
    _check_tag(tag)
    query = OutputProfile.from_proba(query_proba)
    cfg = state.config
    if tag in _REGION_RULES:
        return _REGION_RULES[tag](state.cache, region, query, cfg)
    if tag == "knop":
        return sel.knop_select(state.cache, profile_region, query, cfg)
    if tag == "descluster":
        if state.clusters is None:
            raise DsError("state was fitted without descluster")
        return sel.descluster_select(state.clusters, cluster, query)
    if state.metades is None:
        raise DsError("state was fitted without metades")
    return metades_select(state.metades, state.cache, region.indices[:cfg.K],
                          profile_region.indices[:cfg.Kp], query_proba)


def classify(tag: str, state: FittedState, x) -> Decision:
    """Label, vote-mass probabilities and selected members for one feature vector."""
    _check_tag(tag)
    x = np.asarray(x, dtype=float)
    proba = state.pool.member_proba(x[None, :])[:, 0, :]
    idx, dist = knn_regions(state.cache.X, x[None, :], state.config.K)
    region = RegionOfCompetence(idx[0], dist[0])
    profile_region = cluster = None
    if tag in ("knop", "metades"):
        k = state.config.K if tag == "knop" else state.config.Kp
        pidx, pdist = knop_regions(state.cache, proba.reshape(1, -1), k)
        profile_region = RegionOfCompetence(pidx[0], pdist[0])
    if tag == "descluster":
        if state.clusters is None:
            raise DsError("state was fitted without descluster")
        cluster = assign_cluster(state.clusters.clusters, x)
    return decide(tag, state, proba, region, profile_region, cluster)


class QueryBatch:
    """Pool outputs and neighbourhoods for many queries, computed once and shared
    across techniques."""

    def __init__(self, state: FittedState, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        self.state = state
        self.X = X
        self.proba = state.pool.member_proba(X).transpose(1, 0, 2)  # (n, M, L)
        cfg = state.config
        self.ridx, self.rdist = knn_regions(state.cache.X, X, cfg.K)
        soft = self.proba.reshape(X.shape[0], -1)
        kp = max(cfg.K, cfg.Kp)
        self.pidx, self.pdist = knop_regions(state.cache, soft, min(kp, state.cache.n_samples))
        self.cluster = None
        if state.clusters is not None:
            self.cluster = np.argmin(pairwise_euclidean(X, state.clusters.clusters.centroids), axis=1)

    def __len__(self):
        return self.X.shape[0]

    def decide(self, tag: str, i: int) -> Decision:
        cfg = self.state.config
        region = RegionOfCompetence(self.ridx[i], self.rdist[i])
        k = cfg.K if tag == "knop" else cfg.Kp
        profile_region = RegionOfCompetence(self.pidx[i, :k], self.pdist[i, :k])
        cluster = None if self.cluster is None else int(self.cluster[i])
        return decide(tag, self.state, self.proba[i], region, profile_region, cluster)


def classify_batch(tag: str, state: FittedState, X, batch: QueryBatch | None = None):
    """Labels ``(n,)`` and vote-mass probabilities ``(n, L)`` for every row of ``X``."""
    _check_tag(tag)
    batch = batch if batch is not None else QueryBatch(state, X)
    labels = np.empty(len(batch), dtype=np.int64)
    proba = np.empty((len(batch), batch.proba.shape[2]))
    for i in range(len(batch)):
        d = batch.decide(tag, i)
        labels[i] = d.label
        proba[i] = d.proba
    return labels, proba


__all__ = [
    "TECHNIQUES", "DsConfig", "DsError", "Decision", "FittedState", "QueryBatch",
    "fit_state", "fit_clusters", "fit_metades", "classify", "classify_batch", "decide",
    "competence_rank", "competence_ola", "competence_lca", "competence_apriori",
    "competence_aposteriori", "competence_mla", "select_single_best",
    "MetaDesModel", "meta_features", "metades_train", "metades_select",
]
