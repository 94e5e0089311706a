"""Meta-learned competence: a classifier that predicts whether a member is right.

For a member ``c_i`` and a sample ``x`` the meta-feature vector concatenates

* the K correctness bits of ``c_i`` on the feature-space region of ``x``,
* the K posteriors ``c_i`` gives the true class of those samples,
* the local accuracy of ``c_i`` on that region,
* the Kp correctness bits on the decision-space (output profile) neighbourhood,
* the largest posterior ``c_i`` gives ``x`` itself,

for a total length of ``2K + Kp + 2``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .. import learners
from ..data import round_half_up
from ..pool import DselCache, Pool
from ..region import OutputProfile, knn_regions, knop_regions
from .selection import Decision, DsConfig, DsError, members_vote, pool_vote

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MetaDesModel:
    meta: object  # anything with predict_proba(V) -> (n, 2)
    K: int
    Kp: int
    hc: float
    n_meta_features: int
    n_train: int = 0
    n_validation: int = 0
    validation_accuracy: float = float("nan")


def meta_features(cache: DselCache, region_idx: np.ndarray, profile_idx: np.ndarray,
                  query_proba: np.ndarray) -> np.ndarray:
    """``(M, 2K+Kp+2)`` meta-feature matrix for one sample.

    ``query_proba`` is the ``(M, L)`` block of member posteriors on the sample.
    """
    region_idx = np.asarray(region_idx)
    hits = cache.correct[:, region_idx].astype(float)
    p_true = cache.soft[:, region_idx, :][:, np.arange(region_idx.size), cache.labels[region_idx]]
    local_acc = hits.mean(axis=1, keepdims=True)
    profile_hits = cache.correct[:, np.asarray(profile_idx)].astype(float)
    confidence = np.max(query_proba, axis=1, keepdims=True)
    return np.hstack([hits, p_true, local_acc, profile_hits, confidence])


def consensus(hard: np.ndarray) -> np.ndarray:
    """Fraction of members (rows of ``hard``) agreeing with the plurality label, per column."""
    counts = np.stack([(hard == c).sum(axis=0) for c in range(learners.N_CLASSES)])
    return counts.max(axis=0) / hard.shape[0]


def _drop_self(idx: np.ndarray, selves: np.ndarray, k: int) -> np.ndarray:
    keep = idx != selves[:, None]
    out_i = np.empty((idx.shape[0], k), dtype=idx.dtype)
    for r in range(idx.shape[0]):
        out_i[r] = idx[r][keep[r]][:k]
    return out_i


def build_meta_training_set(pool: Pool, cache: DselCache, X, y, config: DsConfig,
                            exclude_self: bool = False):
    """Meta-instances for every sample whose pool consensus is below ``hc``.

    When ``exclude_self`` is set, ``X`` is the DSEL itself and each sample is
    left out of its own neighbourhoods.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=np.int64)
    proba = pool.member_proba(X)
    hard = np.argmax(proba, axis=2)
    rows = np.flatnonzero(consensus(hard) < config.hc)
    if rows.size == 0:
        raise DsError(f"no sample has pool consensus below hc={config.hc}; "
                      "increase hc to obtain meta-training data")
    extra = 1 if exclude_self else 0
    ridx, _ = knn_regions(cache.X, X[rows], config.K + extra)
    soft_q = proba[:, rows, :].transpose(1, 0, 2).reshape(rows.size, -1)
    pidx, _ = knop_regions(cache, soft_q, config.Kp + extra)
    if exclude_self:
        ridx = _drop_self(ridx, rows, config.K)
        pidx = _drop_self(pidx, rows, config.Kp)
    V, alpha = [], []
    for r, n in enumerate(rows):
        V.append(meta_features(cache, ridx[r], pidx[r], proba[:, n, :]))
        alpha.append(hard[:, n] == y[n])
    return np.vstack(V), np.concatenate(alpha).astype(np.int64)


def metades_train(pool: Pool, cache: DselCache, X, y, config: DsConfig, seed: int = 0,
                  exclude_self: bool = False) -> MetaDesModel:
    """Fit the meta-classifier on 75% of the meta-instances, scoring it on the rest."""
    V, alpha = build_meta_training_set(pool, cache, X, y, config, exclude_self)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(V.shape[0])
    n_val = round_half_up(config.meta_validation * V.shape[0])
    if V.shape[0] - n_val < 1:
        n_val = 0
    val, tr = np.sort(perm[:n_val]), np.sort(perm[n_val:])
    meta_cfg = learners.LearnerConfig.from_dict({"seed": seed, **config.meta_options})
    meta = learners.fit(config.meta_learner, meta_cfg, (V[tr], alpha[tr]))
    val_acc = float(np.mean(meta.predict(V[val]) == alpha[val])) if n_val else float("nan")
    logger.info("meta-classifier trained on %d instances, validation accuracy %.4f over %d",
                tr.size, val_acc, n_val)
    return MetaDesModel(meta, config.K, config.Kp, config.hc, config.meta_feature_length,
                        int(tr.size), int(n_val), val_acc)


def metades_select(model: MetaDesModel, cache: DselCache, region_idx, profile_idx,
                   query_proba: np.ndarray) -> Decision:
    """Members the meta-classifier calls competent (probability > 0.5) vote unweighted."""
    V = meta_features(cache, region_idx, profile_idx, query_proba)
    if V.shape[1] != model.n_meta_features:
        raise DsError(f"meta-feature length {V.shape[1]} != {model.n_meta_features}")
    p = np.asarray(model.meta.predict_proba(V))[:, 1]
    hard = np.argmax(query_proba, axis=1)
    query = OutputProfile(hard, np.asarray(query_proba).reshape(-1))
    chosen = np.flatnonzero(p > 0.5)
    if chosen.size == 0:
        return pool_vote(query, p)
    return members_vote(query, chosen, competence=p)
