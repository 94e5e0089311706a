"""Pools of base classifiers, their DSEL prediction cache and vote combiners."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import learners
from .data import Dataset
from .learners import LearnerConfig, Model

N_CLASSES = learners.N_CLASSES
MAX_REDRAWS = 10


class PoolError(ValueError):
    pass


@dataclass(frozen=True)
class Pool:
    members: tuple[Model, ...]
    provenance: str

    def __post_init__(self):
        members = tuple(self.members)
        if not members:
            raise PoolError("a pool needs at least one member")
        dims = {m.n_features for m in members}
        if len(dims) != 1:
            raise PoolError(f"members disagree on dimensionality: {sorted(dims)}")
        object.__setattr__(self, "members", members)

    def __len__(self) -> int:
        return len(self.members)

    @property
    def n_features(self) -> int:
        return self.members[0].n_features

    def member_proba(self, X) -> np.ndarray:
        """Posteriors of every member, shape ``(M, n, L)``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.stack([m.predict_proba(X) for m in self.members])

    def predict_proba(self, X) -> np.ndarray:
        """Static pool score: unweighted mean of member posteriors."""
        return self.member_proba(X).mean(axis=0)

    def predict(self, X) -> np.ndarray:
        """Static pool label: unweighted majority vote of member labels."""
        hard = np.argmax(self.member_proba(X), axis=2)
        votes = np.stack([(hard == c).sum(axis=0) for c in range(N_CLASSES)], axis=1)
        return np.argmax(votes, axis=1)

    def to_dict(self) -> dict:
        return {"format_version": learners.FORMAT_VERSION, "provenance": self.provenance,
                "members": [m.to_dict() for m in self.members]}

    @classmethod
    def from_dict(cls, d: dict) -> "Pool":
        return cls(tuple(learners.model_from_dict(m) for m in d["members"]), d["provenance"])


def save_pool(pool: Pool, path: str | Path) -> None:
    Path(path).write_text(json.dumps(pool.to_dict()))


def load_pool(path: str | Path) -> Pool:
    return Pool.from_dict(json.loads(Path(path).read_text()))


def _bootstrap_fit(kind, config, X, y, rng, seed):
    n = X.shape[0]
    for _ in range(MAX_REDRAWS):
        idx = rng.integers(0, n, size=n)
        if np.unique(y[idx]).size == N_CLASSES:
            break
    else:
        if kind == "GNB":
            raise PoolError(f"bootstrap resample was single-class after {MAX_REDRAWS} draws")
    return learners.fit(kind, config, (X[idx], y[idx]), seed=seed)


def _member_seeds(seed: int, count: int) -> list[int]:
    ss = np.random.SeedSequence(seed)
    return [int(s.generate_state(1)[0]) for s in ss.spawn(count)]


def fit_bagging(kind: str, config: LearnerConfig, train: Dataset, M: int, seed: int) -> Pool:
    """Bootstrap-aggregated pool of ``M`` members of one kind.

    Member ``i`` draws its bootstrap sample and its own learner seed from the
    ``i``-th child of ``SeedSequence(seed)``.
    """
    if M < 1:
        raise PoolError(f"pool size must be >= 1, got {M}")
    members = []
    for s in _member_seeds(seed, M):
        rng = np.random.default_rng(s)
        members.append(_bootstrap_fit(kind, config, train.X, train.y, rng, s))
    return Pool(tuple(members), f"BAGGING({kind})")


def fit_random_forest(train: Dataset, trees: int, features_per_split: int | None,
                      seed: int, config: LearnerConfig | None = None) -> Pool:
    """Bagged CART trees with a random feature subset drawn at every split.

    ``features_per_split`` defaults to ``floor(sqrt(d))``. Trees are grown with
    ``config`` (default: unbounded depth, min leaf 1).
    """
    d = train.n_features
    if trees < 1:
        raise PoolError(f"forest size must be >= 1, got {trees}")
    if features_per_split is None:
        features_per_split = max(1, int(math.isqrt(d)))
    if not 1 <= features_per_split <= d:
        raise PoolError(f"features per split must be in [1, {d}], got {features_per_split}")
    base = config or LearnerConfig(max_depth=None, min_leaf=1)
    cfg = LearnerConfig(**{**base.__dict__, "max_features": features_per_split})
    pool = fit_bagging("TREE", cfg, train, trees, seed)
    return Pool(pool.members, "RANDOM_FOREST")


def fit_heterogeneous(train: Dataset, configs: Mapping[str, tuple[LearnerConfig, int]],
                      seed: int) -> Pool:
    """Concatenated bagged sub-pools, one per learner kind, in mapping order.

    ``configs`` maps kind -> (learner config, member count).
    """
    if len(configs) < 2:
        raise PoolError("a heterogeneous pool needs at least two distinct kinds")
    seeds = _member_seeds(seed, len(configs))
    members: list[Model] = []
    for (kind, (cfg, count)), s in zip(configs.items(), seeds):
        members.extend(fit_bagging(kind, cfg, train, count, s).members)
    return Pool(tuple(members), "HETEROGENEOUS")


@dataclass(frozen=True)
class DselCache:
    """Every pool member's output on every DSEL sample.

    ``hard`` is ``(M, n)``, ``soft`` is ``(M, n, L)`` and ``correct`` is
    ``hard == labels``. ``X`` keeps the DSEL features for region queries.
    """

    hard: np.ndarray
    soft: np.ndarray
    correct: np.ndarray
    labels: np.ndarray
    X: np.ndarray

    def __post_init__(self):
        for arr in (self.hard, self.soft, self.correct, self.labels, self.X):
            arr.flags.writeable = False

    @property
    def n_members(self) -> int:
        return self.hard.shape[0]

    @property
    def n_samples(self) -> int:
        return self.hard.shape[1]

    @property
    def profiles(self) -> np.ndarray:
        """Soft output profiles, one ``M*L`` row per DSEL sample."""
        return self.soft.transpose(1, 0, 2).reshape(self.n_samples, -1)

    @classmethod
    def from_arrays(cls, soft: np.ndarray, labels, X) -> "DselCache":
        soft = np.array(soft, dtype=float)
        labels = np.array(labels, dtype=np.int64)
        hard = np.argmax(soft, axis=2)
        return cls(hard, soft, hard == labels[None, :], labels,
                   np.array(X, dtype=float).reshape(labels.shape[0], -1))


def build_dsel_cache(pool: Pool, dsel: Dataset) -> DselCache:
    if dsel.n_features != pool.n_features:
        raise PoolError(f"DSEL has {dsel.n_features} features, pool expects {pool.n_features}")
    return DselCache.from_arrays(pool.member_proba(dsel.X), dsel.y, dsel.X)


@dataclass(frozen=True)
class VoteResult:
    label: int
    mass: np.ndarray
    selected: tuple[int, ...]

    @property
    def proba(self) -> np.ndarray:
        return self.mass / self.mass.sum()


def majority_vote(predictions: Sequence[int], weights: Sequence[float] | None = None,
                  selected: Sequence[int] | None = None,
                  n_classes: int = N_CLASSES) -> VoteResult:
    """(Weighted) plurality vote; ties go to the lowest class.

    ``selected`` records which pool members cast the votes (defaults to
    ``0..len(predictions)-1``).
    """
    preds = np.asarray(predictions, dtype=np.int64)
    if preds.size == 0:
        raise PoolError("cannot vote over an empty prediction list")
    if weights is None:
        w = np.ones(preds.size)
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != preds.shape:
            raise PoolError("weights and predictions differ in length")
        if (w < 0).any():
            raise PoolError("vote weights must be nonnegative")
        if not (w > 0).any():
            raise PoolError("all vote weights are zero")
    mass = np.bincount(preds, weights=w, minlength=n_classes).astype(float)
    sel = tuple(range(preds.size)) if selected is None else tuple(int(i) for i in selected)
    return VoteResult(int(np.argmax(mass)), mass, sel)
