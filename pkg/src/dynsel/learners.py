"""Base classifiers written from scratch on numpy.

Every model is binary (classes 0 and 1, in that order) and exposes
``predict_proba`` returning an ``(n, 2)`` array of posteriors.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np
from scipy.special import expit, logsumexp

from ._distance import nearest, pairwise_euclidean
from .data import Dataset

FORMAT_VERSION = "1.0"
KINDS = ("GNB", "KNN", "TREE", "MLP")
N_CLASSES = 2


class LearnerError(ValueError):
    pass


@dataclass(frozen=True)
class LearnerConfig:
    # Gaussian naive Bayes
    var_smoothing: float = 1e-9
    # k-NN
    k: int = 5
    # CART; max_depth None grows until pure, max_features None uses all
    max_depth: int | None = 10
    min_leaf: int = 2
    max_features: int | None = None
    # single hidden layer perceptron
    hidden: int = 32
    learning_rate: float = 0.01
    epochs: int = 50
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        for name in ("k", "min_leaf", "hidden", "epochs", "batch_size"):
            if getattr(self, name) < 1:
                raise LearnerError(f"{name} must be positive, got {getattr(self, name)}")
        if self.max_depth is not None and self.max_depth < 0:
            raise LearnerError(f"max_depth must be >= 0, got {self.max_depth}")
        if self.max_features is not None and self.max_features < 1:
            raise LearnerError(f"max_features must be >= 1, got {self.max_features}")
        if not self.learning_rate > 0:
            raise LearnerError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not self.var_smoothing >= 0:
            raise LearnerError("var_smoothing must be >= 0")

    @classmethod
    def from_dict(cls, d: dict) -> "LearnerConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise LearnerError(f"unknown learner options: {sorted(unknown)}")
        return cls(**d)


class Model:
    kind: str = ""
    n_features: int = 0

    def _check(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_features:
            raise LearnerError(f"{self.kind} model expects {self.n_features} features, "
                               f"got {X.shape[1]}")
        return X

    def predict_proba(self, X) -> np.ndarray:
        raise NotImplementedError

    def predict(self, X) -> np.ndarray:
        # argmax keeps the first maximum, so exact ties go to class 0
        return np.argmax(self.predict_proba(X), axis=1)

    def params(self) -> dict:
        raise NotImplementedError

    def to_dict(self) -> dict:
        return {"format_version": FORMAT_VERSION, "kind": self.kind,
                "params": _listify(self.params())}


def _listify(params: dict) -> dict:
    return {k: v.tolist() if isinstance(v, np.ndarray) else v for k, v in params.items()}


class GaussianNB(Model):
    kind = "GNB"

    def __init__(self, mean, var, log_prior):
        self.mean = np.asarray(mean, dtype=float)
        self.var = np.asarray(var, dtype=float)
        self.log_prior = np.asarray(log_prior, dtype=float)
        self.n_features = self.mean.shape[1]

    @classmethod
    def fit(cls, X, y, var_smoothing=1e-9):
        counts = np.bincount(y, minlength=N_CLASSES)
        if (counts == 0).any():
            raise LearnerError("GNB needs samples from both classes; "
                               f"class counts are {counts.tolist()}")
        floor = var_smoothing * float(np.var(X, axis=0).max())
        if floor == 0.0:
            floor = var_smoothing or np.finfo(float).tiny
        mean = np.stack([X[y == c].mean(axis=0) for c in range(N_CLASSES)])
        var = np.stack([X[y == c].var(axis=0) for c in range(N_CLASSES)]) + floor
        return cls(mean, var, np.log(counts / counts.sum()))

    def joint_log_likelihood(self, X) -> np.ndarray:
        X = self._check(X)
        out = np.empty((X.shape[0], N_CLASSES))
        for c in range(N_CLASSES):
            norm = -0.5 * np.sum(np.log(2.0 * np.pi * self.var[c]))
            out[:, c] = self.log_prior[c] + norm - 0.5 * np.sum(
                (X - self.mean[c]) ** 2 / self.var[c], axis=1)
        return out

    def predict_proba(self, X):
        jll = self.joint_log_likelihood(X)
        return np.exp(jll - logsumexp(jll, axis=1, keepdims=True))

    def params(self):
        return {"mean": self.mean, "var": self.var, "log_prior": self.log_prior}


class KNearestNeighbors(Model):
    kind = "KNN"

    def __init__(self, X, y, k=5):
        self.X = np.asarray(X, dtype=float)
        self.y = np.asarray(y, dtype=np.int64)
        self.k = int(k)
        self.n_features = self.X.shape[1]

    @classmethod
    def fit(cls, X, y, k=5):
        return cls(X, y, k)

    def predict_proba(self, X):
        X = self._check(X)
        k = min(self.k, self.X.shape[0])
        idx = nearest(pairwise_euclidean(X, self.X), k)
        ones = self.y[idx].sum(axis=1) / k
        return np.column_stack([1.0 - ones, ones])

    def params(self):
        return {"X": self.X, "y": self.y, "k": self.k}


class DecisionTree(Model):
    """CART with Gini impurity and axis-aligned ``x[f] <= t`` splits.

    Nodes are stored in flat arrays; ``feature == -1`` marks a leaf and
    ``value`` holds the leaf class frequencies.
    """

    kind = "TREE"

    def __init__(self, feature, threshold, left, right, value, n_features):
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=float)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.value = np.asarray(value, dtype=float).reshape(-1, N_CLASSES)
        self.n_features = int(n_features)

    @classmethod
    def fit(cls, X, y, max_depth=10, min_leaf=2, max_features=None, rng=None):
        n, d = X.shape
        if max_features is not None and not 1 <= max_features <= d:
            raise LearnerError(f"max_features must be in [1, {d}], got {max_features}")
        if rng is None:
            rng = np.random.default_rng(0)
        nodes: list[list] = []  # feature, threshold, left, right, p0, p1

        def grow(rows, depth):
            node = len(nodes)
            ones = int(y[rows].sum())
            p1 = ones / rows.size
            nodes.append([-1, 0.0, -1, -1, 1.0 - p1, p1])
            if (max_depth is not None and depth >= max_depth) or ones in (0, rows.size) \
                    or rows.size < 2 * min_leaf:
                return node
            split = cls._best_split(X[rows], y[rows], min_leaf, max_features, rng)
            if split is None:
                return node
            f, t = split
            go_left = X[rows, f] <= t
            nodes[node][0], nodes[node][1] = f, t
            nodes[node][2] = grow(rows[go_left], depth + 1)
            nodes[node][3] = grow(rows[~go_left], depth + 1)
            return node

        grow(np.arange(n), 0)
        arr = list(zip(*nodes))
        return cls(arr[0], arr[1], arr[2], arr[3], np.column_stack([arr[4], arr[5]]), d)

    @staticmethod
    def _best_split(X, y, min_leaf, max_features, rng):
        n, d = X.shape
        feats = np.arange(d) if max_features is None or max_features >= d else \
            np.sort(rng.choice(d, size=max_features, replace=False))
        best = None
        best_score = np.inf
        total1 = y.sum()
        for f in feats:
            order = np.argsort(X[:, f], kind="stable")
            xs = X[order, f]
            cum1 = np.cumsum(y[order])[:-1]
            n_left = np.arange(1, n)
            valid = (xs[:-1] < xs[1:]) & (n_left >= min_leaf) & (n - n_left >= min_leaf)
            if not valid.any():
                continue
            n_right = n - n_left
            p_l = cum1 / n_left
            p_r = (total1 - cum1) / n_right
            # weighted Gini, up to the constant factor 2/n
            score = n_left * p_l * (1 - p_l) + n_right * p_r * (1 - p_r)
            score = np.where(valid, score, np.inf)
            i = int(np.argmin(score))
            if score[i] < best_score:
                best_score = score[i]
                t = 0.5 * (xs[i] + xs[i + 1])
                best = (int(f), t if t < xs[i + 1] else xs[i])
        return best

    def apply(self, X) -> np.ndarray:
        X = self._check(X)
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = self.feature[node] >= 0
        while active.any():
            cur = node[active]
            f = self.feature[cur]
            go_left = X[np.flatnonzero(active), f] <= self.threshold[cur]
            node[active] = np.where(go_left, self.left[cur], self.right[cur])
            active = self.feature[node] >= 0
        return node

    def predict_proba(self, X):
        return self.value[self.apply(X)]

    @property
    def depth(self) -> int:
        depth = np.zeros(len(self.feature), dtype=int)
        for i in range(len(self.feature)):
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def params(self):
        return {"feature": self.feature, "threshold": self.threshold, "left": self.left,
                "right": self.right, "value": self.value, "n_features": self.n_features}


def mlp_forward(params: dict, X: np.ndarray):
    h = expit(X @ params["W1"] + params["b1"])
    p = expit(h @ params["w2"] + params["b2"])
    return h, p


def mlp_loss_and_grad(params: dict, X: np.ndarray, y: np.ndarray):
    """Mean binary cross-entropy of the one-hidden-layer net and its gradient."""
    h, p = mlp_forward(params, X)
    z = h @ params["w2"] + params["b2"]
    # log(1 + e^z) - y z, stable form of the cross-entropy on the logit
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z))
    n = X.shape[0]
    dz = (p - y) / n
    dh = np.outer(dz, params["w2"]) * h * (1.0 - h)
    grads = {"W1": X.T @ dh, "b1": dh.sum(axis=0), "w2": h.T @ dz,
             "b2": np.array(dz.sum())}
    return loss, grads


class MLP(Model):
    """One hidden layer of logistic units with a logistic output, trained by Adam."""

    kind = "MLP"

    def __init__(self, W1, b1, w2, b2):
        self.W1 = np.asarray(W1, dtype=float)
        self.b1 = np.asarray(b1, dtype=float)
        self.w2 = np.asarray(w2, dtype=float)
        self.b2 = np.asarray(b2, dtype=float).reshape(())
        self.n_features = self.W1.shape[0]

    @staticmethod
    def init_params(d, hidden, rng) -> dict:
        lim1 = np.sqrt(6.0 / (d + hidden))
        lim2 = np.sqrt(6.0 / (hidden + 1))
        return {"W1": rng.uniform(-lim1, lim1, (d, hidden)),
                "b1": rng.uniform(-lim1, lim1, hidden),
                "w2": rng.uniform(-lim2, lim2, hidden),
                "b2": np.array(rng.uniform(-lim2, lim2))}

    @classmethod
    def fit(cls, X, y, hidden=32, learning_rate=0.01, epochs=50, batch_size=32, seed=0,
            beta1=0.9, beta2=0.999, eps=1e-8):
        rng = np.random.default_rng(seed)
        n, d = X.shape
        params = cls.init_params(d, hidden, rng)
        m = {k: np.zeros_like(v) for k, v in params.items()}
        v = {k: np.zeros_like(val) for k, val in params.items()}
        yf = y.astype(float)
        t = 0
        for _ in range(epochs):
            perm = rng.permutation(n)
            for s in range(0, n, batch_size):
                batch = perm[s:s + batch_size]
                _, grads = mlp_loss_and_grad(params, X[batch], yf[batch])
                t += 1
                for k in params:
                    m[k] = beta1 * m[k] + (1 - beta1) * grads[k]
                    v[k] = beta2 * v[k] + (1 - beta2) * grads[k] ** 2
                    mhat = m[k] / (1 - beta1 ** t)
                    vhat = v[k] / (1 - beta2 ** t)
                    params[k] = params[k] - learning_rate * mhat / (np.sqrt(vhat) + eps)
        return cls(params["W1"], params["b1"], params["w2"], params["b2"])

    @property
    def param_dict(self) -> dict:
        return {"W1": self.W1, "b1": self.b1, "w2": self.w2, "b2": self.b2}

    def predict_proba(self, X):
        X = self._check(X)
        _, p = mlp_forward(self.param_dict, X)
        return np.column_stack([1.0 - p, p])

    def params(self):
        return {"W1": self.W1, "b1": self.b1, "w2": self.w2, "b2": float(self.b2)}


_CLASSES = {cls.kind: cls for cls in (GaussianNB, KNearestNeighbors, DecisionTree, MLP)}


def fit(kind: str, config: LearnerConfig, train: Dataset | tuple, seed: int | None = None) -> Model:
    """Fit a base classifier of ``kind`` on ``train``.

    ``train`` is a `Dataset` or an ``(X, y)`` pair. ``seed`` overrides
    ``config.seed`` (used by MLP initialisation and tree feature sampling).
    """
    if isinstance(train, Dataset):
        X, y = train.X, train.y
    else:
        X, y = (np.asarray(a) for a in train)
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise LearnerError("training data must be a nonempty 2-D matrix")
    seed = config.seed if seed is None else seed
    if kind == "GNB":
        return GaussianNB.fit(X, y, config.var_smoothing)
    if kind == "KNN":
        return KNearestNeighbors.fit(X, y, config.k)
    if kind == "TREE":
        return DecisionTree.fit(X, y, config.max_depth, config.min_leaf,
                                config.max_features, np.random.default_rng(seed))
    if kind == "MLP":
        return MLP.fit(X, y, config.hidden, config.learning_rate, config.epochs,
                       config.batch_size, seed)
    raise LearnerError(f"unknown learner kind {kind!r}; expected one of {KINDS}")


def predict_proba(model: Model, x) -> np.ndarray:
    """Posterior vector for a single sample."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise LearnerError("predict_proba expects one feature vector")
    return model.predict_proba(x[None, :])[0]


def predict_label(model: Model, x) -> int:
    return int(np.argmax(predict_proba(model, x)))


def model_from_dict(d: dict) -> Model:
    if d.get("format_version", "").split(".")[0] != FORMAT_VERSION.split(".")[0]:
        raise LearnerError(f"unsupported model format {d.get('format_version')!r}")
    try:
        cls = _CLASSES[d["kind"]]
    except KeyError:
        raise LearnerError(f"unknown model kind {d.get('kind')!r}") from None
    return cls(**d["params"])


def save_model(model: Model, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model.to_dict()))


def load_model(path: str | Path) -> Model:
    return model_from_dict(json.loads(Path(path).read_text()))


def config_dict(config: LearnerConfig) -> dict:
    return asdict(config)
