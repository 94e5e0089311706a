"""Random small selection problems shared by the oracle-equivalence tests."""
import numpy as np

from dynsel.dstech import DsConfig, FittedState, decide, fit_clusters
from dynsel.dstech.metades import MetaDesModel
from dynsel.pool import DselCache
from dynsel.region import assign_cluster, knn_region, knop_region, OutputProfile


def _soft(rng, shape):
    # mix continuous posteriors with coarse ones so hard-label ties and
    # repeated competence values show up regularly
    p1 = rng.random(shape)
    coarse = rng.random(shape) < 0.3
    p1 = np.where(coarse, np.round(p1 * 4) / 4, p1)
    return np.stack([1 - p1, p1], axis=-1)


def random_instance(rng):
    M = int(rng.integers(1, 6))
    K = int(rng.integers(1, 8))
    n = int(rng.integers(K, 21))
    d = int(rng.integers(1, 5))
    X = rng.random((n, d))
    y = rng.integers(0, 2, n)
    soft = _soft(rng, (M, n))
    x = rng.random(d)
    q = _soft(rng, (M,))
    N = int(rng.integers(1, M + 1))
    J = int(rng.integers(1, N + 1))
    Kp = int(rng.integers(1, min(5, n) + 1))
    zeta = float(rng.choice([0.0, 0.3, 0.5, 0.7, 1.0])) or 1e-9
    return {"X": X, "y": y, "soft": soft, "x": x, "q": q, "K": K, "Kp": Kp,
            "gap": 0.1, "zeta": zeta, "N": N, "J": J,
            "n_clusters": int(rng.integers(1, min(4, n) + 1))}


def as_lists(inst):
    return {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in inst.items()}


def config_for(inst):
    return DsConfig(K=inst["K"], Kp=inst["Kp"], gap=inst["gap"], zeta=inst["zeta"],
                    N=inst["N"], J=inst["J"], n_clusters=inst["n_clusters"])


def cache_for(inst):
    return DselCache.from_arrays(inst["soft"], inst["y"], inst["X"])


class OracleMeta:
    """Meta-classifier stand-in: competent iff the member is right on the query."""

    def __init__(self, correct):
        self.correct = np.asarray(correct, dtype=float)

    def predict_proba(self, V):
        p = self.correct[: V.shape[0]]
        return np.column_stack([1 - p, p])


def package_decision(tag, inst, seed=0, meta=None):
    cfg = config_for(inst)
    cache = cache_for(inst)
    clusters = fit_clusters(cache, cfg, seed) if tag == "descluster" else None
    metam = None
    if tag == "metades":
        metam = MetaDesModel(meta, cfg.K, cfg.Kp, cfg.hc, cfg.meta_feature_length)
    state = FittedState(None, cache, cfg, clusters, metam)
    region = knn_region(cache, inst["x"], cfg.K)
    query = OutputProfile.from_proba(inst["q"])
    k = cfg.K if tag == "knop" else cfg.Kp
    profile = knop_region(cache, query, k)
    cluster = assign_cluster(clusters.clusters, inst["x"]) if clusters else None
    return decide(tag, state, inst["q"], region, profile, cluster), clusters
