import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dynsel.pool import DselCache, Pool, fit_bagging
from dynsel import data as D
from dynsel.learners import LearnerConfig
from dynsel.region import (EPS, OutputProfile, RegionError, assign_cluster, fit_kmeans,
                           knn_region, knop_region, output_profile, profile_similarity)


def test_knn_line_example():
    X = np.array([[0.0], [1.0], [2.0]])
    r = knn_region(X, [0.9], 2)
    assert r.indices.tolist() == [1, 0]
    np.testing.assert_allclose(r.distances, [0.1, 0.9])


def test_exact_match_weight_is_clamped():
    r = knn_region(np.array([[0.0], [1.0]]), [1.0], 1)
    assert r.indices.tolist() == [1]
    assert r.weights[0] == 1.0 / EPS


def test_region_can_cover_all_dsel():
    r = knn_region(np.random.default_rng(0).random((6, 2)), [0.5, 0.5], 6)
    assert sorted(r.indices.tolist()) == list(range(6))


def test_region_size_checked():
    with pytest.raises(RegionError):
        knn_region(np.zeros((3, 1)), [0.0], 4)
    with pytest.raises(RegionError):
        knn_region(np.zeros((3, 1)), [0.0], 0)


def test_distance_ties_go_to_lower_index():
    X = np.array([[1.0], [-1.0], [1.0], [3.0]])
    assert knn_region(X, [0.0], 3).indices.tolist() == [0, 1, 2]


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 25), st.integers(1, 4), st.integers(0, 10**6), st.data())
def test_knn_region_is_the_nearest_set(n, d, seed, data):
    rng = np.random.default_rng(seed)
    X = rng.random((n, d))
    x = rng.random(d)
    K = data.draw(st.integers(1, n))
    r = knn_region(X, x, K)
    assert np.all(np.diff(r.distances) >= 0)
    rest = np.setdiff1d(np.arange(n), r.indices)
    all_d = np.sqrt(((X - x) ** 2).sum(axis=1))
    if rest.size:
        assert r.distances.max() <= all_d[rest].min() + 1e-15
    assert np.isfinite(r.weights).all() and (r.weights > 0).all()


def two_blobs(seed=0):
    rng = np.random.default_rng(seed)
    X = np.r_[rng.normal(0, 0.1, (30, 2)), rng.normal(5, 0.1, (30, 2))]
    return X, np.r_[np.zeros(30, int), np.ones(30, int)]


def test_kmeans_separates_blobs():
    X, truth = two_blobs()
    model = fit_kmeans(X, 2, seed=3)
    for c in range(2):
        assert len(set(truth[model.labels == c])) == 1
    assert assign_cluster(model, [5.0, 5.0]) == model.labels[-1]


def test_kmeans_single_cluster_is_mean():
    X, _ = two_blobs()
    model = fit_kmeans(X, 1, seed=0)
    np.testing.assert_allclose(model.centroids[0], X.mean(axis=0))
    assert set(model.labels.tolist()) == {0}


def test_kmeans_deterministic():
    X, _ = two_blobs(1)
    a, b = fit_kmeans(X, 3, seed=8), fit_kmeans(X, 3, seed=8)
    np.testing.assert_array_equal(a.centroids, b.centroids)


def test_kmeans_reseeds_empty_clusters():
    # duplicates make k-means++ pick repeated centroids, forcing empty cells
    X = np.array([[0.0]] * 10 + [[1.0]] * 2 + [[2.0]])
    model = fit_kmeans(X, 3, seed=0)
    assert np.bincount(model.labels, minlength=3).min() >= 1


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 40), st.integers(1, 5), st.integers(0, 10**6))
def test_kmeans_objective_nonincreasing(n, k, seed):
    X = np.random.default_rng(seed).random((n, 2))
    k = min(k, n)
    h = np.array(fit_kmeans(X, k, seed).inertia_history)
    assert np.all(np.diff(h) <= 1e-12 * max(1.0, h[0]))


def test_profile_from_proba():
    p = OutputProfile.from_proba(np.array([[0.6, 0.4], [0.3, 0.7]]))
    assert p.hard.tolist() == [0, 1] and p.soft.size == 4


def test_unanimous_profile():
    ds = D.synth_generate((5, 5), 2, 1.0, seed=0)
    pool = fit_bagging("GNB", LearnerConfig(), ds, 4, seed=0)

    class One:
        n_features = 2

        def predict_proba(self, X):
            return np.tile([0.1, 0.9], (len(X), 1))

    unanimous = Pool((One(),) * 4, "BAGGING(GNB)")
    assert output_profile(unanimous, [0.2, 0.3]).hard.tolist() == [1, 1, 1, 1]
    assert output_profile(pool, ds.X[0]).n_members == 4


def test_dsel_profile_is_cache_column():
    rng = np.random.default_rng(2)
    p1 = rng.random((3, 4))
    cache = DselCache.from_arrays(np.stack([1 - p1, p1], -1), [0, 1, 1, 0], rng.random((4, 2)))
    prof = output_profile(cache, 2)
    assert prof.hard.tolist() == cache.hard[:, 2].tolist()


def prof(bits):
    bits = np.array(bits)
    return OutputProfile(bits, np.stack([1 - bits, bits], -1).reshape(-1).astype(float))


def test_similarity_examples():
    assert profile_similarity(prof([1, 0, 1]), prof([1, 0, 1])) == 1.0
    assert profile_similarity(prof([1, 0, 1, 1]), prof([1, 1, 1, 0])) == 0.5
    assert profile_similarity(prof([1, 0]), prof([0, 1])) == 0.0
    with pytest.raises(RegionError):
        profile_similarity(prof([1]), prof([1, 0]))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 1), st.integers(0, 1)), min_size=1, max_size=20))
def test_similarity_properties(pairs):
    a = prof([p[0] for p in pairs])
    b = prof([p[1] for p in pairs])
    s = profile_similarity(a, b)
    assert s == profile_similarity(b, a)
    assert profile_similarity(a, a) == 1.0
    hamming = sum(x != y for x, y in pairs)
    assert s == pytest.approx(1 - hamming / len(pairs))


def cache_from_profiles(p1):
    p1 = np.asarray(p1, dtype=float)  # (M, n) probability of class 1
    n = p1.shape[1]
    return DselCache.from_arrays(np.stack([1 - p1, p1], -1), np.zeros(n, int), np.zeros((n, 1)))


def test_knop_exact_match():
    cache = cache_from_profiles([[0.1, 0.8, 0.4], [0.9, 0.3, 0.5]])
    q = OutputProfile.from_proba(np.array([[0.2, 0.8], [0.7, 0.3]]))
    assert knop_region(cache, q, 1).indices.tolist() == [1]


def test_knop_identical_profiles_first_by_index():
    cache = cache_from_profiles([[0.3] * 5])
    q = OutputProfile.from_proba(np.array([[0.0, 1.0]]))
    assert knop_region(cache, q, 3).indices.tolist() == [0, 1, 2]


def test_knop_hand_distances():
    # single member: a soft profile (1-p, p) is sqrt(2)*|p - q| from the query
    s = np.sqrt(2)
    cache = cache_from_profiles([[0.5 + 0.9 / s, 0.5 + 0.1 / s, 0.5 + 0.5 / s]])
    q = OutputProfile.from_proba(np.array([[0.5, 0.5]]))
    r = knop_region(cache, q, 2)
    assert r.indices.tolist() == [1, 2]
    np.testing.assert_allclose(r.distances, [0.1, 0.5])
