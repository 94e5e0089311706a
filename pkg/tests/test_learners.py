import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dynsel import learners as Lr
from dynsel.learners import LearnerConfig


def blobs(n=200, sep=6.0, d=1, seed=0):
    rng = np.random.default_rng(seed)
    X = np.r_[rng.normal(0, 1, (n, d)), rng.normal(sep, 1, (n, d))]
    y = np.r_[np.zeros(n, int), np.ones(n, int)]
    return X, y


def test_gnb_separated_training_accuracy():
    X, y = blobs()
    m = Lr.fit("GNB", LearnerConfig(), (X, y))
    assert np.mean(m.predict(X) == y) > 0.95


def test_gnb_identical_classes_give_half():
    X = np.array([[0.0], [1.0], [0.0], [1.0]])
    m = Lr.fit("GNB", LearnerConfig(), (X, [0, 0, 1, 1]))
    np.testing.assert_allclose(Lr.predict_proba(m, [0.3]), [0.5, 0.5], atol=1e-12)


def test_gnb_threshold_is_midpoint():
    # both classes have sample mean +-1 around their centre and variance 1
    X = np.array([[-1.0], [1.0], [2.0], [4.0]])
    m = Lr.fit("GNB", LearnerConfig(), (X, [0, 0, 1, 1]))
    lo, hi = 0.0, 3.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if Lr.predict_proba(m, [mid])[1] > 0.5:
            hi = mid
        else:
            lo = mid
    assert abs(0.5 * (lo + hi) - 1.5) <= 1e-9


def test_gnb_single_class_rejected():
    with pytest.raises(Lr.LearnerError):
        Lr.fit("GNB", LearnerConfig(), (np.zeros((3, 1)), [1, 1, 1]))


def test_knn_memorises_with_k1():
    X, y = blobs(50, sep=1.0)
    m = Lr.fit("KNN", LearnerConfig(k=1), (X, y))
    assert np.array_equal(m.predict(X), y)


def test_knn_neighbour_fractions():
    X = np.array([[0.0], [0.1], [0.2], [5.0]])
    m = Lr.fit("KNN", LearnerConfig(k=3), (X, [1, 1, 0, 0]))
    np.testing.assert_allclose(Lr.predict_proba(m, [0.05]), [1 / 3, 2 / 3])


def test_tree_depth_zero_is_constant_majority():
    X, y = blobs(30)
    y = y.copy()
    y[:40] = 0  # 40 zeros vs 20 ones after the edit
    m = Lr.fit("TREE", LearnerConfig(max_depth=0), (X, y))
    assert m.depth == 0
    assert set(m.predict(X).tolist()) == {0}


def test_full_tree_memorises_distinct_points():
    rng = np.random.default_rng(3)
    X = rng.random((60, 3))
    y = rng.integers(0, 2, 60)
    m = Lr.fit("TREE", LearnerConfig(max_depth=None, min_leaf=1), (X, y))
    assert np.array_equal(m.predict(X), y)


def test_tree_split_between_adjacent_floats():
    a = 1.0
    b = np.nextafter(a, 2.0)
    m = Lr.fit("TREE", LearnerConfig(min_leaf=1), (np.array([[a], [b]]), [0, 1]))
    assert m.predict(np.array([[a], [b]])).tolist() == [0, 1]


def test_mlp_learns_separable_data():
    X, y = blobs(100, sep=4.0, d=2)
    X = (X - X.min()) / (X.max() - X.min())
    m = Lr.fit("MLP", LearnerConfig(epochs=60), (X, y))
    assert np.mean(m.predict(X) == y) > 0.95


def test_mlp_gradient_matches_finite_differences():
    rng = np.random.default_rng(11)
    X = rng.random((10, 4))
    y = rng.integers(0, 2, 10).astype(float)
    params = Lr.MLP.init_params(4, 6, rng)
    _, grads = Lr.mlp_loss_and_grad(params, X, y)
    h = 1e-5
    for name, value in params.items():
        flat = np.asarray(value, dtype=float).reshape(-1)
        numeric = np.empty_like(flat)
        for i in range(flat.size):
            plus = {k: np.array(v, dtype=float, copy=True) for k, v in params.items()}
            minus = {k: np.array(v, dtype=float, copy=True) for k, v in params.items()}
            plus[name].reshape(-1)[i] += h
            minus[name].reshape(-1)[i] -= h
            numeric[i] = (Lr.mlp_loss_and_grad(plus, X, y)[0]
                          - Lr.mlp_loss_and_grad(minus, X, y)[0]) / (2 * h)
        analytic = np.asarray(grads[name]).reshape(-1)
        rel = np.linalg.norm(analytic - numeric) / max(
            np.linalg.norm(analytic) + np.linalg.norm(numeric), 1e-12)
        assert rel < 1e-4, name


@pytest.mark.parametrize("proba,label", [((0.7, 0.3), 0), ((0.5, 0.5), 0), ((0.2, 0.8), 1)])
def test_label_is_argmax_with_ties_to_zero(proba, label):
    class Fixed(Lr.Model):
        n_features = 1

        def predict_proba(self, X):
            return np.tile(proba, (np.atleast_2d(X).shape[0], 1))

    assert Lr.predict_label(Fixed(), [0.0]) == label


@settings(max_examples=25, deadline=None)
@given(st.sampled_from(Lr.KINDS), st.integers(0, 10**6))
def test_probabilities_are_distributions(kind, seed):
    rng = np.random.default_rng(seed)
    X = rng.random((30, 3))
    y = np.r_[np.zeros(15, int), np.ones(15, int)]
    m = Lr.fit(kind, LearnerConfig(epochs=3, k=3), (X, y))
    P = m.predict_proba(rng.random((20, 3)) * 3 - 1)
    assert (P >= 0).all() and (P <= 1).all()
    np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-9)


def test_dimension_mismatch():
    X, y = blobs(10, d=2)
    m = Lr.fit("GNB", LearnerConfig(), (X, y))
    with pytest.raises(Lr.LearnerError):
        Lr.predict_proba(m, [0.0, 1.0, 2.0])


@pytest.mark.parametrize("kind", Lr.KINDS)
def test_serialisation_roundtrip(kind, tmp_path):
    X, y = blobs(20, d=2)
    m = Lr.fit(kind, LearnerConfig(epochs=2), (X, y))
    Lr.save_model(m, tmp_path / "m.json")
    back = Lr.load_model(tmp_path / "m.json")
    assert back.kind == kind
    np.testing.assert_array_equal(back.predict_proba(X), m.predict_proba(X))


def test_unknown_format_version():
    with pytest.raises(Lr.LearnerError):
        Lr.model_from_dict({"format_version": "9.0", "kind": "GNB", "params": {}})


def test_config_validation():
    with pytest.raises(Lr.LearnerError):
        LearnerConfig(k=0)
    with pytest.raises(Lr.LearnerError):
        LearnerConfig(learning_rate=0.0)
