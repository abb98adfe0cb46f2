import numpy as np
import pytest
from scipy.stats import multivariate_normal

from atcodec.errors import InvalidInput
from atcodec.gmm import FeatureSet, GaussianMixture, fit_supervised
from atcodec.synth import synthetic_source


def test_featureset_validation():
    with pytest.raises(InvalidInput):
        FeatureSet(np.array([[1.0, np.inf]]))
    with pytest.raises(InvalidInput):
        FeatureSet(np.zeros((3, 2)), labels=[0, 1])
    with pytest.raises(InvalidInput):
        FeatureSet(np.zeros((2, 2)), labels=[0, -1])
    fs = FeatureSet(np.zeros((2, 3)), labels=[0, 1])
    assert fs.count == 2 and fs.dim == 3


def test_k1_closed_form():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((500, 4)) * [1.0, 2.0, 0.5, 3.0] + [1, -2, 0, 5]
    reg = 1e-6
    model = GaussianMixture(n_components=1, reg=reg).fit(X)
    mean = X.mean(axis=0)
    diff = X - mean
    cov = diff.T @ diff / X.shape[0] + reg * np.eye(4)
    assert np.allclose(model.means_[0], mean, rtol=1e-12, atol=1e-12)
    assert np.allclose(model.covariances_[0], cov, rtol=1e-12, atol=1e-14)
    assert model.weights_[0] == 1.0


def test_em_recovers_1d_gaussian():
    rng = np.random.default_rng(1)
    X = (rng.standard_normal(10_000) + 3.0)[:, None]
    model = GaussianMixture(n_components=1).fit(X)
    assert abs(model.means_[0, 0] - 3.0) <= 0.05
    assert abs(model.covariances_[0, 0, 0] - 1.0) <= 0.05


def test_em_separated_clusters():
    rng = np.random.default_rng(2)
    a = rng.standard_normal((2000, 2)) + [10.0, 0.0]
    b = rng.standard_normal((2000, 2)) + [-10.0, 0.0]
    X = np.vstack([a, b])
    model = GaussianMixture(n_components=2, random_state=0).fit(X)
    order = np.argsort(model.means_[:, 0])
    assert np.allclose(model.means_[order],
                       [[-10.0, 0.0], [10.0, 0.0]], atol=0.1)
    assert np.allclose(model.weights_, [0.5, 0.5], atol=0.05)


def test_em_monotone_log_likelihood():
    for seed in range(5):
        src = synthetic_source(3, 4, seed=seed, separation=4.0)
        data = src.sample(1500, seed=seed + 100)
        model = GaussianMixture(n_components=3, random_state=seed).fit(data)
        gains = np.diff(model.log_likelihoods_)
        assert np.all(gains >= -1e-9)


def test_em_preconditions():
    with pytest.raises(InvalidInput):
        GaussianMixture(n_components=5).fit(np.zeros((3, 2)))
    with pytest.raises(InvalidInput):
        GaussianMixture(n_components=1, reg=0.0).fit(np.zeros((3, 2)))


def test_supervised_single_class_matches_k1():
    rng = np.random.default_rng(3)
    X = rng.standard_normal((300, 3))
    labels = np.zeros(300, dtype=int)
    sup = fit_supervised(X, labels, superclass_map={0: 0})
    em = GaussianMixture(n_components=1).fit(X)
    assert np.allclose(sup.means_, em.means_, rtol=1e-12)
    assert np.allclose(sup.covariances_, em.covariances_, rtol=1e-12)


def test_supervised_per_class_means():
    X = np.array([[0.0, 0.0], [0.1, 0.0], [5.0, 5.0], [5.1, 5.0]])
    labels = np.array([0, 0, 1, 1])
    model = fit_supervised(X, labels)
    assert np.allclose(model.means_, [[0.05, 0.0], [5.05, 5.0]])
    assert np.allclose(model.weights_, [0.5, 0.5])


def test_supervised_pooled_superclasses():
    rng = np.random.default_rng(4)
    X = rng.standard_normal((600, 3))
    labels = rng.integers(0, 3, size=600)
    model = fit_supervised(X, labels, superclass_map={0: 0, 1: 0, 2: 1})
    pooled = X[labels < 2]
    mean = pooled.mean(axis=0)
    diff = pooled - mean
    cov = diff.T @ diff / pooled.shape[0] + 1e-6 * np.eye(3)
    assert np.allclose(model.means_[0], mean, rtol=1e-12)
    assert np.allclose(model.covariances_[0], cov, rtol=1e-10)
    assert np.isclose(model.weights_[0], pooled.shape[0] / 600)


def test_supervised_errors():
    X = np.zeros((4, 2))
    with pytest.raises(InvalidInput):
        fit_supervised(X)  # no labels
    with pytest.raises(InvalidInput):
        fit_supervised(X, [0, 0, 0, 1])  # class 1 has a single sample
    with pytest.raises(InvalidInput):
        fit_supervised(X, [0, 0, 1, 1], superclass_map={0: 0})  # missing key


def test_map_component_trivial():
    src = synthetic_source(1, 3, seed=0)
    assert np.all(src.predict(np.zeros((5, 3))) == 0)

    two = synthetic_source(1, 1, seed=0)
    two._set_parameters(np.array([0.5, 0.5]),
                        np.array([[-10.0], [10.0]]),
                        np.array([np.eye(1), np.eye(1)]) * 1.0)
    assert two.predict(np.array([[9.5]]))[0] == 1


def test_map_component_log_density_oracle():
    src = synthetic_source(3, 4, seed=6, separation=2.0)
    data = src.sample(1000, seed=7)
    pred = src.predict(data.vectors)
    log_dens = np.column_stack([
        np.log(src.weights_[c])
        + multivariate_normal.logpdf(data.vectors, src.means_[c],
                                     src.covariances_[c])
        for c in range(3)
    ])
    assert np.array_equal(pred, np.argmax(log_dens, axis=1))


def test_map_component_permutation_equivariance():
    src = synthetic_source(3, 4, seed=9, separation=3.0)
    data = src.sample(200, seed=10)
    perm = np.array([2, 0, 1])
    permuted = GaussianMixture(n_components=3, reg=1e-12)
    permuted._set_parameters(src.weights_[perm], src.means_[perm],
                             src.covariances_[perm])
    inv = np.argsort(perm)
    assert np.array_equal(inv[src.predict(data.vectors)]
                          [np.newaxis].ravel(),
                          permuted.predict(data.vectors))


def test_whiten_unwhiten_inverse():
    src = synthetic_source(2, 5, seed=11)
    rng = np.random.default_rng(12)
    X = rng.standard_normal((50, 5)) * 3.0
    for c in range(2):
        back = src.unwhiten(c, src.whiten(c, X))
        assert np.max(np.abs(back - X)) <= 1e-9 * np.max(np.abs(X))
    # center maps to zero and back
    assert np.allclose(src.whiten(0, src.means_[0]), 0.0, atol=1e-12)
    assert np.allclose(src.unwhiten(1, np.zeros(5)), src.means_[1])


def test_whiten_isotropic_preserves_norm():
    model = GaussianMixture(n_components=1, reg=1e-12)
    model._set_parameters(np.array([1.0]), np.array([[1.0, 2.0]]),
                          np.eye(2)[None, :, :].copy())
    x = np.array([3.0, -1.0])
    z = model.whiten(0, x)
    assert np.isclose(np.linalg.norm(z), np.linalg.norm(x - model.means_[0]))


def test_whiten_monte_carlo_covariance():
    src = synthetic_source(1, 4, seed=13)
    data = src.sample(100_000, seed=14)
    z = src.whiten(0, data.vectors)
    cov = np.cov(z, rowvar=False, bias=True)
    assert np.max(np.abs(cov - np.eye(4))) <= 0.05


def test_unwhiten_diagonal_scaling():
    model = GaussianMixture(n_components=1, reg=1e-12)
    model._set_parameters(np.array([1.0]), np.array([[0.5, -0.5]]),
                          np.diag([4.0, 1.0])[None, :, :].copy())
    u = model.eigvecs_[0]
    expected = model.means_[0] + u @ np.array([2.0, 1.0])
    assert np.allclose(model.unwhiten(0, np.array([1.0, 1.0])), expected)


def test_sampling():
    src = synthetic_source(3, 3, seed=15, weights=[0.5, 0.3, 0.2])
    empty = src.sample(0, seed=0)
    assert empty.count == 0 and empty.dim == 3

    data = src.sample(100_000, seed=16)
    counts = np.bincount(data.labels, minlength=3) / data.count
    se = np.sqrt(src.weights_ * (1 - src.weights_) / data.count)
    assert np.all(np.abs(counts - src.weights_) <= 3 * se)

    # deterministic given seed
    again = src.sample(1000, seed=16)
    assert np.array_equal(again.vectors, src.sample(1000, seed=16).vectors)


def test_sample_mean_clt():
    model = GaussianMixture(n_components=1, reg=1e-12)
    mu = np.array([[1.0, -2.0, 0.5]])
    model._set_parameters(np.array([1.0]), mu, np.eye(3)[None, :, :].copy())
    data = model.sample(100_000, seed=17)
    assert np.all(np.abs(data.vectors.mean(axis=0) - mu[0]) <= 0.02)


def test_log_likelihood():
    model = GaussianMixture(n_components=1, reg=1e-12)
    mu = np.array([[0.25, -1.0]])
    model._set_parameters(np.array([1.0]), mu, np.eye(2)[None, :, :].copy())
    # density at the mode of a bivariate standard normal
    assert np.isclose(model.log_likelihood(mu), np.log(1 / (2 * np.pi)))

    src = synthetic_source(3, 3, seed=18)
    pts = src.sample(10, seed=19).vectors
    naive = np.sum(np.log(np.sum([
        src.weights_[c] * multivariate_normal.pdf(pts, src.means_[c],
                                                  src.covariances_[c])
        for c in range(3)
    ], axis=0)))
    assert abs(src.log_likelihood(pts) - naive) <= 1e-10 * abs(naive)

    perm = np.array([1, 2, 0])
    permuted = GaussianMixture(n_components=3, reg=1e-12)
    permuted._set_parameters(src.weights_[perm], src.means_[perm],
                             src.covariances_[perm])
    assert np.isclose(src.log_likelihood(pts), permuted.log_likelihood(pts))


def test_supervised_identity_map_recovers_generator():
    src = synthetic_source(3, 3, seed=20, separation=5.0)
    data = src.sample(30_000, seed=21)
    fitted = fit_supervised(data)
    assert np.allclose(fitted.weights_, src.weights_, atol=0.02)
    assert np.max(np.abs(fitted.means_ - src.means_)) <= 0.1
    assert np.max(np.abs(fitted.covariances_ - src.covariances_)) <= 0.2
