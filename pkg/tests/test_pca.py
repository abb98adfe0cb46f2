import numpy as np
import pytest

from atcodec.errors import InvalidInput
from atcodec.gmm import FeatureSet, GaussianMixture
from atcodec.pca import (PcaStage, compose_reduced_transforms, fit_global_pca,
                         param_count, reduce, select_M)
from atcodec.synth import synthetic_source


def planar_data(n, seed):
    """5-D samples confined to a fixed 2-D plane."""
    rng = np.random.default_rng(seed)
    basis = np.linalg.qr(rng.standard_normal((5, 2)))[0]
    return rng.standard_normal((n, 2)) * [3.0, 1.0] @ basis.T + 0.5


def test_fit_isotropic():
    rng = np.random.default_rng(0)
    stage = fit_global_pca(rng.standard_normal((50_000, 4)))
    assert np.max(np.abs(stage.spectrum - 1.0)) <= 0.05
    assert np.max(np.abs(stage.basis.T @ stage.basis - np.eye(4))) <= 1e-8


def test_fit_rank_deficiency():
    stage = fit_global_pca(planar_data(400, 1))
    assert np.all(stage.spectrum[2:] <= 1e-9 * stage.spectrum[0])
    assert stage.spectrum[1] > 0.1


def test_full_basis_round_trip():
    rng = np.random.default_rng(2)
    X = rng.standard_normal((60, 6)) * 2.0 + 1.0
    stage = fit_global_pca(X)
    assert np.max(np.abs(stage.lift(stage.reduce(X)) - X)) <= 1e-9


def test_fit_unbiased_covariance():
    rng = np.random.default_rng(3)
    X = rng.standard_normal((40, 3))
    stage = fit_global_pca(X)
    assert np.isclose(stage.spectrum.sum(),
                      np.trace(np.cov(X, rowvar=False)), rtol=1e-10)
    with pytest.raises(InvalidInput):
        fit_global_pca(X[:1])


def test_select_m():
    assert select_M(np.ones(100), 0.99) == 99
    assert select_M([9.0, 1.0], 0.9) == 1
    assert select_M([9.0, 1.0], 0.91) == 2
    assert select_M([5.0, 3.0, 0.0, 0.0], 1.0) == 2
    with pytest.raises(InvalidInput):
        select_M([0.0, 0.0], 0.5)
    with pytest.raises(InvalidInput):
        select_M([1.0], 0.0)
    with pytest.raises(InvalidInput):
        select_M([1.0, -1.0], 0.5)
    # monotone in gamma
    lam = np.geomspace(8.0, 1e-3, 30)
    ms = [select_M(lam, g) for g in np.linspace(0.05, 1.0, 40)]
    assert np.all(np.diff(ms) >= 0)


def test_truncate():
    stage = fit_global_pca(planar_data(300, 4))
    cut = stage.truncate(2)
    assert cut.m == 2
    assert cut.spectrum.shape == (5,)
    assert np.isclose(cut.discarded_energy, stage.spectrum[2:].sum())
    with pytest.raises(InvalidInput):
        stage.truncate(6)
    with pytest.raises(InvalidInput):
        stage.truncate(0)


def test_reduce_center_and_norm():
    rng = np.random.default_rng(5)
    X = rng.standard_normal((80, 4)) + 2.0
    stage = fit_global_pca(X)
    assert np.allclose(stage.reduce(stage.mean), 0.0, atol=1e-12)
    # complete orthonormal basis preserves centered norms
    r = stage.reduce(X)
    assert np.allclose(np.linalg.norm(r, axis=1),
                       np.linalg.norm(X - stage.mean, axis=1), rtol=1e-10)


def test_reduce_coordinate_variances():
    src = synthetic_source(1, 5, seed=6)
    data = src.sample(200_000, seed=7)
    stage = fit_global_pca(data)
    r = stage.truncate(3).reduce(data.vectors)
    var = r.var(axis=0, ddof=1)
    assert np.allclose(var, stage.spectrum[:3], rtol=1e-9)


def test_reduce_featureset_labels():
    data = FeatureSet(planar_data(50, 8), labels=np.arange(50))
    stage = fit_global_pca(data).truncate(2)
    out = reduce(stage, data)
    assert out.dim == 2
    assert np.array_equal(out.labels, data.labels)
    with pytest.raises(InvalidInput):
        reduce(stage, FeatureSet(np.zeros((3, 4))))


def test_compose_identity_stage_matches_plain_whitening():
    src = synthetic_source(2, 4, seed=9)
    data = src.sample(2000, seed=10)
    stage = PcaStage(mean=np.zeros(4), basis=np.eye(4),
                     spectrum=np.ones(4))
    mu_tilde, t_tilde = compose_reduced_transforms(stage, src)
    assert np.allclose(mu_tilde, src.means_, atol=1e-12)
    for c in range(2):
        direct = src.whiten(c, data.vectors)
        composed = (data.vectors - mu_tilde[c]) @ t_tilde[c].T
        assert np.max(np.abs(direct - composed)) <= 1e-10


def test_compose_two_path_agreement():
    rng = np.random.default_rng(11)
    X = rng.standard_normal((4000, 6)) @ rng.standard_normal((6, 6)) + 1.0
    stage = fit_global_pca(X).truncate(3)
    reduced = GaussianMixture(n_components=2, random_state=0).fit(stage.reduce(X))
    mu_tilde, t_tilde = compose_reduced_transforms(stage, reduced)

    probe = rng.standard_normal((200, 6)) * 2.0
    for c in range(2):
        two_step = reduced.whiten(c, stage.reduce(probe))
        one_step = (probe - mu_tilde[c]) @ t_tilde[c].T
        scale = np.max(np.abs(two_step))
        assert np.max(np.abs(two_step - one_step)) <= 1e-10 * max(scale, 1.0)
        # composed means project back onto the reduced means
        assert np.allclose(stage.reduce(mu_tilde[c]), reduced.means_[c],
                           atol=1e-10)


def test_compose_dim_mismatch():
    stage = fit_global_pca(planar_data(100, 12)).truncate(2)
    wrong = synthetic_source(2, 3, seed=0)
    with pytest.raises(InvalidInput):
        compose_reduced_transforms(stage, wrong)


def test_param_count():
    assert param_count(2048, None, 20, "full") == 83_927_040
    assert param_count(2048, 1330, 20, "pca") == 38_130_488
    assert param_count(1, 1, 1, "full") == 2
    assert param_count(1, 1, 1, "pca") == 4
    with pytest.raises(InvalidInput):
        param_count(4, None, 2, "pca")
    with pytest.raises(InvalidInput):
        param_count(4, 2, 2, "other")
    with pytest.raises(InvalidInput):
        param_count(0, 1, 1, "full")
