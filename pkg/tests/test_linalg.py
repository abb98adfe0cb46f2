import numpy as np
import pytest

from atcodec.errors import InvalidInput
from atcodec.linalg import regularize_spd, sym_eig, symmetrize


def random_spd(dim, seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((dim, dim))
    return a @ a.T + dim * np.eye(dim)


def test_identity_eigenvalues():
    pair = sym_eig(np.eye(3))
    assert np.allclose(pair.eigenvalues, [1, 1, 1])
    assert np.max(np.abs(pair.eigenvectors.T @ pair.eigenvectors - np.eye(3))) <= 1e-8


def test_diagonal_matrix():
    pair = sym_eig(np.diag([4.0, 1.0]))
    assert np.allclose(pair.eigenvalues, [4.0, 1.0])
    # permutation-signed identity up to the positive-sign convention
    assert np.allclose(np.abs(pair.eigenvectors), np.eye(2), atol=1e-12)
    assert np.all(pair.eigenvectors[np.argmax(np.abs(pair.eigenvectors), axis=0),
                                    np.arange(2)] > 0)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_reconstruction_oracle(seed):
    a = random_spd(8, seed)
    pair = sym_eig(a)
    recon = pair.eigenvectors @ np.diag(pair.eigenvalues) @ pair.eigenvectors.T
    assert np.max(np.abs(recon - a)) <= 1e-7 * np.max(np.abs(a))
    assert np.all(np.diff(pair.eigenvalues) <= 0)
    assert np.max(np.abs(pair.eigenvectors.T @ pair.eigenvectors - np.eye(8))) <= 1e-8


def test_eigenvalue_sum_matches_trace():
    a = random_spd(12, 7)
    pair = sym_eig(a)
    assert abs(pair.eigenvalues.sum() - np.trace(a)) <= 1e-7 * np.trace(a)


def test_deterministic_for_fixed_input():
    a = random_spd(6, 3)
    p1, p2 = sym_eig(a), sym_eig(a)
    assert np.array_equal(p1.eigenvalues, p2.eigenvalues)
    assert np.array_equal(p1.eigenvectors, p2.eigenvectors)


def test_negative_residue_floored():
    # numerically rank-deficient matrix: tiny negative eigenvalues clamp to 0
    v = np.array([[1.0, 2.0, 3.0]])
    a = v.T @ v
    pair = sym_eig(a)
    assert np.all(pair.eigenvalues >= 0)


def test_regularize_zero_matrix():
    out = regularize_spd(np.zeros((2, 2)), 1e-6)
    assert np.allclose(out, np.diag([1e-6, 1e-6]))


def test_regularize_diagonal():
    out = regularize_spd(np.diag([4.0, 1.0]), 1e-6)
    assert np.allclose(out, np.diag([4.000001, 1.000001]))


def test_regularize_shifts_spectrum():
    a = random_spd(5, 11) - 5.0 * np.eye(5)  # may be indefinite
    a = a @ a.T  # SPD again
    eps = 1e-4
    before = sym_eig(a).eigenvalues
    after = sym_eig(regularize_spd(a, eps)).eigenvalues
    assert np.allclose(after, before + eps, rtol=1e-9, atol=1e-9)
    assert after.min() >= eps - 1e-9


def test_invalid_inputs():
    with pytest.raises(InvalidInput):
        sym_eig(np.array([[np.nan, 0], [0, 1.0]]))
    with pytest.raises(InvalidInput):
        sym_eig(np.zeros((2, 3)))
    with pytest.raises(InvalidInput):
        symmetrize(np.array([[0.0, 1.0], [5.0, 0.0]]))
    with pytest.raises(InvalidInput):
        regularize_spd(np.eye(2), -1.0)
