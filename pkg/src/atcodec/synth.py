"""Synthetic mixture sources for desk-scale experiments."""

import numpy as np

from .errors import InvalidInput
from .gmm import GaussianMixture


def synthetic_source(n_components: int, dim: int, seed: int = 0,
                     separation: float = 6.0, eig_max: float = 4.0,
                     eig_min: float = 0.01, weights=None) -> GaussianMixture:
    """Build a ground-truth GMM with log-spaced per-component eigenvalues.

    Component means are placed so every pairwise distance is at least
    separation * sqrt(eig_max); eigenvectors are random orthogonal bases.
    Deterministic given the seed.
    """
    if n_components < 1 or dim < 1:
        raise InvalidInput("component count and dimension must be positive")
    if not 0 < eig_min <= eig_max:
        raise InvalidInput("need 0 < eig_min <= eig_max")
    rng = np.random.default_rng(seed)
    k = n_components

    if weights is None:
        w = np.full(k, 1.0 / k)
    else:
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != (k,) or np.any(w <= 0):
            raise InvalidInput("weights must be positive with length K")
        w = w / w.sum()

    profile = np.geomspace(eig_max, eig_min, dim)
    covs = np.empty((k, dim, dim))
    for c in range(k):
        jitter = rng.uniform(0.8, 1.25, size=dim)
        lam = np.sort(profile * jitter)[::-1]
        q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
        covs[c] = (q * lam) @ q.T
        covs[c] = 0.5 * (covs[c] + covs[c].T)

    means = rng.standard_normal((k, dim))
    if k > 1:
        target = separation * np.sqrt(eig_max)
        d = np.linalg.norm(means[:, None, :] - means[None, :, :], axis=2)
        min_dist = d[np.triu_indices(k, 1)].min()
        if min_dist <= 0:
            raise InvalidInput("degenerate mean placement; change the seed")
        means *= target / min_dist
    else:
        means *= 0.0

    model = GaussianMixture(n_components=k, reg=1e-12)
    model._set_parameters(w, means, covs)
    model.n_reseeds_ = 0
    model.log_likelihoods_ = np.empty(0)
    return model
