"""Gaussian mixture modeling for the adaptation layer.

Full-covariance EM with k-means++ seeding, supervised per-label moment
fitting, MAP component selection, per-mode whitening and sampling. The
fitted estimator is immutable in spirit: all downstream modules treat the
trailing-underscore attributes as read-only.

Sampling and seeding use numpy's default PCG64 generator; determinism is per
seed within one build (bitwise reproducibility across platforms is not a
goal).
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import logsumexp
from sklearn.base import BaseEstimator

from .errors import InvalidInput, NumericalFailure
from .linalg import sym_eig

_LOG_2PI = np.log(2.0 * np.pi)

# responsibility mass below which a component counts as collapsed
_COLLAPSE_MASS = 1e-6
_INIT_SUBSAMPLE = 10_000
_INIT_ATTEMPTS = 10


@dataclass
class FeatureSet:
    """A batch of feature vectors with optional integer labels."""

    vectors: np.ndarray               # (count, dim) float64
    labels: Optional[np.ndarray] = None  # (count,) int64, values >= 0

    def __post_init__(self):
        self.vectors = np.atleast_2d(np.asarray(self.vectors, dtype=np.float64))
        if not np.all(np.isfinite(self.vectors)):
            raise InvalidInput("feature vectors must be finite")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (self.count,):
                raise InvalidInput("labels length must equal vector count")
            if self.count and self.labels.min() < 0:
                raise InvalidInput("labels must be non-negative")

    @property
    def count(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


def _log_gaussian(X, mean, cov):
    """Log density of N(mean, cov) at the rows of X."""
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure("covariance not positive definite") from exc
    sol = solve_triangular(chol, (X - mean).T, lower=True)
    maha = np.sum(sol * sol, axis=0)
    log_det = 2.0 * np.sum(np.log(np.diag(chol)))
    return -0.5 * (X.shape[1] * _LOG_2PI + log_det + maha)


def _kmeanspp_centers(X, k, rng):
    """k-means++ seeding on X; deterministic given the generator state."""
    n = X.shape[0]
    centers = np.empty((k, X.shape[1]))
    centers[0] = X[rng.integers(n)]
    d2 = np.sum((X - centers[0]) ** 2, axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0:
            centers[i] = X[rng.integers(n)]
        else:
            centers[i] = X[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, np.sum((X - centers[i]) ** 2, axis=1))
    return centers


class GaussianMixture(BaseEstimator):
    """Full-covariance Gaussian mixture fitted by EM.

    Parameters
    ----------
    n_components : number of mixture components K.
    reg : diagonal regularization added to every covariance estimate.
    tol : relative log-likelihood gain below which EM stops.
    max_iter : EM iteration cap.
    random_state : seed for k-means++ initialization.
    """

    def __init__(self, n_components=1, reg=1e-6, tol=1e-6, max_iter=200,
                 random_state=0):
        self.n_components = n_components
        self.reg = reg
        self.tol = tol
        self.max_iter = max_iter
        self.random_state = random_state

    # ------------------------------------------------------------------ fit

    def fit(self, X, y=None):
        data = X if isinstance(X, FeatureSet) else FeatureSet(X)
        X = data.vectors
        k = int(self.n_components)
        if k < 1:
            raise InvalidInput("n_components must be >= 1")
        if data.count < k:
            raise InvalidInput("need at least one sample per component")
        if not self.reg > 0:
            raise InvalidInput("reg must be positive")

        rng = np.random.default_rng(self.random_state)
        resp = self._init_responsibilities(X, k, rng)
        weights, means, covs = self._m_step(X, resp)

        self.n_reseeds_ = 0
        history = []
        prev_ll = -np.inf
        prev_params = (weights, means, covs)
        for _ in range(int(self.max_iter)):
            log_prob = self._weighted_log_prob(X, weights, means, covs)
            log_norm = logsumexp(log_prob, axis=1)
            ll = float(log_norm.sum())
            if ll < prev_ll:
                # gain below the floating-point noise floor; keep the
                # better iterate and treat the fit as converged
                weights, means, covs = prev_params
                break
            history.append(ll)
            resp = np.exp(log_prob - log_norm[:, None])

            if np.isfinite(prev_ll) and ll - prev_ll < self.tol * abs(ll):
                break
            prev_ll = ll
            prev_params = (weights, means, covs)

            weights, means, covs = self._m_step(X, resp)
            reseeds = self.n_reseeds_
            weights, means, covs = self._reseed_collapsed(
                X, resp, weights, means, covs)
            if self.n_reseeds_ > reseeds:
                # a reseed is a deliberate jump; restart the comparison
                prev_ll = -np.inf

        self._set_parameters(weights, means, covs)
        self.log_likelihoods_ = np.asarray(history)
        return self

    def _init_responsibilities(self, X, k, rng):
        n = X.shape[0]
        if n > _INIT_SUBSAMPLE:
            sub = X[rng.choice(n, size=_INIT_SUBSAMPLE, replace=False)]
        else:
            sub = X
        # several seeding attempts, each refined by a few Lloyd rounds on the
        # subsample; the lowest-inertia attempt picks EM's starting basin
        best_centers, best_inertia = None, np.inf
        for _ in range(_INIT_ATTEMPTS if k > 1 else 1):
            centers = _kmeanspp_centers(sub, k, rng)
            d2 = np.empty((sub.shape[0], k))
            for _ in range(10):
                for c in range(k):
                    d2[:, c] = np.sum((sub - centers[c]) ** 2, axis=1)
                assign = np.argmin(d2, axis=1)
                moved = 0.0
                for c in range(k):
                    rows = sub[assign == c]
                    if rows.shape[0] == 0:
                        continue
                    new = rows.mean(axis=0)
                    moved = max(moved, float(np.sum((new - centers[c]) ** 2)))
                    centers[c] = new
                if moved == 0.0:
                    break
            inertia = float(np.min(d2, axis=1).sum())
            if inertia < best_inertia:
                best_centers, best_inertia = centers.copy(), inertia
        centers = best_centers
        # one hard k-means assignment of the full data
        d2 = np.sum((X[:, None, :] - centers[None, :, :]) ** 2, axis=2) \
            if X.shape[1] * k <= 4096 else None
        if d2 is None:
            d2 = np.empty((n, k))
            for c in range(k):
                d2[:, c] = np.sum((X - centers[c]) ** 2, axis=1)
        assign = np.argmin(d2, axis=1)
        resp = np.zeros((n, k))
        resp[np.arange(n), assign] = 1.0
        # empty cells get a uniform sliver so the first M-step is defined
        empty = resp.sum(axis=0) == 0
        if np.any(empty):
            resp[:, empty] = 1e-8
            resp /= resp.sum(axis=1, keepdims=True)
        return resp

    def _m_step(self, X, resp):
        n = X.shape[0]
        mass = resp.sum(axis=0)
        mass = np.maximum(mass, 10 * np.finfo(float).tiny)
        weights = mass / n
        means = (resp.T @ X) / mass[:, None]
        k = resp.shape[1]
        dim = X.shape[1]
        covs = np.empty((k, dim, dim))
        eye = np.eye(dim)
        for c in range(k):
            diff = X - means[c]
            cov = (diff.T * resp[:, c]) @ diff / mass[c]
            covs[c] = 0.5 * (cov + cov.T) + self.reg * eye
        return weights, means, covs

    def _reseed_collapsed(self, X, resp, weights, means, covs):
        n = X.shape[0]
        collapsed = np.flatnonzero(weights * n < _COLLAPSE_MASS)
        if collapsed.size:
            # worst-explained samples: lowest max-responsibility
            order = np.argsort(resp.max(axis=1), kind="stable")
            pooled = np.cov(X, rowvar=False, bias=True) + self.reg * np.eye(X.shape[1])
            for i, c in enumerate(collapsed):
                means[c] = X[order[i]]
                covs[c] = pooled
                weights[c] = 1.0 / n
                self.n_reseeds_ += 1
            weights = weights / weights.sum()
        return weights, means, covs

    def _weighted_log_prob(self, X, weights, means, covs):
        k = len(weights)
        out = np.empty((X.shape[0], k))
        for c in range(k):
            out[:, c] = np.log(weights[c]) + _log_gaussian(X, means[c], covs[c])
        return out

    def _set_parameters(self, weights, means, covs):
        k, dim = means.shape
        eigvals = np.empty((k, dim))
        eigvecs = np.empty((k, dim, dim))
        floors = np.empty(k)
        for c in range(k):
            pair = sym_eig(covs[c])
            floor = max(self.reg, 1e-12 * pair.eigenvalues[0])
            eigvals[c] = np.maximum(pair.eigenvalues, floor)
            eigvecs[c] = pair.eigenvectors
            floors[c] = floor
        self.weights_ = weights
        self.means_ = means
        self.covariances_ = covs
        self.eigvals_ = eigvals
        self.eigvecs_ = eigvecs
        self.eig_floor_ = floors
        self.n_features_ = dim

    # ---------------------------------------------------------------- query

    @property
    def k_(self) -> int:
        return self.weights_.shape[0]

    def predict(self, X):
        """MAP component per row: argmin ||z_c||^2 + sum log lambda_c - 2 log pi_c."""
        obj = self._map_objective(np.atleast_2d(np.asarray(X, dtype=np.float64)))
        return np.argmin(obj, axis=1)  # ties break toward the smaller index

    def _map_objective(self, X):
        out = np.empty((X.shape[0], self.k_))
        for c in range(self.k_):
            z = self.whiten(c, X)
            out[:, c] = (np.sum(z * z, axis=1)
                         + np.sum(np.log(self.eigvals_[c]))
                         - 2.0 * np.log(self.weights_[c]))
        return out

    def whiten(self, c: int, X):
        """z = Lambda^{-1/2} U^T (x - mu) for component c; accepts 1-D or 2-D."""
        x = np.asarray(X, dtype=np.float64)
        single = x.ndim == 1
        z = (np.atleast_2d(x) - self.means_[c]) @ self.eigvecs_[c]
        z /= np.sqrt(self.eigvals_[c])
        return z[0] if single else z

    def unwhiten(self, c: int, Z):
        """x = U Lambda^{1/2} z + mu for component c."""
        z = np.asarray(Z, dtype=np.float64)
        single = z.ndim == 1
        x = (np.atleast_2d(z) * np.sqrt(self.eigvals_[c])) @ self.eigvecs_[c].T
        x += self.means_[c]
        return x[0] if single else x

    def log_likelihood(self, X) -> float:
        """Total log density over samples, in nats."""
        data = X.vectors if isinstance(X, FeatureSet) else np.atleast_2d(X)
        log_prob = self._weighted_log_prob(
            data, self.weights_, self.means_, self.covariances_)
        return float(logsumexp(log_prob, axis=1).sum())

    def sample(self, n: int, seed: int = 0) -> FeatureSet:
        """Draw n i.i.d. vectors; labels record the drawn component."""
        if n < 0:
            raise InvalidInput("sample count must be non-negative")
        rng = np.random.default_rng(seed)
        dim = self.n_features_
        if n == 0:
            return FeatureSet(np.empty((0, dim)), np.empty(0, dtype=np.int64))
        labels = rng.choice(self.k_, size=n, p=self.weights_)
        out = np.empty((n, dim))
        for c in range(self.k_):
            mask = labels == c
            m = int(mask.sum())
            if m == 0:
                continue
            z = rng.standard_normal((m, dim))
            out[mask] = self.unwhiten(c, z)
        return FeatureSet(out, labels)


def fit_supervised(X, labels=None, superclass_map=None, reg=1e-6) -> GaussianMixture:
    """Fit component statistics from labeled data.

    Component c collects the samples whose superclass s(label) equals c;
    its weight is the empirical frequency and its moments are the empirical
    mean and (biased) covariance plus reg * I. With no superclass_map, labels
    are used as component indices directly.
    """
    data = X if isinstance(X, FeatureSet) else FeatureSet(X, labels)
    if data.labels is None:
        raise InvalidInput("supervised fit requires labels")
    if not reg > 0:
        raise InvalidInput("reg must be positive")

    if superclass_map is None:
        comp = data.labels.copy()
    else:
        observed = np.unique(data.labels)
        missing = [int(v) for v in observed if int(v) not in superclass_map]
        if missing:
            raise InvalidInput(f"superclass_map undefined for labels {missing}")
        comp = np.array([superclass_map[int(v)] for v in data.labels])

    classes = np.unique(comp)
    k = classes.size
    dim = data.dim
    weights = np.empty(k)
    means = np.empty((k, dim))
    covs = np.empty((k, dim, dim))
    eye = np.eye(dim)
    for c, cls in enumerate(classes):
        rows = data.vectors[comp == cls]
        if rows.shape[0] < 2:
            raise InvalidInput(f"superclass {cls} has fewer than 2 samples")
        weights[c] = rows.shape[0] / data.count
        means[c] = rows.mean(axis=0)
        diff = rows - means[c]
        cov = diff.T @ diff / rows.shape[0]
        covs[c] = 0.5 * (cov + cov.T) + reg * eye

    model = GaussianMixture(n_components=k, reg=reg)
    model._set_parameters(weights, means, covs)
    model.log_likelihoods_ = np.array([model.log_likelihood(data.vectors)])
    model.n_reseeds_ = 0
    return model
