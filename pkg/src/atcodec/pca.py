"""Global PCA reduction stage and its composition with per-mode whitening.

The complexity-aware variant first projects features onto the top-M global
principal directions, fits the mixture in the reduced space, and composes
the two linear maps into one per-mode whitening operator. The full global
spectrum is kept alongside the truncated basis so dimension selection stays
auditable after the fact.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InvalidInput
from .gmm import FeatureSet, GaussianMixture
from .linalg import sym_eig

@dataclass(frozen=True)
class PcaStage:
    """Truncated global PCA: x_bar = V^T (x - mean), V with orthonormal columns."""

    mean: np.ndarray      # (N,)
    basis: np.ndarray     # (N, M)
    spectrum: np.ndarray  # (N,) full eigenvalue spectrum, descending

    @property
    def n_features(self) -> int:
        return self.mean.shape[0]

    @property
    def m(self) -> int:
        return self.basis.shape[1]

    def truncate(self, m: int) -> "PcaStage":
        if not 1 <= m <= self.basis.shape[1]:
            raise InvalidInput("M out of range for this stage")
        return PcaStage(mean=self.mean, basis=self.basis[:, :m],
                        spectrum=self.spectrum)

    def reduce(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        return (X - self.mean) @ self.basis

    def lift(self, Xr) -> np.ndarray:
        Xr = np.asarray(Xr, dtype=np.float64)
        return Xr @ self.basis.T + self.mean

    @property
    def discarded_energy(self) -> float:
        """Eigenvalue mass beyond the retained M directions (analytic MSE floor)."""
        return float(np.sum(self.spectrum[self.m:]))


def fit_global_pca(data) -> PcaStage:
    """Eigendecompose the global (unbiased) covariance; keeps the full basis."""
    X = data.vectors if isinstance(data, FeatureSet) else FeatureSet(data).vectors
    if X.shape[0] < 2:
        raise InvalidInput("global PCA needs at least 2 samples")
    mean = X.mean(axis=0)
    diff = X - mean
    cov = diff.T @ diff / (X.shape[0] - 1)
    pair = sym_eig(cov)
    return PcaStage(mean=mean, basis=pair.eigenvectors, spectrum=pair.eigenvalues)


def select_M(lambdas, gamma: float) -> int:
    """Smallest m whose eigenvalue prefix explains a fraction gamma of the total."""
    lam = np.asarray(lambdas, dtype=np.float64)
    if np.any(lam < 0) or lam.sum() <= 0:
        raise InvalidInput("spectrum must be non-negative with positive mass")
    if not 0 < gamma <= 1:
        raise InvalidInput("gamma must lie in (0, 1]")
    if gamma == 1.0:
        return int(np.count_nonzero(lam > 0))
    ratios = np.cumsum(lam) / lam.sum()
    return int(np.searchsorted(ratios, gamma) + 1)


def reduce(stage: PcaStage, data: FeatureSet) -> FeatureSet:
    """Project a feature set into the reduced space; labels carry through."""
    if data.dim != stage.n_features:
        raise InvalidInput("feature dimension does not match the PCA stage")
    return FeatureSet(stage.reduce(data.vectors), data.labels)


def compose_reduced_transforms(stage: PcaStage, reduced_gmm: GaussianMixture):
    """Fold PCA and per-mode whitening into direct source-space operators.

    Returns (mu_tilde, T_tilde) with mu_tilde[c] = mean + V mu_bar_c and
    T_tilde[c] = Lambda_bar_c^{-1/2} U_bar_c^T V^T, so that
    T_tilde[c] @ (x - mu_tilde[c]) equals whitening after reduction.
    """
    if reduced_gmm.n_features_ != stage.m:
        raise InvalidInput("reduced model dimension does not match the PCA stage")
    k = reduced_gmm.k_
    n, m = stage.n_features, stage.m
    mu_tilde = np.empty((k, n))
    t_tilde = np.empty((k, m, n))
    for c in range(k):
        mu_tilde[c] = stage.mean + stage.basis @ reduced_gmm.means_[c]
        white = reduced_gmm.eigvecs_[c].T / np.sqrt(reduced_gmm.eigvals_[c])[:, None]
        t_tilde[c] = white @ stage.basis.T
    return mu_tilde, t_tilde


def param_count(n: int, m: Optional[int], k: int, variant: str) -> int:
    """Stored-parameter count of the full and PCA-reduced schemes."""
    if n < 1 or k < 1:
        raise InvalidInput("dimensions must be positive")
    if variant == "full":
        return n * n * k + n * k
    if variant == "pca":
        if m is None or m < 1:
            raise InvalidInput("pca variant needs a positive M")
        return n * m + n + (m + 1) * k * m
    raise InvalidInput(f"unknown variant {variant!r}")
