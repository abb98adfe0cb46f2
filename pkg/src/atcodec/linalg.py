"""Dense symmetric linear algebra helpers.

Only the small surface the codec needs: symmetric eigendecomposition with a
reproducible sign convention, and SPD diagonal regularization.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput, NumericalFailure

SYMMETRY_RTOL = 1e-9


def symmetrize(a) -> np.ndarray:
    """Validate and symmetrize a square matrix as (A + A^T) / 2."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidInput(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidInput("matrix has non-finite entries")
    scale = np.max(np.abs(a))
    if scale > 0 and np.max(np.abs(a - a.T)) > SYMMETRY_RTOL * scale:
        raise InvalidInput("matrix is not symmetric within tolerance")
    return 0.5 * (a + a.T)


@dataclass(frozen=True)
class EigenPair:
    """Eigendecomposition of a symmetric matrix.

    eigenvalues are sorted descending and clamped at 0; eigenvectors are
    orthonormal columns, column n paired with eigenvalue n.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def sym_eig(a) -> EigenPair:
    """Eigendecompose a symmetric matrix.

    Returns eigenvalues sorted descending (negative numerical residue floored
    at 0) and orthonormal eigenvectors with a deterministic sign: each column
    is flipped so its largest-magnitude entry is positive.
    """
    a = symmetrize(a)
    try:
        w, v = np.linalg.eigh(a)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK rarely fails
        raise NumericalFailure(f"eigendecomposition failed: {exc}") from exc
    order = np.argsort(w)[::-1]
    w = np.maximum(w[order], 0.0)
    v = v[:, order]
    # sign convention: largest-|entry| of each eigenvector made positive
    idx = np.argmax(np.abs(v), axis=0)
    signs = np.sign(v[idx, np.arange(v.shape[1])])
    signs[signs == 0] = 1.0
    v = v * signs
    return EigenPair(eigenvalues=w, eigenvectors=v)


def regularize_spd(a, eps: float) -> np.ndarray:
    """Return A + eps * I."""
    a = symmetrize(a)
    if not (eps > 0):
        raise InvalidInput("eps must be positive")
    return a + eps * np.eye(a.shape[0])
