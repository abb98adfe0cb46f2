"""Closed-form rate-distortion machinery for Gaussian mixtures.

Reverse water-filling per component, a shared quality parameter theta across
the mixture, the mixture-conditional RD curve, and the genie-aided total-rate
bound (conditional rate plus the mode entropy H(C)).

Rates are in bits per vector; distortions are source-domain MSE per vector.
Whitened-domain per-coefficient targets live in a separate map to keep the
units apart. Functions accept any fitted mixture exposing ``weights_`` (K,)
and ``eigvals_`` (K, N) arrays.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput

THETA_TOL = 1e-9
THETA_MAX_ITER = 200


@dataclass(frozen=True)
class RdPoint:
    theta: float
    rate_bits: float
    distortion: float
    clamped: bool = False  # theta hit the zero-rate end of the bracket


def gaussian_rd(lambdas, theta: float):
    """Rate and distortion of a single Gaussian component at water level theta.

    rate = 1/2 * sum log2(lambda / min(lambda, theta)); distortion is the sum
    of min(lambda, theta) over coefficients.
    """
    lambdas = np.asarray(lambdas, dtype=np.float64)
    if np.any(lambdas <= 0) or not theta > 0:
        raise InvalidInput("eigenvalues and theta must be positive")
    d_n = np.minimum(lambdas, theta)
    rate = 0.5 * float(np.sum(np.log2(lambdas / d_n)))
    return rate, float(np.sum(d_n))


def _mixture_distortion(weights, eigvals, theta):
    return float(np.sum(weights * np.sum(np.minimum(eigvals, theta), axis=1)))


def conditional_rd(model, theta: float) -> RdPoint:
    """Mixture-conditional RD point: pi-weighted per-component RD at shared theta."""
    if not theta > 0:
        raise InvalidInput("theta must be positive")
    w = model.weights_
    lam = model.eigvals_
    d_n = np.minimum(lam, theta)
    rate = 0.5 * float(np.sum(w * np.sum(np.log2(lam / d_n), axis=1)))
    return RdPoint(theta=float(theta), rate_bits=rate,
                   distortion=_mixture_distortion(w, lam, theta))


def mode_entropy_bits(model) -> float:
    """Entropy H(C) of the mixture weights in bits."""
    w = np.asarray(model.weights_)
    return float(-np.sum(w * np.log2(w)))


def genie_bound(model, theta: float) -> RdPoint:
    """Conditional RD rate plus H(C): the achievable genie-aided total rate."""
    point = conditional_rd(model, theta)
    return RdPoint(theta=point.theta,
                   rate_bits=point.rate_bits + mode_entropy_bits(model),
                   distortion=point.distortion)


def solve_theta(model, d_target: float) -> RdPoint:
    """Invert the distortion budget for theta by bisection.

    D(theta) = sum_c pi_c sum_n min(lambda_cn, theta) is continuous and
    non-decreasing, so bisection is valid. Targets at or above the total
    variance clamp to the zero-rate point theta = lambda_max (flagged on the
    returned point).
    """
    if not d_target > 0:
        raise InvalidInput("distortion target must be positive")
    w = model.weights_
    lam = model.eigvals_
    lam_max = float(np.max(lam))
    total_var = _mixture_distortion(w, lam, lam_max)
    if d_target >= total_var:
        return RdPoint(theta=lam_max, rate_bits=0.0, distortion=total_var,
                       clamped=d_target > total_var)

    lo = min(float(np.min(lam)) * 1e-6, d_target / lam.size)
    hi = lam_max
    for _ in range(THETA_MAX_ITER):
        mid = 0.5 * (lo + hi)
        d_mid = _mixture_distortion(w, lam, mid)
        if abs(d_mid - d_target) <= THETA_TOL * d_target:
            lo = hi = mid
            break
        if d_mid < d_target:
            lo = mid
        else:
            hi = mid
    theta = 0.5 * (lo + hi)
    point = conditional_rd(model, theta)
    return RdPoint(theta=theta, rate_bits=point.rate_bits, distortion=point.distortion)


def target_distortions(model, theta: float) -> np.ndarray:
    """Whitened-domain per-coefficient targets d_cn = min(1, theta / lambda_cn)."""
    if not theta > 0:
        raise InvalidInput("theta must be positive")
    return np.minimum(1.0, theta / model.eigvals_)
