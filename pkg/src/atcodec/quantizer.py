"""Lloyd-Max scalar quantizers for a standard Gaussian source.

A bank holds one quantizer per admissible level count L. Each quantizer is
the fixed point of the Lloyd iteration computed with analytic Gaussian
interval moments, so centroids, boundaries, interval probabilities and the
distortion d_Q(L) are all closed-form given the final partition.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .errors import InvalidInput

# Geometric-ish ladder, dense at low rates where the water-filling targets move fastest.
DEFAULT_LADDER = (1, 2, 3, 4, 5, 6, 8, 10, 12, 16, 24, 32, 48, 64,
                  96, 128, 192, 256, 384, 512, 768, 1024)

_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def _phi(x):
    """Standard normal pdf, zero at +-inf."""
    out = np.zeros_like(x)
    finite = np.isfinite(x)
    out[finite] = _INV_SQRT_2PI * np.exp(-0.5 * x[finite] ** 2)
    return out


def _interval_moments(b):
    """Mass, first and second moments of N(0,1) on consecutive intervals of b."""
    mass = ndtr(b[1:]) - ndtr(b[:-1])
    pdf = _phi(b)
    first = pdf[:-1] - pdf[1:]
    bb = np.where(np.isfinite(b), b, 0.0)  # b*phi(b) -> 0 at +-inf
    second = mass + bb[:-1] * pdf[:-1] - bb[1:] * pdf[1:]
    return mass, first, second


@dataclass(frozen=True)
class LloydMaxQuantizer:
    """L-level Lloyd-Max quantizer for Z ~ N(0,1).

    boundaries has length L+1 with b[0] = -inf and b[L] = +inf; centroids are
    strictly increasing and symmetric (q_j = -q_{L-1-j}, 0-based).
    """

    levels: int
    centroids: np.ndarray
    boundaries: np.ndarray
    mse: float
    probabilities: np.ndarray = field(repr=False, default=None)

    def quantize(self, z):
        """Map values to 0-based indices; exact-boundary ties go left."""
        z = np.asarray(z, dtype=np.float64)
        if not np.all(np.isfinite(z)):
            raise InvalidInput("cannot quantize non-finite values")
        return np.searchsorted(self.boundaries[1:-1], z, side="left")

    def dequantize(self, j):
        j = np.asarray(j)
        if np.any(j < 0) or np.any(j >= self.levels):
            raise InvalidInput("quantizer index out of range")
        return self.centroids[j]

    def interval_prob(self, j):
        j = np.asarray(j)
        if np.any(j < 0) or np.any(j >= self.levels):
            raise InvalidInput("quantizer index out of range")
        return self.probabilities[j]


def _fixed_point_residual(q):
    """Residual of the centroid condition q_j = E[Z | interval_j(b(q))]."""
    b = np.empty(q.size + 1)
    b[0], b[-1] = -np.inf, np.inf
    b[1:-1] = 0.5 * (q[:-1] + q[1:])
    mass, first, _ = _interval_moments(b)
    return q - first / mass, b, mass, first


def _newton_polish(q, tol, max_iter=50):
    """Drive the centroid fixed point below tol with damped Newton steps.

    Plain Lloyd iteration contracts at a rate approaching 1 for large level
    counts, so a small per-step movement does not imply a small residual.
    The residual is tridiagonal in q, which makes exact Newton cheap.
    """
    from scipy.linalg import solve_banded

    L = q.size
    for _ in range(max_iter):
        res, b, mass, first = _fixed_point_residual(q)
        if np.max(np.abs(res)) < tol:
            break
        pdf = _phi(b)
        bpdf = np.where(np.isfinite(b), b, 0.0) * pdf
        # d first_j / d b = (-b pdf) at the lower edge, (+b pdf) at the upper;
        # d mass_j / d b = (-pdf) / (+pdf); interior edges split 1/2 per centroid
        r = first / mass
        d_lo = 0.5 * (bpdf[:-1] - r * pdf[:-1]) / mass    # d res_j / d q_{j-1}
        d_hi = 0.5 * (r * pdf[1:] - bpdf[1:]) / mass      # d res_j / d q_{j+1}
        diag = 1.0 + d_lo + d_hi
        ab = np.zeros((3, L))
        ab[0, 1:] = d_hi[:-1]
        ab[1] = diag
        ab[2, :-1] = d_lo[1:]
        step = solve_banded((1, 1), ab, res)
        # keep centroids strictly increasing; halve the step until they are
        scale = 1.0
        for _ in range(30):
            cand = q - scale * step
            if np.all(np.diff(cand) > 0):
                break
            scale *= 0.5
        q = cand
        q = 0.5 * (q - q[::-1])
    return q


def design_lloyd_max(levels: int, tol: float = 1e-10,
                     max_iter: int = 10000) -> LloydMaxQuantizer:
    """Design the L-level Lloyd-Max quantizer for N(0,1).

    Runs the Lloyd iteration with analytic interval moments to get close,
    then Newton-polishes until the centroid fixed-point residual falls below
    tol. The Gaussian fixed point is unique per L, so initialization
    (equiprobable-quantile conditional means) affects only speed.
    """
    if levels < 1:
        raise InvalidInput("level count must be >= 1")
    if levels == 1:
        return LloydMaxQuantizer(
            levels=1,
            centroids=np.zeros(1),
            boundaries=np.array([-np.inf, np.inf]),
            mse=1.0,
            probabilities=np.ones(1),
        )

    # initialize from equiprobable quantiles
    from scipy.special import ndtri
    edges = np.empty(levels + 1)
    edges[0], edges[-1] = -np.inf, np.inf
    edges[1:-1] = ndtri(np.arange(1, levels) / levels)
    mass, first, _ = _interval_moments(edges)
    q = first / mass

    b = np.empty(levels + 1)
    b[0], b[-1] = -np.inf, np.inf
    for _ in range(max_iter):
        b[1:-1] = 0.5 * (q[:-1] + q[1:])
        mass, first, _ = _interval_moments(b)
        q_new = first / mass
        q_new = 0.5 * (q_new - q_new[::-1])  # enforce exact symmetry
        move = np.max(np.abs(q_new - q))
        q = q_new
        if move < 1e-6:
            break

    q = _newton_polish(q, tol)
    b[1:-1] = 0.5 * (q[:-1] + q[1:])
    mass, first, second = _interval_moments(b)
    mse = float(np.sum(second - 2.0 * q * first + q * q * mass))
    return LloydMaxQuantizer(
        levels=levels,
        centroids=q,
        boundaries=b,
        mse=mse,
        probabilities=mass,
    )


@dataclass(frozen=True)
class QuantizerBank:
    """One Lloyd-Max quantizer per admissible level count, sorted ascending."""

    ladder: tuple
    quantizers: dict

    def __getitem__(self, levels: int) -> LloydMaxQuantizer:
        return self.quantizers[levels]

    @property
    def mses(self) -> np.ndarray:
        return np.array([self.quantizers[L].mse for L in self.ladder])


_BANK_CACHE = {}


def build_bank(ladder=DEFAULT_LADDER, tol: float = 1e-10) -> QuantizerBank:
    ladder = tuple(sorted(set(int(L) for L in ladder)))
    if not ladder or ladder[0] < 1:
        raise InvalidInput("ladder entries must be positive integers")
    if 1 not in ladder:
        raise InvalidInput("ladder must contain L=1")
    cached = _BANK_CACHE.get((ladder, tol))
    if cached is not None:
        return cached
    # the design is deterministic and banks are immutable, so identical
    # requests within one process can share a single instance
    quantizers = {L: design_lloyd_max(L, tol=tol) for L in ladder}
    mses = [quantizers[L].mse for L in ladder]
    if not all(a > b for a, b in zip(mses, mses[1:])):
        raise InvalidInput("quantizer distortion must be strictly decreasing in L")
    bank = QuantizerBank(ladder=ladder, quantizers=quantizers)
    _BANK_CACHE[(ladder, tol)] = bank
    return bank


def select_levels(bank: QuantizerBank, d_target):
    """Coarsest admissible level count: min{L : d_Q(L) <= d_target}.

    Targets below the finest ladder distortion clamp to the finest entry;
    callers interested in saturation can compare against bank.mses[-1].
    """
    d_target = np.asarray(d_target, dtype=np.float64)
    if np.any(d_target <= 0):
        raise InvalidInput("distortion target must be positive")
    mses = bank.mses  # strictly decreasing
    # index of first ladder entry with mse <= d_target
    idx = np.searchsorted(-mses, -d_target, side="left")
    idx = np.minimum(idx, len(bank.ladder) - 1)
    return np.asarray(bank.ladder)[idx]


@dataclass(frozen=True)
class QuantizationMap:
    """Selected level counts L*_{c,n} for one quality point theta."""

    theta: float
    levels: np.ndarray  # (K, N) int32
    saturated: int = 0  # entries whose target fell below the finest d_Q


def build_quantization_map(model, bank: QuantizerBank, theta: float) -> QuantizationMap:
    """Coarsest-admissible selection from the reverse-water-filling targets."""
    from .rdtheory import target_distortions
    d = target_distortions(model, theta)
    levels = select_levels(bank, d).astype(np.int32)
    saturated = int(np.count_nonzero(d < bank.mses[-1]))
    return QuantizationMap(theta=float(theta), levels=levels, saturated=saturated)
