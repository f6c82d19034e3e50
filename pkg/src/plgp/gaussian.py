"""Dense multivariate normal primitives built on a jittered Cholesky factor."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import NumericalError, ShapeError

__all__ = [
    "MvnDistribution",
    "cholesky_jittered",
    "cho_solve",
    "condition",
    "sample",
    "log_pdf",
    "JITTER0",
]

JITTER0 = 1e-8
# delta ladder: 0, jitter0, 10 jitter0, ..., 1e6 jitter0
MAX_JITTER_POWER = 6


def cholesky_jittered(M, jitter0: float = JITTER0, name: str = "matrix") -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of ``M + delta * I``.

    ``delta`` is the first value of ``0, jitter0, 10*jitter0, ..., 1e6*jitter0``
    for which the factorization succeeds.

    Returns
    -------
    L : ndarray
        Lower-triangular factor.
    delta : float
        The diagonal inflation that was applied.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ShapeError(f"{name} must be square, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise NumericalError(f"{name} contains non-finite entries")
    eye = np.eye(M.shape[0])
    deltas = [0.0] + [jitter0 * 10.0 ** k for k in range(MAX_JITTER_POWER + 1)]
    for delta in deltas:
        try:
            L = np.linalg.cholesky(M + delta * eye if delta else M)
        except np.linalg.LinAlgError:
            continue
        return L, delta
    raise NumericalError(
        f"Cholesky factorization of {name} ({M.shape[0]}x{M.shape[0]}) failed "
        f"with jitter up to {deltas[-1]:g}"
    )


def cho_solve(L: np.ndarray, B) -> np.ndarray:
    """Solve ``(L L^T) X = B`` by two triangular solves."""
    return linalg.cho_solve((L, True), B, check_finite=False)


def _sym(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.T)


@dataclass(frozen=True)
class MvnDistribution:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if mean.ndim != 1 or cov.shape != (mean.size, mean.size):
            raise ShapeError(f"mean {mean.shape} and cov {cov.shape} are inconsistent")
        scale = max(np.abs(cov).max(initial=0.0), 1.0)
        if np.abs(cov - cov.T).max(initial=0.0) > 1e-12 * scale:
            raise ShapeError("covariance matrix is not symmetric")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.size


def condition(joint: MvnDistribution, observed_b, jitter0: float = JITTER0) -> MvnDistribution:
    """Distribution of the leading block ``a`` given the trailing block ``b``.

    The partition is set by ``len(observed_b)``: the last ``k_b`` coordinates
    of ``joint`` are conditioned on.
    """
    b = np.atleast_1d(np.asarray(observed_b, dtype=float))
    kb = b.size
    k = joint.dim
    if b.ndim != 1 or kb < 1 or kb >= k:
        raise ShapeError(f"cannot condition a {k}-dim joint on {kb} observed values")
    ka = k - kb
    mu_a, mu_b = joint.mean[:ka], joint.mean[ka:]
    S_aa = joint.cov[:ka, :ka]
    S_ab = joint.cov[:ka, ka:]
    S_bb = joint.cov[ka:, ka:]
    L, _ = cholesky_jittered(S_bb, jitter0, name="observed-block covariance")
    A = linalg.solve_triangular(L, S_ab.T, lower=True, check_finite=False)
    r = linalg.solve_triangular(L, b - mu_b, lower=True, check_finite=False)
    return MvnDistribution(mu_a + A.T @ r, _sym(S_aa - A.T @ A))


def sample(dist: MvnDistribution, rng: np.random.Generator, count: int = 1,
           jitter0: float = JITTER0) -> np.ndarray:
    """Draw ``count`` rows ``mean + L z`` with ``z`` standard normal."""
    if count < 1:
        raise ShapeError("count must be positive")
    L, _ = cholesky_jittered(dist.cov, jitter0, name="sampling covariance")
    z = rng.standard_normal((count, dist.dim))
    return dist.mean + z @ L.T


def log_pdf(dist: MvnDistribution, x, jitter0: float = JITTER0) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != dist.mean.shape:
        raise ShapeError(f"point has shape {x.shape}, distribution has dim {dist.dim}")
    L, _ = cholesky_jittered(dist.cov, jitter0, name="density covariance")
    r = linalg.solve_triangular(L, x - dist.mean, lower=True, check_finite=False)
    return float(-0.5 * (dist.dim * np.log(2 * np.pi) + r @ r) - np.log(np.diag(L)).sum())
