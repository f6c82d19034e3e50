"""Partially linear GP model ``y = theta(x) t + f(x) + eps``.

Both ``theta`` (the conditional average treatment effect) and ``f`` carry
zero-mean GP priors and ``eps ~ N(0, 1/s_eps)``. Because everything is
jointly Gaussian, the posterior of ``theta`` at query points is available in
closed form.

Two routes are provided. The production route conditions directly on the
marginal of ``y``::

    cov(y)          = T Phi_nn T + Psi_nn + I / s_eps
    cov(theta~, y)  = Phi_nm^T T

and never inverts the prior Gram of ``theta``. The precision route assembles
the joint precision over ``(theta, theta~, f, y)`` and inverts it. It is only
meant for small instances and cross-checks the production route.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import ConfigError, ShapeError
from .gaussian import JITTER0, MvnDistribution, cholesky_jittered, condition
from .kernels import KernelSpec, gram, rbf

__all__ = [
    "Dataset",
    "ModelConfig",
    "PosteriorPredictive",
    "PartiallyLinearGP",
    "joint_covariance",
    "joint_precision",
    "posterior_cate",
    "posterior_cate_via_joint",
    "posterior_cate_via_precision",
    "prior_joint",
    "posterior_outcome_fit",
]


@dataclass(frozen=True)
class Dataset:
    """Observed sample: covariates ``X`` (n, d), binary treatment ``t``, outcome ``y``."""

    X: np.ndarray
    t: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        t = np.asarray(self.t)
        y = np.asarray(self.y, dtype=float)
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise ShapeError(f"X must be (n, d) with n, d >= 1, got {X.shape}")
        n = X.shape[0]
        if t.shape != (n,) or y.shape != (n,):
            raise ShapeError(f"t {t.shape} and y {y.shape} must both have length {n}")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ShapeError("X and y must be finite")
        tf = t.astype(float)
        if not np.all((tf == 0.0) | (tf == 1.0)):
            raise ShapeError("treatment vector must be binary (0/1)")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "t", tf)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.X[idx], self.t[idx], self.y[idx])


@dataclass(frozen=True)
class ModelConfig:
    kernel_theta: KernelSpec = field(default_factory=rbf)
    kernel_f: KernelSpec = field(default_factory=rbf)
    noise_precision: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.noise_precision) and self.noise_precision > 0):
            raise ConfigError(f"noise_precision must be positive, got {self.noise_precision}")

    def to_dict(self) -> dict:
        return {
            "kernel_theta": self.kernel_theta.to_dict(),
            "kernel_f": self.kernel_f.to_dict(),
            "noise_precision": self.noise_precision,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(
            KernelSpec.from_dict(d["kernel_theta"]),
            KernelSpec.from_dict(d["kernel_f"]),
            float(d["noise_precision"]),
        )


@dataclass(frozen=True)
class PosteriorPredictive:
    mean: np.ndarray
    cov: np.ndarray

    @property
    def var(self) -> np.ndarray:
        return np.diag(self.cov).copy()


def _query_points(Xq, d: int) -> np.ndarray:
    Xq = np.asarray(Xq, dtype=float)
    if Xq.ndim == 1:
        Xq = Xq[None, :] if d > 1 or Xq.size == 1 else Xq[:, None]
    if Xq.ndim != 2 or Xq.shape[0] < 1:
        raise ShapeError(f"query points must be a non-empty (m, d) array, got {Xq.shape}")
    if Xq.shape[1] != d:
        raise ShapeError(f"query points have dimension {Xq.shape[1]}, data has {d}")
    return Xq


def joint_covariance(cfg: ModelConfig, X, Xq) -> np.ndarray:
    """Prior covariance of ``(theta(X), theta(Xq), f(X))``, size ``(2n + m)``."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    Xq = _query_points(Xq, X.shape[1])
    n, m = X.shape[0], Xq.shape[0]
    out = np.zeros((2 * n + m, 2 * n + m))
    out[: n + m, : n + m] = gram(cfg.kernel_theta, np.vstack([X, Xq]))
    out[n + m:, n + m:] = gram(cfg.kernel_f, X)
    return out


def _inverse_spd(M: np.ndarray, name: str, jitter0: float) -> np.ndarray:
    L, _ = cholesky_jittered(M, jitter0, name=name)
    Linv = linalg.solve_triangular(L, np.eye(M.shape[0]), lower=True)
    return Linv.T @ Linv


def joint_precision(cfg: ModelConfig, data: Dataset, Xq, jitter0: float = JITTER0) -> np.ndarray:
    """Precision matrix of ``(theta, theta~, f, y)``, size ``(3n + m)``.

    Block ordering is ``theta`` (n), ``theta~`` (m), ``f`` (n), ``y`` (n). The
    prior blocks are inverted explicitly, so this is an oracle for small
    problems, not a production path.
    """
    Xq = _query_points(Xq, data.d)
    n, m = data.n, Xq.shape[0]
    s = cfg.noise_precision
    Phi = gram(cfg.kernel_theta, np.vstack([data.X, Xq]))
    Psi = gram(cfg.kernel_f, data.X)
    T = np.diag(data.t)
    I = np.eye(n)

    th = slice(0, n)
    fb = slice(n + m, 2 * n + m)
    yb = slice(2 * n + m, 3 * n + m)
    S = np.zeros((3 * n + m, 3 * n + m))
    S[: n + m, : n + m] = _inverse_spd(Phi, "theta prior Gram", jitter0)
    S[fb, fb] = _inverse_spd(Psi, "f prior Gram", jitter0)
    S[yb, yb] = s * I

    S[th, th] += s * T @ T
    S[th, fb] += s * T
    S[th, yb] += -s * T
    S[fb, th] += s * T
    S[fb, fb] += s * I
    S[fb, yb] += -s * I
    S[yb, th] += -s * T
    S[yb, fb] += -s * I
    return 0.5 * (S + S.T)


def posterior_cate_via_precision(cfg: ModelConfig, data: Dataset, Xq,
                                 jitter0: float = JITTER0) -> PosteriorPredictive:
    """Posterior of ``theta(Xq)`` by dense inversion of the joint precision."""
    Xq = _query_points(Xq, data.d)
    n, m = data.n, Xq.shape[0]
    Sigma = np.linalg.inv(joint_precision(cfg, data, Xq, jitter0))
    Sigma = 0.5 * (Sigma + Sigma.T)
    k = 2 * n + m
    S_ty = Sigma[:k, k:]
    S_yy = Sigma[k:, k:]
    M = S_ty @ np.linalg.inv(S_yy)
    mu = M @ data.y
    cov = Sigma[:k, :k] - M @ S_ty.T
    q = slice(n, n + m)
    return PosteriorPredictive(mu[q], 0.5 * (cov[q, q] + cov[q, q].T))


class PartiallyLinearGP:
    """Exact posterior for the partially linear GP model with fixed hyperparameters.

    Fitting factorizes the marginal covariance of ``y`` once; predictions at
    any number of query sets reuse the cached factor and do not mutate state.

    Examples
    --------
    >>> import numpy as np
    >>> data = Dataset(np.zeros((1, 2)), np.array([1]), np.array([3.0]))
    >>> post = PartiallyLinearGP(ModelConfig()).fit(data).predict_cate(np.zeros((1, 2)))
    >>> round(float(post.mean[0]), 6), round(float(post.cov[0, 0]), 6)
    (1.0, 0.666667)
    """

    def __init__(self, config: ModelConfig, jitter0: float = JITTER0):
        self.config = config
        self.jitter0 = jitter0
        self.data = None
        self.L = None
        self.delta = None
        self.alpha = None

    def fit(self, data: Dataset) -> "PartiallyLinearGP":
        cfg = self.config
        Phi = gram(cfg.kernel_theta, data.X)
        Psi = gram(cfg.kernel_f, data.X)
        t = data.t
        K = t[:, None] * Phi * t[None, :] + Psi
        K[np.diag_indices_from(K)] += 1.0 / cfg.noise_precision
        self.L, self.delta = cholesky_jittered(K, self.jitter0, name="marginal covariance of y")
        self.alpha = linalg.cho_solve((self.L, True), data.y, check_finite=False)
        self.data = data
        self._Psi = Psi
        return self

    def _check_fitted(self):
        if self.L is None:
            raise RuntimeError("model is not fitted; call fit() first")

    def _condition_on_y(self, cross: np.ndarray, prior: np.ndarray) -> PosteriorPredictive:
        mean = cross @ self.alpha
        A = linalg.solve_triangular(self.L, cross.T, lower=True, check_finite=False)
        cov = prior - A.T @ A
        return PosteriorPredictive(mean, 0.5 * (cov + cov.T))

    def predict_cate(self, Xq) -> PosteriorPredictive:
        self._check_fitted()
        Xq = _query_points(Xq, self.data.d)
        k = self.config.kernel_theta
        cross = gram(k, Xq, self.data.X) * self.data.t[None, :]
        return self._condition_on_y(cross, gram(k, Xq))

    def outcome_fit(self) -> PosteriorPredictive:
        """Posterior of the nuisance ``f`` at the training covariates."""
        self._check_fitted()
        return self._condition_on_y(self._Psi, self._Psi)


def posterior_cate(cfg: ModelConfig, data: Dataset, Xq) -> PosteriorPredictive:
    return PartiallyLinearGP(cfg).fit(data).predict_cate(Xq)


def posterior_outcome_fit(cfg: ModelConfig, data: Dataset) -> PosteriorPredictive:
    return PartiallyLinearGP(cfg).fit(data).outcome_fit()


def prior_joint(cfg: ModelConfig, data: Dataset, Xq) -> MvnDistribution:
    """Joint prior over ``(theta, theta~, f, y)`` as an explicit covariance.

    Useful together with :func:`plgp.gaussian.condition` as a third route.
    """
    Xq = _query_points(Xq, data.d)
    n, m = data.n, Xq.shape[0]
    C = joint_covariance(cfg, data.X, Xq)
    k = 2 * n + m
    # y = T theta + f + eps, so cov(Theta, y) = C[:, theta] T + C[:, f]
    B = np.zeros((k, n))
    B[:n] = np.diag(data.t)
    B[n + m:] = np.eye(n)
    cross = C @ B
    yy = B.T @ C @ B + np.eye(n) / cfg.noise_precision
    full = np.block([[C, cross], [cross.T, yy]])
    return MvnDistribution(np.zeros(k + n), 0.5 * (full + full.T))


def posterior_cate_via_joint(cfg: ModelConfig, data: Dataset, Xq) -> PosteriorPredictive:
    post = condition(prior_joint(cfg, data, Xq), data.y)
    n = data.n
    m = post.dim - 2 * n
    return PosteriorPredictive(post.mean[n:n + m], post.cov[n:n + m, n:n + m])
