"""Cross-fitted linear DML baseline for CATE.

Nuisances are fitted out of fold: ``E[Y|X]`` by least squares and ``E[T|X]``
by logistic regression, both with an intercept. The effect is then
``theta(x) = c0 + c^T x``, estimated by least squares of the outcome residual
on ``(1, x) * treatment residual`` over all folds.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import ConfigError, EstimationError, ShapeError
from .model import Dataset

__all__ = ["DmlConfig", "dml_linear_cate", "DmlLinear", "fold_ids", "fit_logistic", "fit_linear"]


@dataclass(frozen=True)
class DmlConfig:
    folds: int = 2
    ridge: float = 1e-8
    seed: int = 0
    newton_max_iter: int = 100
    newton_tol: float = 1e-10

    def __post_init__(self):
        if self.folds < 2:
            raise ConfigError("DML needs at least two folds")
        if self.ridge < 0:
            raise ConfigError("ridge must be nonnegative")


def _design(X: np.ndarray) -> np.ndarray:
    return np.column_stack([np.ones(len(X)), X])


def _ridge_solve(Z: np.ndarray, target: np.ndarray, ridge: float) -> np.ndarray:
    A = Z.T @ Z
    A[np.diag_indices_from(A)] += ridge
    return np.linalg.solve(A, Z.T @ target)


def fit_linear(X, y, ridge: float = 1e-8) -> np.ndarray:
    """Least-squares coefficients ``(intercept, slopes)``."""
    return _ridge_solve(_design(X), y, ridge)


def fit_logistic(X, t, ridge: float = 1e-8, max_iter: int = 100, tol: float = 1e-10) -> np.ndarray:
    """Logistic regression coefficients by damped Newton iterations."""
    Z = _design(X)
    w = np.zeros(Z.shape[1])

    def objective(w):
        eta = Z @ w
        # negative log-likelihood, stable form
        return np.sum(np.logaddexp(0.0, eta) - t * eta) + 0.5 * ridge * w @ w

    obj = objective(w)
    for _ in range(max_iter):
        p = expit(Z @ w)
        grad = Z.T @ (p - t) + ridge * w
        H = (Z * (p * (1 - p))[:, None]).T @ Z
        H[np.diag_indices_from(H)] += ridge + 1e-12
        step = np.linalg.solve(H, grad)
        lr = 1.0
        while lr > 1e-8:
            w_new = w - lr * step
            obj_new = objective(w_new)
            if obj_new <= obj:
                break
            lr *= 0.5
        else:
            break
        done = np.max(np.abs(w_new - w)) < tol
        w, obj = w_new, obj_new
        if done:
            break
    return w


def fold_ids(n: int, folds: int, seed: int) -> np.ndarray:
    """Balanced fold labels, a deterministic function of ``(seed, n)``."""
    if folds > n:
        raise ConfigError(f"cannot split {n} observations into {folds} folds")
    perm = np.random.default_rng(seed).permutation(n)
    ids = np.empty(n, dtype=int)
    ids[perm] = np.arange(n) % folds
    return ids


class DmlLinear:
    """Partialling-out estimator with a linear effect model."""

    def __init__(self, config: DmlConfig | None = None):
        self.config = config or DmlConfig()
        self.coef_ = None

    def fit(self, data: Dataset) -> "DmlLinear":
        cfg = self.config
        n, d = data.n, data.d
        if n < 2 * (d + 2):
            raise EstimationError(f"need at least {2 * (d + 2)} observations, got {n}")
        ids = fold_ids(n, cfg.folds, cfg.seed)
        y_res = np.empty(n)
        t_res = np.empty(n)
        for k in range(cfg.folds):
            test = ids == k
            train = ~test
            t_train = data.t[train]
            if t_train.min() == t_train.max():
                raise EstimationError(
                    f"fold {k}: training complement has only "
                    f"{'treated' if t_train[0] == 1 else 'control'} units"
                )
            b_y = fit_linear(data.X[train], data.y[train], cfg.ridge)
            b_t = fit_logistic(data.X[train], t_train, cfg.ridge,
                               cfg.newton_max_iter, cfg.newton_tol)
            Zt = _design(data.X[test])
            y_res[test] = data.y[test] - Zt @ b_y
            t_res[test] = data.t[test] - expit(Zt @ b_t)
        Z = _design(data.X) * t_res[:, None]
        self.coef_ = _ridge_solve(Z, y_res, cfg.ridge)
        self.residuals_ = (y_res, t_res)
        return self

    def predict(self, Xq) -> np.ndarray:
        if self.coef_ is None:
            raise RuntimeError("model is not fitted; call fit() first")
        Xq = np.asarray(Xq, dtype=float)
        if Xq.ndim != 2 or Xq.shape[1] != len(self.coef_) - 1:
            raise ShapeError(f"query points must have shape (m, {len(self.coef_) - 1})")
        return _design(Xq) @ self.coef_


def dml_linear_cate(data: Dataset, Xq, cfg: DmlConfig | None = None) -> np.ndarray:
    return DmlLinear(cfg).fit(data).predict(Xq)
