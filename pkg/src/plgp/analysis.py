"""Numerical checks of the information-theoretic bounds behind posterior consistency.

All quantities are evaluated on a finite covariate grid with weights ``w``.
For a grid point ``x`` and arm ``t`` the outcome densities are
``N(theta(x) t + f(x), 1/s_eps)``, so the KL divergence between two parameter
pairs reduces to a weighted sum of squared mean differences.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .errors import ShapeError

__all__ = [
    "DensityPair",
    "kl_divergence",
    "kl_upper_bound",
    "kl_sup_bound",
    "l1_distance_bound",
    "l1_distance_exact",
    "mc_l1_distance",
    "random_density_pair",
    "contraction_curve",
]


@dataclass(frozen=True)
class DensityPair:
    """Two joint densities ``p(x, t, y)`` sharing ``p(x)``, ``p(t|x)`` and noise.

    ``theta0, f0`` parameterize the reference density, ``theta1, f1`` the
    alternative; all four are tabulated on the same grid.
    """

    theta0: np.ndarray
    f0: np.ndarray
    theta1: np.ndarray
    f1: np.ndarray
    noise_precision: float
    propensity: np.ndarray
    covariate_density: np.ndarray

    def __post_init__(self):
        arrays = {}
        for name in ("theta0", "f0", "theta1", "f1", "propensity", "covariate_density"):
            arrays[name] = np.atleast_1d(np.asarray(getattr(self, name), dtype=float))
            object.__setattr__(self, name, arrays[name])
        k = arrays["theta0"].shape
        if any(a.shape != k or a.ndim != 1 for a in arrays.values()):
            raise ShapeError("all tabulated arrays must be 1-d of equal length")
        w, p = self.covariate_density, self.propensity
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ShapeError("covariate weights must be nonnegative and sum to 1")
        if np.any((p < 0) | (p > 1)):
            raise ShapeError("propensities must lie in [0, 1]")
        if not self.noise_precision > 0:
            raise ShapeError("noise precision must be positive")

    @property
    def d_theta(self) -> np.ndarray:
        return self.theta0 - self.theta1

    @property
    def d_f(self) -> np.ndarray:
        return self.f0 - self.f1

    def arm_means(self):
        """Outcome means ``(mu0, mu1)`` with shape ``(grid, 2)``, columns ``t = 0, 1``."""
        mu0 = np.column_stack([self.f0, self.theta0 + self.f0])
        mu1 = np.column_stack([self.f1, self.theta1 + self.f1])
        return mu0, mu1

    def arm_weights(self) -> np.ndarray:
        w, p = self.covariate_density, self.propensity
        return np.column_stack([w * (1 - p), w * p])


def kl_divergence(pair: DensityPair) -> float:
    """``KL(p0 || p1)`` between the joint densities."""
    mu0, mu1 = pair.arm_means()
    return float(0.5 * pair.noise_precision * np.sum(pair.arm_weights() * (mu0 - mu1) ** 2))


def kl_upper_bound(pair: DensityPair) -> float:
    """``(s/2) (max|d_theta|^2 + 2 max|d_f|^2)``.

    Not a valid bound in general: when the effect and nuisance differences
    share a sign at a heavily treated grid point the KL can exceed it
    (``d_theta = d_f = 1``, ``p(T=1|x) = 1`` gives KL ``2s`` against ``1.5s``).
    :func:`kl_sup_bound` always holds.
    """
    s = pair.noise_precision
    return float(0.5 * s * (np.max(np.abs(pair.d_theta)) ** 2 + 2 * np.max(np.abs(pair.d_f)) ** 2))


def kl_sup_bound(pair: DensityPair) -> float:
    """``(s/2) (max|d_theta + d_f|^2 + max|d_f|^2)``, valid for every pair."""
    s = pair.noise_precision
    dh = pair.d_theta + pair.d_f
    return float(0.5 * s * (np.max(np.abs(dh)) ** 2 + np.max(np.abs(pair.d_f)) ** 2))


def l1_distance_bound(pair: DensityPair) -> float:
    """Pinsker bound ``sqrt(2 KL)`` on the L1 distance of the joint densities."""
    return float(np.sqrt(2.0 * kl_divergence(pair)))


def l1_distance_exact(pair: DensityPair) -> float:
    """Closed-form L1 distance; equal-variance normals differ by ``2(2 Phi(|d|/2sigma) - 1)``."""
    mu0, mu1 = pair.arm_means()
    z = np.abs(mu0 - mu1) * np.sqrt(pair.noise_precision) / 2.0
    return float(np.sum(pair.arm_weights() * 2.0 * (2.0 * ndtr(z) - 1.0)))


def mc_l1_distance(pair: DensityPair, rng: np.random.Generator,
                   samples: int = 100_000) -> tuple[float, float]:
    """Importance-sampling estimate of the L1 distance and its standard error.

    Draws ``(x, t, y)`` from ``p0`` and averages ``2 (1 - p1/p0)_+``. Since both
    densities integrate to one, this equals the L1 distance, and unlike
    ``|1 - p1/p0|`` the integrand is bounded, so the standard error is honest.
    """
    w = pair.covariate_density
    idx = rng.choice(len(w), size=samples, p=w)
    t = (rng.uniform(size=samples) < pair.propensity[idx]).astype(int)
    mu0, mu1 = pair.arm_means()
    m0, m1 = mu0[idx, t], mu1[idx, t]
    sd = 1.0 / np.sqrt(pair.noise_precision)
    y = m0 + sd * rng.standard_normal(samples)
    log_ratio = -0.5 * pair.noise_precision * ((y - m1) ** 2 - (y - m0) ** 2)
    vals = 2.0 * np.maximum(0.0, -np.expm1(log_ratio))
    return float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(samples))


def random_density_pair(rng: np.random.Generator, max_grid: int = 20) -> DensityPair:
    """A random pair on a grid of 1 to ``max_grid`` points.

    Function values are standard normal, propensities uniform on ``[0, 1]``,
    grid weights flat-Dirichlet and the noise precision log-uniform on
    ``[0.1, 10]``.
    """
    k = int(rng.integers(1, max_grid + 1))
    th0, f0, th1, f1 = rng.standard_normal((4, k))
    p = rng.uniform(size=k)
    w = rng.dirichlet(np.ones(k))
    w = w / w.sum()
    s = float(np.exp(rng.uniform(np.log(0.1), np.log(10.0))))
    return DensityPair(th0, f0, th1, f1, s, p, w)


def contraction_curve(spec, sample_sizes, seeds, fit_hyperparameters: bool = True,
                      master_seed: int = 0, jobs: int | None = 1, model=None):
    """MSE of the posterior-mean CATE over a grid of sample sizes and seeds.

    Returns one :class:`~plgp.experiment.CellResult` per ``(n, seed)``, in the
    same schema the benchmark CSV uses.
    """
    from .experiment import ExperimentConfig, run_experiment

    cfg = ExperimentConfig(
        methods=("plgp",),
        sample_sizes=tuple(sample_sizes),
        seeds=tuple(seeds),
        sim=spec,
        fit_hyperparameters=fit_hyperparameters,
        master_seed=master_seed,
        jobs=jobs,
        model=model,
    )
    return run_experiment(cfg)
