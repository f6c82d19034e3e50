"""Type-II maximum likelihood for the kernel and noise hyperparameters.

The objective is ``log N(y; 0, K)`` with ``K = T Phi T + Psi + I / s_eps``.
Parameters are optimized in log space, so positivity holds by construction.
The parameter vector is the log-parameters of the effect kernel, then those
of the nuisance kernel, then ``log s_eps``; for the default RBF kernels that is
``(log beta_theta, log beta_f, log s_eps)``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.linalg import lapack

from .errors import ConfigError, NumericalError
from .gaussian import JITTER0, cholesky_jittered
from .kernels import gram_from_sq, sq_dists
from .model import Dataset, ModelConfig

__all__ = [
    "HyperFitOptions",
    "HyperFitResult",
    "MarginalLikelihood",
    "log_marginal_likelihood",
    "lml_gradient",
    "fit_hyperparameters",
    "pack",
    "unpack",
]

logger = logging.getLogger(__name__)

LOG2PI = np.log(2 * np.pi)


def pack(cfg: ModelConfig) -> np.ndarray:
    return np.concatenate([cfg.kernel_theta.log_params(), cfg.kernel_f.log_params(),
                           [np.log(cfg.noise_precision)]])


def unpack(template: ModelConfig, z) -> ModelConfig:
    z = np.asarray(z, dtype=float)
    a = len(template.kernel_theta.param_names)
    b = a + len(template.kernel_f.param_names)
    if z.shape != (b + 1,):
        raise ConfigError(f"expected {b + 1} log-parameters, got shape {z.shape}")
    return ModelConfig(template.kernel_theta.with_log_params(z[:a]),
                       template.kernel_f.with_log_params(z[a:b]),
                       float(np.exp(z[b])))


class MarginalLikelihood:
    """Log marginal likelihood of one dataset as a function of the log-parameters.

    Pairwise distances are computed once; each evaluation costs one Cholesky
    factorization, and the gradient one more inverse from that factor.
    """

    def __init__(self, data: Dataset, template: ModelConfig | None = None,
                 jitter0: float = JITTER0):
        self.data = data
        self.template = template or ModelConfig()
        self.jitter0 = jitter0
        self.D2 = sq_dists(data.X, data.X)
        self.tt = np.outer(data.t, data.t)

    def _factor(self, cfg: ModelConfig):
        Phi = gram_from_sq(cfg.kernel_theta, self.D2)
        K = self.tt * Phi + gram_from_sq(cfg.kernel_f, self.D2)
        K[np.diag_indices_from(K)] += 1.0 / cfg.noise_precision
        L, _ = cholesky_jittered(K, self.jitter0, name="marginal covariance of y")
        return L

    def value(self, cfg: ModelConfig) -> tuple[float, tuple]:
        y = self.data.y
        L = self._factor(cfg)
        alpha = linalg.cho_solve((L, True), y, check_finite=False)
        lml = -0.5 * (y @ alpha) - np.log(np.diag(L)).sum() - 0.5 * y.size * LOG2PI
        return float(lml), (cfg, L, alpha)

    def gradient(self, state: tuple) -> np.ndarray:
        cfg, L, alpha = state
        Kinv, info = lapack.dpotri(L, lower=1)
        if info != 0:
            raise NumericalError("inverse of the marginal covariance failed")
        Kinv = np.tril(Kinv) + np.tril(Kinv, -1).T
        # 0.5 tr((alpha alpha^T - K^-1) dK) for symmetric dK
        W = np.outer(alpha, alpha) - Kinv
        _, dPhi = gram_from_sq(cfg.kernel_theta, self.D2, grads=True)
        _, dPsi = gram_from_sq(cfg.kernel_f, self.D2, grads=True)
        Wt = W * self.tt
        grad = [0.5 * np.sum(Wt * G) for G in dPhi]
        grad += [0.5 * np.sum(W * G) for G in dPsi]
        grad.append(-0.5 * np.trace(W) / cfg.noise_precision)
        return np.array(grad)

    def __call__(self, z) -> tuple[float, np.ndarray]:
        f, state = self.value(unpack(self.template, z))
        return f, self.gradient(state)


def log_marginal_likelihood(cfg: ModelConfig, data: Dataset) -> float:
    """Log density of ``y`` with ``theta`` and ``f`` integrated out."""
    return MarginalLikelihood(data, cfg).value(cfg)[0]


def lml_gradient(cfg: ModelConfig, data: Dataset) -> np.ndarray:
    """Gradient of :func:`log_marginal_likelihood` w.r.t. the packed log-parameters."""
    obj = MarginalLikelihood(data, cfg)
    return obj.gradient(obj.value(cfg)[1])


@dataclass(frozen=True)
class HyperFitOptions:
    restarts: int = 5
    max_iters: int = 200
    tol: float = 1e-8
    grad_tol: float = 1e-6
    seed: int = 0
    init_low: float = 1e-2
    init_high: float = 1e2
    # Armijo sufficient-increase constant and backtracking factor
    armijo: float = 1e-4
    shrink: float = 0.5
    max_backtracks: int = 40
    patience: int = 5

    def __post_init__(self):
        if self.restarts < 0 or self.max_iters < 1:
            raise ConfigError("restarts must be >= 0 and max_iters >= 1")
        if not (0 < self.init_low < self.init_high):
            raise ConfigError("initial range must satisfy 0 < low < high")


@dataclass
class RestartTrace:
    start: np.ndarray
    params: np.ndarray
    lml: float
    iterations: int
    converged: bool
    history: list = field(default_factory=list)
    error: str = ""


@dataclass
class HyperFitResult:
    config: ModelConfig
    log_marginal_likelihood: float
    restarts_run: int
    converged: list
    traces: list = field(default_factory=list, repr=False)

    @property
    def best_index(self) -> int:
        return int(np.argmax([tr.lml for tr in self.traces]))


def _ascend(obj: MarginalLikelihood, z0: np.ndarray, opts: HyperFitOptions) -> RestartTrace:
    """Gradient ascent with Barzilai-Borwein trial steps and Armijo backtracking."""
    z = z0.copy()
    f, g = obj(z)
    history = [f]
    step = 1.0 / max(np.linalg.norm(g), 1.0)
    converged = False
    small = 0
    it = 0
    for it in range(1, opts.max_iters + 1):
        if np.max(np.abs(g)) < opts.grad_tol:
            converged = True
            break
        gg = g @ g
        accepted = False
        for _ in range(opts.max_backtracks):
            z_new = z + step * g
            try:
                f_new, state = obj.value(unpack(obj.template, z_new))
            except (NumericalError, ConfigError):
                f_new = -np.inf
            if np.isfinite(f_new) and f_new >= f + opts.armijo * step * gg:
                accepted = True
                break
            step *= opts.shrink
        if not accepted:
            # no ascent step resolvable at machine precision
            converged = True
            break
        g_new = obj.gradient(state)
        s, dg = z_new - z, g_new - g
        df = f_new - f
        z, f, g = z_new, f_new, g_new
        history.append(f)
        # a single tiny BB step is not evidence of stationarity
        small = small + 1 if abs(df) < opts.tol else 0
        if small >= opts.patience:
            converged = True
            break
        sy = -(s @ dg)
        # BB step is valid where the objective is locally concave; otherwise grow
        step = (s @ s) / sy if sy > 0 else 2.0 * step
        step = float(np.clip(step, 1e-10, 1e4))
    return RestartTrace(z0, z, f, it, converged, history)


def fit_hyperparameters(data: Dataset, opts: HyperFitOptions | None = None,
                        init: ModelConfig | None = None) -> HyperFitResult:
    """Maximize the log marginal likelihood from several starting points.

    Restart 0 starts from ``init`` (default: unit RBF kernels, ``s_eps = 1``);
    the other restarts draw every parameter log-uniformly on
    ``[init_low, init_high]``. The best terminal point wins, ties going to the
    lowest restart index.
    """
    opts = opts or HyperFitOptions()
    if data.n < 2:
        raise ConfigError("hyperparameter fitting needs at least two observations")
    template = init or ModelConfig()
    rng = np.random.default_rng(opts.seed)
    k = pack(template).size
    starts = [pack(template)]
    lo, hi = np.log(opts.init_low), np.log(opts.init_high)
    starts += [rng.uniform(lo, hi, size=k) for _ in range(opts.restarts)]

    obj = MarginalLikelihood(data, template)
    traces = []
    for i, z0 in enumerate(starts):
        try:
            tr = _ascend(obj, z0, opts)
        except NumericalError as exc:
            logger.debug("restart %d failed: %s", i, exc)
            tr = RestartTrace(z0, z0, -np.inf, 0, False, [], error=str(exc))
        traces.append(tr)
    lmls = np.array([tr.lml for tr in traces])
    if not np.any(np.isfinite(lmls)):
        raise NumericalError("every restart failed to factorize the marginal covariance")
    best = int(np.argmax(lmls))
    return HyperFitResult(
        config=unpack(template, traces[best].params),
        log_marginal_likelihood=float(lmls[best]),
        restarts_run=len(traces),
        converged=[tr.converged for tr in traces],
        traces=traces,
    )
