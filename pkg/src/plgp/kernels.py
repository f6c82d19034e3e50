"""Covariance functions for the GP priors on the effect and nuisance functions.

Two families are supported:

* ``rbf``: ``exp(-beta * ||x1 - x2||^2)``
* ``scaled``: ``tau^-1 * k0(lam * x1, lam * x2)`` with ``k0`` an RBF base kernel.

Every kernel exposes its hyperparameters in log space so that the marginal
likelihood can be optimized without positivity constraints.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import ConfigError, ShapeError

__all__ = [
    "KernelSpec", "rbf", "scaled", "eval_kernel", "gram", "gram_from_sq", "gram_with_grads", "sq_dists",
]

RBF = "rbf"
SCALED = "scaled"


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family plus its positive hyperparameters.

    ``beta`` is used by the RBF family. ``tau`` and ``lam`` are used by the
    scaled family, whose base kernel is ``base`` (RBF with ``beta=1`` unless
    given).
    """

    family: str = RBF
    beta: float = 1.0
    tau: float = 1.0
    lam: float = 1.0
    base: Optional["KernelSpec"] = field(default=None, compare=True)

    def __post_init__(self):
        if self.family not in (RBF, SCALED):
            raise ConfigError(f"unknown kernel family {self.family!r}")
        for name in ("beta", "tau", "lam"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ConfigError(f"kernel hyperparameter {name} must be positive, got {value}")
        if self.family == SCALED:
            if self.base is None:
                object.__setattr__(self, "base", KernelSpec(RBF, beta=1.0))
            elif self.base.family != RBF:
                raise ConfigError("scaled kernel requires an RBF base kernel")

    # -- log-parameter interface -------------------------------------------
    @property
    def param_names(self) -> tuple[str, ...]:
        return ("beta",) if self.family == RBF else ("tau", "lam")

    def log_params(self) -> np.ndarray:
        return np.log([getattr(self, name) for name in self.param_names])

    def with_log_params(self, log_params) -> "KernelSpec":
        values = np.exp(np.asarray(log_params, dtype=float))
        if values.shape != (len(self.param_names),):
            raise ShapeError(f"expected {len(self.param_names)} log-parameters, got {values.shape}")
        return replace(self, **{n: float(v) for n, v in zip(self.param_names, values)})

    @property
    def variance(self) -> float:
        """Prior variance ``C(x, x)``."""
        return 1.0 if self.family == RBF else 1.0 / self.tau

    def to_dict(self) -> dict:
        if self.family == RBF:
            return {"family": RBF, "beta": self.beta}
        return {"family": SCALED, "tau": self.tau, "lam": self.lam, "base_beta": self.base.beta}

    @classmethod
    def from_dict(cls, d: dict) -> "KernelSpec":
        family = d.get("family", RBF)
        if family == RBF:
            return cls(RBF, beta=float(d["beta"]))
        if family == SCALED:
            base = cls(RBF, beta=float(d.get("base_beta", 1.0)))
            return cls(SCALED, tau=float(d["tau"]), lam=float(d["lam"]), base=base)
        raise ConfigError(f"unknown kernel family {family!r}")


def rbf(beta: float = 1.0) -> KernelSpec:
    return KernelSpec(RBF, beta=beta)


def scaled(tau: float, lam: float, base: Optional[KernelSpec] = None) -> KernelSpec:
    return KernelSpec(SCALED, tau=tau, lam=lam, base=base)


def _as_points(A, name: str) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        A = A[None, :]
    if A.ndim != 2 or A.shape[1] < 1:
        raise ShapeError(f"{name} must be an (n, d) array with d >= 1, got shape {A.shape}")
    return A


def sq_dists(A, B) -> np.ndarray:
    """Pairwise squared Euclidean distances between rows of ``A`` and ``B``."""
    A = _as_points(A, "A")
    B = _as_points(B, "B")
    if A.shape[1] != B.shape[1]:
        raise ShapeError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    # explicit differences keep exact zeros on coincident points
    diff = A[:, None, :] - B[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def _gram_from_sq(spec: KernelSpec, D2: np.ndarray) -> np.ndarray:
    if spec.family == RBF:
        return np.exp(-spec.beta * D2)
    return np.exp(-spec.base.beta * spec.lam ** 2 * D2) / spec.tau


def gram(spec: KernelSpec, A, B=None) -> np.ndarray:
    """Kernel matrix with entries ``C(A[i], B[j])``; ``B`` defaults to ``A``."""
    D2 = sq_dists(A, A if B is None else B)
    return _gram_from_sq(spec, D2)


def eval_kernel(spec: KernelSpec, x1, x2) -> float:
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if x1.ndim != 1 or x2.ndim != 1 or x1.shape != x2.shape or x1.size < 1:
        raise ShapeError(f"points must be 1-d of equal length, got {x1.shape} and {x2.shape}")
    return float(gram(spec, x1[None, :], x2[None, :])[0, 0])


def gram_from_sq(spec: KernelSpec, D2: np.ndarray, grads: bool = False):
    """Kernel matrix from precomputed squared distances.

    With ``grads=True`` also returns the derivatives w.r.t. each log-parameter.
    """
    K = _gram_from_sq(spec, D2)
    if not grads:
        return K
    if spec.family == RBF:
        return K, [-spec.beta * D2 * K]
    # d/dlog tau of tau^-1 k0 is -K; d/dlog lam brings down -2 beta0 lam^2 D2
    return K, [-K, -2.0 * spec.base.beta * spec.lam ** 2 * D2 * K]


def gram_with_grads(spec: KernelSpec, A) -> tuple[np.ndarray, list[np.ndarray]]:
    """Symmetric Gram matrix of ``A`` and its derivatives w.r.t. each log-parameter."""
    return gram_from_sq(spec, sq_dists(A, A), grads=True)
