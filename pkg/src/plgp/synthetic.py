"""Synthetic data for CATE benchmarks with retained ground truth.

Covariates are i.i.d. uniform on ``[-1, 1]^d``. The effect and nuisance
functions are either GP draws or random linear maps with standard-normal
coefficients. Treatment is Bernoulli with a clipped logistic propensity, and
outcomes follow ``y = theta(x) t + f(x) + eps`` with ``eps ~ N(0, 1/s_eps)``.

Each random ingredient (covariates, query points, effect draw, nuisance draw,
propensity draw, treatment uniforms, noise) has its own child stream of the
seed. Draws are made in a fixed point order ``[query points, training
points]``, so two specs that differ only in ``n`` produce nested samples: the
smaller dataset is a prefix of the larger one (up to the Cholesky jitter of
the GP draws).
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Union

import numpy as np
from scipy.special import expit

from .errors import ConfigError
from .gaussian import MvnDistribution, sample
from .kernels import KernelSpec, gram, rbf
from .model import Dataset

__all__ = [
    "GpDraw",
    "RandomLinear",
    "LogisticLinear",
    "LogisticGpDraw",
    "SimSpec",
    "SimOutput",
    "simulate",
    "draw_function_values",
]


@dataclass(frozen=True)
class GpDraw:
    kernel: KernelSpec = field(default_factory=rbf)
    # multiplies the draw; 0 gives the zero function
    amplitude: float = 1.0

    def to_dict(self):
        return {"kind": "gp", "kernel": self.kernel.to_dict(), "amplitude": self.amplitude}


@dataclass(frozen=True)
class RandomLinear:
    def to_dict(self):
        return {"kind": "linear"}


FunctionSource = Union[GpDraw, RandomLinear]


@dataclass(frozen=True)
class LogisticLinear:
    clip: float = 0.05

    def __post_init__(self):
        if not 0 < self.clip < 0.5:
            raise ConfigError(f"propensity clip must lie in (0, 0.5), got {self.clip}")

    def to_dict(self):
        return {"kind": "logistic_linear", "clip": self.clip}


@dataclass(frozen=True)
class LogisticGpDraw:
    clip: float = 0.05
    kernel: KernelSpec = field(default_factory=rbf)

    def __post_init__(self):
        if not 0 < self.clip < 0.5:
            raise ConfigError(f"propensity clip must lie in (0, 0.5), got {self.clip}")

    def to_dict(self):
        return {"kind": "logistic_gp", "clip": self.clip, "kernel": self.kernel.to_dict()}


PropensitySource = Union[LogisticLinear, LogisticGpDraw]


def _source_from_dict(d: dict):
    kind = d["kind"]
    if kind == "gp":
        return GpDraw(KernelSpec.from_dict(d["kernel"]), float(d.get("amplitude", 1.0)))
    if kind == "linear":
        return RandomLinear()
    if kind == "logistic_linear":
        return LogisticLinear(float(d["clip"]))
    if kind == "logistic_gp":
        return LogisticGpDraw(float(d["clip"]), KernelSpec.from_dict(d["kernel"]))
    raise ConfigError(f"unknown source kind {kind!r}")


@dataclass(frozen=True)
class SimSpec:
    n: int = 100
    m: int = 100
    d: int = 2
    theta_source: FunctionSource = field(default_factory=GpDraw)
    f_source: FunctionSource = field(default_factory=GpDraw)
    noise_precision: float = 1.0
    propensity: PropensitySource = field(default_factory=LogisticLinear)
    seed: int = 0

    def __post_init__(self):
        for name in ("n", "m", "d"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value}")
        if not (np.isfinite(self.noise_precision) and self.noise_precision > 0):
            raise ConfigError("noise_precision must be positive")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ConfigError("seed must be a non-negative integer")

    def to_dict(self) -> dict:
        return {
            "n": self.n, "m": self.m, "d": self.d,
            "theta_source": self.theta_source.to_dict(),
            "f_source": self.f_source.to_dict(),
            "noise_precision": self.noise_precision,
            "propensity": self.propensity.to_dict(),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SimSpec":
        return cls(
            n=int(d["n"]), m=int(d["m"]), d=int(d["d"]),
            theta_source=_source_from_dict(d["theta_source"]),
            f_source=_source_from_dict(d["f_source"]),
            noise_precision=float(d["noise_precision"]),
            propensity=_source_from_dict(d["propensity"]),
            seed=int(d["seed"]),
        )


@dataclass(frozen=True)
class SimOutput:
    data: Dataset
    Xq: np.ndarray
    true_cate: np.ndarray
    true_f_at_train: np.ndarray
    propensities: np.ndarray
    true_cate_at_train: np.ndarray
    spec: SimSpec | None = None

    def to_json_dict(self) -> dict:
        """Flat JSON layout; the first four keys double as a fit-predict input."""
        out = {
            "x": self.data.X.tolist(),
            "t": [int(v) for v in self.data.t],
            "y": self.data.y.tolist(),
            "x_query": self.Xq.tolist(),
            "true_cate": self.true_cate.tolist(),
            "true_f_at_train": self.true_f_at_train.tolist(),
            "propensities": self.propensities.tolist(),
            "true_cate_at_train": self.true_cate_at_train.tolist(),
        }
        if self.spec is not None:
            out["spec"] = self.spec.to_dict()
        return out

    @classmethod
    def from_json_dict(cls, d: dict) -> "SimOutput":
        spec = SimSpec.from_dict(d["spec"]) if "spec" in d else None
        return cls(
            Dataset(np.array(d["x"], dtype=float), np.array(d["t"]), np.array(d["y"], dtype=float)),
            np.array(d["x_query"], dtype=float),
            np.array(d["true_cate"], dtype=float),
            np.array(d["true_f_at_train"], dtype=float),
            np.array(d["propensities"], dtype=float),
            np.array(d["true_cate_at_train"], dtype=float),
            spec,
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict()) + "\n")

    @classmethod
    def load(cls, path) -> "SimOutput":
        return cls.from_json_dict(json.loads(Path(path).read_text()))


def draw_function_values(source: FunctionSource, points, rng: np.random.Generator,
                         count: int = 1) -> np.ndarray:
    """Values of ``count`` random functions at ``points``, shape ``(count, k)``."""
    points = np.asarray(points, dtype=float)
    if isinstance(source, GpDraw):
        dist = MvnDistribution(np.zeros(len(points)), gram(source.kernel, points))
        return source.amplitude * sample(dist, rng, count)
    if isinstance(source, RandomLinear):
        w = rng.standard_normal((count, points.shape[1]))
        return w @ points.T
    raise ConfigError(f"unsupported function source {source!r}")


def _propensity(source: PropensitySource, points, rng) -> np.ndarray:
    if isinstance(source, LogisticLinear):
        logits = draw_function_values(RandomLinear(), points, rng)[0]
    elif isinstance(source, LogisticGpDraw):
        logits = draw_function_values(GpDraw(source.kernel), points, rng)[0]
    else:
        raise ConfigError(f"unsupported propensity source {source!r}")
    return np.clip(expit(logits), source.clip, 1.0 - source.clip)


def simulate(spec: SimSpec) -> SimOutput:
    streams = [np.random.default_rng(s) for s in np.random.SeedSequence(spec.seed).spawn(7)]
    r_x, r_q, r_theta, r_f, r_prop, r_t, r_eps = streams
    X = r_x.uniform(-1.0, 1.0, size=(spec.n, spec.d))
    Xq = r_q.uniform(-1.0, 1.0, size=(spec.m, spec.d))
    pts = np.vstack([Xq, X])
    theta = draw_function_values(spec.theta_source, pts, r_theta)[0]
    f = draw_function_values(spec.f_source, X, r_f)[0]
    p = _propensity(spec.propensity, X, r_prop)
    t = (r_t.uniform(size=spec.n) < p).astype(float)
    eps = r_eps.standard_normal(spec.n) / np.sqrt(spec.noise_precision)
    theta_q, theta_x = theta[: spec.m], theta[spec.m:]
    y = theta_x * t + f + eps
    return SimOutput(Dataset(X, t, y), Xq, theta_q, f, p, theta_x, spec)

