"""Monte Carlo benchmark grid: methods x sample sizes x seeds -> CSV.

Every cell is independent. Its dataset is derived from ``(master_seed, seed)``
only, so for a fixed seed the datasets at different ``n`` are nested and
every method sees the same data. Method-internal randomness (optimizer
restarts, fold assignment) is derived from ``(master_seed, method, n, seed)``.
Scheduling order therefore never changes a result.
"""
from __future__ import annotations

import csv
import io
import logging
import math
import os
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .baselines import DmlConfig, dml_linear_cate
from .errors import ConfigError, PLGPError
from .hyperopt import HyperFitOptions, fit_hyperparameters
from .kernels import RBF, rbf
from .model import ModelConfig, posterior_cate
from .synthetic import GpDraw, SimSpec, simulate

__all__ = [
    "METHODS",
    "CSV_COLUMNS",
    "ExperimentConfig",
    "CellResult",
    "run_cell",
    "run_experiment",
    "format_results_csv",
    "median_mse",
]

logger = logging.getLogger(__name__)

METHODS = ("plgp", "dml_linear")
CSV_COLUMNS = ("method", "n", "seed", "mse", "wall_ms", "fitted_beta_theta",
               "fitted_beta_f", "fitted_s_eps", "error")


@dataclass(frozen=True)
class ExperimentConfig:
    methods: tuple = METHODS
    sample_sizes: tuple = (50, 100, 200, 400)
    seeds: tuple = tuple(range(20))
    # n and seed of this spec are ignored; each cell sets its own
    sim: SimSpec = field(default_factory=SimSpec)
    output_path: str | None = None
    fit_hyperparameters: bool = True
    master_seed: int = 0
    jobs: int | None = None
    # used when fit_hyperparameters is off, and as restart 0 otherwise
    model: ModelConfig | None = None
    hyperfit: HyperFitOptions = field(default_factory=HyperFitOptions)
    dml: DmlConfig = field(default_factory=DmlConfig)
    timing: bool = False

    def __post_init__(self):
        object.__setattr__(self, "methods", tuple(self.methods))
        object.__setattr__(self, "sample_sizes", tuple(int(n) for n in self.sample_sizes))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if not self.methods or not self.sample_sizes or not self.seeds:
            raise ConfigError("methods, sample_sizes and seeds must all be non-empty")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ConfigError(f"unknown methods: {sorted(unknown)}")
        if min(self.sample_sizes) < 1 or min(self.seeds) < 0:
            raise ConfigError("sample sizes must be positive and seeds non-negative")

    def reference_model(self) -> ModelConfig:
        """The prior matching the simulator where it is a GP draw."""
        if self.model is not None:
            return self.model

        def kernel(src):
            return src.kernel if isinstance(src, GpDraw) else rbf(1.0)

        return ModelConfig(kernel(self.sim.theta_source), kernel(self.sim.f_source),
                           self.sim.noise_precision)

    def to_dict(self) -> dict:
        return {
            "methods": list(self.methods),
            "sample_sizes": list(self.sample_sizes),
            "seeds": list(self.seeds),
            "sim": self.sim.to_dict(),
            "output_path": self.output_path,
            "fit_hyperparameters": self.fit_hyperparameters,
            "master_seed": self.master_seed,
            "model": self.reference_model().to_dict(),
            "hyperfit": asdict(self.hyperfit),
            "dml": asdict(self.dml),
            "timing": self.timing,
        }


@dataclass
class CellResult:
    method: str
    n: int
    seed: int
    mse: float
    wall_ms: float | None = None
    fitted_beta_theta: float | None = None
    fitted_beta_f: float | None = None
    fitted_s_eps: float | None = None
    error: str = ""


def _derive_seed(*words: int) -> int:
    return int(np.random.SeedSequence([int(w) for w in words]).generate_state(1)[0])


def _method_code(method: str) -> int:
    return zlib.crc32(method.encode())


def cell_data_seed(master_seed: int, seed: int) -> int:
    return _derive_seed(master_seed, seed)


def cell_method_seed(master_seed: int, method: str, n: int, seed: int) -> int:
    return _derive_seed(master_seed, _method_code(method), n, seed)


def run_cell(cfg: ExperimentConfig, method: str, n: int, seed: int) -> CellResult:
    start = time.perf_counter()
    result = CellResult(method, n, seed, math.nan)
    try:
        sim = simulate(replace(cfg.sim, n=n, seed=cell_data_seed(cfg.master_seed, seed)))
        mseed = cell_method_seed(cfg.master_seed, method, n, seed)
        if method == "plgp":
            model = cfg.reference_model()
            if cfg.fit_hyperparameters:
                fit = fit_hyperparameters(sim.data, replace(cfg.hyperfit, seed=mseed), init=model)
                model = fit.config
            est = posterior_cate(model, sim.data, sim.Xq).mean
            if model.kernel_theta.family == RBF:
                result.fitted_beta_theta = model.kernel_theta.beta
            if model.kernel_f.family == RBF:
                result.fitted_beta_f = model.kernel_f.beta
            result.fitted_s_eps = model.noise_precision
        elif method == "dml_linear":
            est = dml_linear_cate(sim.data, sim.Xq, replace(cfg.dml, seed=mseed))
        else:
            raise ConfigError(f"unknown method {method!r}")
        result.mse = float(np.mean((sim.true_cate - est) ** 2))
    except (PLGPError, np.linalg.LinAlgError) as exc:
        logger.warning("cell (%s, n=%d, seed=%d) failed: %s", method, n, seed, exc)
        result.error = f"{type(exc).__name__}: {exc}"
    if cfg.timing:
        result.wall_ms = 1000.0 * (time.perf_counter() - start)
    return result


def _run_cell_args(args):
    return run_cell(*args)


def resolve_jobs(jobs: int | None) -> int:
    if jobs is None:
        env = os.environ.get("PLGP_JOBS")
        jobs = int(env) if env else (os.cpu_count() or 1)
    if jobs < 1:
        raise ConfigError("jobs must be at least 1")
    return jobs


def run_experiment(cfg: ExperimentConfig) -> list[CellResult]:
    """Run every ``(method, n, seed)`` cell; results are ordered by the grid."""
    cells = [(cfg, m, n, s) for m in cfg.methods for n in cfg.sample_sizes for s in cfg.seeds]
    jobs = min(resolve_jobs(cfg.jobs), len(cells))
    if jobs == 1:
        return [run_cell(*c) for c in cells]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_cell_args, cells))


def median_mse(results, method: str, n: int) -> float:
    vals = [r.mse for r in results if r.method == method and r.n == n and not math.isnan(r.mse)]
    return float(np.median(vals)) if vals else math.nan


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    if isinstance(x, str):
        return x
    return format(float(x), ".6g")


def format_results_csv(results, summary: bool = True) -> str:
    """CSV text: one row per cell, then one ``seed=median`` row per ``(method, n)``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in results:
        w.writerow([_fmt(getattr(r, c)) for c in CSV_COLUMNS])
    if summary:
        keys = []
        for r in results:
            if (r.method, r.n) not in keys:
                keys.append((r.method, r.n))
        for method, n in keys:
            w.writerow([method, n, "median", _fmt(median_mse(results, method, n)),
                        "", "", "", "", ""])
    return buf.getvalue()


def parse_results_csv(text: str) -> list[CellResult]:
    """Per-cell rows of a results CSV; summary rows are skipped."""
    out = []
    for row in csv.DictReader(io.StringIO(text)):
        if row["seed"] == "median":
            continue

        def num(key):
            return float(row[key]) if row[key] else None

        out.append(CellResult(row["method"], int(row["n"]), int(row["seed"]), float(row["mse"]),
                              num("wall_ms"), num("fitted_beta_theta"), num("fitted_beta_f"),
                              num("fitted_s_eps"), row["error"]))
    return out
