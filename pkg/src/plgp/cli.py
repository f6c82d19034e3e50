"""Command-line interface.

Subcommands::

    plgp simulate     --n 100 --seed 7 -o sim.json
    plgp fit-predict  -i sim.json -o cate.csv [--no-hyperfit]
    plgp experiment   --sample-sizes 50,100,200 --seeds 0-19 -o results.csv
    plgp kl-check     -o kl.json

Exit codes: 0 ok, 1 I/O failure, 2 usage or malformed input, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    kl_divergence,
    kl_sup_bound,
    kl_upper_bound,
    l1_distance_bound,
    l1_distance_exact,
    mc_l1_distance,
    random_density_pair,
)
from .errors import ConfigError, NumericalError, PLGPError, ShapeError
from .experiment import ExperimentConfig, format_results_csv, run_experiment
from .hyperopt import HyperFitOptions, fit_hyperparameters
from .kernels import rbf
from .model import Dataset, ModelConfig, posterior_cate
from .synthetic import GpDraw, LogisticGpDraw, LogisticLinear, RandomLinear, SimSpec, simulate

logger = logging.getLogger("plgp")

EXIT_OK, EXIT_IO, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _int_list(text: str) -> list[int]:
    """Parse ``"1,2,5-8"`` into ``[1, 2, 5, 6, 7, 8]``."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return out


def _int_list_arg(text: str) -> list[int]:
    try:
        return _int_list(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer list: {text!r}")


def _add_sim_flags(p: argparse.ArgumentParser, defaults: bool) -> None:
    d = (lambda v: v) if defaults else (lambda v: None)
    p.add_argument("--m", type=int, default=d(100), help="number of query points")
    p.add_argument("--d", type=int, default=d(2), help="covariate dimension")
    p.add_argument("--theta", choices=["gp", "linear"], default=d("gp"))
    p.add_argument("--f", choices=["gp", "linear"], default=d("gp"))
    p.add_argument("--beta-theta", type=float, default=d(1.0),
                   help="RBF bandwidth of the GP draw for theta")
    p.add_argument("--beta-f", type=float, default=d(1.0))
    p.add_argument("--noise-precision", type=float, default=d(1.0))
    p.add_argument("--propensity", choices=["logistic-linear", "logistic-gp"],
                   default=d("logistic-linear"))
    p.add_argument("--clip", type=float, default=d(0.05))


def _sim_spec_from(values: dict, n: int = 1, seed: int = 0) -> SimSpec:
    def source(kind, beta):
        return GpDraw(rbf(beta)) if kind == "gp" else RandomLinear()

    prop = (LogisticLinear(values["clip"]) if values["propensity"] == "logistic-linear"
            else LogisticGpDraw(values["clip"]))
    return SimSpec(n=n, m=values["m"], d=values["d"],
                   theta_source=source(values["theta"], values["beta_theta"]),
                   f_source=source(values["f"], values["beta_f"]),
                   noise_precision=values["noise_precision"], propensity=prop, seed=seed)


def _write_text(path: str, text: str) -> None:
    # newline="" keeps '\n' line endings on every platform
    with open(path, "w", newline="") as fh:
        fh.write(text)


def cmd_simulate(args) -> int:
    spec = _sim_spec_from(vars(args), n=args.n, seed=args.seed)
    out = simulate(spec)
    _write_text(args.output, json.dumps(out.to_json_dict()) + "\n")
    return EXIT_OK


def _load_dataset(path: str):
    try:
        raw = json.loads(Path(path).read_text())
        data = Dataset(np.array(raw["x"], dtype=float), np.array(raw["t"], dtype=float),
                       np.array(raw["y"], dtype=float))
        Xq = np.array(raw["x_query"], dtype=float)
    except OSError:
        raise
    except (ValueError, KeyError, TypeError) as exc:
        raise UsageError(f"malformed dataset file {path}: {exc}")
    if Xq.ndim != 2 or Xq.shape[0] < 1 or Xq.shape[1] != data.d:
        raise UsageError(f"x_query must be a non-empty (m, {data.d}) array")
    return data, Xq


def cmd_fit_predict(args) -> int:
    data, Xq = _load_dataset(args.input)
    if args.config:
        try:
            model = ModelConfig.from_dict(json.loads(Path(args.config).read_text()))
        except (ValueError, KeyError, TypeError) as exc:
            raise UsageError(f"malformed model config {args.config}: {exc}")
    else:
        model = ModelConfig(rbf(args.beta_theta), rbf(args.beta_f), args.noise_precision)
    if not args.no_hyperfit:
        opts = HyperFitOptions(restarts=args.restarts, max_iters=args.max_iters, seed=args.seed)
        model = fit_hyperparameters(data, opts, init=model).config
    post = posterior_cate(model, data, Xq)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["query_index", "cate_mean", "cate_var"])
    for i, (mu, var) in enumerate(zip(post.mean, post.var)):
        # roundoff can leave tiny negative variances
        w.writerow([i, format(mu, ".6g"), format(max(var, 0.0), ".6g")])
    _write_text(args.output, buf.getvalue())
    if args.model_out:
        _write_text(args.model_out, json.dumps(model.to_dict(), indent=2, sort_keys=True) + "\n")
    return EXIT_OK


SIM_KEYS = ("m", "d", "theta", "f", "beta_theta", "beta_f", "noise_precision", "propensity", "clip")
EXPERIMENT_DEFAULTS = {
    "methods": ["plgp", "dml_linear"],
    "sample_sizes": [50, 100, 200, 400],
    "seeds": list(range(20)),
    "master_seed": 0,
    "fit_hyperparameters": True,
    "timing": False,
    "restarts": 5,
    "max_iters": 200,
    "folds": 2,
    "m": 100, "d": 2, "theta": "gp", "f": "gp", "beta_theta": 1.0, "beta_f": 1.0,
    "noise_precision": 1.0, "propensity": "logistic-linear", "clip": 0.05,
}


def _experiment_settings(args) -> dict:
    """Merge defaults < config file < command-line flags."""
    settings = dict(EXPERIMENT_DEFAULTS)
    if args.config:
        try:
            file_cfg = json.loads(Path(args.config).read_text())
        except ValueError as exc:
            raise UsageError(f"malformed experiment config {args.config}: {exc}")
        unknown = set(file_cfg) - set(EXPERIMENT_DEFAULTS) - {"output_path", "jobs"}
        if unknown:
            raise UsageError(f"unknown experiment config keys: {sorted(unknown)}")
        settings.update(file_cfg)
    flags = {k: v for k, v in vars(args).items() if v is not None}
    for key in list(EXPERIMENT_DEFAULTS) + ["jobs", "output_path"]:
        if key in flags:
            settings[key] = flags[key]
    if args.no_hyperfit:
        settings["fit_hyperparameters"] = False
    if isinstance(settings["methods"], str):
        settings["methods"] = [m for m in settings["methods"].split(",") if m]
    for key in ("sample_sizes", "seeds"):
        if isinstance(settings[key], str):
            settings[key] = _int_list(settings[key])
    if "output_path" not in settings:
        raise UsageError("an output path is required (-o or output_path in the config file)")
    return settings


def cmd_experiment(args) -> int:
    s = _experiment_settings(args)
    sim = _sim_spec_from({k: s[k] for k in SIM_KEYS})
    cfg = ExperimentConfig(
        methods=s["methods"], sample_sizes=s["sample_sizes"], seeds=s["seeds"], sim=sim,
        output_path=s["output_path"], fit_hyperparameters=bool(s["fit_hyperparameters"]),
        master_seed=int(s["master_seed"]), jobs=s.get("jobs"),
        hyperfit=HyperFitOptions(restarts=int(s["restarts"]), max_iters=int(s["max_iters"])),
        timing=bool(s["timing"]),
    )
    cfg = replace(cfg, dml=replace(cfg.dml, folds=int(s["folds"])))
    results = run_experiment(cfg)
    _write_text(cfg.output_path, format_results_csv(results))
    _write_text(cfg.output_path + ".config.json",
                json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
    if all(r.error for r in results):
        logger.error("every experiment cell failed")
        return EXIT_NUMERICAL
    return EXIT_OK


def kl_check_report(pairs: int, mc_pairs: int, samples: int, seed: int) -> dict:
    rng = np.random.default_rng(seed)
    stated = sup = 0
    worst_ratio = 0.0
    for _ in range(pairs):
        pair = random_density_pair(rng)
        kl = kl_divergence(pair)
        stated += kl > kl_upper_bound(pair)
        sup += kl > kl_sup_bound(pair)
        bound = kl_upper_bound(pair)
        if bound > 0:
            worst_ratio = max(worst_ratio, kl / bound)
    pinsker = 0
    max_z = -np.inf
    for _ in range(mc_pairs):
        pair = random_density_pair(rng)
        est, se = mc_l1_distance(pair, rng, samples)
        excess = est - l1_distance_bound(pair)
        pinsker += excess > 3 * se
        if se > 0:
            max_z = max(max_z, (est - l1_distance_exact(pair)) / se)
    return {
        "pairs": pairs,
        "stated_bound_violations": int(stated),
        "max_kl_over_stated_bound": worst_ratio,
        "sup_bound_violations": int(sup),
        "mc_pairs": mc_pairs,
        "mc_samples": samples,
        "pinsker_violations": int(pinsker),
        "max_mc_z_vs_exact_l1": float(max_z) if np.isfinite(max_z) else None,
        "seed": seed,
    }


def cmd_kl_check(args) -> int:
    if args.pairs < 1 or args.mc_pairs < 0 or args.samples < 2:
        raise UsageError("pairs must be >= 1, mc-pairs >= 0 and samples >= 2")
    report = kl_check_report(args.pairs, args.mc_pairs, args.samples, args.seed)
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if args.output:
        _write_text(args.output, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="plgp", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="draw a synthetic dataset with ground truth")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    _add_sim_flags(p, defaults=True)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit-predict", help="posterior CATE at the query points of a dataset file")
    p.add_argument("-i", "--input", required=True)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--no-hyperfit", action="store_true",
                   help="use the given hyperparameters instead of maximizing the marginal likelihood")
    p.add_argument("--config", help="model config JSON (kernel_theta, kernel_f, noise_precision)")
    p.add_argument("--beta-theta", type=float, default=1.0)
    p.add_argument("--beta-f", type=float, default=1.0)
    p.add_argument("--noise-precision", type=float, default=1.0)
    p.add_argument("--restarts", type=int, default=5)
    p.add_argument("--max-iters", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--model-out", help="also write the model config used")
    p.set_defaults(func=cmd_fit_predict)

    p = sub.add_parser("experiment", help="benchmark grid of methods x sample sizes x seeds")
    p.add_argument("--config", help="experiment config JSON; flags override it")
    p.add_argument("--methods")
    p.add_argument("--sample-sizes", type=_int_list_arg)
    p.add_argument("--seeds", type=_int_list_arg)
    p.add_argument("--master-seed", type=int)
    p.add_argument("--no-hyperfit", action="store_true")
    p.add_argument("--restarts", type=int)
    p.add_argument("--max-iters", type=int)
    p.add_argument("--folds", type=int)
    p.add_argument("--jobs", type=int, help="worker processes (default: $PLGP_JOBS or CPU count)")
    p.add_argument("--timing", action="store_true", default=None,
                   help="record wall_ms (makes the CSV non-reproducible)")
    _add_sim_flags(p, defaults=False)
    p.add_argument("-o", "--output", dest="output_path")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("kl-check", help="randomized sweeps of the KL and L1 bounds")
    p.add_argument("--pairs", type=int, default=1000)
    p.add_argument("--mc-pairs", type=int, default=50)
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_kl_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError, ShapeError) as exc:
        parser.print_usage(sys.stderr)
        print(f"plgp {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"plgp {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"plgp {args.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except PLGPError as exc:
        print(f"plgp {args.command}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
