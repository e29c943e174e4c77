"""Command-line front end: simulate, estimate, experiment, bernstein-check, reconstruct.

Configuration comes from a TOML file plus flag overrides; exit code is 0 on
success and 2 when more than 1% of replicates fail.
"""

from __future__ import annotations

import argparse
import math
import os
import sys

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import bernstein as bl
from . import experiments as ex
from . import solver as sv
from .design import build_design
from .dictionary import CoefficientVector, HistogramDictionary, project_truth, reconstruct, save_reconstruction
from .point_process import (
    HawkesModel,
    StepKernel,
    TruncExpKernel,
    TruncGaussKernel,
    ZeroKernel,
    branching_matrix,
    load_points,
    save_points,
    simulate_thinning,
    spectral_radius,
)
from .weights import adaptive_weights, practical_weights, theoretical_weights

__all__ = ["main", "load_config"]


def _kernel_from_table(table, support):
    kind = table["type"]
    if kind == "zero":
        return ZeroKernel(support)
    if kind == "step":
        return StepKernel(table["edges"], table["levels"], support)
    if kind == "truncexp":
        return TruncExpKernel(table["amplitude"], table["rate"], support)
    if kind == "truncgauss":
        return TruncGaussKernel(table["scale"], table["center"], table["sd"], support)
    raise ValueError(f"unknown kernel type {kind!r}")


def _custom_model(table) -> HawkesModel:
    support = float(table.get("support", ex.SUPPORT))
    nu = np.asarray(table["nu"], dtype=float)
    M = len(nu)
    grid = [[ZeroKernel(support)] * M for _ in range(M)]
    for entry in table.get("kernels", []):
        grid[int(entry["source"]) - 1][int(entry["target"]) - 1] = _kernel_from_table(
            entry, support
        )
    return HawkesModel(nu=nu, kernels=tuple(tuple(row) for row in grid), support=support)


def load_config(path) -> ex.ExperimentConfig:
    """Build an ExperimentConfig from a TOML file."""
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    weights = raw.pop("weights", {})
    custom = raw.pop("custom", None)
    kwargs = {}
    for key in (
        "preset",
        "horizon",
        "warmup",
        "n_bins",
        "n_replicates",
        "base_seed",
        "output_dir",
        "n_jobs",
        "poisson_marks",
        "adaptive_power",
    ):
        if key in raw:
            kwargs[key] = raw[key]
    for key in ("methods", "bernstein_gammas", "adaptive_gammas", "poisson_levels"):
        if key in raw:
            kwargs[key] = tuple(raw[key])
    for key in ("mu", "eps", "alpha", "b_choice"):
        if key in weights:
            kwargs[key] = weights[key]
    if custom is not None:
        kwargs["custom_model"] = _custom_model(custom)
        kwargs["preset"] = "custom"
    return ex.ExperimentConfig(**kwargs)


def _apply_overrides(cfg: ex.ExperimentConfig, args) -> ex.ExperimentConfig:
    updates = {}
    if args.preset is not None:
        updates["preset"] = args.preset
    if getattr(args, "horizon", None) is not None:
        updates["horizon"] = args.horizon
    if getattr(args, "warmup", None) is not None:
        updates["warmup"] = args.warmup
    if getattr(args, "n_bins", None) is not None:
        updates["n_bins"] = args.n_bins
    if getattr(args, "gamma", None) is not None:
        updates["bernstein_gammas"] = (args.gamma,)
        updates["adaptive_gammas"] = (args.gamma,)
    if getattr(args, "reps", None) is not None:
        updates["n_replicates"] = args.reps
    if getattr(args, "seed", None) is not None:
        updates["base_seed"] = args.seed
    if getattr(args, "out", None) is not None:
        updates["output_dir"] = args.out
    if getattr(args, "methods", None):
        updates["methods"] = tuple(args.methods.split(","))
    if getattr(args, "jobs", None) is not None:
        updates["n_jobs"] = args.jobs
    return ex.ExperimentConfig(**{**cfg.__dict__, **updates}) if updates else cfg


def _base_config(args) -> ex.ExperimentConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else ex.ExperimentConfig()
    return _apply_overrides(cfg, args)


def _cmd_simulate(args) -> int:
    cfg = _base_config(args)
    model = cfg.model()
    gamma = branching_matrix(model)
    rho = spectral_radius(gamma)
    rng = np.random.default_rng(cfg.base_seed)
    points = simulate_thinning(model, cfg.warmup, cfg.horizon, rng)
    save_points(points, args.out_file)
    counts = [int(np.count_nonzero((t > 0) & (t <= cfg.horizon))) for t in points.times]
    print(f"preset={cfg.preset} spectral_radius={rho:.6f}")
    print(f"wrote {args.out_file}; events on (0, T]: {counts}")
    return 0


def _cmd_estimate(args) -> int:
    cfg = _base_config(args)
    points = load_points(args.points)
    horizon = args.horizon if args.horizon is not None else points.window[1]
    dictionary = HistogramDictionary(points.n_marks, cfg.n_bins, args.support)
    system = build_design(points, dictionary, horizon)
    method = args.method
    gamma = args.gamma if args.gamma is not None else 1.0
    if method in ("B", "BO"):
        weights = practical_weights(system, gamma)
    elif method in ("A", "AO"):
        weights = adaptive_weights(sv.ols(system).coef, gamma, cfg.adaptive_power)
    elif method == "theoretical":
        weights = theoretical_weights(
            system, x=cfg.alpha * math.log(horizon), mu=cfg.mu, eps=cfg.eps, b_choice=cfg.b_choice
        )
    else:
        print(f"unknown method {method!r}", file=sys.stderr)
        return 2
    solution = sv.lasso_shooting(system, weights)
    coef = solution.coef
    if method.endswith("O"):
        coef = sv.ols_refit(system, solution.support).coef
    est = CoefficientVector(dictionary, coef.reshape(-1))
    save_reconstruction(reconstruct(dictionary, est), args.out_file)
    n_nonzero = int(np.count_nonzero(coef))
    print(
        f"method={method} gamma={gamma:g} converged={solution.converged} "
        f"nonzero={n_nonzero}/{coef.size}"
    )
    print(f"wrote {args.out_file}")
    return 0


def _cmd_experiment(args) -> int:
    cfg = _base_config(args)
    os.makedirs(cfg.output_dir, exist_ok=True)
    if cfg.preset == "poisson":
        rng = np.random.default_rng(cfg.base_seed)
        check = ex.run_poisson_check(cfg, rng)
        print(
            f"poisson mode: gram deviation from M*I = {check.gram_deviation:.3e}; "
            f"soft-threshold deviation = {check.soft_threshold_deviation:.3e}"
        )
        return 0
    model = cfg.model()
    rho = spectral_radius(branching_matrix(model))
    print(f"preset={cfg.preset} M={model.n_marks} T={cfg.horizon} K={cfg.n_bins} radius={rho:.4f}")
    result = ex.run_experiment(cfg)
    run_path = os.path.join(cfg.output_dir, "run_metrics.csv")
    summary_path = os.path.join(cfg.output_dir, "summary.csv")
    ex.write_run_csv(result.rows, run_path)
    ex.write_summary_csv(result.summaries, summary_path)
    print(f"wrote {run_path} and {summary_path}")
    for s in result.summaries:
        print(
            f"  {s.method} gamma={s.gamma:g}: DG {s.dg_count}/{s.n_runs}, "
            f"F+ {s.f_plus_median}, F- {s.f_minus_median}, "
            f"SpontMSE {s.spont_mse_mean:.3g}, InterMSE {s.inter_mse_mean:.3g}"
        )
    if result.failures:
        fail_path = os.path.join(cfg.output_dir, "failures.csv")
        ex.write_failure_csv(result.failures, fail_path)
        print(f"{len(result.failures)} replicates failed; see {fail_path}")
        if result.failure_fraction > 0.01:
            return 2
    return 0


def _cmd_bernstein(args) -> int:
    rng = np.random.default_rng(args.seed)
    reports = []
    for x in args.x:
        setup = bl.TrialSetup(
            name=f"poisson-const-x{x:g}",
            tau=args.tau,
            x=x,
            eps=args.eps,
            mu=args.mu,
            rate=args.rate,
            integrand="const",
        )
        reports.extend(bl.run_trials(setup, args.trials, rng))
    for report in reports:
        exact = (
            "n/a" if report.exact_probability is None else f"{report.exact_probability:.3e}"
        )
        ok = report.frequency <= report.bound + 3 * (report.wilson_hi - report.frequency)
        print(
            f"{report.setup} [{report.event}]: freq={report.frequency:.3e} "
            f"bound={report.bound:.3e} exact={exact} {'OK' if ok else 'VIOLATION'}"
        )
    if args.out_file:
        bl.save_report(reports, args.out_file)
        print(f"wrote {args.out_file}")
    violated = any(
        r.frequency > r.bound + 3 * (r.wilson_hi - r.frequency) for r in reports
    )
    return 2 if violated else 0


def _cmd_reconstruct(args) -> int:
    cfg = _base_config(args)
    methods = tuple(args.methods.split(","))
    paths = ex.export_reconstruction(cfg, args.replicate, methods, cfg.output_dir)
    for p in paths:
        print(f"wrote {p}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="hawkeslasso",
        description="Hawkes simulation and weighted-Lasso interaction estimation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="TOML config file")
        p.add_argument("--preset", choices=["exp1", "exp2", "exp3", "poisson"], default=None)
        p.add_argument("--T", dest="horizon", type=float, default=None)
        p.add_argument("--warmup", type=float, default=None)
        p.add_argument("--K", dest="n_bins", type=int, default=None)
        p.add_argument("--gamma", type=float, default=None)
        p.add_argument("--reps", type=int, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--methods", default=None, help="comma list from B,BO,A,AO")
        p.add_argument("--jobs", type=int, default=None)

    p_sim = sub.add_parser("simulate", help="simulate a preset and write a point CSV")
    add_common(p_sim)
    p_sim.add_argument("--out-file", required=True)
    p_sim.set_defaults(func=_cmd_simulate)

    p_est = sub.add_parser("estimate", help="estimate from a point CSV")
    add_common(p_est)
    p_est.add_argument("--points", required=True)
    p_est.add_argument("--support", type=float, default=ex.SUPPORT)
    p_est.add_argument(
        "--method", default="B", choices=["B", "BO", "A", "AO", "theoretical"]
    )
    p_est.add_argument("--out-file", required=True)
    p_est.set_defaults(func=_cmd_estimate)

    p_exp = sub.add_parser("experiment", help="run a replicate batch and write tables")
    add_common(p_exp)
    p_exp.set_defaults(func=_cmd_experiment)

    p_ber = sub.add_parser("bernstein-check", help="Monte Carlo check of the tail bound")
    p_ber.add_argument("--trials", type=int, default=100000)
    p_ber.add_argument("--tau", type=float, default=50.0)
    p_ber.add_argument("--rate", type=float, default=1.0)
    p_ber.add_argument("--x", type=float, action="append", default=None)
    p_ber.add_argument("--eps", type=float, default=0.5)
    p_ber.add_argument("--mu", type=float, default=0.2)
    p_ber.add_argument("--seed", type=int, default=1)
    p_ber.add_argument("--out-file", default=None)
    p_ber.set_defaults(func=_cmd_bernstein)

    p_rec = sub.add_parser("reconstruct", help="export step-function reconstructions")
    add_common(p_rec)
    p_rec.add_argument("--replicate", type=int, default=0)
    p_rec.set_defaults(func=_cmd_reconstruct)

    args = parser.parse_args(argv)
    if getattr(args, "x", "missing") is None:
        args.x = [1.0, 3.0, 6.0]
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
