"""Experiment presets, replicate batches, method matrix, and CSV outputs.

Replicate r draws its own generator from base_seed XOR (r + 1), so batches are
deterministic and independent of worker scheduling; output rows are assembled
in replicate order after all workers finish.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import metrics as mt
from . import solver as sv
from .design import build_design, build_design_poisson
from .dictionary import (
    CoefficientVector,
    HistogramDictionary,
    UnitHistogram,
    project_truth,
    reconstruct,
    save_reconstruction,
)
from .point_process import (
    HawkesModel,
    MarkedPointSet,
    StepKernel,
    TruncExpKernel,
    TruncGaussKernel,
    ZeroKernel,
    simulate_thinning,
)
from .weights import adaptive_weights, practical_weights

__all__ = [
    "ExperimentConfig",
    "RunRow",
    "ExperimentResult",
    "PoissonCheck",
    "preset_model",
    "truth_groups",
    "run_replicate",
    "run_experiment",
    "run_poisson_check",
    "simulate_poisson_unit",
    "export_reconstruction",
    "write_run_csv",
    "write_summary_csv",
    "write_failure_csv",
]

SUPPORT = 0.04

_EXP3_EDGES = [(2, 1), (3, 1), (2, 2), (1, 3), (2, 3), (8, 5), (5, 6), (6, 7), (7, 8)]


def preset_model(name: str) -> HawkesModel:
    """Hawkes presets used throughout the experiments (all rates 20 Hz)."""
    A = SUPPORT
    zero = ZeroKernel(A)
    if name == "exp1":
        kernels = (
            (StepKernel([0.0, 0.02], [30.0], A), StepKernel([0.01, 0.02], [30.0], A)),
            (StepKernel([0.0, 0.01], [30.0], A), zero),
        )
        return HawkesModel(nu=np.full(2, 20.0), kernels=kernels, support=A)
    if name == "exp2":
        kernels = (
            (
                TruncExpKernel(100.0, 200.0, A),
                TruncGaussKernel(1.0 / (0.008 * math.sqrt(2.0 * math.pi)), 0.02, 0.004, A),
            ),
            (StepKernel([0.0, 0.02], [30.0], A), zero),
        )
        return HawkesModel(nu=np.full(2, 20.0), kernels=kernels, support=A)
    if name == "exp3":
        grid = [[zero] * 8 for _ in range(8)]
        for l, m in _EXP3_EDGES:
            grid[l - 1][m - 1] = StepKernel([0.0, 0.02], [25.0], A)
        return HawkesModel(nu=np.full(8, 20.0), kernels=tuple(tuple(r) for r in grid), support=A)
    raise ValueError(f"unknown preset: {name!r}")


def truth_groups(model: HawkesModel):
    """Dependency groups of the true model (graph on nonzero kernels)."""
    dictionary = HistogramDictionary(model.n_marks, 1, model.support)
    return mt.dependency_groups(project_truth(dictionary, model))


@dataclass(frozen=True)
class ExperimentConfig:
    """One batch: preset, horizon, dictionary size, method matrix, seeding."""

    preset: str = "exp1"
    horizon: float = 20.0
    warmup: float = 1.0
    n_bins: int = 4
    methods: tuple = ("B", "BO", "A", "AO")
    bernstein_gammas: tuple = (0.5, 1.0, 2.0)
    adaptive_gammas: tuple = (2.0, 200.0, 1000.0)
    n_replicates: int = 100
    base_seed: int = 1
    output_dir: str = "runs"
    mu: float = 0.2
    eps: float = 0.5
    alpha: float = 1.0
    b_choice: str = "observed"
    adaptive_power: float = 1.0
    custom_model: HawkesModel = None
    poisson_marks: int = 5
    poisson_levels: tuple = (12.0, 0.0, 6.0, 0.0)
    n_jobs: int = 1

    def model(self) -> HawkesModel:
        if self.preset == "custom":
            if self.custom_model is None:
                raise ValueError("custom preset needs a model")
            return self.custom_model
        return preset_model(self.preset)

    def dictionary(self) -> HistogramDictionary:
        model = self.model()
        return HistogramDictionary(model.n_marks, self.n_bins, model.support)


@dataclass
class RunRow:
    """Per-(replicate, method, gamma) record; the CSV subset mirrors RunMetrics."""

    replicate: int
    method: str
    gamma: float
    horizon: float
    dg_correct: bool
    s_nonzero_spont: int
    f_plus: int
    f_minus: int
    coeff_plus: int
    coeff_minus: int
    spont_mse: float
    inter_mse: float
    oracle_ratio: float
    kkt_residual: float = math.nan
    b_max: float = math.nan
    converged: bool = True


@dataclass
class ExperimentResult:
    rows: list
    summaries: list
    failures: list
    n_replicates: int

    @property
    def failure_fraction(self) -> float:
        return len(self.failures) / self.n_replicates if self.n_replicates else 0.0


def _method_plan(cfg: ExperimentConfig):
    plan = []
    for g in cfg.bernstein_gammas:
        if "B" in cfg.methods or "BO" in cfg.methods:
            plan.append(("B", float(g)))
    for g in cfg.adaptive_gammas:
        if "A" in cfg.methods or "AO" in cfg.methods:
            plan.append(("A", float(g)))
    return plan


def run_replicate(cfg: ExperimentConfig, r: int) -> list:
    """Simulate one replicate and run the full method matrix on it."""
    model = cfg.model()
    dictionary = cfg.dictionary()
    truth = project_truth(dictionary, model)
    truth_partition = mt.dependency_groups(truth)
    bin_aligned = all(
        k.is_bin_aligned(dictionary.delta) for row in model.kernels for k in row
    )
    residual = mt.projection_residual(model, dictionary)

    rng = np.random.default_rng(cfg.base_seed ^ (r + 1))
    points = simulate_thinning(model, cfg.warmup, cfg.horizon, rng)
    system = build_design(points, dictionary, cfg.horizon)
    b_max = float(np.max(np.abs(system.b)))
    prelim = None
    if any(m in cfg.methods for m in ("A", "AO")):
        prelim = sv.ols(system)

    rows = []

    def emit(method, gamma, coef, weights, kkt, converged):
        est = CoefficientVector(dictionary, coef.reshape(-1))
        s, f_plus, f_minus, c_plus, c_minus = mt.support_metrics(est, truth)
        ratio = math.nan
        try:
            ratio = mt.oracle_ratio(est, truth, system, weights, residual)
        except mt.DegenerateGram:
            pass
        rows.append(
            RunRow(
                replicate=r,
                method=method,
                gamma=gamma,
                horizon=cfg.horizon,
                dg_correct=mt.dependency_groups(est) == truth_partition,
                s_nonzero_spont=s,
                f_plus=f_plus,
                f_minus=f_minus,
                coeff_plus=c_plus if bin_aligned else None,
                coeff_minus=c_minus if bin_aligned else None,
                spont_mse=mt.spont_mse(est, model),
                inter_mse=mt.inter_mse(est, model, dictionary),
                oracle_ratio=ratio,
                kkt_residual=kkt,
                b_max=b_max,
                converged=converged,
            )
        )

    for family, gamma in _method_plan(cfg):
        if family == "B":
            weights = practical_weights(system, gamma)
        else:
            weights = adaptive_weights(prelim.coef, gamma, cfg.adaptive_power)
        solution = sv.lasso_shooting(system, weights)
        kkt = sv.kkt_residual(system, weights, solution.coef)
        if family in cfg.methods:
            emit(family, gamma, solution.coef, weights, kkt, solution.converged)
        refit_label = family + "O"
        if refit_label in cfg.methods:
            refit = sv.ols_refit(system, solution.support)
            emit(refit_label, gamma, refit.coef, weights, kkt, solution.converged)
    return rows


def _replicate_worker(args):
    cfg, r = args
    return r, run_replicate(cfg, r)


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Run all replicates (optionally in a process pool) and aggregate."""
    model = cfg.model()
    rows = []
    failures = []
    results = {}
    if cfg.n_jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.n_jobs) as pool:
            futures = {
                r: pool.submit(_replicate_worker, (cfg, r)) for r in range(cfg.n_replicates)
            }
            for r, fut in futures.items():
                try:
                    results[r] = fut.result()[1]
                except Exception as exc:  # noqa: BLE001 - isolate bad replicates
                    failures.append((r, f"{type(exc).__name__}: {exc}"))
    else:
        for r in range(cfg.n_replicates):
            try:
                results[r] = run_replicate(cfg, r)
            except Exception as exc:  # noqa: BLE001 - one bad replicate must not kill the batch
                failures.append((r, f"{type(exc).__name__}: {exc}"))
    for r in sorted(results):
        rows.extend(results[r])
    failures.sort()
    summaries = mt.aggregate(rows, model.n_marks)
    return ExperimentResult(
        rows=rows,
        summaries=summaries,
        failures=failures,
        n_replicates=cfg.n_replicates,
    )


# ---------------------------------------------------------------------------
# degenerate Poisson pipeline


def simulate_poisson_unit(levels, n_marks: int, rng: np.random.Generator) -> MarkedPointSet:
    """M i.i.d. inhomogeneous Poisson samples on (0, 1] with a step intensity."""
    levels = np.asarray(levels, dtype=float)
    edges = np.linspace(0.0, 1.0, len(levels) + 1)
    times = []
    for _ in range(n_marks):
        pieces = []
        for lo, hi, level in zip(edges[:-1], edges[1:], levels):
            if level > 0:
                n = rng.poisson(level * (hi - lo))
                pieces.append(rng.uniform(lo, hi, size=n))
        t = np.sort(np.concatenate(pieces)) if pieces else np.empty(0)
        times.append(t)
    return MarkedPointSet(times=tuple(times), window=(0.0, 1.0))


@dataclass
class PoissonCheck:
    """Exactness diagnostics of the degenerate pipeline mode."""

    gram_deviation: float
    soft_threshold_deviation: float
    solution: sv.LassoSolution
    system: object


def run_poisson_check(cfg: ExperimentConfig, rng: np.random.Generator, x: float = None) -> PoissonCheck:
    """Simulate the unit-interval mode, where the Gram matrix is exactly M I.

    With a diagonal Gram the Lasso has the entrywise closed form
    soft_threshold(b, d) / M, which the shooting solver must reproduce.
    """
    from .weights import theoretical_weights

    M = cfg.poisson_marks
    points = simulate_poisson_unit(cfg.poisson_levels, M, rng)
    histogram = UnitHistogram(cfg.n_bins)
    system = build_design_poisson(points, histogram)
    gram_dev = float(np.max(np.abs(system.block - M * np.eye(cfg.n_bins))))
    if x is None:
        x = cfg.alpha * math.log(max(M, 2))
    weights = theoretical_weights(system, x=x, mu=cfg.mu, eps=cfg.eps, b_choice="observed")
    solution = sv.lasso_shooting(system, weights)
    closed = np.array(
        [sv.soft_threshold(bj, dj) / M for bj, dj in zip(system.b[0], weights.d[0])]
    )
    st_dev = float(np.max(np.abs(solution.coef[0] - closed)))
    return PoissonCheck(
        gram_deviation=gram_dev,
        soft_threshold_deviation=st_dev,
        solution=solution,
        system=system,
    )


# ---------------------------------------------------------------------------
# reconstruction export


def export_reconstruction(cfg: ExperimentConfig, replicate: int, methods, out_dir) -> list:
    """Solve one replicate and write plot-ready step functions per method."""
    model = cfg.model()
    dictionary = cfg.dictionary()
    rng = np.random.default_rng(cfg.base_seed ^ (replicate + 1))
    points = simulate_thinning(model, cfg.warmup, cfg.horizon, rng)
    system = build_design(points, dictionary, cfg.horizon)
    prelim = None
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for method in methods:
        family = method.rstrip("O")
        gamma = cfg.bernstein_gammas[0] if family == "B" else cfg.adaptive_gammas[0]
        if family == "B":
            weights = practical_weights(system, gamma)
        elif family == "A":
            if prelim is None:
                prelim = sv.ols(system)
            weights = adaptive_weights(prelim.coef, gamma, cfg.adaptive_power)
        else:
            raise ValueError(f"unknown method {method!r}")
        solution = sv.lasso_shooting(system, weights)
        coef = solution.coef
        if method.endswith("O"):
            coef = sv.ols_refit(system, solution.support).coef
        est = CoefficientVector(dictionary, coef.reshape(-1))
        path = os.path.join(out_dir, f"reconstruction_{method}_gamma{gamma:g}.csv")
        save_reconstruction(reconstruct(dictionary, est), path)
        paths.append(path)
    return paths


# ---------------------------------------------------------------------------
# CSV output


def _fmt(value) -> str:
    if value is None:
        return "NA"
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        if math.isnan(value):
            return "NA"
        return repr(value)
    return str(value)


RUN_COLUMNS = (
    "replicate",
    "method",
    "gamma",
    "horizon",
    "dg_correct",
    "s_nonzero_spont",
    "f_plus",
    "f_minus",
    "coeff_plus",
    "coeff_minus",
    "spont_mse",
    "inter_mse",
    "oracle_ratio",
)

SUMMARY_COLUMNS = (
    "method",
    "gamma",
    "horizon",
    "n_runs",
    "dg_count",
    "s_all_nonzero",
    "s_median",
    "f_plus_median",
    "f_minus_median",
    "coeff_plus_median",
    "coeff_minus_median",
    "spont_mse_mean",
    "spont_mse_median",
    "inter_mse_mean",
    "inter_mse_median",
)


def write_run_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(RUN_COLUMNS) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(getattr(row, c)) for c in RUN_COLUMNS) + "\n")


def write_summary_csv(summaries, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(SUMMARY_COLUMNS) + "\n")
        for s in summaries:
            fh.write(",".join(_fmt(getattr(s, c)) for c in SUMMARY_COLUMNS) + "\n")


def write_failure_csv(failures, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("replicate,error\n")
        for r, msg in failures:
            fh.write(f"{r},{msg.replace(',', ';')}\n")
