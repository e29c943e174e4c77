"""Multivariate Hawkes simulation and weighted-Lasso estimation of interactions.

The package simulates linear multivariate Hawkes processes by thinning,
builds the exact least-squares design over an orthonormal histogram
dictionary, solves the weighted-Lasso contrast by coordinate descent, scores
support recovery against the true model, and Monte Carlo-validates the
martingale tail inequality behind the penalty weights.
"""

from .bernstein import (
    BadBracket,
    BadMu,
    MartingaleTrial,
    TrialReport,
    TrialSetup,
    exp_remainder,
    run_trials,
    tail_bound,
    vhat_mu,
    wilson_interval,
)
from .design import (
    DesignSystem,
    InsufficientHistory,
    build_design,
    build_design_poisson,
    min_eigenvalue,
)
from .dictionary import (
    CoefficientVector,
    HistogramDictionary,
    Inter,
    ReconstructedModel,
    Spont,
    SupportMismatch,
    UnitHistogram,
    WindowUnderflow,
    predictor_value,
    project_truth,
    reconstruct,
    save_reconstruction,
)
from .experiments import (
    ExperimentConfig,
    ExperimentResult,
    export_reconstruction,
    preset_model,
    run_experiment,
    run_poisson_check,
    run_replicate,
    simulate_poisson_unit,
    truth_groups,
)
from .metrics import (
    DegenerateGram,
    RunMetrics,
    TableSummary,
    aggregate,
    dependency_groups,
    inter_mse,
    lower_median,
    oracle_ratio,
    projection_residual,
    spont_mse,
    support_metrics,
)
from .point_process import (
    ExplodingProcess,
    HawkesModel,
    Kernel,
    MarkedPointSet,
    NotSubcritical,
    StepKernel,
    TruncExpKernel,
    TruncGaussKernel,
    ZeroKernel,
    branching_matrix,
    intensity,
    kernel_integral,
    load_points,
    save_points,
    simulate_thinning,
    spectral_radius,
    stationary_rates,
)
from .solver import (
    LassoSolution,
    OlsFit,
    kkt_residual,
    lasso_shooting,
    objective,
    ols,
    ols_refit,
    soft_threshold,
)
from .weights import WeightVector, adaptive_weights, practical_weights, theoretical_weights

__version__ = "0.1.0"
