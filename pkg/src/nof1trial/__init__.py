"""Adaptive single-series trial simulation and targeted estimation.

The package simulates sequentially randomized trials on one time series,
steers treatment with an explore-exploit policy built from an estimated
blip function, and reports targeted maximum likelihood estimates of the
average context-specific mean outcome under the estimated rule, with
martingale-based confidence intervals and coverage studies.
"""

__version__ = "0.1.0"

from .bliplasso import (
    BlipCI,
    BlipModel,
    bootstrap_blip_ci,
    build_basis,
    coordinate_subsets,
    fit_blip_lasso,
    kkt_gaps,
)
from .config import (
    config_from_json,
    config_to_json,
    dump_config,
    load_config,
    preset_config,
)
from .core import (
    Block,
    ContextSpec,
    ContextSummary,
    MissingHistoryError,
    PositivityError,
    SpecificationError,
    TrialConfig,
    TrialHistory,
    ValidationError,
    extract_context,
    schedule_value,
)
from .dgp import (
    DGP_PRESETS,
    DgpSpec,
    expit,
    logit,
    oracle_mean_matrix,
    resolve_dgp,
    sim1a,
    sim1b,
    simulate_burn_in,
    step,
    true_blip,
    true_conditional_mean,
)
from .harness import (
    CoverageTable,
    TrialResult,
    TrialTrajectory,
    data_adaptive_truth,
    estimate_from_trajectory,
    mc_coverage,
    rebuild_contexts,
    run_adaptive_trial,
)
from .policy import PolicyState, draw_action, smoother, treatment_prob
from .regression import (
    CandidateSpec,
    FeatureLayout,
    FittedCandidate,
    SelectionError,
    WorkingModel,
    blip_of,
    d1_pseudo_outcome,
    fit_candidate,
    fit_logistic,
    predict_qbar,
    quasi_nll,
    select_recursive_origin,
)
from .tmle import (
    EstimateReport,
    TmleInput,
    clever_covariate,
    cond_var_path,
    eic_value,
    fluctuate,
    solve_epsilon,
    tmle_estimate,
)

__all__ = [
    "__version__",
    "Block",
    "BlipCI",
    "BlipModel",
    "CandidateSpec",
    "ContextSpec",
    "ContextSummary",
    "CoverageTable",
    "DGP_PRESETS",
    "DgpSpec",
    "EstimateReport",
    "FeatureLayout",
    "FittedCandidate",
    "MissingHistoryError",
    "PolicyState",
    "PositivityError",
    "SelectionError",
    "SpecificationError",
    "TmleInput",
    "TrialConfig",
    "TrialHistory",
    "TrialResult",
    "TrialTrajectory",
    "ValidationError",
    "WorkingModel",
    "blip_of",
    "bootstrap_blip_ci",
    "build_basis",
    "clever_covariate",
    "cond_var_path",
    "config_from_json",
    "config_to_json",
    "coordinate_subsets",
    "d1_pseudo_outcome",
    "data_adaptive_truth",
    "draw_action",
    "dump_config",
    "eic_value",
    "estimate_from_trajectory",
    "expit",
    "extract_context",
    "fit_blip_lasso",
    "fit_candidate",
    "fit_logistic",
    "fluctuate",
    "kkt_gaps",
    "load_config",
    "logit",
    "mc_coverage",
    "oracle_mean_matrix",
    "predict_qbar",
    "preset_config",
    "quasi_nll",
    "rebuild_contexts",
    "resolve_dgp",
    "run_adaptive_trial",
    "schedule_value",
    "select_recursive_origin",
    "sim1a",
    "sim1b",
    "simulate_burn_in",
    "smoother",
    "solve_epsilon",
    "step",
    "tmle_estimate",
    "treatment_prob",
    "true_blip",
    "true_conditional_mean",
]
