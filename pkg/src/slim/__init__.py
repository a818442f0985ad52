"""Sparse linear isotonic models: rank-based Dantzig selector plus isotonic backfitting."""
from .baseline import LinearBaseline, baseline_linear_fit
from .cpav import BackfitConfig, BackfitState, estimate_hidden_design
from .dantzig import KdsProblem, KdsSolution, SolverConfig, lp_oracle, residual_inf_norm, solve_kds
from .isotonic import (
    MonotoneOrder,
    ProjectionResult,
    dykstra_oracle,
    monotone_order,
    pava,
    project_ball,
    project_centering,
    standardized_isotonic,
)
from .pipeline import SlimModel, SparseCoefficients, fit, gamma_grid, interpolate, predict, sample_std, tune_gamma
from .rank_corr import RankCorrelation, kendall_matrix, kendall_tau_pair, rank_correlation, sine_transform
from .synth import GeneratorConfig, GroundTruth, TransformKind, apply_transform, gen_dataset

__version__ = "0.1.0"

__all__ = [
    "BackfitConfig",
    "BackfitState",
    "GeneratorConfig",
    "GroundTruth",
    "KdsProblem",
    "KdsSolution",
    "LinearBaseline",
    "MonotoneOrder",
    "ProjectionResult",
    "RankCorrelation",
    "SlimModel",
    "SolverConfig",
    "SparseCoefficients",
    "TransformKind",
    "apply_transform",
    "baseline_linear_fit",
    "dykstra_oracle",
    "estimate_hidden_design",
    "fit",
    "gamma_grid",
    "gen_dataset",
    "interpolate",
    "kendall_matrix",
    "kendall_tau_pair",
    "lp_oracle",
    "monotone_order",
    "pava",
    "predict",
    "project_ball",
    "project_centering",
    "rank_correlation",
    "residual_inf_norm",
    "sample_std",
    "sine_transform",
    "solve_kds",
    "standardized_isotonic",
    "tune_gamma",
]
