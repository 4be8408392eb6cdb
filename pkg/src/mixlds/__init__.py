"""Learning mixtures of linear dynamical systems from short trajectories."""
from .classification import LossTable, classification_error, classify, trajectory_loss
from .clustering import (
    ClusterAssignment,
    PairStatistic,
    SimilarityMatrix,
    StatisticTable,
    auto_threshold,
    clustering_error,
    pair_statistic,
    partition,
    similarity_matrix,
    statistic_table,
    threshold,
)
from .estimation import ClusterData, ModelEstimate, least_squares_estimate, residuals
from .lds_core import (
    Autocovariances,
    LdsModel,
    SeparationReport,
    autocovariances,
    order1_autocovariance,
    recover_model,
    separation_report,
    spectral_radius,
    stationary_covariance,
)
from .pipeline import PipelineConfig, PipelineReport, match_models, run_pipeline
from .simulate import (
    MixedDataset,
    MixtureSpec,
    Trajectory,
    generate_models,
    simulate_dataset,
    simulate_trajectory,
)
from .subspace import SubspaceBank, estimate_subspaces, projection_residual

__version__ = "0.1.0"

__all__ = [
    "Autocovariances",
    "ClusterAssignment",
    "ClusterData",
    "LdsModel",
    "LossTable",
    "MixedDataset",
    "MixtureSpec",
    "ModelEstimate",
    "PairStatistic",
    "PipelineConfig",
    "PipelineReport",
    "SeparationReport",
    "SimilarityMatrix",
    "StatisticTable",
    "SubspaceBank",
    "Trajectory",
    "auto_threshold",
    "autocovariances",
    "classification_error",
    "classify",
    "clustering_error",
    "estimate_subspaces",
    "generate_models",
    "least_squares_estimate",
    "match_models",
    "order1_autocovariance",
    "pair_statistic",
    "partition",
    "projection_residual",
    "recover_model",
    "residuals",
    "run_pipeline",
    "separation_report",
    "similarity_matrix",
    "simulate_dataset",
    "simulate_trajectory",
    "spectral_radius",
    "stationary_covariance",
    "statistic_table",
    "threshold",
    "trajectory_loss",
]
