"""Routed candidate-set actor for offline RL on desk-scale benchmarks."""

from .agent import DrolPolicy
from .critic import CriticEnsemble, critic_update
from .envs import (
    EnvSpec,
    EvalReport,
    OfflineDataset,
    Transition,
    evaluate_policy,
    generate_dataset,
    load_dataset,
    make_grid_nav,
    make_interval_bandit,
    save_dataset,
)
from .nn import AdamState, Mlp, adam_step, load_params, polyak_update, save_params
from .oracles import (
    BruteForceResult,
    QuantizerConfig,
    collapse_penalty,
    coverage_bound,
    coverage_exponential_bound,
    coverage_montecarlo,
    fixed_tether_minimizer,
    interval_distortion,
    optimal_quantizer_bruteforce,
    routed_distortion,
    tether_bias_ratio,
)
from .prior import BallPrior
from .routing import (
    ActorLossReport,
    CandidateSet,
    NonFiniteLossError,
    RoutingAssignment,
    act,
    act_batch,
    drol_actor_loss,
    generate_candidates,
    pointwise_actor_loss,
    route,
    route_batch,
    winner_candidate_grads,
)
from .trainer import (
    MetricsRecord,
    TrainConfig,
    TrainResult,
    TrainingDiverged,
    candidate_diagnostics,
    routed_bc_probe,
    run_sweep,
    train,
    voronoi_trace,
    write_metrics_csv,
)

__version__ = "0.1.0"

__all__ = [
    "ActorLossReport",
    "AdamState",
    "BallPrior",
    "BruteForceResult",
    "CandidateSet",
    "CriticEnsemble",
    "DrolPolicy",
    "EnvSpec",
    "EvalReport",
    "MetricsRecord",
    "Mlp",
    "NonFiniteLossError",
    "OfflineDataset",
    "QuantizerConfig",
    "RoutingAssignment",
    "TrainConfig",
    "TrainResult",
    "TrainingDiverged",
    "Transition",
    "act",
    "act_batch",
    "adam_step",
    "candidate_diagnostics",
    "collapse_penalty",
    "coverage_bound",
    "coverage_exponential_bound",
    "coverage_montecarlo",
    "critic_update",
    "drol_actor_loss",
    "evaluate_policy",
    "fixed_tether_minimizer",
    "generate_candidates",
    "generate_dataset",
    "interval_distortion",
    "load_dataset",
    "load_params",
    "make_grid_nav",
    "make_interval_bandit",
    "optimal_quantizer_bruteforce",
    "pointwise_actor_loss",
    "polyak_update",
    "route",
    "route_batch",
    "routed_bc_probe",
    "routed_distortion",
    "run_sweep",
    "save_dataset",
    "save_params",
    "tether_bias_ratio",
    "train",
    "voronoi_trace",
    "winner_candidate_grads",
    "write_metrics_csv",
]
