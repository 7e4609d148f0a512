"""Imitation-learning laboratory with derivative-matching losses.

Trains small MLP policies to clone an analytic expert on a synthetic
incrementally stable system, where matching the expert's action derivatives
(not just its actions) provably controls how far the learner's rollouts
drift from the expert's. The package provides the dynamics, the losses and
their hand-rolled derivative propagation, training loops (plain cloning plus
interactive baselines), runtime stability certificates, and a CLI that runs
the experiments into CSV-and-figure run directories.
"""

from .activations import Gelu, Identity, SoftClip, Tanh
from .bounds import (
    certify_gap_fast,
    certify_gap_linear_gain,
    certify_gap_slow,
    estimate_policy_constants,
    estimate_taylor_constant,
    fast_candidate,
    slow_candidate,
    verify_diss_empirically,
)
from .config import ExperimentConfig, load_config
from .dynamics import (
    ClassK,
    DissSystem,
    ExpertDataset,
    build_system,
    evaluate_policy_batch,
    imitation_gap,
    rollout,
)
from .harness import run_experiment, run_from_config
from .losses import (
    FdConfig,
    TaylorLossConfig,
    fd_jacobian_error_bound,
    make_fd_targets,
    taylor_sup_loss,
    taylor_train_loss,
)
from .mlp import Layer, MlpPolicy, forward_bundle, load_policy, param_gradient_from_seeds, save_policy
from .rng import Rng
from .training import (
    DaggerConfig,
    DartConfig,
    TrainConfig,
    build_learner,
    collect_expert_dataset,
    run_dagger,
    run_dart,
    train_bc,
)

__version__ = "0.1.0"

__all__ = [
    "ClassK",
    "DaggerConfig",
    "DartConfig",
    "DissSystem",
    "ExperimentConfig",
    "ExpertDataset",
    "FdConfig",
    "Gelu",
    "Identity",
    "Layer",
    "MlpPolicy",
    "Rng",
    "SoftClip",
    "Tanh",
    "TaylorLossConfig",
    "TrainConfig",
    "build_learner",
    "build_system",
    "certify_gap_fast",
    "certify_gap_linear_gain",
    "certify_gap_slow",
    "collect_expert_dataset",
    "estimate_policy_constants",
    "estimate_taylor_constant",
    "evaluate_policy_batch",
    "fast_candidate",
    "fd_jacobian_error_bound",
    "forward_bundle",
    "imitation_gap",
    "load_config",
    "load_policy",
    "make_fd_targets",
    "param_gradient_from_seeds",
    "rollout",
    "run_dagger",
    "run_dart",
    "run_experiment",
    "run_from_config",
    "save_policy",
    "slow_candidate",
    "taylor_sup_loss",
    "taylor_train_loss",
    "train_bc",
    "verify_diss_empirically",
    "__version__",
]
