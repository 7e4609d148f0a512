"""Behavior-cloning trainer plus interactive data-collection protocols.

The trainer is deliberately plain: shuffled minibatches over state-action
(-derivative) pairs, Adam with a cosine-decayed step size, and an additive
l2 parameter-regularization term that is applied to the gradient but never
folded into the reported loss. Given identical configs and streams it is
bit-deterministic.

run_dagger and run_dart wrap the same trainer in the two classic interactive
protocols: mixture rollouts with a geometrically decaying expert share, and
expert rollouts with injected Gaussian action noise whose covariance is
re-fit to the learner's residuals. Both retrain from the same initial
parameters at a sparse set of dataset sizes rather than after every
trajectory.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .activations import Gelu, SoftClip
from .dynamics import (
    DissSystem,
    ExpertDataset,
    ExpertTrajectory,
    Trajectory,
    rollout,
)
from .losses import (
    FdConfig,
    FdTargets,
    TaylorLossConfig,
    fd_batch_loss_and_gradient,
    taylor_batch_loss_and_gradient,
)
from .mlp import Layer, MlpPolicy
from .rng import Rng
from .tensorops import init_orthogonal

__all__ = [
    "TrainConfig",
    "TrainResult",
    "TrainingDiverged",
    "DaggerConfig",
    "DaggerResult",
    "DartConfig",
    "DartResult",
    "cosine_lr",
    "build_learner",
    "collect_expert_dataset",
    "train_bc",
    "mixture_beta",
    "run_dagger",
    "run_dart",
    "sample_action_noise",
]


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 4500
    batch_size: int = 100
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-4
    weight_decay: float = 0.01

    def __post_init__(self):
        if self.iterations < 0 or self.batch_size < 1:
            raise ValueError("iterations must be >= 0 and batch_size >= 1")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("Adam betas must lie in [0, 1)")


@dataclass
class TrainResult:
    policy: MlpPolicy
    losses: np.ndarray  # per-iteration minibatch objective
    learning_rates: np.ndarray

    @property
    def final_loss(self) -> float:
        return float(self.losses[-1]) if self.losses.size else float("nan")


class TrainingDiverged(RuntimeError):
    """Minibatch loss became non-finite; training aborted."""

    def __init__(self, iteration: int):
        super().__init__(f"non-finite training loss at iteration {iteration}")
        self.iteration = iteration


def cosine_lr(step: int, total: int, base: float) -> float:
    """Cosine decay from `base` at step 0 to exactly 0 at step `total`."""
    if total <= 0:
        return base
    return base * 0.5 * (1.0 + np.cos(np.pi * min(step, total) / total))


def build_learner(
    rng: Rng,
    in_dim: int,
    out_dim: int,
    hidden_width: int = 64,
    hidden_depth: int = 3,
    clip: float = 10.0,
) -> MlpPolicy:
    """Learner architecture: GELU hidden stack, saturating output.

    Kernels are orthogonal, biases start at zero. The output saturation keeps
    early-training actions bounded so rollouts of a half-trained policy cannot
    inject arbitrarily large signals into the dynamics; the expert itself is
    not clipped.
    """
    widths = [in_dim] + [hidden_width] * hidden_depth + [out_dim]
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(widths, widths[1:])):
        act = Gelu() if i < len(widths) - 2 else SoftClip(clip)
        w = init_orthogonal(rng.substream(i), fan_out, fan_in)
        layers.append(Layer(w, np.zeros(fan_out), act))
    return MlpPolicy(layers)


# ----------------------------------------------------------------------
# expert data collection
# ----------------------------------------------------------------------


def collect_expert_dataset(
    system: DissSystem, n_traj: int, horizon: int, order: int, rng: Rng
) -> ExpertDataset:
    """Roll the expert from standard-normal initial states and label the
    visited states x_0..x_{T-1} with expert actions and derivatives."""
    if order not in (0, 1, 2):
        raise ValueError(f"derivative order must be 0, 1, or 2, got {order}")
    d = system.dim
    xis = rng.normal((n_traj, d))
    expert = system.expert()
    trajectories = []
    for i in range(n_traj):
        traj = rollout(system, expert, xis[i], horizon)
        states = traj.states[:-1]
        bundle = expert.input_derivatives(states, order)
        trajectories.append(
            ExpertTrajectory(
                xi=xis[i],
                states=states,
                actions=bundle.value,
                jacobians=bundle.jacobian,
                hessians=bundle.hessian,
            )
        )
    return ExpertDataset(trajectories, order)


def _label_trajectory(system: DissSystem, traj: Trajectory, order: int) -> ExpertTrajectory:
    # full rollouts label x_0..x_{T-1}; truncated ones keep every finite state
    states = traj.states if traj.diverged_at is not None else traj.states[:-1]
    bundle = system.expert().input_derivatives(states, order)
    return ExpertTrajectory(traj.xi, states, bundle.value, bundle.jacobian, bundle.hessian)


# ----------------------------------------------------------------------
# Adam + cosine behavior cloning
# ----------------------------------------------------------------------


class _Adam:
    def __init__(self, n: int, cfg: TrainConfig):
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self.t = 0
        self.cfg = cfg

    def step(self, params: np.ndarray, grad: np.ndarray, lr: float) -> np.ndarray:
        c = self.cfg
        self.t += 1
        self.m = c.beta1 * self.m + (1.0 - c.beta1) * grad
        self.v = c.beta2 * self.v + (1.0 - c.beta2) * grad * grad
        m_hat = self.m / (1.0 - c.beta1**self.t)
        v_hat = self.v / (1.0 - c.beta2**self.t)
        return params - lr * m_hat / (np.sqrt(v_hat) + c.eps)


def train_bc(
    dataset: ExpertDataset,
    policy: MlpPolicy,
    loss_cfg: TaylorLossConfig | FdConfig,
    train_cfg: TrainConfig,
    rng: Rng,
    fd_targets: FdTargets | None = None,
) -> TrainResult:
    """Clone the expert on a fixed dataset; returns a trained copy.

    The input policy is not mutated. State-action pairs are shuffled across
    trajectory boundaries every epoch; the l2 term enters as an additive
    gradient weight_decay * theta and is not part of the reported loss.
    """
    use_fd = isinstance(loss_cfg, FdConfig)
    if use_fd and fd_targets is None:
        raise ValueError("finite-difference training needs precomputed FdTargets")
    if not use_fd and loss_cfg.order > dataset.order:
        raise ValueError(
            f"dataset stores derivatives up to order {dataset.order}, "
            f"loss needs order {loss_cfg.order}"
        )

    states, actions, jac, hess = dataset.flat()
    n_total = states.shape[0]
    if n_total == 0:
        raise ValueError("dataset is empty")
    batch = min(train_cfg.batch_size, n_total)

    policy = policy.copy()
    params = policy.get_params()
    adam = _Adam(params.size, train_cfg)
    losses = np.empty(train_cfg.iterations)
    lrs = np.empty(train_cfg.iterations)

    perm = rng.permutation(n_total)
    pos = 0
    for it in range(train_cfg.iterations):
        if pos + batch > n_total:
            perm = rng.permutation(n_total)
            pos = 0
        idx = perm[pos : pos + batch]
        pos += batch

        policy.set_params(params)
        if use_fd:
            loss, grad = fd_batch_loss_and_gradient(
                policy,
                states[idx],
                actions[idx],
                fd_targets.deltas[idx],
                fd_targets.expert_shift[idx],
                loss_cfg,
            )
        else:
            loss, grad = taylor_batch_loss_and_gradient(
                policy,
                states[idx],
                actions[idx],
                jac[idx] if loss_cfg.order >= 1 else None,
                hess[idx] if loss_cfg.order >= 2 else None,
                loss_cfg,
            )
        if not np.isfinite(loss):
            raise TrainingDiverged(it)
        if train_cfg.weight_decay != 0.0:
            grad = grad + train_cfg.weight_decay * params

        lr = cosine_lr(it, train_cfg.iterations, train_cfg.learning_rate)
        params = adam.step(params, grad, lr)
        losses[it] = loss
        lrs[it] = lr

    policy.set_params(params)
    return TrainResult(policy, losses, lrs)


# ----------------------------------------------------------------------
# DAgger: mixture rollouts, sparse retraining
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class DaggerConfig:
    budget: int = 30
    beta_decay: float = 0.5
    update_points: tuple[int, ...] = (1, 5, 20, 30)
    horizon: int = 100

    def __post_init__(self):
        if self.budget < 1:
            raise ValueError("budget must be at least one trajectory")
        if not 0.0 <= self.beta_decay <= 1.0:
            raise ValueError("beta decay must lie in [0, 1]")
        if any(p < 1 for p in self.update_points):
            raise ValueError("update points are 1-based trajectory counts")


@dataclass
class DaggerResult:
    policy: MlpPolicy
    dataset: ExpertDataset
    betas: list[float]  # mixture coefficient used while collecting each trajectory
    update_counts: list[int]  # trajectory counts at which retraining happened
    final_losses: list[float]


def mixture_beta(decay: float, updates_so_far: int) -> float:
    """Expert share of the mixture: decay ** (number of retrains so far)."""
    return float(decay**updates_so_far)


class _MixtureController:
    """u = beta * expert + (1 - beta) * learner; skips the learner at beta=1."""

    def __init__(self, expert, learner, beta: float):
        self.expert = expert
        self.learner = learner
        self.beta = beta

    def value(self, x: np.ndarray) -> np.ndarray:
        if self.beta >= 1.0:
            return self.expert.value(x)
        u = (1.0 - self.beta) * self.learner.value(x)
        if self.beta > 0.0:
            u = u + self.beta * self.expert.value(x)
        return u


def run_dagger(
    system: DissSystem,
    init_policy: MlpPolicy,
    loss_cfg: TaylorLossConfig,
    train_cfg: TrainConfig,
    dagger_cfg: DaggerConfig,
    rng: Rng,
) -> DaggerResult:
    """Interactive imitation with mixture rollouts.

    Trajectory i starts from rng.substream(0, i); retrain k uses
    rng.substream(1, k) for shuffling and restarts from `init_policy`. The
    first rollouts use beta = 1 (pure expert), so with budget = 1 this is
    exactly behavior cloning on a single expert trajectory. Rollouts that
    diverge are truncated and their finite prefix is kept.
    """
    expert = system.expert()
    collected: list[ExpertTrajectory] = []
    betas: list[float] = []
    update_counts: list[int] = []
    final_losses: list[float] = []
    policy = init_policy.copy()
    updates = 0

    for i in range(dagger_cfg.budget):
        beta = mixture_beta(dagger_cfg.beta_decay, updates)
        betas.append(beta)
        controller = _MixtureController(expert, policy, beta)
        xi = rng.substream(0, i).normal((system.dim,))
        traj = rollout(system, controller, xi, dagger_cfg.horizon, on_divergence="truncate")
        collected.append(_label_trajectory(system, traj, loss_cfg.order))

        if (i + 1) in dagger_cfg.update_points:
            dataset = ExpertDataset(list(collected), loss_cfg.order)
            result = train_bc(dataset, init_policy, loss_cfg, train_cfg, rng.substream(1, updates))
            policy = result.policy
            final_losses.append(result.final_loss)
            update_counts.append(i + 1)
            updates += 1

    return DaggerResult(
        policy, ExpertDataset(collected, loss_cfg.order), betas, update_counts, final_losses
    )


# ----------------------------------------------------------------------
# DART: noise-injected expert rollouts
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class DartConfig:
    budget: int = 30
    update_points: tuple[int, ...] = (1, 5, 20, 30)
    noise_trajectories: int = 5
    horizon: int = 100
    initial_noise: float = 1e-4  # Sigma_0 = initial_noise * I

    def __post_init__(self):
        if self.budget < 1:
            raise ValueError("budget must be at least one trajectory")
        if self.noise_trajectories < 1:
            raise ValueError("need at least one trajectory for noise estimation")


@dataclass
class DartResult:
    policy: MlpPolicy
    dataset: ExpertDataset
    sigmas: list[np.ndarray]  # covariance used while collecting each trajectory
    update_counts: list[int]
    final_losses: list[float]


def _chol_with_jitter(sigma: np.ndarray) -> np.ndarray:
    """Cholesky factor; a rank-deficient matrix gets +1e-8 I first."""
    try:
        return np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        return np.linalg.cholesky(sigma + 1e-8 * np.eye(sigma.shape[0]))


def sample_action_noise(sigma: np.ndarray, n: int, rng: Rng) -> np.ndarray:
    """n i.i.d. N(0, sigma) draws via the (jittered) Cholesky factor."""
    chol = _chol_with_jitter(np.asarray(sigma, dtype=np.float64))
    return rng.normal((n, sigma.shape[0])) @ chol.T


def _estimate_residual_covariance(
    system: DissSystem, policy: MlpPolicy, n_traj: int, horizon: int, rng: Rng
) -> np.ndarray:
    """Uncentered covariance of learner-minus-expert actions along fresh
    expert rollouts (the zero-mean Gaussian MLE of the residual noise)."""
    expert = system.expert()
    residuals = []
    for i in range(n_traj):
        xi = rng.substream(i).normal((system.dim,))
        traj = rollout(system, expert, xi, horizon)
        states = traj.states[:-1]
        residuals.append(policy.value(states) - expert.value(states))
    r = np.concatenate(residuals)
    return r.T @ r / r.shape[0]


def run_dart(
    system: DissSystem,
    init_policy: MlpPolicy,
    loss_cfg: TaylorLossConfig,
    train_cfg: TrainConfig,
    dart_cfg: DartConfig,
    rng: Rng,
) -> DartResult:
    """Noise-injected expert demonstrations with covariance refitting.

    Demonstrations execute u = expert(x) + noise but are labelled with the
    expert's noiseless action (and derivatives) at the visited states. At each
    update point the policy is retrained from `init_policy`, the residual
    covariance is re-estimated on fresh expert rollouts, and the total-noise
    rescale alpha / (T * tr(Sigma)) is applied with alpha chosen as
    T * tr(Sigma), which makes the factor exactly one.
    """
    d = system.dim
    sigma = dart_cfg.initial_noise * np.eye(d)
    collected: list[ExpertTrajectory] = []
    sigmas: list[np.ndarray] = []
    update_counts: list[int] = []
    final_losses: list[float] = []
    policy = init_policy.copy()
    updates = 0
    expert = system.expert()

    for i in range(dart_cfg.budget):
        sigmas.append(sigma.copy())
        xi = rng.substream(0, i).normal((d,))
        noise = sample_action_noise(sigma, dart_cfg.horizon, rng.substream(1, i))
        traj = rollout(
            system, expert, xi, dart_cfg.horizon, perturbations=noise, on_divergence="truncate"
        )
        collected.append(_label_trajectory(system, traj, loss_cfg.order))

        if (i + 1) in dart_cfg.update_points:
            dataset = ExpertDataset(list(collected), loss_cfg.order)
            result = train_bc(dataset, init_policy, loss_cfg, train_cfg, rng.substream(2, updates))
            policy = result.policy
            final_losses.append(result.final_loss)
            update_counts.append(i + 1)

            est = _estimate_residual_covariance(
                system,
                policy,
                dart_cfg.noise_trajectories,
                dart_cfg.horizon,
                rng.substream(3, updates),
            )
            trace = float(np.trace(est))
            if trace > 0.0:
                alpha = dart_cfg.horizon * trace
                est = est * (alpha / (dart_cfg.horizon * trace))
            sigma = est
            updates += 1

    return DartResult(
        policy, ExpertDataset(collected, loss_cfg.order), sigmas, update_counts, final_losses
    )
