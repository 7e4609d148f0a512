"""Synthetic incrementally input-to-state stable benchmark dynamics.

The state update contracts toward the origin at a fixed rate and is pushed
around only through a gain function of the combined signal h(x) + u, where h
is a random smooth network "disturbance" map:

    x+ = eta * x + (1 - eta) * gain(|h(x) + u|) / |h(x) + u| * (h(x) + u)

The expert controller u = -h(x) cancels the disturbance exactly, so expert
rollouts contract geometrically, and the worst-case deviation of any other
controller is governed by the gain function evaluated at its action
discrepancy. That makes the closed-loop sensitivity to imitation error a
single tunable knob (the gain exponent) and gives every experiment here a
ground-truth stability certificate to check against.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .activations import Gelu, Identity
from .mlp import DerivativeBundle, Layer, MlpPolicy
from .rng import Rng
from .tensorops import init_lecun_normal

__all__ = [
    "ClassK",
    "DissSystem",
    "ExpertController",
    "Trajectory",
    "ExpertTrajectory",
    "ExpertDataset",
    "RolloutDivergence",
    "build_system",
    "rollout",
    "imitation_gap",
    "mean_policy_discrepancy",
    "GapResult",
    "EvalBatch",
    "evaluate_policy_batch",
    "label_states",
    "write_trajectory_csv",
]

ZERO_SIGNAL_GUARD = 1e-12

# biases of the disturbance net are drawn with variance 0.1
EXPERT_BIAS_STD = float(np.sqrt(0.1))


@dataclass(frozen=True)
class ClassK:
    """Monomial class-K gain  gain(x) = scale * x ** exponent  on x >= 0."""

    scale: float = 5.0
    exponent: float = 1.0

    def __post_init__(self):
        if not (self.scale > 0 and self.exponent > 0):
            raise ValueError(
                f"class-K gain needs positive scale and exponent, got {self.scale}, {self.exponent}"
            )

    def __call__(self, x):
        return self.scale * np.asarray(x, dtype=np.float64) ** self.exponent

    def inverse(self, y):
        return (np.asarray(y, dtype=np.float64) / self.scale) ** (1.0 / self.exponent)


class ExpertController:
    """Disturbance-cancelling expert u*(x) = -h(x), derivatives included."""

    def __init__(self, disturbance: MlpPolicy):
        self._net = disturbance

    def value(self, x: np.ndarray) -> np.ndarray:
        return -self._net.value(x)

    def input_derivatives(self, x: np.ndarray, order: int) -> DerivativeBundle:
        b = self._net.input_derivatives(x, order)
        return DerivativeBundle(
            -b.value,
            None if b.jacobian is None else -b.jacobian,
            None if b.hessian is None else -b.hessian,
        )


@dataclass
class DissSystem:
    """Contractive benchmark system; state and action share one dimension."""

    contraction: float  # eta in (0, 1)
    gain: ClassK
    disturbance: MlpPolicy  # h: R^d -> R^d

    def __post_init__(self):
        if not 0.0 < self.contraction < 1.0:
            raise ValueError(f"contraction rate must lie in (0,1), got {self.contraction}")
        if self.disturbance.in_dim != self.disturbance.out_dim:
            raise ValueError("disturbance map must be square (state dim == action dim)")

    @property
    def dim(self) -> int:
        return self.disturbance.in_dim

    def expert(self) -> ExpertController:
        return ExpertController(self.disturbance)

    def expert_policy(self) -> MlpPolicy:
        """The expert as a trainable network (exact, not a fit).

        Negating the last layer of the disturbance map realizes u = -h(x)
        whenever the output activation is odd about zero; built systems use a
        linear output layer, where this is exact.
        """
        net = self.disturbance.copy()
        last = net.layers[-1]
        if not isinstance(last.activation, Identity):
            raise ValueError("expert_policy needs a linear output layer on the disturbance map")
        net.layers[-1] = Layer(-last.weight, -last.bias, last.activation)
        return net

    def step(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        """One transition; accepts (d,) or (B, d) state/action pairs."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        xb = x[np.newaxis, :] if single else x
        ub = np.asarray(u, dtype=np.float64)
        ub = ub[np.newaxis, :] if single else ub
        nxt = self._step_batch(xb, ub)
        return nxt[0] if single else nxt

    def _step_batch(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        if x.shape != u.shape:
            raise ValueError(f"state/action shape mismatch: {x.shape} vs {u.shape}")
        with np.errstate(over="ignore", invalid="ignore"):
            v = self.disturbance.value(x) + u
            nv = np.linalg.norm(v, axis=-1)
            # continuous extension at v = 0: the direction is undefined there,
            # so the whole second term is zeroed below the guard threshold
            safe = np.maximum(nv, ZERO_SIGNAL_GUARD)
            scale = np.where(nv > ZERO_SIGNAL_GUARD, self.gain(nv) / safe, 0.0)
            return self.contraction * x + (1.0 - self.contraction) * scale[:, np.newaxis] * v


def build_system(
    rng: Rng,
    dim: int = 10,
    contraction: float = 0.95,
    gain_scale: float = 5.0,
    gain_exponent: float = 1.0,
    hidden_width: int = 32,
    hidden_depth: int = 2,
) -> DissSystem:
    """Draw a fresh benchmark system.

    The disturbance net uses GELU hidden layers with LeCun-normal kernels and
    normal biases of variance 0.1, linear output. Everything is a pure
    function of the supplied stream.
    """
    widths = [dim] + [hidden_width] * hidden_depth + [dim]
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(widths, widths[1:])):
        act = Gelu() if i < len(widths) - 2 else Identity()
        w = init_lecun_normal(rng.substream(2 * i), fan_out, fan_in)
        b = rng.substream(2 * i + 1).normal((fan_out,), scale=EXPERT_BIAS_STD)
        layers.append(Layer(w, b, act))
    net = MlpPolicy(layers)
    return DissSystem(contraction, ClassK(gain_scale, gain_exponent), net)


# ----------------------------------------------------------------------
# rollouts
# ----------------------------------------------------------------------


class RolloutDivergence(RuntimeError):
    """State became non-finite while rolling out a controller."""

    def __init__(self, step: int):
        super().__init__(f"state became non-finite at step {step}")
        self.step = step


@dataclass
class Trajectory:
    xi: np.ndarray  # initial state (d,)
    states: np.ndarray  # (T+1, d), states[0] == xi
    actions: np.ndarray  # (T, d)
    diverged_at: int | None = None  # step index if truncated, else None

    @property
    def horizon(self) -> int:
        return self.actions.shape[0]


def rollout(
    system: DissSystem,
    controller,
    xi: np.ndarray,
    horizon: int,
    perturbations: np.ndarray | None = None,
    on_divergence: str = "raise",
) -> Trajectory:
    """Closed-loop rollout u_t = controller(x_t) + perturbation_t.

    `controller` is anything with a `value(x)` method (expert, learned policy,
    or a mixture). With on_divergence="truncate", a non-finite state ends the
    rollout early and the kept prefix is returned with `diverged_at` set;
    "raise" raises RolloutDivergence instead.
    """
    if on_divergence not in ("raise", "truncate"):
        raise ValueError(f"on_divergence must be 'raise' or 'truncate', got {on_divergence!r}")
    xi = np.asarray(xi, dtype=np.float64)
    d = system.dim
    if xi.shape != (d,):
        raise ValueError(f"initial state must have shape ({d},), got {xi.shape}")
    if perturbations is not None:
        perturbations = np.asarray(perturbations, dtype=np.float64)
        if perturbations.shape != (horizon, d):
            raise ValueError(
                f"perturbations must have shape ({horizon}, {d}), got {perturbations.shape}"
            )

    states = np.empty((horizon + 1, d))
    actions = np.empty((horizon, d))
    states[0] = xi
    for t in range(horizon):
        with np.errstate(over="ignore", invalid="ignore"):
            u = np.asarray(controller.value(states[t]), dtype=np.float64)
            if perturbations is not None:
                u = u + perturbations[t]
            actions[t] = u
            states[t + 1] = system.step(states[t], u)
        if not np.all(np.isfinite(states[t + 1])):
            if on_divergence == "raise":
                raise RolloutDivergence(t + 1)
            return Trajectory(xi, states[: t + 1].copy(), actions[:t].copy(), diverged_at=t + 1)
    return Trajectory(xi, states, actions)


# ----------------------------------------------------------------------
# imitation metrics
# ----------------------------------------------------------------------


class GapResult(float):
    """Float with a `diverged` flag; inf when the learner rollout blew up."""

    diverged: bool

    def __new__(cls, value: float, diverged: bool):
        obj = super().__new__(cls, value)
        obj.diverged = diverged
        return obj


def imitation_gap(
    system: DissSystem, learner, xi: np.ndarray, horizon: int
) -> GapResult:
    """Worst state deviation of the learner rollout from the expert rollout.

    Both rollouts start from the same xi; the maximum is over steps 1..T.
    A diverged learner yields an infinite gap with the flag set.
    """
    expert_traj = rollout(system, system.expert(), xi, horizon)
    learner_traj = rollout(system, learner, xi, horizon, on_divergence="truncate")
    if learner_traj.diverged_at is not None:
        return GapResult(np.inf, True)
    diffs = np.linalg.norm(learner_traj.states[1:] - expert_traj.states[1:], axis=1)
    return GapResult(float(diffs.max()) if diffs.size else 0.0, False)


def mean_policy_discrepancy(
    system: DissSystem, learner, xi: np.ndarray, horizon: int
) -> GapResult:
    """Average action disagreement with the expert along the learner's rollout.

    Averages |learner(x_t) - expert(x_t)| over t = 0..T-1 of the learner's own
    trajectory; inf (flagged) when that trajectory diverges.
    """
    learner_traj = rollout(system, learner, xi, horizon, on_divergence="truncate")
    if learner_traj.diverged_at is not None:
        return GapResult(np.inf, True)
    states = learner_traj.states[:-1]
    expert_u = system.expert().value(states)
    learner_u = learner.value(states)
    return GapResult(float(np.linalg.norm(learner_u - expert_u, axis=1).mean()), False)


@dataclass
class EvalBatch:
    """Per-initial-state metrics from paired expert/learner rollouts."""

    gaps: np.ndarray  # (B,), inf where diverged
    discrepancies: np.ndarray  # (B,), inf where diverged
    diverged: np.ndarray  # (B,) bool


def evaluate_policy_batch(
    system: DissSystem, learner, xis: np.ndarray, horizon: int
) -> EvalBatch:
    """imitation_gap and mean_policy_discrepancy for many initial states at once.

    Rolls all pairs forward together; rows whose learner rollout goes
    non-finite are frozen and reported as diverged with infinite metrics.
    """
    xis = np.asarray(xis, dtype=np.float64)
    if xis.ndim != 2 or xis.shape[1] != system.dim:
        raise ValueError(f"expected initial states of shape (B, {system.dim}), got {xis.shape}")
    bsz = xis.shape[0]
    expert = system.expert()
    x_exp = xis.copy()
    x_lrn = xis.copy()
    alive = np.ones(bsz, dtype=bool)
    gaps = np.zeros(bsz)
    disc = np.zeros(bsz)

    for _ in range(horizon):
        u_exp = expert.value(x_exp)
        if alive.any():
            idx = np.flatnonzero(alive)
            xs = x_lrn[idx]
            with np.errstate(over="ignore", invalid="ignore"):
                u_lrn = np.asarray(learner.value(xs), dtype=np.float64)
                disc[idx] += np.linalg.norm(u_lrn - expert.value(xs), axis=1)
                nxt = system.step(xs, u_lrn)
            ok = np.all(np.isfinite(nxt), axis=1)
            x_lrn[idx[ok]] = nxt[ok]
            alive[idx[~ok]] = False
        x_exp = system.step(x_exp, u_exp)
        live = np.flatnonzero(alive)
        if live.size:
            gaps[live] = np.maximum(
                gaps[live], np.linalg.norm(x_lrn[live] - x_exp[live], axis=1)
            )

    gaps[~alive] = np.inf
    disc[~alive] = np.inf
    disc[alive] /= horizon
    return EvalBatch(gaps, disc, ~alive)


# ----------------------------------------------------------------------
# expert demonstrations
# ----------------------------------------------------------------------


@dataclass
class ExpertTrajectory:
    """One demonstration: visited states with expert labels and derivatives."""

    xi: np.ndarray
    states: np.ndarray  # (T, d): the states x_0 .. x_{T-1} that carry labels
    actions: np.ndarray  # (T, d): expert actions at those states
    jacobians: np.ndarray | None  # (T, d, d)
    hessians: np.ndarray | None  # (T, d, d, d)

    @property
    def length(self) -> int:
        return self.states.shape[0]


@dataclass
class ExpertDataset:
    """Demonstration set with expert derivatives stored up to `order`."""

    trajectories: list[ExpertTrajectory]
    order: int
    _flat: tuple | None = field(default=None, repr=False, compare=False)

    def __len__(self) -> int:
        return len(self.trajectories)

    @property
    def total_states(self) -> int:
        return sum(t.length for t in self.trajectories)

    def flat(self) -> tuple[np.ndarray, np.ndarray, np.ndarray | None, np.ndarray | None]:
        """All labelled pairs concatenated: (states, actions, jacobians, hessians)."""
        if self._flat is None:
            states = np.concatenate([t.states for t in self.trajectories])
            actions = np.concatenate([t.actions for t in self.trajectories])
            jac = (
                np.concatenate([t.jacobians for t in self.trajectories])
                if self.order >= 1
                else None
            )
            hess = (
                np.concatenate([t.hessians for t in self.trajectories])
                if self.order >= 2
                else None
            )
            self._flat = (states, actions, jac, hess)
        return self._flat


def label_states(system: DissSystem, states: np.ndarray, order: int):
    """Expert action and input derivatives at a batch of states."""
    bundle = system.expert().input_derivatives(states, order)
    return bundle


def write_trajectory_csv(path, dataset: ExpertDataset) -> None:
    """Flat CSV dump of a demonstration set: one row per labelled state."""
    d = dataset.trajectories[0].states.shape[1] if dataset.trajectories else 0
    header = (
        ["trajectory", "t"]
        + [f"x{i}" for i in range(d)]
        + [f"u{i}" for i in range(d)]
    )
    lines = [",".join(header)]
    for k, traj in enumerate(dataset.trajectories):
        for t in range(traj.length):
            cells = [str(k), str(t)]
            cells += [f"{v:.17g}" for v in traj.states[t]]
            cells += [f"{v:.17g}" for v in traj.actions[t]]
            lines.append(",".join(cells))
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")
