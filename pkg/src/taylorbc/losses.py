"""Derivative-matching imitation losses and their parameter gradients.

Two families:

* Exact Taylor losses penalize the norm of the action discrepancy and of its
  input derivatives up to a configured order along expert trajectories.
  Training uses the weighted sum over time; evaluation also reports the
  sup-over-time form, which is what the stability certificates consume.

* Finite-difference losses replace the first-derivative term with double
  differences of expert and learner along fixed per-state probe directions,
  for settings where expert derivatives are unavailable.

Norms are unsquared (Frobenius for matrices and rank-3 tensors), with the
subgradient at zero taken to be zero, so a learner that matches the expert
exactly is a true stationary point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import DissSystem, ExpertDataset
from .mlp import MlpPolicy, forward_bundle, param_gradient_from_seeds
from .rng import Rng
from .tensorops import operator_norm

__all__ = [
    "TaylorLossConfig",
    "FdConfig",
    "FdTargets",
    "DiscrepancyRecord",
    "discrepancy_records",
    "taylor_train_loss",
    "taylor_sup_loss",
    "taylor_batch_loss_and_gradient",
    "dataset_loss_and_gradient",
    "make_fd_targets",
    "fd_loss",
    "fd_batch_loss_and_gradient",
    "fd_jacobian_error_bound",
]

DEFAULT_WEIGHTS = (1.0, 1.0, 10.0)


@dataclass(frozen=True)
class TaylorLossConfig:
    """Derivative-matching loss up to `order`, one weight per derivative order."""

    order: int = 1
    weights: tuple[float, ...] = DEFAULT_WEIGHTS

    def __post_init__(self):
        if self.order not in (0, 1, 2):
            raise ValueError(f"loss order must be 0, 1, or 2, got {self.order}")
        if len(self.weights) < self.order + 1:
            raise ValueError(
                f"need {self.order + 1} weights for order {self.order}, got {len(self.weights)}"
            )
        if any(w < 0 for w in self.weights):
            raise ValueError(f"loss weights must be nonnegative, got {self.weights}")

    def active_weights(self) -> tuple[float, ...]:
        return tuple(self.weights[: self.order + 1])


@dataclass(frozen=True)
class FdConfig:
    """Finite-difference surrogate for the first-derivative matching term.

    `count` probe directions of length `radius` per state; "basis" uses the
    first `count` scaled standard basis vectors, "sphere" draws fixed uniform
    sphere points once per state. When training, the double-difference term is
    weighted by weight/radius (the 1/radius restores the scale of a directional
    derivative) alongside `zero_weight` times the plain action discrepancy.
    """

    count: int
    radius: float = 0.01
    scheme: str = "sphere"
    weight: float = 1.0
    zero_weight: float = 1.0

    def __post_init__(self):
        if self.count < 0:
            raise ValueError(f"probe count must be nonnegative, got {self.count}")
        if not self.radius > 0:
            raise ValueError(f"probe radius must be positive, got {self.radius}")
        if self.scheme not in ("basis", "sphere"):
            raise ValueError(f"scheme must be 'basis' or 'sphere', got {self.scheme!r}")


@dataclass
class FdTargets:
    """Fixed probe directions and expert values at the probed points.

    Arrays are aligned with ExpertDataset.flat(): deltas (N, count, d),
    expert_shift (N, count, d_out). Drawn once and reused for the whole of
    training, so the loss surface does not move between iterations.
    """

    deltas: np.ndarray
    expert_shift: np.ndarray


@dataclass
class DiscrepancyRecord:
    """Learner-minus-expert differences along one expert trajectory."""

    values: np.ndarray  # (T, m)
    jacobians: np.ndarray | None  # (T, m, d)
    hessians: np.ndarray | None  # (T, m, d, d)

    def norms(self, order: int) -> np.ndarray:
        """Per-step Frobenius norms of the order-th derivative discrepancy."""
        if order == 0:
            return np.linalg.norm(self.values, axis=-1)
        if order == 1:
            if self.jacobians is None:
                raise ValueError("record holds no jacobian discrepancies")
            return np.linalg.norm(self.jacobians.reshape(self.jacobians.shape[0], -1), axis=-1)
        if order == 2:
            if self.hessians is None:
                raise ValueError("record holds no hessian discrepancies")
            return np.linalg.norm(self.hessians.reshape(self.hessians.shape[0], -1), axis=-1)
        raise ValueError(f"unsupported order {order}")

    def operator_norms(self, order: int) -> np.ndarray:
        """Per-step operator norms (order 1); Frobenius upper bound at order 2."""
        if order == 0:
            return self.norms(0)
        if order == 1:
            return np.array([operator_norm(j) for j in self.jacobians])
        if order == 2:
            # Frobenius dominates the rank-3 operator norm; flagged by callers
            return self.norms(2)
        raise ValueError(f"unsupported order {order}")


def discrepancy_records(
    dataset: ExpertDataset, policy, order: int
) -> list[DiscrepancyRecord]:
    """Evaluate the policy along each stored trajectory and subtract labels."""
    if order > dataset.order:
        raise ValueError(
            f"dataset stores derivatives up to order {dataset.order}, requested {order}"
        )
    records = []
    for traj in dataset.trajectories:
        bundle = policy.input_derivatives(traj.states, order)
        records.append(
            DiscrepancyRecord(
                bundle.value - traj.actions,
                bundle.jacobian - traj.jacobians if order >= 1 else None,
                bundle.hessian - traj.hessians if order >= 2 else None,
            )
        )
    return records


# ----------------------------------------------------------------------
# exact Taylor losses
# ----------------------------------------------------------------------


def taylor_train_loss(dataset: ExpertDataset, policy, cfg: TaylorLossConfig) -> float:
    """Weighted sum over time of discrepancy norms, averaged over trajectories."""
    weights = cfg.active_weights()
    total = 0.0
    for rec in discrepancy_records(dataset, policy, cfg.order):
        for j, w in enumerate(weights):
            total += w * rec.norms(j).sum()
    return total / max(len(dataset), 1)


def taylor_sup_loss(dataset: ExpertDataset, policy, order: int) -> float:
    """Unweighted mean of per-order sup-over-time norms, averaged over trajectories.

    This is the quantity the imitation-gap theory bounds: each derivative
    order contributes its worst-case (over the trajectory) discrepancy.
    """
    total = 0.0
    for rec in discrepancy_records(dataset, policy, order):
        total += sum(rec.norms(j).max() for j in range(order + 1)) / (order + 1)
    return total / max(len(dataset), 1)


def _unit_seeds(diffs: np.ndarray, weight: float, normalizer: float) -> np.ndarray:
    """weight * d/d(diff) of sum of row norms, rows flattened over trailing axes."""
    flat = diffs.reshape(diffs.shape[0], -1)
    norms = np.linalg.norm(flat, axis=-1)
    inv = np.where(norms > 0.0, 1.0 / np.maximum(norms, 1e-300), 0.0)
    return (weight / normalizer) * diffs * inv.reshape((-1,) + (1,) * (diffs.ndim - 1))


def taylor_batch_loss_and_gradient(
    policy: MlpPolicy,
    states: np.ndarray,
    actions: np.ndarray,
    jacobians: np.ndarray | None,
    hessians: np.ndarray | None,
    cfg: TaylorLossConfig,
    normalizer: float | None = None,
) -> tuple[float, np.ndarray]:
    """Loss (1/normalizer) * sum over rows of weighted discrepancy norms, plus
    its exact flat parameter gradient. The default normalizer is the row count
    (i.e. a per-state mean, the minibatch objective)."""
    weights = cfg.active_weights()
    bsz = states.shape[0]
    norm = float(bsz if normalizer is None else normalizer)

    bundle, tape = forward_bundle(policy, states, cfg.order)
    dv = bundle.value - actions
    loss = weights[0] * np.linalg.norm(dv, axis=-1).sum()
    g_value = _unit_seeds(dv, weights[0], norm)
    g_jac = g_hess = None
    if cfg.order >= 1:
        if jacobians is None:
            raise ValueError("order >= 1 loss needs jacobian labels")
        dj = bundle.jacobian - jacobians
        loss += weights[1] * np.linalg.norm(dj.reshape(bsz, -1), axis=-1).sum()
        g_jac = _unit_seeds(dj, weights[1], norm)
    if cfg.order >= 2:
        if hessians is None:
            raise ValueError("order >= 2 loss needs hessian labels")
        dh = bundle.hessian - hessians
        loss += weights[2] * np.linalg.norm(dh.reshape(bsz, -1), axis=-1).sum()
        g_hess = _unit_seeds(dh, weights[2], norm)

    grad = param_gradient_from_seeds(policy, tape, g_value, g_jac, g_hess)
    return loss / norm, grad


def dataset_loss_and_gradient(
    policy: MlpPolicy, dataset: ExpertDataset, cfg: TaylorLossConfig
) -> tuple[float, np.ndarray]:
    """taylor_train_loss over the whole dataset together with its gradient."""
    states, actions, jac, hess = dataset.flat()
    return taylor_batch_loss_and_gradient(
        policy,
        states,
        actions,
        jac if cfg.order >= 1 else None,
        hess if cfg.order >= 2 else None,
        cfg,
        normalizer=float(max(len(dataset), 1)),
    )


# ----------------------------------------------------------------------
# finite-difference variant
# ----------------------------------------------------------------------


def make_fd_targets(
    dataset: ExpertDataset, system: DissSystem, cfg: FdConfig, rng: Rng
) -> FdTargets:
    """Draw fixed probe directions and query the expert at the probed points."""
    states, _, _, _ = dataset.flat()
    n, d = states.shape
    if cfg.scheme == "basis":
        if cfg.count > d:
            raise ValueError(
                f"basis scheme supports at most dim={d} probes, got {cfg.count}"
            )
        base = cfg.radius * np.eye(d)[: cfg.count]
        deltas = np.broadcast_to(base, (n, cfg.count, d)).copy()
    else:
        deltas = rng.sphere(n * cfg.count, d, cfg.radius).reshape(n, cfg.count, d)
    expert = system.expert()
    shifted = (states[:, np.newaxis, :] + deltas).reshape(n * cfg.count, d)
    expert_shift = expert.value(shifted).reshape(n, cfg.count, -1)
    return FdTargets(deltas, expert_shift)


def _fd_double_differences(
    policy,
    states: np.ndarray,
    actions: np.ndarray,
    deltas: np.ndarray,
    expert_shift: np.ndarray,
):
    """Per state and probe: (expert difference) - (learner difference)."""
    n, count, d = deltas.shape
    shifted = (states[:, np.newaxis, :] + deltas).reshape(n * count, d)
    u_base = policy.value(states)
    u_shift = policy.value(shifted).reshape(n, count, -1)
    expert_diff = expert_shift - actions[:, np.newaxis, :]
    learner_diff = u_shift - u_base[:, np.newaxis, :]
    return expert_diff - learner_diff


def fd_loss(
    dataset: ExpertDataset, policy, cfg: FdConfig, targets: FdTargets
) -> float:
    """Sum over time of the worst probe's double-difference norm, averaged
    over trajectories (raw scale: values shrink linearly with the radius)."""
    states, actions, _, _ = dataset.flat()
    g = _fd_double_differences(policy, states, actions, targets.deltas, targets.expert_shift)
    per_state = np.linalg.norm(g, axis=-1).max(axis=-1) if cfg.count > 0 else np.zeros(len(states))
    return float(per_state.sum()) / max(len(dataset), 1)


def fd_batch_loss_and_gradient(
    policy: MlpPolicy,
    states: np.ndarray,
    actions: np.ndarray,
    deltas: np.ndarray,
    expert_shift: np.ndarray,
    cfg: FdConfig,
) -> tuple[float, np.ndarray]:
    """Training objective zero_weight * |du| + (weight/radius) * max-probe term,
    averaged over the batch, with its exact parameter gradient.

    The gradient of the max term flows through the argmax probe only (the
    standard subgradient choice; ties resolve to the first maximizer).
    """
    bsz, count, d = deltas.shape
    w_fd = cfg.weight / cfg.radius
    shifted = (states[:, np.newaxis, :] + deltas).reshape(bsz * count, d)
    x_all = np.concatenate([states, shifted])

    bundle, tape = forward_bundle(policy, x_all, 0)
    u_base = bundle.value[:bsz]
    u_shift = bundle.value[bsz:].reshape(bsz, count, -1)

    dv = u_base - actions
    n0 = np.linalg.norm(dv, axis=-1)
    g = (expert_shift - actions[:, np.newaxis, :]) - (u_shift - u_base[:, np.newaxis, :])
    gn = np.linalg.norm(g, axis=-1)  # (bsz, count)

    loss = cfg.zero_weight * n0.sum()
    seeds_base = _unit_seeds(dv, cfg.zero_weight, bsz)
    seeds_shift = np.zeros_like(u_shift)
    if count > 0:
        best = np.argmax(gn, axis=-1)
        rows = np.arange(bsz)
        best_norm = gn[rows, best]
        loss += w_fd * best_norm.sum()
        inv = np.where(best_norm > 0.0, 1.0 / np.maximum(best_norm, 1e-300), 0.0)
        ghat = g[rows, best] * inv[:, np.newaxis]
        # d loss / d u_shift[best] = -ghat, d loss / d u_base = +ghat
        seeds_base = seeds_base + (w_fd / bsz) * ghat
        seeds_shift[rows, best] = -(w_fd / bsz) * ghat

    seeds = np.concatenate([seeds_base, seeds_shift.reshape(bsz * count, -1)])
    grad = param_gradient_from_seeds(policy, tape, seeds)
    return loss / bsz, grad


def fd_jacobian_error_bound(m_matrix: np.ndarray, s_matrix: np.ndarray, curvature: float) -> float:
    """Certified bound |S^-1| (|M| + curvature |S|^2) on the Jacobian-estimate error.

    S stacks the probe directions as columns (square, invertible); M stacks the
    residual double differences; `curvature` bounds the second-derivative
    remainder of expert and learner. Norms are operator norms. For S = eps*I
    this reduces to |M|/eps + curvature*eps.
    """
    s = np.asarray(s_matrix, dtype=np.float64)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ValueError(f"probe matrix must be square, got shape {s.shape}")
    if curvature < 0:
        raise ValueError(f"curvature bound must be nonnegative, got {curvature}")
    svals = np.linalg.svd(s, compute_uv=False)
    if svals[-1] <= 1e-12 * max(svals[0], 1e-300):
        raise ValueError("probe matrix is singular or numerically rank-deficient")
    s_norm = float(svals[0])
    s_inv_norm = 1.0 / float(svals[-1])
    m_norm = operator_norm(np.asarray(m_matrix, dtype=np.float64))
    return s_inv_norm * (m_norm + curvature * s_norm * s_norm)
