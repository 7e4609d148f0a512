import numpy as np
import pytest

import taylorbc.dynamics as dynamics
from taylorbc.activations import Gelu, Identity
from taylorbc.dynamics import (
    ClassK,
    DissSystem,
    RolloutDivergence,
    build_system,
    evaluate_policy_batch,
    imitation_gap,
    mean_policy_discrepancy,
    rollout,
    write_trajectory_csv,
)
from taylorbc.mlp import Layer, MlpPolicy
from taylorbc.rng import Rng
from taylorbc.training import collect_expert_dataset


def _zero_net(d):
    return MlpPolicy([Layer(np.zeros((d, d)), np.zeros(d), Identity())])


class _ConstantOffset:
    """Expert plus a constant action offset."""

    def __init__(self, expert, c):
        self.expert = expert
        self.c = np.asarray(c, dtype=np.float64)

    def value(self, x):
        return self.expert.value(x) + self.c


class _LinearController:
    def __init__(self, a):
        self.a = a

    def value(self, x):
        return self.a * np.asarray(x)


# ----------------------------------------------------------------------
# class-K gain
# ----------------------------------------------------------------------


def test_classk_zero_and_increasing():
    g = ClassK(5.0, 0.7)
    assert g(0.0) == 0.0
    xs = np.linspace(0.01, 10, 200)
    assert np.all(np.diff(g(xs)) > 0)


def test_classk_inverse_round_trip_over_sweep_grid():
    ys = np.logspace(-6, 3, 200)
    for nu in (0.05, 0.3, 0.5, 1.0, 1.5, 2.0, 3.0):
        g = ClassK(5.0, nu)
        back = g(g.inverse(ys))
        assert np.abs(back - ys).max() / ys.max() < 1e-10
        rel = np.abs(back - ys) / ys
        assert rel.max() < 1e-10


def test_classk_rejects_bad_params():
    with pytest.raises(ValueError):
        ClassK(0.0, 1.0)
    with pytest.raises(ValueError):
        ClassK(5.0, 0.0)


# ----------------------------------------------------------------------
# step
# ----------------------------------------------------------------------


def test_step_with_zero_net_and_zero_action():
    d = 4
    sys_ = DissSystem(0.95, ClassK(5.0, 1.0), _zero_net(d))
    x = np.zeros(d)
    x[0] = 1.0
    nxt = sys_.step(x, np.zeros(d))
    assert np.abs(nxt - 0.95 * x).max() < 1e-15


def test_step_with_exact_expert_contracts():
    rng = Rng(0)
    sys_ = build_system(rng.substream(0), dim=4, hidden_width=8, hidden_depth=2)
    x = rng.substream(1).normal((4,))
    u = sys_.expert().value(x)
    nxt = sys_.step(x, u)
    assert np.abs(nxt - 0.95 * x).max() < 1e-12


def test_step_matches_straight_line_evaluation():
    rng = Rng(1)
    sys_ = build_system(rng.substream(0), dim=4, hidden_width=8, hidden_depth=2)
    for i in range(20):
        x = rng.substream(10 + i).normal((4,))
        u = rng.substream(100 + i).normal((4,))
        v = sys_.disturbance.value(x) + u
        nv = np.linalg.norm(v)
        expected = 0.95 * x + 0.05 * (5.0 * nv ** 1.0) / nv * v
        got = sys_.step(x, u)
        assert np.abs(got - expected).max() < 1e-12


def test_step_guard_threshold_insensitive(monkeypatch):
    rng = Rng(2)
    sys_ = build_system(rng.substream(0), dim=3, hidden_width=8, hidden_depth=2)
    xs = rng.substream(1).normal((50, 3))
    us = rng.substream(2).normal((50, 3))
    # keep only pairs comfortably away from the guard region
    keep = np.linalg.norm(sys_.disturbance.value(xs) + us, axis=1) > 1e-8
    xs, us = xs[keep], us[keep]
    baseline = sys_.step(xs, us)
    for guard in (1e-14, 1e-12, 1e-10):
        monkeypatch.setattr(dynamics, "ZERO_SIGNAL_GUARD", guard)
        assert np.abs(sys_.step(xs, us) - baseline).max() < 1e-9


def test_step_zero_signal_is_contraction_only():
    d = 3
    sys_ = DissSystem(0.95, ClassK(5.0, 0.5), _zero_net(d))
    x = Rng(3).normal((d,))
    # h == 0 and u == 0 makes the second term vanish through the guard,
    # even though gain(x)/x blows up as x -> 0 for exponents < 1
    nxt = sys_.step(x, np.zeros(d))
    assert np.all(np.isfinite(nxt))
    assert np.abs(nxt - 0.95 * x).max() < 1e-15


# ----------------------------------------------------------------------
# expert
# ----------------------------------------------------------------------


def test_expert_is_exact_negation_of_disturbance():
    sys_ = build_system(Rng(4).substream(0), dim=4, hidden_width=8, hidden_depth=2)
    xs = Rng(5).normal((6, 4))
    be = sys_.expert().input_derivatives(xs, 2)
    bh = sys_.disturbance.input_derivatives(xs, 2)
    assert np.array_equal(be.value, -bh.value)
    assert np.array_equal(be.jacobian, -bh.jacobian)
    assert np.array_equal(be.hessian, -bh.hessian)


def test_expert_policy_matches_expert_and_is_trainable():
    sys_ = build_system(Rng(6).substream(0), dim=4, hidden_width=8, hidden_depth=2)
    pol = sys_.expert_policy()
    xs = Rng(7).normal((5, 4))
    assert np.abs(pol.value(xs) - sys_.expert().value(xs)).max() == 0.0
    assert pol.get_params().shape == (pol.param_count,)


def test_expert_jacobian_matches_finite_differences():
    sys_ = build_system(Rng(8).substream(0), dim=3, hidden_width=8, hidden_depth=2)
    expert = sys_.expert()
    x = Rng(9).normal((3,))
    jac = expert.input_derivatives(x, 1).jacobian
    h = 1e-5
    for i in range(3):
        e = np.zeros(3)
        e[i] = h
        col = (expert.value(x + e) - expert.value(x - e)) / (2 * h)
        assert np.abs(jac[:, i] - col).max() / max(np.abs(col).max(), 1.0) < 1e-6


# ----------------------------------------------------------------------
# rollout
# ----------------------------------------------------------------------


def test_rollout_zero_initial_state_zero_bias_net_stays_at_origin():
    d = 3
    sys_ = DissSystem(0.95, ClassK(5.0, 1.0), _zero_net(d))
    traj = rollout(sys_, sys_.expert(), np.zeros(d), 10)
    assert np.all(traj.states == 0.0)
    assert np.all(traj.actions == 0.0)


def test_rollout_horizon_one_is_single_step():
    sys_ = build_system(Rng(10).substream(0), dim=3, hidden_width=8, hidden_depth=2)
    xi = Rng(11).normal((3,))
    traj = rollout(sys_, sys_.expert(), xi, 1)
    assert traj.states.shape == (2, 3)
    assert np.array_equal(traj.states[0], xi)
    u = sys_.expert().value(xi)
    assert np.abs(traj.states[1] - sys_.step(xi, u)).max() == 0.0


def test_expert_rollout_decays_geometrically():
    sys_ = build_system(Rng(12).substream(0), dim=4, hidden_width=8, hidden_depth=2)
    xi = Rng(13).normal((4,))
    traj = rollout(sys_, sys_.expert(), xi, 50)
    norms = np.linalg.norm(traj.states, axis=1)
    expected = 0.95 ** np.arange(51) * np.linalg.norm(xi)
    assert np.abs(norms - expected).max() < 1e-9


def test_expert_rollout_bounded_by_initial_norm():
    sys_ = build_system(Rng(14).substream(0), dim=4, hidden_width=8, hidden_depth=2)
    for i in range(10):
        xi = Rng(15).substream(i).normal((4,))
        traj = rollout(sys_, sys_.expert(), xi, 30)
        assert np.linalg.norm(traj.states, axis=1).max() <= np.linalg.norm(xi) + 1e-12


def test_rollout_applies_perturbations():
    sys_ = build_system(Rng(16).substream(0), dim=3, hidden_width=8, hidden_depth=2)
    xi = Rng(17).normal((3,))
    pert = Rng(18).normal((5, 3), scale=0.1)
    traj = rollout(sys_, sys_.expert(), xi, 5, perturbations=pert)
    expected_u0 = sys_.expert().value(xi) + pert[0]
    assert np.abs(traj.actions[0] - expected_u0).max() == 0.0
    assert np.abs(traj.states[1] - sys_.step(xi, expected_u0)).max() == 0.0


def test_rollout_divergence_raise_and_truncate():
    sys_ = build_system(Rng(19).substream(0), dim=3, hidden_width=8, hidden_depth=2, gain_exponent=2.0)
    bad = _LinearController(1e8)
    xi = np.ones(3)
    with pytest.raises(RolloutDivergence) as exc:
        rollout(sys_, bad, xi, 50)
    assert exc.value.step >= 1

    traj = rollout(sys_, bad, xi, 50, on_divergence="truncate")
    assert traj.diverged_at is not None
    assert traj.states.shape[0] == traj.diverged_at
    assert traj.actions.shape[0] == traj.diverged_at - 1
    assert np.all(np.isfinite(traj.states))


# ----------------------------------------------------------------------
# imitation metrics
# ----------------------------------------------------------------------


def test_gap_zero_for_expert():
    sys_ = build_system(Rng(20).substream(0), dim=3, hidden_width=8, hidden_depth=2)
    xi = Rng(21).normal((3,))
    gap = imitation_gap(sys_, sys_.expert(), xi, 20)
    assert gap == 0.0 and not gap.diverged


def test_gap_of_constant_offset_bounded_by_gain():
    # bounded perturbation of size |c| -> gap at most gain(|c|) = 5|c| at nu=1
    sys_ = build_system(Rng(22).substream(0), dim=4, hidden_width=8, hidden_depth=2)
    c = 0.2 * Rng(23).normal((4,))
    learner = _ConstantOffset(sys_.expert(), c)
    for i in range(5):
        xi = Rng(24).substream(i).normal((4,))
        gap = imitation_gap(sys_, learner, xi, 100)
        assert gap <= 5.0 * np.linalg.norm(c) + 1e-9


def test_gap_matches_naive_re_simulation():
    sys_ = build_system(Rng(25).substream(0), dim=3, hidden_width=8, hidden_depth=2)
    learner = _LinearController(-0.3)
    xi = Rng(26).normal((3,))
    gap = imitation_gap(sys_, learner, xi, 15)

    x_exp, x_lrn = xi.copy(), xi.copy()
    worst = 0.0
    for _ in range(15):
        x_exp = sys_.step(x_exp, sys_.expert().value(x_exp))
        x_lrn = sys_.step(x_lrn, learner.value(x_lrn))
        worst = max(worst, float(np.linalg.norm(x_lrn - x_exp)))
    assert abs(gap - worst) < 1e-12


def test_gap_divergence_flagged_as_infinite():
    sys_ = build_system(Rng(27).substream(0), dim=3, hidden_width=8, hidden_depth=2, gain_exponent=2.0)
    gap = imitation_gap(sys_, _LinearController(1e8), np.ones(3), 50)
    assert np.isinf(gap) and gap.diverged


def test_discrepancy_zero_for_expert():
    sys_ = build_system(Rng(28).substream(0), dim=3, hidden_width=8, hidden_depth=2)
    xi = Rng(29).normal((3,))
    disc = mean_policy_discrepancy(sys_, sys_.expert(), xi, 20)
    assert disc == 0.0


def test_discrepancy_of_constant_offset_is_offset_norm():
    sys_ = build_system(Rng(30).substream(0), dim=4, hidden_width=8, hidden_depth=2)
    c = 0.1 * Rng(31).normal((4,))
    learner = _ConstantOffset(sys_.expert(), c)
    xi = Rng(32).normal((4,))
    disc = mean_policy_discrepancy(sys_, learner, xi, 25)
    assert abs(disc - np.linalg.norm(c)) < 1e-12


def test_discrepancy_matches_naive_recomputation():
    sys_ = build_system(Rng(33).substream(0), dim=3, hidden_width=8, hidden_depth=2)
    learner = _LinearController(-0.2)
    xi = Rng(34).normal((3,))
    disc = mean_policy_discrepancy(sys_, learner, xi, 12)

    x = xi.copy()
    acc = 0.0
    for _ in range(12):
        acc += float(np.linalg.norm(learner.value(x) - sys_.expert().value(x)))
        x = sys_.step(x, learner.value(x))
    assert abs(disc - acc / 12) < 1e-12


def test_evaluate_policy_batch_matches_scalar_metrics():
    sys_ = build_system(Rng(35).substream(0), dim=3, hidden_width=8, hidden_depth=2)
    learner = _LinearController(-0.4)
    xis = Rng(36).normal((6, 3))
    ev = evaluate_policy_batch(sys_, learner, xis, 20)
    for i in range(6):
        gap = imitation_gap(sys_, learner, xis[i], 20)
        disc = mean_policy_discrepancy(sys_, learner, xis[i], 20)
        assert abs(ev.gaps[i] - gap) < 1e-12
        assert abs(ev.discrepancies[i] - disc) < 1e-12
        assert not ev.diverged[i]


def test_evaluate_policy_batch_flags_divergence_per_row():
    sys_ = build_system(Rng(37).substream(0), dim=3, hidden_width=8, hidden_depth=2, gain_exponent=2.0)

    class _SelectiveBlowup:
        """Explodes only from large states, so some rows survive."""

        def value(self, x):
            x = np.asarray(x, dtype=np.float64)
            xb = np.atleast_2d(x)
            big = np.linalg.norm(xb, axis=1, keepdims=True) > 2.0
            out = np.where(big, 1e8 * xb, -sys_.disturbance.value(xb))
            return out if x.ndim == 2 else out[0]

    xis = np.vstack([0.1 * np.ones(3), 5.0 * np.ones(3)])
    ev = evaluate_policy_batch(sys_, _SelectiveBlowup(), xis, 30)
    assert not ev.diverged[0] and ev.diverged[1]
    assert np.isfinite(ev.gaps[0]) and np.isinf(ev.gaps[1])


# ----------------------------------------------------------------------
# expert datasets
# ----------------------------------------------------------------------


def test_dataset_labels_negate_disturbance_derivatives():
    sys_ = build_system(Rng(38).substream(0), dim=3, hidden_width=8, hidden_depth=2)
    ds = collect_expert_dataset(sys_, 2, 10, 2, Rng(38).substream(1))
    for traj in ds.trajectories:
        bh = sys_.disturbance.input_derivatives(traj.states, 2)
        assert np.abs(traj.actions + bh.value).max() < 1e-12
        assert np.abs(traj.jacobians + bh.jacobian).max() < 1e-12
        assert np.abs(traj.hessians + bh.hessian).max() < 1e-12


def test_dataset_same_seed_bit_identical():
    sys_ = build_system(Rng(39).substream(0), dim=3, hidden_width=8, hidden_depth=2)
    a = collect_expert_dataset(sys_, 3, 8, 1, Rng(40))
    b = collect_expert_dataset(sys_, 3, 8, 1, Rng(40))
    for ta, tb in zip(a.trajectories, b.trajectories):
        assert np.array_equal(ta.states, tb.states)
        assert np.array_equal(ta.actions, tb.actions)
        assert np.array_equal(ta.jacobians, tb.jacobians)


def test_dataset_flat_concatenates_everything():
    sys_ = build_system(Rng(41).substream(0), dim=3, hidden_width=8, hidden_depth=2)
    ds = collect_expert_dataset(sys_, 3, 7, 2, Rng(42))
    states, actions, jac, hess = ds.flat()
    assert states.shape == (21, 3)
    assert actions.shape == (21, 3)
    assert jac.shape == (21, 3, 3)
    assert hess.shape == (21, 3, 3, 3)
    assert ds.total_states == 21


def test_trajectory_csv_dump(tmp_path):
    sys_ = build_system(Rng(43).substream(0), dim=3, hidden_width=8, hidden_depth=2)
    ds = collect_expert_dataset(sys_, 2, 5, 0, Rng(44))
    path = tmp_path / "ds.csv"
    write_trajectory_csv(path, ds)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "trajectory,t,x0,x1,x2,u0,u1,u2"
    assert len(lines) == 1 + 10
