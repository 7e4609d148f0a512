"""Experiment orchestration: sweeps, reports, and artifact layout.

Every run is a pure function of (config, seed): stochastic choices draw from
named substreams of the per-run seed, so a sweep executed serially and one
executed across worker processes emit byte-identical delimited output. Rows
are computed independently, then sorted on their key columns before writing.

Artifact layout per run directory: a reloadable config echo, a manifest
naming every file, one or more CSVs (floats printed with repr-faithful %.17g),
optional PNG figures, and checkpoints/certificates for the kinds that
produce them.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bounds import (
    EMPIRICAL_CONSTANT_CAVEAT,
    Certificate,
    certify_gap_fast,
    certify_gap_linear_gain,
    certify_gap_slow,
    estimate_policy_constants,
    estimate_taylor_constant,
    fast_candidate,
    render_certificate,
    slow_candidate,
    verify_diss_empirically,
)
from .config import ExperimentConfig, render_config
from .dynamics import (
    DissSystem,
    build_system,
    evaluate_policy_batch,
    write_trajectory_csv,
)
from .losses import FdConfig, TaylorLossConfig, discrepancy_records, make_fd_targets
from .mlp import MlpPolicy, load_policy, save_policy
from .rng import Rng
from .training import (
    DaggerConfig,
    DartConfig,
    TrainConfig,
    TrainingDiverged,
    build_learner,
    collect_expert_dataset,
    run_dagger,
    run_dart,
    train_bc,
)

__all__ = [
    "SweepPoint",
    "FdPoint",
    "run_sweep_point",
    "gamma_sweep",
    "fd_compare",
    "run_experiment",
    "run_from_config",
    "DIVERGED_SENTINEL",
]

# Substream identifiers. Fixed small integers, shared by every experiment
# kind, so e.g. the test initial states for seed 7 are the same batch no
# matter which loss order or gain exponent is being measured (paired
# comparisons across a sweep).
S_SYSTEM = 0
S_DATA = 1
S_INIT = 2
S_SHUFFLE = 3
S_TEST = 4
S_FD = 5
S_PROTO = 6
S_VERIFY = 7
S_CONST = 8

# Mean aggregates must stay finite so the CSV sorts and plots sanely. A
# diverged test rollout counts as 10x the worst finite gap in its own row;
# if every rollout diverged there is nothing to anchor to and a fixed
# sentinel is reported instead. diverged_count preserves the raw story.
DIVERGED_SENTINEL = 1e9

_CONSTANT_SAMPLES = 512


# ----------------------------------------------------------------------
# shared per-run plumbing
# ----------------------------------------------------------------------


def _train_config(cfg: ExperimentConfig) -> TrainConfig:
    return TrainConfig(
        iterations=cfg.iterations,
        batch_size=cfg.batch_size,
        learning_rate=cfg.learning_rate,
        beta1=cfg.adam_beta1,
        beta2=cfg.adam_beta2,
        eps=cfg.adam_eps,
        weight_decay=cfg.weight_decay,
    )


def _loss_config(cfg: ExperimentConfig, order: int) -> TaylorLossConfig:
    return TaylorLossConfig(order, (cfg.lambda0, cfg.lambda1, cfg.lambda2))


def _build_point_system(cfg: ExperimentConfig, nu: float, rng: Rng) -> DissSystem:
    return build_system(
        rng.substream(S_SYSTEM),
        dim=cfg.dim,
        contraction=cfg.contraction,
        gain_scale=cfg.gain_scale,
        gain_exponent=nu,
        hidden_width=cfg.expert_width,
        hidden_depth=cfg.expert_depth,
    )


def _build_point_learner(cfg: ExperimentConfig, rng: Rng) -> MlpPolicy:
    return build_learner(
        rng.substream(S_INIT),
        cfg.dim,
        cfg.dim,
        hidden_width=cfg.learner_width,
        hidden_depth=cfg.learner_depth,
        clip=cfg.clip,
    )


def _test_states(cfg: ExperimentConfig, rng: Rng) -> np.ndarray:
    return rng.substream(S_TEST).normal((cfg.test_trajectories, cfg.dim))


def _capped_mean(values: np.ndarray, diverged: np.ndarray) -> float:
    finite = values[~diverged]
    if finite.size == 0:
        return DIVERGED_SENTINEL
    if not diverged.any():
        return float(values.mean())
    cap = 10.0 * float(finite.max())
    return float(np.where(diverged, cap, values).mean())


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def _write_csv(path: Path, header: list[str], rows: list[tuple]) -> None:
    lines = [",".join(header)]
    for row in rows:
        if len(row) != len(header):
            raise ValueError(f"row width {len(row)} does not match header {len(header)}")
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _parallel_map(fn, tasks: list, threads: int) -> list:
    if threads <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, tasks, chunksize=1))


# ----------------------------------------------------------------------
# gain-exponent sweep
# ----------------------------------------------------------------------


@dataclass
class SweepPoint:
    """Metrics for one (gain exponent, loss order, seed) cell."""

    nu: float
    p: int
    seed: int
    n_train: int
    mean_discrepancy: float
    imitation_gap: float
    final_train_loss: float
    diverged_count: int
    gaps: np.ndarray
    discrepancies: np.ndarray
    diverged: np.ndarray


def run_sweep_point(cfg: ExperimentConfig, nu: float, p: int, seed: int) -> SweepPoint:
    """Train one policy and evaluate it on the shared test batch."""
    rng = Rng(seed)
    system = _build_point_system(cfg, nu, rng)
    dataset = collect_expert_dataset(
        system, cfg.train_trajectories, cfg.horizon, p, rng.substream(S_DATA)
    )
    learner = _build_point_learner(cfg, rng)
    xis = _test_states(cfg, rng)
    try:
        result = train_bc(
            dataset, learner, _loss_config(cfg, p), _train_config(cfg), rng.substream(S_SHUFFLE)
        )
        policy, final_loss = result.policy, result.final_loss
    except TrainingDiverged:
        n = cfg.test_trajectories
        bad = np.full(n, np.inf)
        return SweepPoint(
            nu, p, seed, len(dataset), DIVERGED_SENTINEL, DIVERGED_SENTINEL, math.inf,
            n, bad, bad.copy(), np.ones(n, dtype=bool),
        )
    ev = evaluate_policy_batch(system, policy, xis, cfg.horizon)
    return SweepPoint(
        nu=nu,
        p=p,
        seed=seed,
        n_train=len(dataset),
        mean_discrepancy=_capped_mean(ev.discrepancies, ev.diverged),
        imitation_gap=_capped_mean(ev.gaps, ev.diverged),
        final_train_loss=final_loss,
        diverged_count=int(ev.diverged.sum()),
        gaps=ev.gaps,
        discrepancies=ev.discrepancies,
        diverged=ev.diverged,
    )


def _sweep_worker(task) -> SweepPoint:
    cfg, nu, p, seed = task
    return run_sweep_point(cfg, nu, p, seed)


SWEEP_HEADER = [
    "nu", "p", "seed", "n_train",
    "mean_discrepancy", "imitation_gap", "final_train_loss", "diverged_count",
]
SWEEP_DETAIL_HEADER = ["nu", "p", "seed", "test", "imitation_gap", "mean_discrepancy", "diverged"]


def gamma_sweep(cfg: ExperimentConfig, out: Path) -> list[str]:
    """Cross product of gain exponents, loss orders, and seeds.

    Writes gamma_sweep.csv (one aggregate row per cell, sorted on
    (nu, p, seed)) and gamma_sweep_detail.csv (one row per test trajectory,
    raw metrics, inf where diverged).
    """
    tasks = [
        (cfg, nu, p, seed)
        for nu in cfg.nu_grid
        for p in cfg.p_grid
        for seed in cfg.seeds
    ]
    points = _parallel_map(_sweep_worker, tasks, cfg.threads)
    points.sort(key=lambda pt: (pt.nu, pt.p, pt.seed))

    rows = [
        (pt.nu, pt.p, pt.seed, pt.n_train,
         pt.mean_discrepancy, pt.imitation_gap, pt.final_train_loss, pt.diverged_count)
        for pt in points
    ]
    _write_csv(out / "gamma_sweep.csv", SWEEP_HEADER, rows)

    detail = [
        (pt.nu, pt.p, pt.seed, t, pt.gaps[t], pt.discrepancies[t], bool(pt.diverged[t]))
        for pt in points
        for t in range(pt.gaps.shape[0])
    ]
    _write_csv(out / "gamma_sweep_detail.csv", SWEEP_DETAIL_HEADER, detail)

    artifacts = ["gamma_sweep.csv", "gamma_sweep_detail.csv"]
    if cfg.plots and points:
        from . import plots

        artifacts += plots.gamma_sweep_figures(out / "gamma_sweep.csv", out)
    return artifacts


# ----------------------------------------------------------------------
# finite-difference comparison
# ----------------------------------------------------------------------


@dataclass
class FdPoint:
    """Metrics for one training method at one seed in the probe-count study."""

    nu: float
    p: int
    n_diff: int
    radius: float
    seed: int
    n_train: int
    mean_discrepancy: float
    imitation_gap: float
    final_train_loss: float
    diverged_count: int


def _run_fd_point(cfg: ExperimentConfig, method: str, p: int, n_diff: int, seed: int) -> FdPoint:
    rng = Rng(seed)
    system = _build_point_system(cfg, cfg.nu, rng)
    dataset = collect_expert_dataset(
        system, cfg.train_trajectories, cfg.horizon, p, rng.substream(S_DATA)
    )
    learner = _build_point_learner(cfg, rng)
    xis = _test_states(cfg, rng)
    radius = cfg.fd_radius if method == "fd" else 0.0
    try:
        if method == "fd":
            fd_cfg = FdConfig(
                count=n_diff,
                radius=cfg.fd_radius,
                scheme=cfg.fd_scheme,
                weight=cfg.fd_weight,
                zero_weight=cfg.lambda0,
            )
            targets = make_fd_targets(dataset, system, fd_cfg, rng.substream(S_FD))
            result = train_bc(
                dataset, learner, fd_cfg, _train_config(cfg),
                rng.substream(S_SHUFFLE), fd_targets=targets,
            )
        else:
            result = train_bc(
                dataset, learner, _loss_config(cfg, p), _train_config(cfg),
                rng.substream(S_SHUFFLE),
            )
        policy, final_loss = result.policy, result.final_loss
    except TrainingDiverged:
        n = cfg.test_trajectories
        return FdPoint(
            cfg.nu, p, n_diff, radius, seed, len(dataset),
            DIVERGED_SENTINEL, DIVERGED_SENTINEL, math.inf, n,
        )
    ev = evaluate_policy_batch(system, policy, xis, cfg.horizon)
    return FdPoint(
        nu=cfg.nu,
        p=p,
        n_diff=n_diff,
        radius=radius,
        seed=seed,
        n_train=len(dataset),
        mean_discrepancy=_capped_mean(ev.discrepancies, ev.diverged),
        imitation_gap=_capped_mean(ev.gaps, ev.diverged),
        final_train_loss=final_loss,
        diverged_count=int(ev.diverged.sum()),
    )


def _fd_worker(task) -> FdPoint:
    cfg, method, p, n_diff, seed = task
    return _run_fd_point(cfg, method, p, n_diff, seed)


FD_HEADER = [
    "nu", "p", "n_diff", "radius", "seed", "n_train",
    "mean_discrepancy", "imitation_gap", "final_train_loss", "diverged_count",
]


def fd_compare(cfg: ExperimentConfig, out: Path) -> list[str]:
    """Plain cloning vs. exact first-derivative matching vs. its
    finite-difference surrogate at each probe count in the grid.

    Rows with n_diff = 0 are the exact methods (p tells them apart); a probe
    count of 0 in the grid would degenerate to the plain-cloning baseline,
    which is always present, so zeros are dropped from the grid.
    """
    methods = [("taylor", 0, 0), ("taylor", 1, 0)]
    methods += [("fd", 1, n) for n in sorted(set(cfg.fd_count_grid)) if n > 0]
    tasks = [
        (cfg, method, p, n_diff, seed)
        for method, p, n_diff in methods
        for seed in cfg.seeds
    ]
    points = _parallel_map(_fd_worker, tasks, cfg.threads)
    points.sort(key=lambda pt: (pt.p, pt.n_diff, pt.seed))
    rows = [dataclasses.astuple(pt) for pt in points]
    _write_csv(out / "fd_compare.csv", FD_HEADER, rows)

    artifacts = ["fd_compare.csv"]
    if cfg.plots:
        from . import plots

        artifacts += plots.fd_compare_figure(out / "fd_compare.csv", out)
    return artifacts


# ----------------------------------------------------------------------
# single runs: train / eval / verify
# ----------------------------------------------------------------------

METRICS_HEADER = [
    "nu", "p", "seed", "n_train",
    "mean_discrepancy", "imitation_gap", "final_train_loss", "diverged_count",
]


def _metrics_row(pt: SweepPoint) -> tuple:
    return (pt.nu, pt.p, pt.seed, pt.n_train,
            pt.mean_discrepancy, pt.imitation_gap, pt.final_train_loss, pt.diverged_count)


def run_train(cfg: ExperimentConfig, out: Path) -> list[str]:
    """Train one policy at (nu, p, first seed); keep every byproduct."""
    seed = cfg.seeds[0]
    rng = Rng(seed)
    system = _build_point_system(cfg, cfg.nu, rng)
    dataset = collect_expert_dataset(
        system, cfg.train_trajectories, cfg.horizon, cfg.p, rng.substream(S_DATA)
    )
    learner = _build_point_learner(cfg, rng)
    result = train_bc(
        dataset, learner, _loss_config(cfg, cfg.p), _train_config(cfg), rng.substream(S_SHUFFLE)
    )
    ev = evaluate_policy_batch(system, result.policy, _test_states(cfg, rng), cfg.horizon)

    save_policy(out / "checkpoint.npz", result.policy)
    write_trajectory_csv(out / "dataset.csv", dataset)
    _write_csv(
        out / "losses.csv",
        ["iteration", "learning_rate", "loss"],
        [(i, result.learning_rates[i], result.losses[i]) for i in range(len(result.losses))],
    )
    point = SweepPoint(
        cfg.nu, cfg.p, seed, len(dataset),
        _capped_mean(ev.discrepancies, ev.diverged), _capped_mean(ev.gaps, ev.diverged),
        result.final_loss, int(ev.diverged.sum()), ev.gaps, ev.discrepancies, ev.diverged,
    )
    _write_csv(out / "metrics.csv", METRICS_HEADER, [_metrics_row(point)])
    return ["checkpoint.npz", "dataset.csv", "losses.csv", "metrics.csv"]


def _certify_policy(
    cfg: ExperimentConfig, system: DissSystem, policy: MlpPolicy, rng: Rng
) -> str:
    """Pick the certificate matching the gain exponent and render a report.

    Discrepancy maxima are measured along expert rollouts of the test batch
    (the quantity the theory bounds); regularity constants are estimated by
    sampling a ball that covers the visited states, which the report flags.
    """
    dataset = collect_expert_dataset(
        system, cfg.test_trajectories, cfg.horizon, 2, rng.substream(S_TEST)
    )
    records = discrepancy_records(dataset, policy, 2)
    maxima = [
        max(float(rec.operator_norms(j).max()) for rec in records) for j in range(3)
    ]
    state_norms = [float(np.linalg.norm(t.states, axis=1).max()) for t in dataset.trajectories]
    radius = 1.1 * max(state_norms)

    # regularity constants must cover the learner and the expert alike
    expert_net = system.expert_policy()
    lip = estimate_policy_constants(
        policy, radius, 1, _CONSTANT_SAMPLES, rng.substream(S_CONST, 0)
    )
    lip_star = estimate_policy_constants(
        expert_net, radius, 1, _CONSTANT_SAMPLES, rng.substream(S_CONST, 2)
    )
    lip_value = max(lip.value, lip_star.value)
    nu = cfg.nu
    lines = [
        "policy certificate report",
        "=========================",
        f"gain: {cfg.gain_scale:g} * x^{nu:g}   contraction: {cfg.contraction:g}",
        f"measured discrepancy maxima: D0 {maxima[0]:.6e}  D1 {maxima[1]:.6e}  "
        f"D2 {maxima[2]:.6e}",
        f"sampling ball radius {radius:.4g} ({_CONSTANT_SAMPLES} samples)",
        f"estimated Lipschitz constant (max over policy and expert): {lip_value:.6e}",
        f"  note: {lip.note}",
        "",
    ]

    def _taylor_constant(order: int) -> float:
        ours = estimate_taylor_constant(
            policy, radius, order, _CONSTANT_SAMPLES, rng.substream(S_CONST, 1)
        )
        theirs = estimate_taylor_constant(
            expert_net, radius, order, _CONSTANT_SAMPLES, rng.substream(S_CONST, 3)
        )
        return max(ours.value, theirs.value)

    if nu > 1.0:
        params = fast_candidate(system.gain, lip_value)
        cert = certify_gap_fast(maxima[0], params, system.gain, caveats=(lip.note,))
        lines.append(render_certificate("fast-regime certificate", cert))
    elif nu == 1.0:
        # a larger remainder constant is still a valid upper bound, so raise
        # the estimate to the well-posed range gamma * Lt >= 1 when it is below
        lt = max(_taylor_constant(1), 1.0 / cfg.gain_scale)
        lines.append(
            f"first-order Taylor remainder constant (max over policies, "
            f"raised to the well-posed range): {lt:.6e}"
        )
        cert = certify_gap_linear_gain(
            maxima[0], maxima[1], cfg.gain_scale, lt, caveats=(EMPIRICAL_CONSTANT_CAVEAT,)
        )
        lines.append(render_certificate("linear-gain certificate", cert))
    else:
        r = 1.0 / nu
        p_needed = max(1, math.ceil(r - 1.0 + 1e-12))
        if p_needed > 2:
            lines.append(
                f"slow regime with r = {r:.4g} needs derivative order {p_needed}, "
                "which exceeds the supported order 2; not certifiable here"
            )
        else:
            exact = abs(r - round(r)) < 1e-12 and int(round(r)) == p_needed
            lt = _taylor_constant(p_needed)
            lines.append(
                f"order-{p_needed} Taylor remainder constant "
                f"(max over policies): {lt:.6e}"
            )
            params = slow_candidate(system.gain, lt, p_needed)
            cert = certify_gap_slow(
                maxima[: p_needed + 1], params, system.gain,
                exact_order=exact, caveats=(EMPIRICAL_CONSTANT_CAVEAT,),
            )
            title = "exact-order certificate" if exact else "slow-regime certificate"
            lines.append(render_certificate(title, cert))
    return "\n".join(lines) + "\n"


def run_eval(cfg: ExperimentConfig, out: Path) -> list[str]:
    """Evaluate a checkpoint on fresh test rollouts; optionally certify."""
    seed = cfg.seeds[0]
    rng = Rng(seed)
    system = _build_point_system(cfg, cfg.nu, rng)
    policy = load_policy(cfg.checkpoint)
    if policy.in_dim != system.dim:
        raise ValueError(
            f"checkpoint expects inputs of dimension {policy.in_dim}, system has {system.dim}"
        )
    ev = evaluate_policy_batch(system, policy, _test_states(cfg, rng), cfg.horizon)
    point = SweepPoint(
        cfg.nu, cfg.p, seed, 0,
        _capped_mean(ev.discrepancies, ev.diverged), _capped_mean(ev.gaps, ev.diverged),
        math.nan, int(ev.diverged.sum()), ev.gaps, ev.discrepancies, ev.diverged,
    )
    _write_csv(out / "metrics.csv", METRICS_HEADER, [_metrics_row(point)])
    artifacts = ["metrics.csv"]
    if cfg.certify:
        report = _certify_policy(cfg, system, policy, rng)
        (out / "certificates.txt").write_text(report, encoding="utf-8")
        artifacts.append("certificates.txt")
    return artifacts


VERIFY_HEADER = [
    "nu", "seed", "trials", "horizon", "perturbation_bound",
    "checked", "violations", "min_slack", "passed",
]


def run_verify_diss(cfg: ExperimentConfig, out: Path) -> list[str]:
    """Empirically test the stability inequality of the configured system."""
    seed = cfg.seeds[0]
    rng = Rng(seed)
    system = _build_point_system(cfg, cfg.nu, rng)
    ver = verify_diss_empirically(
        system, cfg.verify_trials, cfg.horizon, cfg.perturbation_bound, rng.substream(S_VERIFY)
    )
    _write_csv(
        out / "verify_diss.csv",
        VERIFY_HEADER,
        [(cfg.nu, seed, ver.trials, ver.horizon, cfg.perturbation_bound,
          ver.checked, ver.violations, ver.min_slack, ver.passed)],
    )
    status = "PASS" if ver.passed else "FAIL"
    (out / "verify_diss.txt").write_text(
        f"incremental stability check: {status}\n"
        f"  trials {ver.trials}, horizon {ver.horizon}, "
        f"perturbations bounded by {cfg.perturbation_bound:g}\n"
        f"  inequalities checked {ver.checked}, violations {ver.violations}\n"
        f"  worst slack {ver.min_slack:.6e}\n",
        encoding="utf-8",
    )
    return ["verify_diss.csv", "verify_diss.txt"]


# ----------------------------------------------------------------------
# interactive protocols
# ----------------------------------------------------------------------

DAGGER_HEADER = [
    "nu", "p", "seed", "budget", "retrains", "final_beta", "final_train_loss",
    "mean_discrepancy", "imitation_gap", "diverged_count",
]
DART_HEADER = [
    "nu", "p", "seed", "budget", "retrains", "sigma_trace", "final_train_loss",
    "mean_discrepancy", "imitation_gap", "diverged_count",
]


def _dagger_worker(task) -> tuple:
    cfg, seed = task
    rng = Rng(seed)
    system = _build_point_system(cfg, cfg.nu, rng)
    learner = _build_point_learner(cfg, rng)
    res = run_dagger(
        system,
        learner,
        _loss_config(cfg, cfg.p),
        _train_config(cfg),
        DaggerConfig(
            budget=cfg.dagger_budget,
            beta_decay=cfg.beta_decay,
            update_points=cfg.dagger_update_points,
            horizon=cfg.horizon,
        ),
        rng.substream(S_PROTO),
    )
    ev = evaluate_policy_batch(system, res.policy, _test_states(cfg, rng), cfg.horizon)
    row = (
        cfg.nu, cfg.p, seed, cfg.dagger_budget, len(res.update_counts), res.betas[-1],
        res.final_losses[-1] if res.final_losses else math.nan,
        _capped_mean(ev.discrepancies, ev.diverged), _capped_mean(ev.gaps, ev.diverged),
        int(ev.diverged.sum()),
    )
    return row, res.policy


def _dart_worker(task) -> tuple:
    cfg, seed = task
    rng = Rng(seed)
    system = _build_point_system(cfg, cfg.nu, rng)
    learner = _build_point_learner(cfg, rng)
    res = run_dart(
        system,
        learner,
        _loss_config(cfg, cfg.p),
        _train_config(cfg),
        DartConfig(
            budget=cfg.dart_budget,
            update_points=cfg.dart_update_points,
            noise_trajectories=cfg.noise_trajectories,
            horizon=cfg.horizon,
            initial_noise=cfg.initial_noise,
        ),
        rng.substream(S_PROTO),
    )
    ev = evaluate_policy_batch(system, res.policy, _test_states(cfg, rng), cfg.horizon)
    row = (
        cfg.nu, cfg.p, seed, cfg.dart_budget, len(res.update_counts),
        float(np.trace(res.sigmas[-1])),
        res.final_losses[-1] if res.final_losses else math.nan,
        _capped_mean(ev.discrepancies, ev.diverged), _capped_mean(ev.gaps, ev.diverged),
        int(ev.diverged.sum()),
    )
    return row, res.policy


def _run_protocol(cfg: ExperimentConfig, out: Path, worker, header, stem: str) -> list[str]:
    tasks = [(cfg, seed) for seed in cfg.seeds]
    results = _parallel_map(worker, tasks, cfg.threads)
    results.sort(key=lambda pair: pair[0][2])  # seed column
    _write_csv(out / f"{stem}.csv", header, [row for row, _ in results])
    artifacts = [f"{stem}.csv"]
    for (row, policy) in results:
        name = f"{stem}_seed{row[2]}.npz"
        save_policy(out / name, policy)
        artifacts.append(name)
    return artifacts


def run_dagger_experiment(cfg: ExperimentConfig, out: Path) -> list[str]:
    return _run_protocol(cfg, out, _dagger_worker, DAGGER_HEADER, "dagger")


def run_dart_experiment(cfg: ExperimentConfig, out: Path) -> list[str]:
    return _run_protocol(cfg, out, _dart_worker, DART_HEADER, "dart")


# ----------------------------------------------------------------------
# entry points
# ----------------------------------------------------------------------

_RUNNERS = {
    "gamma-sweep": gamma_sweep,
    "fd-compare": fd_compare,
    "train": run_train,
    "eval": run_eval,
    "verify-diss": run_verify_diss,
    "dagger": run_dagger_experiment,
    "dart": run_dart_experiment,
}


def _package_version() -> str:
    try:
        from importlib.metadata import version

        return version("taylorbc")
    except Exception:  # pragma: no cover - not installed
        return "unknown"


def run_experiment(cfg: ExperimentConfig, out_dir: str | Path) -> dict:
    """Run one configured experiment into `out_dir`; returns the manifest."""
    cfg.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config_echo.ini").write_text(render_config(cfg), encoding="utf-8")
    artifacts = _RUNNERS[cfg.kind](cfg, out)
    manifest = {
        "kind": cfg.kind,
        "preset": cfg.preset,
        "seeds": list(cfg.seeds),
        "threads": cfg.threads,
        "version": _package_version(),
        "artifacts": ["config_echo.ini"] + sorted(artifacts),
    }
    (out / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return manifest


def run_from_config(path: str | os.PathLike, out_dir: str | Path) -> dict:
    """Load a config file and run it; the file must name the kind."""
    from .config import load_config

    return run_experiment(load_config(os.fspath(path)), out_dir)
