"""Runtime stability certificates for trained policies.

Implements the checkable side of the imitation-gap theory: given worst-case
action-discrepancy statistics measured along expert trajectories, these
routines decide whether the closed-loop deviation of the learner from the
expert is certifiably bounded, and by how much.

Two gain regimes exist. With a rapidly decaying gain (gain(x) <= C x^{1+r},
r > 0) controlling the plain action discrepancy suffices ("fast" regime).
With a slowly decaying gain (gain(x) <= C x^{1/r}, r >= 1) the certificate
needs discrepancy derivatives up to order p ("slow" regime), with a sharper
variant when p = r is an integer and a fully explicit special case for a
linear gain. Neighborhood inequalities that the theory requires "for all x in
(0, alpha]" are checked on a dense grid; policy regularity constants are
estimated by sampling, and certificates carry that caveat explicitly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import ClassK, DissSystem, rollout
from .mlp import MlpPolicy
from .rng import Rng
from .tensorops import frobenius_norm, operator_norm

__all__ = [
    "BoundParams",
    "ConditionCheck",
    "Certificate",
    "NeighborhoodCheck",
    "check_neighborhood_condition",
    "certify_gap_fast",
    "certify_gap_slow",
    "certify_gap_linear_gain",
    "fast_candidate",
    "slow_candidate",
    "DissVerification",
    "verify_diss_empirically",
    "ConstantEstimate",
    "estimate_policy_constants",
    "estimate_taylor_constant",
    "render_certificate",
]

EMPIRICAL_CONSTANT_CAVEAT = (
    "policy regularity constants were estimated by sampling and are lower "
    "estimates of the true suprema"
)
RANK3_SURROGATE_CAVEAT = (
    "rank-3 derivative norms use the Frobenius upper bound of the operator norm"
)

DEFAULT_GRID_POINTS = 1000


@dataclass(frozen=True)
class BoundParams:
    """Constants feeding a certificate.

    mu/alpha are the candidate neighborhood constants; r is the gain decay
    exponent; eta_loc the locality margin of the stability property (inf for
    globally stable systems); lipschitz bounds the first-order regularity of
    learner and expert (fast regime); taylor_constant bounds their order-p
    Taylor remainder (slow regime).
    """

    mu: float
    alpha: float
    r: float
    eta_loc: float = math.inf
    lipschitz: float = 0.0
    taylor_constant: float = 0.0
    order: int = 1

    def __post_init__(self):
        if not (self.mu > 0 and self.alpha > 0):
            raise ValueError("mu and alpha must be positive")
        if self.r <= 0:
            raise ValueError("gain decay exponent r must be positive")
        if self.lipschitz < 0 or self.taylor_constant < 0:
            raise ValueError("regularity constants must be nonnegative")


@dataclass
class ConditionCheck:
    name: str
    observed: float
    threshold: float
    passed: bool


@dataclass
class NeighborhoodCheck:
    passed: bool
    min_slack: float
    worst_x: float


@dataclass
class Certificate:
    certified: bool
    bound: float | None
    conditions: list[ConditionCheck]
    caveats: tuple[str, ...] = ()

    def failures(self) -> list[str]:
        return [c.name for c in self.conditions if not c.passed]


def _cond(name: str, observed: float, threshold: float) -> ConditionCheck:
    return ConditionCheck(name, float(observed), float(threshold), bool(observed <= threshold))


# ----------------------------------------------------------------------
# neighborhood inequalities
# ----------------------------------------------------------------------


def check_neighborhood_condition(
    gain: ClassK,
    params: BoundParams,
    regime: str,
    grid_points: int = DEFAULT_GRID_POINTS,
) -> NeighborhoodCheck:
    """Grid-check the defining inequality of the candidate (mu, alpha).

    fast:  2 L x + (x/mu)^(1/(1+r))                  <= gain^-1(x)
    slow:  2 Lt/(p+1)! x^(p+1) + (x/mu)^r            <= gain^-1(x)
    on x in (0, alpha], sampled at `grid_points` evenly spaced points. Returns
    the minimum slack gain^-1(x) - lhs(x); negative slack beyond float
    rounding means the candidate fails (closed-form candidates hold with
    exact equality at x = alpha, so the comparison admits a relative
    tolerance at machine precision). The slow form additionally requires
    alpha <= 1/2.
    """
    if regime not in ("fast", "slow"):
        raise ValueError(f"regime must be 'fast' or 'slow', got {regime!r}")
    if grid_points < 2:
        raise ValueError("need at least two grid points")
    xs = np.linspace(params.alpha / grid_points, params.alpha, grid_points)
    if regime == "fast":
        lhs = 2.0 * params.lipschitz * xs + (xs / params.mu) ** (1.0 / (1.0 + params.r))
    else:
        if params.alpha > 0.5:
            return NeighborhoodCheck(False, -math.inf, params.alpha)
        p = params.order
        lhs = (
            2.0 * params.taylor_constant / math.factorial(p + 1) * xs ** (p + 1)
            + (xs / params.mu) ** params.r
        )
    rhs = gain.inverse(xs)
    slack = rhs - lhs
    worst = int(np.argmin(slack))
    tol = 1e-12 * float(np.max(np.abs(rhs) + np.abs(lhs)))
    return NeighborhoodCheck(bool(slack[worst] >= -tol), float(slack[worst]), float(xs[worst]))


# ----------------------------------------------------------------------
# gap certificates
# ----------------------------------------------------------------------


def certify_gap_fast(
    max_discrepancy: float,
    params: BoundParams,
    gain: ClassK,
    grid_points: int = DEFAULT_GRID_POINTS,
    caveats: tuple[str, ...] = (),
) -> Certificate:
    """Fast-regime certificate from the worst action discrepancy alone.

    Premises: the neighborhood inequality holds for (mu, alpha); and with
    D = max_t |discrepancy_t|,
        mu D^(1+r) <= alpha,
        2 L mu D^(1+r) + D <= eta_loc.
    Certified bound on the deviation from the expert rollout: mu D^(1+r).
    """
    d = float(max_discrepancy)
    if d < 0:
        raise ValueError("discrepancy must be nonnegative")
    nb = check_neighborhood_condition(gain, params, "fast", grid_points)
    lifted = params.mu * d ** (1.0 + params.r)
    conditions = [
        ConditionCheck("neighborhood inequality", -nb.min_slack, 0.0, nb.passed),
        _cond("discrepancy within neighborhood", lifted, params.alpha),
        _cond("locality margin", 2.0 * params.lipschitz * lifted + d, params.eta_loc),
    ]
    certified = all(c.passed for c in conditions)
    return Certificate(certified, lifted if certified else None, conditions, caveats)


def certify_gap_slow(
    derivative_maxima,
    params: BoundParams,
    gain: ClassK,
    exact_order: bool = False,
    grid_points: int = DEFAULT_GRID_POINTS,
    caveats: tuple[str, ...] = (),
) -> Certificate:
    """Slow-regime certificate from per-order worst discrepancy derivatives.

    `derivative_maxima` lists D_j = max_t |d^j discrepancy_t| for j = 0..p
    (operator norms). The general form needs p + 1 > r; with D'_j = 2/j! D_j,
        max_j mu D'_j^(1/r) <= alpha,
        max_j [2 Lt mu^(p+1)/(p+1)! D'_j^((p+1)/r) + D'_j] <= eta_loc,
    and certifies the bound max_j mu D'_j^(1/r).

    With exact_order=True (requires integer r = p), the factor 2/j! becomes
    4/j! for j <= p - 1, the top derivative only needs D_p <= p!/(2 mu^p), and
    the certified bound drops the top-order term.
    """
    ds = [float(v) for v in derivative_maxima]
    p = params.order
    if len(ds) != p + 1:
        raise ValueError(f"need maxima for orders 0..{p}, got {len(ds)} values")
    if any(v < 0 for v in ds):
        raise ValueError("discrepancy maxima must be nonnegative")
    if params.r < 1:
        raise ValueError("slow regime expects r >= 1")
    if exact_order:
        if abs(params.r - p) > 1e-12 or p < 1:
            raise ValueError("exact-order variant needs integer r = order >= 1")
    elif not p + 1 > params.r:
        raise ValueError(f"slow regime needs order + 1 > r, got p={p}, r={params.r}")

    nb = check_neighborhood_condition(gain, params, "slow", grid_points)
    conditions = [ConditionCheck("neighborhood inequality", -nb.min_slack, 0.0, nb.passed)]
    mu, r, lt = params.mu, params.r, params.taylor_constant
    numer = 4.0 if exact_order else 2.0
    top = p - 1 if exact_order else p

    scaled = [numer / math.factorial(j) * ds[j] for j in range(top + 1)]
    lifted = [mu * s ** (1.0 / r) for s in scaled]
    eta_terms = [
        2.0 * lt * mu ** (p + 1) / math.factorial(p + 1) * s ** ((p + 1) / r) + s
        for s in scaled
    ]
    if lifted:
        conditions.append(_cond("discrepancies within neighborhood", max(lifted), params.alpha))
        conditions.append(_cond("locality margin", max(eta_terms), params.eta_loc))
    if exact_order:
        conditions.append(
            _cond(
                "top derivative small",
                ds[p],
                math.factorial(p) / (2.0 * mu**p),
            )
        )

    certified = all(c.passed for c in conditions)
    bound = max(lifted) if (certified and lifted) else (0.0 if certified else None)
    return Certificate(certified, bound, conditions, caveats)


def certify_gap_linear_gain(
    max_value_discrepancy: float,
    max_jacobian_discrepancy: float,
    gain_slope: float,
    taylor_constant: float,
    caveats: tuple[str, ...] = (),
) -> Certificate:
    """Fully explicit certificate for a linear gain(x) = slope * x, eta = inf.

    Instantiates the exact-order slow certificate at r = p = 1 with
    mu = 2 slope and alpha = 1/(2 slope Lt), which requires slope * Lt >= 1.
    Premises:
        max_t |d discrepancy_t|  <= 1 / (4 slope),
        max_t |discrepancy_t|    <= 1 / (16 slope^2 Lt),
    and the certified deviation bound is 8 slope max_t |discrepancy_t|.
    """
    if gain_slope <= 0:
        raise ValueError("gain slope must be positive")
    if taylor_constant < 0:
        raise ValueError("taylor constant must be nonnegative")
    d0 = float(max_value_discrepancy)
    d1 = float(max_jacobian_discrepancy)
    conditions = [
        ConditionCheck(
            "well-posed constants (slope * Lt >= 1)",
            1.0,
            gain_slope * taylor_constant,
            gain_slope * taylor_constant >= 1.0,
        ),
        _cond("jacobian discrepancy", d1, 1.0 / (4.0 * gain_slope)),
        _cond(
            "value discrepancy",
            d0,
            1.0 / (16.0 * gain_slope**2 * max(taylor_constant, 1e-300)),
        ),
    ]
    certified = all(c.passed for c in conditions)
    bound = 8.0 * gain_slope * d0 if certified else None
    return Certificate(certified, bound, conditions, caveats)


# ----------------------------------------------------------------------
# candidate constants for monomial gains
# ----------------------------------------------------------------------


def fast_candidate(gain: ClassK, lipschitz: float, eta_loc: float = math.inf) -> BoundParams:
    """Closed-form (mu, alpha) for a monomial gain in the fast regime.

    For gain(x) = C x^(1+r) the choice mu = 2^(1+r) C spends half of
    gain^-1(x) on the (x/mu)^(1/(1+r)) term, and the Lipschitz term then
    fixes the largest admissible alpha analytically. The result still gets
    grid-checked inside the certifiers.
    """
    if gain.exponent <= 1.0:
        raise ValueError("fast regime needs a gain exponent above 1")
    r = gain.exponent - 1.0
    c = gain.scale
    mu = 2.0 ** (1.0 + r) * c
    if lipschitz <= 0:
        alpha = math.inf  # inequality holds everywhere without the linear term
    else:
        alpha = (4.0 * lipschitz * c ** (1.0 / (1.0 + r))) ** (-(1.0 + r) / r)
    return BoundParams(mu=mu, alpha=alpha, r=r, eta_loc=eta_loc, lipschitz=lipschitz)


def slow_candidate(
    gain: ClassK, taylor_constant: float, order: int, eta_loc: float = math.inf
) -> BoundParams:
    """Closed-form (mu, alpha) for a monomial gain in the slow regime.

    For gain(x) = C x^(1/r), mu = 2^(1/r) C halves gain^-1, and the remaining
    budget bounds the Taylor term up to alpha; alpha is additionally capped at
    1/2 as the certificate requires. Needs order + 1 > r.
    """
    if gain.exponent > 1.0:
        raise ValueError("slow regime needs a gain exponent of at most 1")
    r = 1.0 / gain.exponent
    p = order
    if not p + 1 > r:
        raise ValueError(f"slow candidate needs order + 1 > r, got p={p}, r={r}")
    c = gain.scale
    mu = 2.0 ** (1.0 / r) * c
    if taylor_constant <= 0:
        alpha = 0.5
    else:
        alpha = min(
            0.5,
            (math.factorial(p + 1) / (4.0 * taylor_constant * c**r)) ** (1.0 / (p + 1 - r)),
        )
    return BoundParams(
        mu=mu, alpha=alpha, r=r, eta_loc=eta_loc, taylor_constant=taylor_constant, order=p
    )


# ----------------------------------------------------------------------
# empirical stability verification
# ----------------------------------------------------------------------


@dataclass
class DissVerification:
    trials: int
    horizon: int
    checked: int  # (trial, step) pairs compared
    violations: int
    min_slack: float  # worst margin bound - observed across all checks

    @property
    def passed(self) -> bool:
        return self.violations == 0


def verify_diss_empirically(
    system: DissSystem,
    trials: int,
    horizon: int,
    perturbation_bound: float,
    rng: Rng,
    tolerance: float = 1e-9,
) -> DissVerification:
    """Check the incremental-stability inequality on random rollout pairs.

    For each trial, two standard-normal initial states are rolled out, one
    under the pure expert and one under expert plus bounded action
    perturbations, and every step must satisfy

        |x_t(xi1, pert) - x_t(xi2, 0)|
            <= eta^t |xi1 - xi2| + gain(max_{k<t} |pert_k|) + tolerance.

    Returns the violation count and the worst slack observed.
    """
    if trials < 1 or horizon < 1:
        raise ValueError("need at least one trial and one step")
    if perturbation_bound < 0:
        raise ValueError("perturbation bound must be nonnegative")
    d = system.dim
    xi1 = rng.substream(0).normal((trials, d))
    xi2 = rng.substream(1).normal((trials, d))
    perts = rng.substream(2).ball(trials * horizon, d, perturbation_bound).reshape(
        trials, horizon, d
    )

    expert = system.expert()
    x_pert = xi1.copy()
    x_free = xi2.copy()
    init_dist = np.linalg.norm(xi1 - xi2, axis=1)
    run_max = np.zeros(trials)
    decay = 1.0

    violations = 0
    min_slack = math.inf
    checked = 0
    for t in range(horizon):
        pert_t = perts[:, t, :]
        run_max = np.maximum(run_max, np.linalg.norm(pert_t, axis=1))
        x_pert = system.step(x_pert, expert.value(x_pert) + pert_t)
        x_free = system.step(x_free, expert.value(x_free))
        decay *= system.contraction
        bound = decay * init_dist + system.gain(run_max) + tolerance
        slack = bound - np.linalg.norm(x_pert - x_free, axis=1)
        violations += int(np.sum(slack < 0.0))
        min_slack = min(min_slack, float(slack.min()))
        checked += trials
    return DissVerification(trials, horizon, checked, violations, min_slack)


# ----------------------------------------------------------------------
# regularity-constant estimation
# ----------------------------------------------------------------------


@dataclass
class ConstantEstimate:
    value: float
    order: int
    samples: int
    note: str = EMPIRICAL_CONSTANT_CAVEAT


def estimate_policy_constants(
    policy,
    radius: float,
    order: int,
    samples: int,
    rng: Rng,
) -> ConstantEstimate:
    """Empirical sup of the order-th derivative norm over a sampling ball.

    order 1 takes operator norms of Jacobians (a Lipschitz-constant
    candidate); order 2 takes Frobenius norms of Hessians, which upper-bound
    the rank-3 operator norm (a Taylor-remainder-constant candidate at p = 1).
    Sampling yields a lower estimate of the true supremum; consumers must
    carry that caveat.
    """
    if order not in (1, 2):
        raise ValueError(f"constant estimation supports orders 1 and 2, got {order}")
    if samples < 1:
        raise ValueError("need at least one sample")
    xs = rng.ball(samples, policy_in_dim(policy), radius)
    bundle = policy.input_derivatives(xs, order)
    if order == 1:
        value = max(operator_norm(j) for j in bundle.jacobian)
        note = EMPIRICAL_CONSTANT_CAVEAT
    else:
        value = max(frobenius_norm(h) for h in bundle.hessian)
        note = EMPIRICAL_CONSTANT_CAVEAT + "; " + RANK3_SURROGATE_CAVEAT
    return ConstantEstimate(float(value), order, samples, note)


def estimate_taylor_constant(
    policy,
    radius: float,
    order: int,
    pairs: int,
    rng: Rng,
) -> ConstantEstimate:
    """Empirical Taylor-remainder constant from sampled point pairs.

    Draws base and offset points in the ball and maximizes
    (p+1)! |pi(x) - T_p(x; x0)| / |x - x0|^(p+1), the defining ratio of the
    remainder constant. Works for p <= 2 (uses exact derivatives at x0).
    """
    if order not in (0, 1, 2):
        raise ValueError(f"taylor constant estimation supports orders 0..2, got {order}")
    if pairs < 1:
        raise ValueError("need at least one pair")
    d = policy_in_dim(policy)
    x0 = rng.substream(0).ball(pairs, d, radius)
    x1 = x0 + rng.substream(1).ball(pairs, d, radius * 0.5)
    dx = x1 - x0
    base = policy.input_derivatives(x0, order)
    pred = base.value.copy()
    if order >= 1:
        pred += np.einsum("bmd,bd->bm", base.jacobian, dx)
    if order >= 2:
        pred += 0.5 * np.einsum("bmij,bi,bj->bm", base.hessian, dx, dx)
    actual = policy.value(x1)
    num = np.linalg.norm(actual - pred, axis=1)
    den = np.linalg.norm(dx, axis=1) ** (order + 1)
    ok = den > 1e-12
    ratio = math.factorial(order + 1) * num[ok] / den[ok]
    return ConstantEstimate(float(ratio.max(initial=0.0)), order, pairs)


def policy_in_dim(policy) -> int:
    if hasattr(policy, "in_dim"):
        return policy.in_dim
    if isinstance(policy, MlpPolicy):  # pragma: no cover - covered by in_dim
        return policy.in_dim
    raise TypeError("policy does not expose its input dimension")


# ----------------------------------------------------------------------
# reporting
# ----------------------------------------------------------------------


def render_certificate(title: str, cert: Certificate) -> str:
    """Plain-text certificate block: one line per condition, then the verdict."""
    lines = [title, "-" * len(title)]
    for c in cert.conditions:
        status = "ok" if c.passed else "FAIL"
        lines.append(
            f"  {c.name:<42s} observed {c.observed: .6e}  threshold {c.threshold: .6e}  [{status}]"
        )
    if cert.certified:
        lines.append(f"  certified deviation bound: {cert.bound:.6e}")
    else:
        lines.append("  not certified: " + ", ".join(cert.failures()))
    for cav in cert.caveats:
        lines.append(f"  caveat: {cav}")
    return "\n".join(lines)
