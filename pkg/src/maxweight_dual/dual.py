"""Greedy primal steps combined with clipped dual ascent.

Each iteration

1. picks ``x_k`` greedily on the Lagrangian at the approximate multiplier
   ``lt_k`` (direct or Frank-Wolfe rule),
2. averages ``z_{k+1} = (1 - beta) z_k + beta x_k``,
3. ascends ``lam_{k+1} = clip(lam_k + alpha g(z_{k+1}), 0, lam_bar)``.

``lt_k`` comes from a multiplier source: the exact multiplier, a perturbed
copy, a user hook, or a scaled queue (see :mod:`maxweight_dual.queues`).
Bounds on the averaged iterates are computed by the ``bound_*`` functions.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Union

import numpy as np

from .descent import beta_bound
from .exceptions import ContractViolationWarning, ValidationError
from .oracle import minimize_over_hull, reference_dual
from .problem import (
    SLATER_MARGIN_FLOOR,
    ProblemInstance,
    diameter,
    lagrangian_curvature,
    max_constraint_magnitude,
)
from .trace import RunTrace


# --------------------------------------------------------------------------
# state types


@dataclass(frozen=True)
class MultiplierState:
    lam: np.ndarray
    cap: float
    alpha: float

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=float).ravel()
        if not self.cap > 0:
            raise ValidationError("multiplier cap must be positive")
        if not self.alpha > 0:
            raise ValidationError("alpha must be positive")
        if np.any(lam < 0) or np.any(lam > self.cap):
            raise ValidationError(f"multipliers {lam.tolist()} outside [0, {self.cap}]")
        object.__setattr__(self, "lam", lam)


def multiplier_step(state: MultiplierState, g_value) -> MultiplierState:
    """``clip(lam + alpha g, 0, cap)`` componentwise."""
    g = np.asarray(g_value, dtype=float).ravel()
    lam = np.clip(state.lam + state.alpha * g, 0.0, state.cap)
    return replace(state, lam=lam)


class DiamondAverages:
    """Running means of ``z_{i+1}`` and ``lam_i`` from ``window_start`` on."""

    def __init__(self, dim: int, m: int, window_start: int = 1):
        self.window_start = int(window_start)
        self.count = 0
        self._z = np.zeros(dim)
        self._lam = np.zeros(m)

    def add(self, z_next, lam) -> None:
        self.count += 1
        np.add(self._z, z_next, out=self._z)
        np.add(self._lam, lam, out=self._lam)

    @property
    def z_diamond(self) -> np.ndarray:
        return self._z / max(self.count, 1)

    @property
    def lambda_diamond(self) -> np.ndarray:
        return self._lam / max(self.count, 1)


@dataclass(frozen=True)
class BoundReport:
    k: int
    main_lower: float
    main_upper: float
    slackness_lower: float
    slackness_upper: float
    feasibility_caps: np.ndarray
    lag_avg_lower: float
    lag_avg_upper: float


# --------------------------------------------------------------------------
# parameter formulas


def lagrangian_value(problem: ProblemInstance, z, lam) -> float:
    """``f(z) + lam^T g(z)``."""
    z = np.asarray(z, dtype=float).ravel()
    lam = np.asarray(lam, dtype=float).ravel()
    if z.shape[0] != problem.dim:
        raise ValidationError(f"z has dimension {z.shape[0]}, problem has {problem.dim}")
    if lam.shape[0] != problem.m:
        raise ValidationError(f"lambda has {lam.shape[0]} entries, problem has {problem.m} constraints")
    return problem.lagrangian(z, lam)


def slater_margin(problem: ProblemInstance, strict: bool = True) -> float:
    """``min_j -g_j(zbar)``."""
    if problem.constraints is None or problem.slater_point is None:
        raise ValidationError("slater_margin needs a constrained problem with a Slater point")
    upsilon = float(np.min(-problem.constraints(problem.slater_point)))
    if upsilon <= 0:
        raise ValidationError(f"Slater point is not strictly feasible (margin {upsilon:g})")
    if strict and upsilon < SLATER_MARGIN_FLOOR:
        raise ValidationError(
            f"Slater margin {upsilon:g} below the floor {SLATER_MARGIN_FLOOR:g}"
        )
    return upsilon


def dual_bound_from_slater(problem: ProblemInstance, lambda0, delta: float,
                           q_value: Optional[float] = None, tolerance: float = 1e-10) -> float:
    """``(f(zbar) - q(lam0) + delta) / upsilon``, a bound on ``||lam||_2`` over
    the multipliers whose dual value is within ``delta`` of optimal.

    ``q(lam0)`` is taken from a certified dual solve (its lower end) unless
    ``q_value`` is supplied.
    """
    if delta < 0:
        raise ValidationError("delta must be non-negative")
    upsilon = slater_margin(problem)
    if q_value is None:
        sol = reference_dual(problem, lambda0, tolerance)
        q_value = sol.value - sol.tolerance_achieved
    return float((problem.objective(problem.slater_point) - q_value + delta) / upsilon)


def _delta(alpha, epsilon, sigma0, gbar, m):
    return alpha * (m * gbar**2 / 2.0 + m**2 * sigma0 * gbar) + 2.0 * epsilon


def lambda_bar_requirement(problem: ProblemInstance, alpha: float, epsilon: float,
                           sigma0: float, q_ref: float, gbar: Optional[float] = None) -> float:
    """Smallest multiplier cap for which the averaged bounds are guaranteed.

    ``3 (f(zbar) - q_ref + delta) / upsilon + alpha m gbar`` with
    ``delta = alpha (m gbar^2 / 2 + m^2 sigma0 gbar) + 2 epsilon``.
    ``q_ref`` should be ``q(lam*)`` or a lower bound on it.
    """
    upsilon = slater_margin(problem)
    m = problem.m
    if gbar is None:
        gbar = max_constraint_magnitude(problem)
    d = _delta(alpha, epsilon, sigma0, gbar, m)
    return float(3.0 / upsilon * (problem.objective(problem.slater_point) - q_ref + d)
                 + alpha * m * gbar)


def alpha_bound(epsilon: float, gamma: float, gamma1: float, beta: float, m: int,
                gbar: float, sigma0: float = 0.0) -> float:
    """``gamma1 gamma beta epsilon / (m^2 (gbar^2 + 2 sigma0 gbar))``."""
    if not epsilon > 0 or not beta > 0:
        raise ValidationError("epsilon and beta must be positive")
    if not 0.0 < gamma < 1.0:
        raise ValidationError("gamma must lie in (0, 1)")
    if not 0.0 < gamma1 < 0.5:
        raise ValidationError("gamma1 must lie in (0, 1/2)")
    if sigma0 < 0:
        raise ValidationError("sigma0 must be non-negative")
    denom = m**2 * (gbar**2 + 2.0 * sigma0 * gbar)
    if not denom > 0:
        raise ValidationError("alpha bound has a zero denominator (m or gbar is zero)")
    return float(gamma1 * gamma * beta * epsilon / denom)


def back_solve_gamma1(alpha: float, epsilon: float, gamma: float, beta: float, m: int,
                      gbar: float, sigma0: float = 0.0) -> float:
    """The ``gamma1`` at which ``alpha`` sits exactly on its bound."""
    return float(alpha * m**2 * (gbar**2 + 2.0 * sigma0 * gbar) / (gamma * beta * epsilon))


# --------------------------------------------------------------------------
# bounds


def _check_k_alpha(k, alpha):
    if k < 1:
        raise ValidationError("k must be >= 1")
    if not alpha > 0:
        raise ValidationError("alpha must be positive")


def bound_main(k, alpha, epsilon, sigma0, lambda_bar, gbar, m):
    """Bracket on ``f(z_diamond_k) - f*`` after averaging ``k`` terms."""
    _check_k_alpha(k, alpha)
    lower = (-2.0 * m * lambda_bar**2 / (alpha * k)
             - alpha * (m * gbar**2 / 2.0 + m**2 * sigma0 * gbar) - 2.0 * epsilon)
    upper = (2.0 * epsilon + alpha * (m * gbar**2 + m**2 * sigma0 * gbar)
             + 3.0 * m * lambda_bar**2 / (2.0 * alpha * k))
    return float(lower), float(upper)


def bound_slackness(k, alpha, lambda_bar, gbar, m):
    """Bracket on ``lam_diamond^T g(z_diamond)``."""
    _check_k_alpha(k, alpha)
    lower = -m * lambda_bar**2 / (2.0 * alpha * k) - alpha / 2.0 * m * gbar**2
    upper = m * lambda_bar**2 / (alpha * k)
    return float(lower), float(upper)


def feasibility_cap(k, alpha, lambda_bar) -> float:
    """Upper bound on every ``g_j(z_diamond_k)``."""
    _check_k_alpha(k, alpha)
    return float(lambda_bar / (alpha * k))


def bound_lagrangian_average(k, alpha, epsilon, lambda_bar, gbar, m):
    """Symmetric bracket on ``L(z_diamond, lam_diamond) - f*``."""
    _check_k_alpha(k, alpha)
    r = 2.0 * epsilon + alpha / 2.0 * m * gbar**2 + m * lambda_bar**2 / (alpha * k)
    return -float(r), float(r)


def bound_report(k, alpha, epsilon, sigma0, lambda_bar, gbar, m) -> BoundReport:
    ml, mu = bound_main(k, alpha, epsilon, sigma0, lambda_bar, gbar, m)
    sl, su = bound_slackness(k, alpha, lambda_bar, gbar, m)
    ll, lu = bound_lagrangian_average(k, alpha, epsilon, lambda_bar, gbar, m)
    caps = np.full(m, feasibility_cap(k, alpha, lambda_bar))
    return BoundReport(int(k), ml, mu, sl, su, caps, ll, lu)


# --------------------------------------------------------------------------
# solver parameters


@dataclass(frozen=True)
class SolverParams:
    """Parameters of a constrained run.

    ``mu_L`` overrides the Lagrangian curvature used in the beta check; by
    default it is ``mu_f + lambda_bar * sum(mu_g)``. ``kbar`` is an integer
    averaging start or ``"detect"`` (first iteration whose Lagrangian gap is
    at most ``2 epsilon``, which needs dual solves until it is found).
    """

    alpha: float
    beta: float
    lambda_bar: float
    epsilon: float
    gamma: float = 0.5
    gamma1: float = 0.4
    sigma0: float = 0.0
    max_iterations: int = 1000
    update_rule: str = "direct"
    mode: str = "discrete"
    strict: bool = True
    gbar: Optional[float] = None
    mu_L: Optional[float] = None
    diameter_convention: str = "strict"
    kbar: Union[int, str] = 1
    log_every: int = 100
    dense_until: int = 1000
    track_dual: bool = False
    dual_horizon: Optional[int] = None
    dual_tolerance: float = 1e-10
    z1: Optional[np.ndarray] = field(default=None, repr=False)
    lambda1: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        for name in ("alpha", "beta", "lambda_bar", "epsilon"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be positive")
        if self.beta > 1:
            raise ValidationError("beta must lie in (0, 1]")
        if not 0.0 < self.gamma < 1.0:
            raise ValidationError("gamma must lie in (0, 1)")
        if not 0.0 < self.gamma1 < 0.5:
            raise ValidationError("gamma1 must lie in (0, 1/2)")
        if self.sigma0 < 0:
            raise ValidationError("sigma0 must be non-negative")
        if self.max_iterations < 1 or self.log_every < 1:
            raise ValidationError("max_iterations and log_every must be >= 1")
        if self.update_rule not in ("direct", "frank_wolfe"):
            raise ValidationError(f"unknown update rule {self.update_rule!r}")
        if self.mode not in ("discrete", "convex_hull", "hybrid"):
            raise ValidationError(f"unknown mode {self.mode!r}")
        if not (self.kbar == "detect" or (isinstance(self.kbar, (int, np.integer)) and self.kbar >= 1)):
            raise ValidationError("kbar must be a positive integer or 'detect'")

    @classmethod
    def from_theory(cls, problem: ProblemInstance, epsilon: float, lambda_bar: float,
                    gamma: float = 0.5, gamma1: float = 0.4, sigma0: float = 0.0,
                    gbar: Optional[float] = None, mu_L: Optional[float] = None,
                    diameter_convention: str = "strict", **kwargs) -> "SolverParams":
        """Largest ``beta`` and ``alpha`` allowed by the step-size bounds."""
        if gbar is None:
            gbar = max_constraint_magnitude(problem)
        if mu_L is None:
            mu_L = lagrangian_curvature(problem.objective.curvature,
                                        problem.constraints.curvatures, lambda_bar)
        xbar = diameter(problem.actions, diameter_convention)
        beta = beta_bound(epsilon, gamma, mu_L, xbar)
        alpha = alpha_bound(epsilon, gamma, gamma1, beta, problem.m, gbar, sigma0)
        return cls(alpha=alpha, beta=beta, lambda_bar=lambda_bar, epsilon=epsilon, gamma=gamma,
                   gamma1=gamma1, sigma0=sigma0, gbar=gbar, mu_L=mu_L,
                   diameter_convention=diameter_convention, **kwargs)


def check_params(problem: ProblemInstance, params: SolverParams, gbar: float):
    """Return messages for every step-size bound ``params`` exceeds.

    In strict mode the first message is raised as a ``ValidationError``.
    """
    mu_L = params.mu_L
    if mu_L is None:
        mu_L = lagrangian_curvature(problem.objective.curvature,
                                    problem.constraints.curvatures, params.lambda_bar)
    xbar = diameter(problem.actions, params.diameter_convention)
    problems = []
    bb = beta_bound(params.epsilon, params.gamma, mu_L, xbar)
    if params.beta > bb * (1 + 1e-12):
        problems.append(f"beta={params.beta:g} exceeds beta_bound {bb:g}")
    ab = alpha_bound(params.epsilon, params.gamma, params.gamma1, params.beta, problem.m,
                     gbar, params.sigma0)
    if params.alpha > ab * (1 + 1e-12):
        problems.append(f"alpha={params.alpha:g} exceeds alpha_bound {ab:g}")
    if problems and params.strict:
        raise ValidationError("; ".join(problems))
    for msg in problems:
        warnings.warn(msg, UserWarning, stacklevel=3)
    return problems


# --------------------------------------------------------------------------
# multiplier sources


class ExactMultipliers:
    """``lt_k = lam_k``."""

    sigma0 = 0.0

    def reset(self, problem, params):
        pass

    def tilde(self, k, lam):
        return lam

    def observe(self, k, x):
        pass


class PerturbedMultipliers:
    """``lt_k = lam_k + alpha sigma0 Y_k`` with ``Y_k`` uniform on ``[-1, 1]``.

    One independent draw per component and iteration; the result is not
    clipped.
    """

    def __init__(self, sigma0: float, seed=None):
        if sigma0 < 0:
            raise ValidationError("sigma0 must be non-negative")
        self.sigma0 = float(sigma0)
        self.seed = seed

    def reset(self, problem, params):
        self._rng = np.random.default_rng(self.seed)
        self._scale = params.alpha * self.sigma0

    def tilde(self, k, lam):
        return lam + self._scale * self._rng.uniform(-1.0, 1.0, size=lam.shape)

    def observe(self, k, x):
        pass


class HookMultipliers:
    """``lt_k = hook(k, lam_k, alpha, lambda_bar)``."""

    def __init__(self, hook: Callable, sigma0: Optional[float] = None):
        self.hook = hook
        self.sigma0 = sigma0

    def reset(self, problem, params):
        self._alpha, self._cap = params.alpha, params.lambda_bar

    def tilde(self, k, lam):
        return np.asarray(self.hook(k, lam, self._alpha, self._cap), dtype=float)

    def observe(self, k, x):
        pass


def exponential_drift_hook(onset: float = 1e5):
    """``clip(lam + alpha exp(k - onset), 0, cap)``: a perturbation that stays
    within ``alpha`` until ``onset`` and then grows without bound."""

    def hook(k, lam, alpha, cap):
        return np.clip(lam + alpha * np.exp(min(k - onset, 700.0)), 0.0, cap)

    return hook


# --------------------------------------------------------------------------
# primal step


def unified_primal_step(problem: ProblemInstance, z, lam, beta: float, mode: str = "discrete",
                        update_rule: str = "direct", points=None, tolerance: float = 1e-8):
    """Next action for the Lagrangian at ``lam``.

    ``discrete`` searches ``D`` (or ``points``, e.g. expected actions),
    ``convex_hull`` minimises over ``conv(D)`` with the reference solver and
    ``hybrid`` keeps whichever of the two is better (the discrete one on
    ties). Returns ``(index, point)``; ``index`` is ``-1`` for a hull point.
    """
    z = np.asarray(z, dtype=float)
    lam = np.asarray(lam, dtype=float)
    P = problem.actions.points if points is None else points
    if update_rule == "direct":
        def score_all(Y):
            return problem.lagrangian_batch((1.0 - beta) * z + beta * Y, lam)
    elif update_rule == "frank_wolfe":
        grad = problem.lagrangian_grad(z, lam)

        def score_all(Y):
            return Y @ grad
    else:
        raise ValidationError(f"unknown update rule {update_rule!r}")

    idx, best = -1, np.inf
    if mode in ("discrete", "hybrid"):
        scores = score_all(P)
        if not np.all(np.isfinite(scores)):
            bad = int(np.flatnonzero(~np.isfinite(scores))[0])
            raise ValidationError(f"non-finite Lagrangian score at candidate action {bad}")
        idx = int(np.argmin(scores))
        best = float(scores[idx])
        if mode == "discrete":
            return idx, P[idx]
    elif mode != "convex_hull":
        raise ValidationError(f"unknown mode {mode!r}")

    if update_rule == "direct":
        sol = minimize_over_hull(
            lambda y: problem.lagrangian((1.0 - beta) * z + beta * y, lam),
            lambda y: beta * problem.lagrangian_grad((1.0 - beta) * z + beta * y, lam),
            problem.actions, tolerance,
        )
    else:
        sol = minimize_over_hull(lambda y: float(y @ grad), lambda y: grad,
                                 problem.actions, tolerance)
    if mode == "hybrid" and best <= sol.value:
        return idx, P[idx]
    return -1, sol.argpoint


# --------------------------------------------------------------------------
# main loop


@dataclass
class ConstrainedRun:
    trace: RunTrace
    bounds: Optional[BoundReport]
    z_final: np.ndarray
    lambda_final: np.ndarray
    averages: DiamondAverages
    kbar: Optional[int]
    gbar: float
    contract_violations: int
    first_violation: Optional[int]
    bracket_violations: int = 0
    first_bracket_violation: Optional[int] = None
    param_warnings: list = field(default_factory=list)


def _is_logged(k, K, params):
    return k <= params.dense_until or k % params.log_every == 0 or k == K


def run_constrained(problem: ProblemInstance, params: SolverParams, source=None,
                    f_star: Optional[float] = None, action_model=None) -> ConstrainedRun:
    """Run the greedy primal / clipped dual iteration.

    ``source`` supplies ``lt_k`` (default: exact multipliers). Whenever
    ``|lam_k - lt_k|`` exceeds ``alpha * sigma0`` the iteration is counted as
    a contract violation and a ``ContractViolationWarning`` is issued once.
    With ``f_star`` the main bracket is evaluated at every logged iteration.
    ``action_model`` replaces each action by its expected outcome.
    """
    if problem.constraints is None:
        raise ValidationError("run_constrained needs a constrained problem")
    source = ExactMultipliers() if source is None else source
    gbar = params.gbar if params.gbar is not None else max_constraint_magnitude(problem)
    warns = check_params(problem, params, gbar)
    source.reset(problem, params)

    m, K = problem.m, params.max_iterations
    alpha, beta, cap = params.alpha, params.beta, params.lambda_bar
    f, cons = problem.objective, problem.constraints
    P = problem.actions.points if action_model is None else action_model.expected_actions
    z = (P[0] if params.z1 is None else np.asarray(params.z1, dtype=float)).astype(float).copy()
    lam = np.zeros(m) if params.lambda1 is None else np.asarray(params.lambda1, dtype=float).copy()
    if np.any(lam < 0) or np.any(lam > cap):
        raise ValidationError("initial multipliers must lie in [0, lambda_bar]")
    contract_tol = alpha * params.sigma0 + 1e-12 * max(1.0, cap)

    detect = params.kbar == "detect"
    kbar = None if detect else int(params.kbar)
    avg = DiamondAverages(problem.dim, m, kbar if kbar else 1)
    full = DiamondAverages(problem.dim, m, 1)
    trace = RunTrace()
    violations, first_violation = 0, None
    br_viol, first_br = 0, None
    fast = params.mode == "discrete" and params.update_rule == "direct"

    for k in range(1, K + 1):
        lt = source.tilde(k, lam)
        breach = False
        if lt is not lam:
            gap = float(np.max(np.abs(lt - lam)))
            breach = gap > contract_tol
        if breach:
            violations += 1
            if first_violation is None:
                first_violation = k
                warnings.warn(f"approximate multiplier drifted {gap:.3g} from the exact one "
                              f"at k={k}, above alpha*sigma0={alpha * params.sigma0:.3g}",
                              ContractViolationWarning, stacklevel=2)

        if fast:
            C = (1.0 - beta) * z + beta * P
            scores = f.batch(C) + cons.batch(C) @ lt
            idx = int(np.argmin(scores))
            if not np.isfinite(scores.sum()):
                raise ValidationError(f"non-finite Lagrangian score at k={k}")
            x = P[idx]
        else:
            idx, x = unified_primal_step(problem, z, lt, beta, params.mode,
                                         params.update_rule, P)
        z = (1.0 - beta) * z + beta * x
        source.observe(k, x)
        gz = cons(z)

        q_low = np.nan
        logged = _is_logged(k, K, params)
        want_q = (detect and kbar is None) or (
            logged and params.track_dual
            and (params.dual_horizon is None or k <= params.dual_horizon))
        L_k = problem.lagrangian(z, lam) if (logged or want_q) else np.nan
        if want_q:
            sol = reference_dual(problem, lam, params.dual_tolerance)
            q_low = sol.value - sol.tolerance_achieved
            if detect and kbar is None and L_k - q_low <= 2.0 * params.epsilon:
                kbar = k
                avg.window_start = k

        full.add(z, lam)
        if kbar is not None and k >= kbar:
            avg.add(z, lam)

        if logged:
            row = dict(k=k, action=idx, z=z.copy(), lam=lam.copy(), lam_tilde=np.array(lt, dtype=float),
                       L=L_k, L_tilde=problem.lagrangian(z, lt), q=q_low,
                       contract_breach=breach, f_from_start=f(full.z_diamond))
            if avg.count:
                zd, ld = avg.z_diamond, avg.lambda_diamond
                gd = cons(zd)
                row.update(count=avg.count, z_diamond=zd, f_diamond=f(zd), g_diamond=gd,
                           lam_diamond=ld, slackness=float(ld @ gd),
                           L_diamond=problem.lagrangian(zd, ld))
                rep = bound_report(avg.count, alpha, params.epsilon, params.sigma0, cap, gbar, m)
                row.update(main_lower=rep.main_lower, main_upper=rep.main_upper,
                           slack_lower=rep.slackness_lower, slack_upper=rep.slackness_upper,
                           feas_cap=rep.feasibility_caps[0],
                           lag_lower=rep.lag_avg_lower, lag_upper=rep.lag_avg_upper)
                if f_star is not None:
                    dev = row["f_diamond"] - f_star
                    inside = rep.main_lower <= dev <= rep.main_upper
                    row.update(f_gap=dev, in_bracket=inside)
                    if not inside:
                        br_viol += 1
                        if first_br is None:
                            first_br = k
            trace.record(**row)

        lam = np.minimum(np.maximum(lam + alpha * gz, 0.0), cap)

    trace.flags.update(contract_violations=violations, first_contract_violation=first_violation,
                       bracket_violations=br_viol, first_bracket_violation=first_br,
                       kbar=kbar, gbar=gbar)
    bounds = None
    if avg.count:
        bounds = bound_report(avg.count, alpha, params.epsilon, params.sigma0, cap, gbar, m)
    return ConstrainedRun(trace, bounds, z, lam, avg, kbar, gbar, violations, first_violation,
                          br_viol, first_br, warns)
