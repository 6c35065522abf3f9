"""Entropy-constrained online scheduling.

A distribution ``p`` over inter-service times ``{0, ..., T_max}`` must have
entropy at least ``E`` and mean at most ``b - xi``, where ``b`` is the
(unknown) mean inter-arrival time. Constraints, stated as ``g <= 0``::

    g1(p) = sum_i p_i log p_i + E
    g2(p) = sum_i i p_i + xi - b

``p`` is stored on all ``T_max + 1`` outcomes with ``sum p = 1``; the
formulation over ``T_max`` free coordinates with ``sum <= 1`` is the same set
with ``p_0 = 1 - sum``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import logsumexp, xlogy

from ..dual import bound_slackness, feasibility_cap
from ..exceptions import ValidationError
from ..problem import (
    ActionSet,
    ConstraintVector,
    ConvexFunctionSpec,
    ProblemInstance,
    constant_function,
    linear_function,
)
from ..queues import ArrivalModel
from ..trace import RunTrace


def neg_entropy(p) -> float:
    return float(np.sum(xlogy(p, p)))


def entropy_constraint(E: float, dim: int) -> ConvexFunctionSpec:
    """``sum p log p + E``. Its curvature is unbounded near the boundary."""
    return ConvexFunctionSpec(
        value=lambda p: neg_entropy(p) + E,
        subgradient=lambda p: np.log(np.maximum(p, 1e-300)) + 1.0,
        curvature=np.inf,
        value_batch=lambda P: xlogy(P, P).sum(axis=1) + E,
        name="g1",
    )


def gibbs_step(lam1: float, lam2: float, T_max: int) -> np.ndarray:
    """Minimiser of ``lam1 g1(p) + lam2 g2(p)`` over the simplex.

    For ``lam1 > 0`` this is ``p_i ~ exp(-(lam2 / lam1) i)``. For
    ``lam1 = 0`` the problem is a linear program and the lowest-index optimal
    vertex is returned (outcome 0 whenever ``lam2 >= 0``).
    """
    i = np.arange(T_max + 1, dtype=float)
    if lam1 > 0:
        logits = -(lam2 / lam1) * i
        return np.exp(logits - logsumexp(logits))
    p = np.zeros(T_max + 1)
    p[int(np.argmin(lam2 * i))] = 1.0
    return p


def privacy_dual(lam, T_max: int, E: float, xi: float, b: float) -> float:
    """``min_p lam^T g(p)`` over the simplex, in closed form."""
    lam1, lam2 = float(lam[0]), float(lam[1])
    base = lam1 * E + lam2 * (xi - b)
    if lam1 > 0:
        return base - lam1 * float(logsumexp(-(lam2 / lam1) * np.arange(T_max + 1)))
    return base + min(0.0, lam2 * T_max)


@dataclass
class PrivacySetup:
    T_max: int
    E: float
    xi: float
    b: float
    arrivals: ArrivalModel
    lambda_bar: float
    lambda1: np.ndarray
    alpha: float
    beta: float
    epsilon: float
    gbar: float

    def g(self, p) -> np.ndarray:
        i = np.arange(self.T_max + 1)
        return np.array([neg_entropy(p) + self.E, float(i @ p) + self.xi - self.b])


def constraint_magnitude(T_max: int, E: float, xi: float, b: float) -> float:
    """``max |g_j|`` over the simplex, in closed form."""
    g1 = max(abs(E), abs(E - np.log(T_max + 1)))
    g2 = max(abs(xi - b), abs(T_max + xi - b))
    return float(max(g1, g2))


def build_privacy_example(T_max: int = 5, E: float = np.log(5) / 5, xi: Optional[float] = None,
                          arrivals: Optional[ArrivalModel] = None, b: Optional[float] = None,
                          lambda_bar: float = 0.5, lambda1=None, alpha: float = 0.01,
                          beta: float = 0.01, epsilon: float = 0.05,
                          gbar: Optional[float] = None) -> PrivacySetup:
    if T_max < 1:
        raise ValidationError("T_max must be >= 1")
    if E > np.log(T_max + 1):
        raise ValidationError(
            f"entropy target E={E:g} exceeds the maximum entropy log({T_max + 1})={np.log(T_max + 1):g}"
        )
    arrivals = ArrivalModel.alternating([0.0, 1.0]) if arrivals is None else arrivals
    if arrivals.m != 1:
        raise ValidationError("privacy arrivals must be scalar")
    b = float(arrivals.mean[0]) if b is None else float(b)
    xi = b / 2.0 if xi is None else float(xi)
    if not xi > 0:
        raise ValidationError("xi must be positive")
    lam1 = np.array([lambda_bar, 0.0]) if lambda1 is None else np.asarray(lambda1, dtype=float)
    if lam1.shape != (2,) or np.any(lam1 < 0) or np.any(lam1 > lambda_bar):
        raise ValidationError("lambda1 must be two values in [0, lambda_bar]")
    if gbar is None:
        gbar = constraint_magnitude(T_max, E, xi, b)
    return PrivacySetup(T_max, float(E), xi, b, arrivals, float(lambda_bar), lam1,
                        float(alpha), float(beta), float(epsilon), float(gbar))


def privacy_problem(setup: PrivacySetup) -> ProblemInstance:
    """The same feasibility problem as a :class:`ProblemInstance` over the simplex.

    The Slater point is the tilted distribution with the largest worst-case
    constraint margin; an error is raised when no strictly feasible point
    exists.
    """
    T = setup.T_max
    actions = ActionSet(np.eye(T + 1))
    i = np.arange(T + 1, dtype=float)
    cons = ConstraintVector([
        entropy_constraint(setup.E, T + 1),
        linear_function(i, setup.xi - setup.b, name="g2"),
    ])
    thetas = np.linspace(-5.0, 50.0, 5501)
    best, zbar = -np.inf, None
    for th in thetas:
        p = gibbs_step(1.0, th, T)
        margin = float(np.min(-cons(p)))
        if margin > best:
            best, zbar = margin, p
    if best <= 0:
        raise ValidationError("entropy and mean constraints admit no strictly feasible distribution")
    return ProblemInstance(constant_function(1.0, T + 1), actions, cons, slater_point=zbar,
                           slater_weights=zbar)


@dataclass
class PrivacyRun:
    trace: RunTrace
    p_final: np.ndarray
    lam_final: np.ndarray
    p_diamond: np.ndarray
    lam_diamond: np.ndarray
    cap_violations: int
    slack_violations: int
    kbar: Optional[int] = None


def run_privacy(setup: PrivacySetup, iterations: int, kbar="confirmed", log_every: int = 10,
                dense_until: int = 1000, seed=None, p1=None) -> PrivacyRun:
    """Online update: Gibbs step, averaging, and multiplier ascent on the
    observed inter-arrival ``b_k`` in place of ``b``.

    ``p_1`` defaults to the uniform distribution. Averaging starts at ``kbar``:
    an integer, ``"detect"`` for the first ``k`` at which
    ``L(p_{k+1}, lam_k) - q(lam_k) <= 2 epsilon``, or ``"confirmed"`` for the
    first ``k`` from which that holds for the rest of the run (found by a
    preliminary pass; the dual is closed form so this is cheap).
    """
    if kbar == "confirmed":
        probe = run_privacy(setup, iterations, 1, log_every, iterations, seed, p1)
        ks, gaps = probe.trace["k"], probe.trace["lag_gap"]
        above = np.flatnonzero(gaps > 2.0 * setup.epsilon)
        confirmed = 1 if above.size == 0 else int(ks[above[-1]]) + 1
        hits = np.flatnonzero(gaps <= 2.0 * setup.epsilon)
        run = run_privacy(setup, iterations, min(confirmed, iterations), log_every,
                          dense_until, seed, p1)
        run.trace.flags["first_hit"] = int(ks[hits[0]]) if hits.size else None
        return run
    T = setup.T_max
    i = np.arange(T + 1, dtype=float)
    alpha, beta, cap = setup.alpha, setup.beta, setup.lambda_bar
    if p1 is None:
        p = np.full(T + 1, 1.0 / (T + 1))
    else:
        p = np.asarray(p1, dtype=float).copy()
        if p.shape != (T + 1,) or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ValidationError(f"p1 must be a distribution over {T + 1} outcomes")
    lam = setup.lambda1.copy()
    stream = setup.arrivals.stream(seed)
    p_sum, lam_sum, count = np.zeros(T + 1), np.zeros(2), 0
    trace = RunTrace()
    cap_viol = slack_viol = 0
    detect = kbar == "detect"
    start = None if detect else int(kbar)
    for k in range(1, iterations + 1):
        x = gibbs_step(lam[0], lam[1], T)
        p = (1.0 - beta) * p + beta * x
        b_k = float(next(stream)[0])
        g1 = neg_entropy(p) + setup.E
        g2_obs = float(i @ p) + setup.xi - b_k
        lag_gap = np.nan
        if start is None or k <= dense_until:
            lag_gap = float(lam @ setup.g(p)) - privacy_dual(lam, T, setup.E, setup.xi, setup.b)
            if start is None and lag_gap <= 2.0 * setup.epsilon:
                start = k
        if start is not None and k >= start:
            p_sum += p
            lam_sum += lam
            count += 1
        if count and (k <= dense_until or k % log_every == 0 or k == iterations):
            pd, ld = p_sum / count, lam_sum / count
            gd = setup.g(pd)
            fc = feasibility_cap(count, alpha, cap)
            sl, su = bound_slackness(count, alpha, cap, setup.gbar, 2)
            slack = float(ld @ gd)
            ok_cap = bool(np.all(gd <= fc))
            ok_slack = sl <= slack <= su
            cap_viol += not ok_cap
            slack_viol += not ok_slack
            trace.record(k=k, count=count, lag_gap=lag_gap, p=p.copy(), lam=lam.copy(), b_k=b_k,
                         g_diamond=gd, lam_diamond=ld, slackness=slack, feas_cap=fc,
                         slack_lower=sl, slack_upper=su, within_cap=ok_cap, within_slack=ok_slack)
        lam = np.minimum(np.maximum(lam + alpha * np.array([g1, g2_obs]), 0.0), cap)
    trace.flags.update(cap_violations=cap_viol, slack_violations=slack_viol, kbar=start)
    return PrivacyRun(trace, p, lam, p_sum / max(count, 1), lam_sum / max(count, 1),
                      cap_viol, slack_viol, start)
