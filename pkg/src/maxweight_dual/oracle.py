"""Reference computations used to check the solvers.

Nothing in the solvers calls into this module; it exists so that every bound
and every greedy step can be compared against an independent answer.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .exceptions import OracleError, ValidationError
from .problem import ActionSet, ConvexFunctionSpec, ProblemInstance

DEFAULT_TOLERANCE = 1e-8
DEFAULT_BUDGET = 10**6


@dataclass
class ReferenceSolution:
    value: float
    argpoint: np.ndarray
    tolerance_achieved: float
    iterations_used: int
    weights: Optional[np.ndarray] = field(default=None, repr=False)
    multipliers: Optional[np.ndarray] = None


def brute_argmin(F: Callable[[np.ndarray], float], actions: ActionSet):
    """Exhaustive argmin over the action set, lowest index on ties.

    Returns ``(index, action, value)``.
    """
    best_idx, best_val = -1, np.inf
    for i, x in enumerate(actions.points):
        v = float(F(x))
        if not np.isfinite(v):
            raise ValidationError(f"non-finite value {v} at action {i}: {x.tolist()}")
        if v < best_val:
            best_idx, best_val = i, v
    return best_idx, actions.points[best_idx], best_val


def _line_search(subgradient, x, d, slope, gmax, c_guess):
    """Approximately exact step on ``[0, gmax]`` for a convex line restriction.

    Works on the directional derivative, which keeps full relative precision
    near the optimum where function differences drown in round-off.
    Returns the step and a curvature estimate for the next call.
    """
    lo, hi = 0.0, gmax
    t = min(-slope / c_guess, gmax) if c_guess > 0 else gmax
    c = c_guess
    for _ in range(100):
        dt = float(np.asarray(subgradient(x + t * d)) @ d)
        if np.isnan(dt):
            raise OracleError("NaN directional derivative in line search")
        if dt > 0.0:
            hi = t
        else:
            lo = t
            if t >= gmax:
                break
        if abs(dt) <= 1e-4 * abs(slope):
            break
        if np.isfinite(dt) and dt > slope:
            c = (dt - slope) / t
            t_new = -slope / c
        else:
            t_new = 2.0 * t
        if not lo < t_new < hi:
            t_new = 0.5 * (lo + hi)
        if hi - lo <= 1e-15 * hi:
            t = lo
            break
        t = t_new
    return t, c


def minimize_over_hull(value, subgradient, actions: ActionSet, tolerance: float = DEFAULT_TOLERANCE,
                       max_iter: int = DEFAULT_BUDGET, weights0=None) -> ReferenceSolution:
    """Away-step conditional gradient on the simplex of action weights.

    Stops when the Frank-Wolfe gap ``grad(x)^T (x - s)``, an upper bound on
    ``h(x) - min h``, drops to ``tolerance``; raises ``OracleError`` if the
    budget runs out first.
    """
    P = actions.points
    N = P.shape[0]
    w = np.full(N, 1.0 / N) if weights0 is None else np.array(weights0, dtype=float)
    x = w @ P
    curv = 0.0
    gap = np.inf
    for it in range(1, max_iter + 1):
        g = np.asarray(subgradient(x), dtype=float)
        if not np.all(np.isfinite(g)):
            raise OracleError(f"non-finite subgradient at {x.tolist()}")
        scores = P @ g
        s = int(np.argmin(scores))
        gx = float(g @ x)
        gap = gx - scores[s]
        if gap <= tolerance:
            return ReferenceSolution(float(value(x)), x, max(gap, 0.0), it, w)
        active = np.flatnonzero(w > 0.0)
        a = int(active[np.argmax(scores[active])])
        if gap >= scores[a] - gx or w[a] >= 1.0:
            d = P[s] - x
            gmax, toward = 1.0, True
        else:
            d = x - P[a]
            gmax, toward = w[a] / (1.0 - w[a]), False
        slope = float(g @ d)
        if slope >= 0.0:
            # only reachable through round-off at the optimum
            return ReferenceSolution(float(value(x)), x, max(gap, 0.0), it, w)
        step, curv = _line_search(subgradient, x, d, slope, gmax, curv)
        if step <= 0.0 and not toward:
            # an away direction can be exhausted while the Frank-Wolfe one is not
            d = P[s] - x
            gmax, toward = 1.0, True
            slope = float(g @ d)
            step, curv = _line_search(subgradient, x, d, slope, gmax, curv)
        if step <= 0.0:
            raise OracleError(f"line search stalled with gap {gap:.3e}")
        if toward:
            w *= 1.0 - step
            w[s] += step
        else:
            w *= 1.0 + step
            w[a] -= step
            if step >= gmax:
                w[a] = 0.0
        np.clip(w, 0.0, None, out=w)
        w /= w.sum()
        x = w @ P
    raise OracleError(f"gap {gap:.3e} above tolerance {tolerance:.1e} after {max_iter} iterations")


def reference_dual(problem: ProblemInstance, lam, tolerance: float = DEFAULT_TOLERANCE,
                   max_iter: int = DEFAULT_BUDGET, weights0=None) -> ReferenceSolution:
    """``q(lam) = min_{z in C} L(z, lam)``, gap-certified.

    ``value`` is ``L`` at the returned point, so the true dual value lies in
    ``[value - tolerance_achieved, value]``.
    """
    lam = np.asarray(lam, dtype=float)
    if problem.m and (lam.shape != (problem.m,) or np.any(lam < 0)):
        raise ValidationError("multipliers must be a non-negative vector of length m")
    sol = minimize_over_hull(
        lambda z: problem.lagrangian(z, lam),
        lambda z: problem.lagrangian_grad(z, lam),
        problem.actions, tolerance, max_iter, weights0,
    )
    sol.multipliers = lam
    return sol


def reference_primal(problem: ProblemInstance, tolerance: float = DEFAULT_TOLERANCE,
                     max_iter: int = DEFAULT_BUDGET, max_outer: int = 200,
                     rho: float = 1.0) -> ReferenceSolution:
    """``f* = min f`` over the feasible part of the hull.

    Constraints are handled by the method of multipliers. Each round is
    certified by a lower bound from a dual solve and an upper bound from a
    feasible point: the primal iterate pulled towards the Slater point just
    far enough to satisfy every constraint. The returned ``value`` is that
    upper bound and ``tolerance_achieved`` the width of the bracket.
    """
    if tolerance <= 0:
        raise ValidationError("tolerance must be positive")
    f = problem.objective
    if problem.constraints is None:
        return minimize_over_hull(f.value, f.subgradient, problem.actions, tolerance, max_iter)

    cons = problem.constraints
    zbar = problem.slater_point
    margin = float(np.min(-cons(zbar)))
    inner_tol = 1e-2 * tolerance
    lam = np.zeros(cons.m)
    w = None
    prev_viol = np.inf
    width = np.inf
    total = 0
    for _ in range(max_outer):
        lam_k, rho_k = lam.copy(), rho

        def phi(z):
            t = np.maximum(lam_k + rho_k * cons(z), 0.0)
            return f.value(z) + (t @ t - lam_k @ lam_k) / (2.0 * rho_k)

        def dphi(z):
            t = np.maximum(lam_k + rho_k * cons(z), 0.0)
            return f.grad(z) + t @ cons.jacobian(z)

        inner = minimize_over_hull(phi, dphi, problem.actions, inner_tol, max_iter, w)
        total += inner.iterations_used
        w = inner.weights
        z = inner.argpoint
        gz = cons(z)
        lam = np.maximum(lam + rho * gz, 0.0)

        dual = reference_dual(problem, lam, inner_tol, max_iter)
        total += dual.iterations_used
        lower = dual.value - dual.tolerance_achieved
        viol = max(float(gz.max()), 0.0)
        t = viol / (viol + margin)
        z_feas = (1.0 - t) * z + t * zbar
        upper = f(z_feas)
        width = upper - lower
        if width <= tolerance:
            return ReferenceSolution(upper, z_feas, max(width, 0.0), total, w, lam)
        if viol > 0.25 * prev_viol:
            rho *= 4.0
        prev_viol = viol
    raise OracleError(f"primal/dual bracket {width:.3e} above tolerance {tolerance:.1e}")


@dataclass
class CurvatureReport:
    passed: bool
    curvature: float
    worst_model_excess: float
    worst_monotone_excess: float
    worst_pair: Optional[tuple]
    fd_max_error: float
    fd_checked: int
    fd_skipped: int


def curvature_validate(spec: ConvexFunctionSpec, domain: ActionSet, samples: int = 200,
                       rng=None, curvature: Optional[float] = None, tol: float = 1e-10,
                       fd_step: float = 1e-6, fd_rtol: float = 1e-4) -> CurvatureReport:
    """Sample pairs in the hull and check both curvature inequalities.

    Checks ``h(z+d) - h(z) <= dh(z)^T d + mu ||d||^2`` and
    ``(dh(z+d) - dh(z))^T d <= mu ||d||^2``, and compares the subgradient
    with central differences wherever one-sided differences agree (kinks are
    skipped).
    """
    if samples < 1:
        raise ValidationError("samples must be >= 1")
    rng = np.random.default_rng(rng)
    mu = spec.curvature if curvature is None else float(curvature)
    P = domain.points
    N = P.shape[0]
    worst_model, worst_mono, worst_pair = -np.inf, -np.inf, None
    for i in range(samples):
        if i % 4 == 3 and N > 1:
            a, b = rng.choice(N, size=2, replace=False)
            z, y = P[a].copy(), P[b].copy()
        else:
            z = rng.dirichlet(np.ones(N)) @ P
            y = rng.dirichlet(np.ones(N)) @ P
        d = y - z
        dd = float(d @ d)
        gz, gy = spec.grad(z), spec.grad(y)
        model = spec(y) - spec(z) - float(gz @ d) - mu * dd
        mono = float((gy - gz) @ d) - mu * dd
        if max(model, mono) > max(worst_model, worst_mono):
            worst_pair = (z, y)
        worst_model = max(worst_model, model)
        worst_mono = max(worst_mono, mono)

    fd_err, checked, skipped = 0.0, 0, 0
    n = domain.dim
    for _ in range(max(1, samples // 10)):
        z = rng.dirichlet(np.ones(N)) @ P
        g = spec.grad(z)
        f0 = spec(z)
        for k in range(n):
            e = np.zeros(n)
            e[k] = fd_step
            fp, fm = spec(z + e), spec(z - e)
            fwd, bwd = (fp - f0) / fd_step, (f0 - fm) / fd_step
            if abs(fwd - bwd) > 1e-3 * max(1.0, abs(fwd)):
                skipped += 1
                continue
            central = (fp - fm) / (2 * fd_step)
            fd_err = max(fd_err, abs(central - g[k]) / max(1.0, abs(g[k])))
            checked += 1
    passed = worst_model <= tol and worst_mono <= tol and fd_err <= fd_rtol
    return CurvatureReport(passed, mu, worst_model, worst_mono, worst_pair, fd_err, checked, skipped)
