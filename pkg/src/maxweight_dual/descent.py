"""Greedy descent over a finite action set.

Each step picks one action ``x_k`` from ``D`` and moves the running average
``z_{k+1} = (1 - beta) z_k + beta x_k``. Two selection rules are provided:

* direct: ``argmin_x F((1 - beta) z_k + beta x)``
* Frank-Wolfe: ``argmin_x dF(z_k)^T x``

Both reduce to ``argmin_x c^T x`` when ``F`` is linear.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .exceptions import ValidationError
from .problem import ActionSet, ConvexFunctionSpec, ProblemInstance, diameter


@dataclass(frozen=True)
class DescentState:
    z: np.ndarray
    k: int = 1
    beta: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "z", np.asarray(self.z, dtype=float).ravel())
        if not 0.0 < self.beta <= 1.0:
            raise ValidationError(f"beta must lie in (0, 1], got {self.beta}")


@dataclass(frozen=True)
class DescentConfig:
    epsilon: float
    gamma: float = 0.5
    gamma1: float = 0.4
    max_iterations: int = 1000
    update_rule: str = "direct"
    beta: Optional[float] = None
    strict: bool = True
    diameter_convention: str = "strict"

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValidationError("epsilon must be positive")
        if not 0.0 < self.gamma < 1.0:
            raise ValidationError("gamma must lie in (0, 1)")
        if not 0.0 < self.gamma1 < 0.5:
            raise ValidationError("gamma1 must lie in (0, 1/2)")
        if self.max_iterations < 1:
            raise ValidationError("max_iterations must be >= 1")
        if self.update_rule not in ("direct", "frank_wolfe"):
            raise ValidationError(f"unknown update rule {self.update_rule!r}")


def beta_bound(epsilon: float, gamma: float, mu_F: float, xbar_D: float) -> float:
    """Largest smoothing parameter for which greedy descent is guaranteed.

    ``(1 - gamma) * min(epsilon / (mu_F * xbar_D**2), 1)``; with zero
    curvature the first term is infinite and the bound is ``1 - gamma``.
    """
    if not epsilon > 0:
        raise ValidationError("epsilon must be positive")
    if not 0.0 < gamma < 1.0:
        raise ValidationError("gamma must lie in (0, 1)")
    if mu_F < 0:
        raise ValidationError("curvature must be non-negative")
    if not xbar_D > 0:
        raise ValidationError("diameter bound must be positive")
    denom = mu_F * xbar_D**2
    ratio = np.inf if denom == 0 else epsilon / denom
    return float((1.0 - gamma) * min(ratio, 1.0))


def _first_argmin(values: np.ndarray, what: str) -> int:
    bad = ~np.isfinite(values)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise ValidationError(f"non-finite {what} {values[i]} at candidate action {i}")
    return int(np.argmin(values))  # numpy returns the first occurrence


def greedy_direct_step(F: ConvexFunctionSpec, state: DescentState, actions: ActionSet) -> int:
    """Index of the action minimising ``F((1 - beta) z + beta x)``."""
    cand = (1.0 - state.beta) * state.z + state.beta * actions.points
    return _first_argmin(F.batch(cand), "objective value")


def frank_wolfe_step(F: ConvexFunctionSpec, state: DescentState, actions: ActionSet) -> int:
    """Index of the action minimising the linearisation ``dF(z)^T x``."""
    g = F.grad(state.z)
    if not np.all(np.isfinite(g)):
        raise ValidationError(f"non-finite subgradient {g.tolist()} at z={state.z.tolist()}")
    return _first_argmin(actions.points @ g, "linearised score")


def average_update(state: DescentState, x) -> DescentState:
    x = np.asarray(x, dtype=float).ravel()
    z = (1.0 - state.beta) * state.z + state.beta * x
    return replace(state, z=z, k=state.k + 1)


@dataclass
class DescentTrace:
    """Record of an unconstrained run; row ``i`` holds ``z_{i+1}``."""

    z: np.ndarray
    values: np.ndarray
    actions: np.ndarray
    beta: float
    hull_weights: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def final(self) -> np.ndarray:
        return self.z[-1]


def _resolve_beta(config: DescentConfig, mu: float, xbar: float) -> float:
    bound = beta_bound(config.epsilon, config.gamma, mu, xbar)
    if config.beta is None:
        return bound
    beta = float(config.beta)
    if beta > bound * (1 + 1e-12):
        msg = f"beta={beta:g} exceeds the descent step bound {bound:g}"
        if config.strict:
            raise ValidationError(msg)
        warnings.warn(msg, UserWarning, stacklevel=3)
    return beta


def run_unconstrained(problem: ProblemInstance, config: DescentConfig, z1=None,
                      objective_at: Optional[Callable[[int], ConvexFunctionSpec]] = None,
                      track_weights: bool = False) -> DescentTrace:
    """Iterate a greedy step and the running average ``max_iterations`` times.

    ``objective_at(k)`` supplies a time-varying objective ``F_k``; the caller
    is responsible for it changing slowly enough. Without it the problem's
    objective is used throughout. ``z1`` defaults to the first action.
    With ``track_weights`` the trace carries convex weights over
    ``[z1, x_1, ..., x_|D|]`` reproducing every iterate.
    """
    if problem.constraints is not None:
        raise ValidationError("run_unconstrained needs a problem without constraints")
    actions = problem.actions
    xbar = diameter(actions, config.diameter_convention)
    beta = _resolve_beta(config, problem.objective.curvature, xbar)
    step = greedy_direct_step if config.update_rule == "direct" else frank_wolfe_step

    z = actions.points[0].copy() if z1 is None else np.asarray(z1, dtype=float).ravel()
    state = DescentState(z, 1, beta)
    K = config.max_iterations
    zs = np.empty((K + 1, actions.dim))
    vals = np.empty(K + 1)
    chosen = np.empty(K, dtype=int)
    F = problem.objective if objective_at is None else objective_at(1)
    zs[0], vals[0] = state.z, F(state.z)
    weights = None
    if track_weights:
        weights = np.zeros((K + 1, len(actions) + 1))
        weights[0, 0] = 1.0
    for i in range(K):
        if objective_at is not None:
            F = objective_at(state.k)
        idx = step(F, state, actions)
        state = average_update(state, actions.points[idx])
        chosen[i] = idx
        zs[i + 1] = state.z
        vals[i + 1] = F(state.z)
        if track_weights:
            weights[i + 1] = (1.0 - beta) * weights[i]
            weights[i + 1, idx + 1] += beta
    return DescentTrace(zs, vals, chosen, beta, weights)


def detect_kbar(ks, gaps, threshold: float, window: int = 100):
    """Burn-in detection on a logged gap sequence.

    Returns ``(first_hit, confirmed)``. ``first_hit`` is the first logged
    ``k`` with ``gap <= threshold``. ``confirmed`` is the smallest logged
    ``k`` from which the condition holds at every later logged entry, with at
    least ``window`` iterations of evidence behind it; ``None`` otherwise.
    """
    ks = np.asarray(ks)
    ok = np.asarray(gaps) <= threshold
    if ks.size == 0 or not ok.any():
        return None, None
    first_hit = int(ks[np.argmax(ok)])
    if ok[-1]:
        bad = np.flatnonzero(~ok)
        start = 0 if bad.size == 0 else int(bad[-1]) + 1
        confirmed = int(ks[start])
        if ks[-1] - confirmed < window:
            confirmed = None
    else:
        confirmed = None
    return first_hit, confirmed
