"""Problem and parameter construction for each experiment kind."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np

from ..descent import DescentConfig, beta_bound
from ..dual import (
    ExactMultipliers,
    HookMultipliers,
    PerturbedMultipliers,
    SolverParams,
    exponential_drift_hook,
)
from ..exceptions import ValidationError
from ..problem import (
    ActionSet,
    ConstraintVector,
    ProblemInstance,
    diameter,
    exp_sum_function,
    linear_function,
    quadratic_function,
)
from ..queues import (
    ArrivalModel,
    LinearConstraintSystem,
    QueueMultipliers,
    load_arrivals_csv,
    partial_sum_deviation,
    sigma1_from_actions,
)
from .config import ExperimentConfig
from .privacy import PrivacySetup, build_privacy_example


@dataclass
class ConstrainedSetup:
    problem: ProblemInstance
    params: SolverParams
    source: Any
    meta: Dict[str, Any] = field(default_factory=dict)


@dataclass
class UnconstrainedSetup:
    problem: ProblemInstance
    config: DescentConfig
    z1: Optional[np.ndarray] = None


def exp_example_problem(n: int = 3, s: Optional[float] = None, mu_L: float = 0.6) -> ProblemInstance:
    """``min sum_i exp(i z_i)`` over ``conv({0, s}^n)`` subject to ``b <= z``.

    ``b = s / (n (n + 1)) [1, ..., n]`` and ``s`` defaults to
    ``1 / sqrt(n mu_L)``. The objective carries the declared curvature
    ``mu_L``; the Slater point is ``s 1``.
    """
    if n < 1:
        raise ValidationError("n must be >= 1")
    s = 1.0 / np.sqrt(n * mu_L) if s is None else float(s)
    if not s > 0:
        raise ValidationError("s must be positive")
    b = s / (n * (n + 1)) * np.arange(1, n + 1)
    return ProblemInstance(
        exp_sum_function(np.arange(1, n + 1), mu_L),
        ActionSet.binary_grid(n, s),
        ConstraintVector.linear(-np.eye(n), -b),
        slater_point=np.full(n, s),
    )


def _solver_params(p: Dict[str, Any], problem: ProblemInstance, strict: bool, z1=None,
                   lambda1=None) -> SolverParams:
    for key in ("alpha", "lambda_bar"):
        if p.get(key) is None:
            raise ValidationError(f"parameters.{key}: required")
    beta = p.get("beta")
    if beta is None:
        from ..problem import lagrangian_curvature

        mu = p.get("mu_L")
        if mu is None:
            mu = lagrangian_curvature(problem.objective.curvature, problem.constraints.curvatures,
                                      p["lambda_bar"])
        beta = beta_bound(p["epsilon"], p["gamma"], mu,
                          diameter(problem.actions, p["diameter_convention"]))
    return SolverParams(
        alpha=p["alpha"], beta=beta, lambda_bar=p["lambda_bar"], epsilon=p["epsilon"],
        gamma=p["gamma"], gamma1=p["gamma1"], sigma0=p["sigma0"],
        max_iterations=p["iterations"], update_rule=p["update_rule"], mode=p["mode"],
        strict=strict, gbar=p.get("gbar"), mu_L=p.get("mu_L"),
        diameter_convention=p["diameter_convention"], kbar=p["kbar"],
        log_every=p["log_every"], dense_until=p["dense_until"], track_dual=p["track_dual"],
        dual_horizon=p.get("dual_horizon"), z1=z1, lambda1=lambda1,
    )


def _perturbation_source(p: Dict[str, Any], seed: int):
    kind = p["perturbation"]
    if kind == "exponential":
        return HookMultipliers(exponential_drift_hook(p["drift_onset"]))
    if kind == "exact" or (kind == "uniform" and p["sigma0"] == 0):
        return ExactMultipliers()
    if kind == "uniform":
        return PerturbedMultipliers(p["sigma0"], seed)
    raise ValidationError(f"parameters.perturbation: unknown perturbation {kind!r}")


def build_exp_example(config: ExperimentConfig, seed: Optional[int] = None,
                      strict: Optional[bool] = None) -> ConstrainedSetup:
    p = config.parameters
    strict = config.strict if strict is None else strict
    seed = config.seed if seed is None else seed
    problem = exp_example_problem(p["n"], p.get("s"), p["mu_L"])
    z1 = problem.slater_point.copy()
    params = _solver_params(p, problem, strict, z1=z1, lambda1=np.zeros(problem.m))
    meta = {"s": float(z1[0]), "gbar_reference": p.get("gbar_reference")}
    return ConstrainedSetup(problem, params, _perturbation_source(p, seed), meta)


def parse_arrivals(spec: Optional[str], mean, base: Optional[Path] = None) -> ArrivalModel:
    """``constant``, ``alternating:v1,v2,...``, ``bernoulli:p1,...`` or ``csv:path``.

    ``alternating`` cycles through scalars; rows separated by ``;`` give a
    cycle of vectors.
    """
    mean = None if mean is None else np.atleast_1d(np.asarray(mean, dtype=float))
    if spec is None or spec == "constant":
        if mean is None:
            raise ValidationError("parameters.arrivals: constant arrivals need a mean")
        return ArrivalModel.constant(mean)
    kind, _, arg = spec.partition(":")
    try:
        if kind == "alternating":
            rows = [[float(v) for v in r.split(",") if v.strip()] for r in arg.split(";") if r.strip()]
            if not rows or len({len(r) for r in rows}) > 1:
                raise ValueError("expected one or more rows of equal length")
            return ArrivalModel.alternating(rows if len(rows) > 1 else rows[0])
        if kind == "bernoulli":
            return ArrivalModel.bernoulli([float(v) for v in arg.split(",") if v.strip()])
    except ValueError as exc:
        raise ValidationError(f"parameters.arrivals: {exc}") from None
    if kind == "csv":
        path = Path(arg)
        if base is not None and not path.is_absolute():
            path = base / path
        return load_arrivals_csv(path, mean=mean)
    raise ValidationError(f"parameters.arrivals: unknown arrival spec {spec!r}")


def build_custom(config: ExperimentConfig, seed: Optional[int] = None,
                 strict: Optional[bool] = None):
    p = config.parameters
    strict = config.strict if strict is None else strict
    seed = config.seed if seed is None else seed
    if p.get("actions") is not None:
        actions = ActionSet(p["actions"])
    elif p.get("binary_grid_n") is not None:
        actions = ActionSet.binary_grid(p["binary_grid_n"], p["binary_grid_s"])
    else:
        raise ValidationError("parameters.actions: required (or binary_grid_n)")
    kind = p.get("objective")
    try:
        if kind == "linear":
            f = linear_function(p["c"])
        elif kind == "quadratic":
            f = quadratic_function(p["Q"])
        elif kind == "exp_sum":
            if p.get("curvature") is None:
                raise ValidationError("parameters.curvature: required for exp_sum")
            f = exp_sum_function(p["weights"], p["curvature"])
        else:
            raise ValidationError(f"parameters.objective: expected linear, quadratic or exp_sum, got {kind!r}")
        f(actions.points[0])
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(f"parameters.objective: parameters do not fit the action dimension ({exc})") from None

    z1 = p.get("z1")
    if p.get("constraint_A") is None:
        if p.get("constraint_b") is not None:
            raise ValidationError("parameters.constraint_A: required when constraint_b is given")
        problem = ProblemInstance(f, actions)
        cfg = DescentConfig(epsilon=p["epsilon"], gamma=p["gamma"], gamma1=p["gamma1"],
                            max_iterations=p["iterations"], update_rule=p["update_rule"],
                            beta=p.get("beta"), strict=strict,
                            diameter_convention=p["diameter_convention"])
        return UnconstrainedSetup(problem, cfg, z1)

    A, b = p["constraint_A"], p.get("constraint_b")
    if b is None:
        raise ValidationError("parameters.constraint_b: required when constraint_A is given")
    if A.shape[1] != actions.dim:
        raise ValidationError(f"parameters.constraint_A: has {A.shape[1]} columns, actions have dimension {actions.dim}")
    problem = ProblemInstance(f, actions, ConstraintVector.linear(A, b), slater_point=p.get("slater_point"))
    mult = p["multiplier"]
    if mult == "queue":
        base = config.source.parent if config.source else None
        arrivals = parse_arrivals(p.get("arrivals"), b, base)
        if arrivals.m != b.shape[0] or not np.allclose(arrivals.mean, b, rtol=0, atol=1e-9):
            raise ValidationError(f"parameters.arrivals: mean {arrivals.mean.tolist()} does not "
                                  f"match constraint_b {b.tolist()}")
        if p.get("sigma2") is not None:
            arrivals.sigma2_claim = p["sigma2"]
        elif arrivals.sigma2_claim is None and arrivals.kind == "deterministic_sequence":
            # a cycle with the right mean: one period bounds every partial sum
            arrivals.sigma2_claim = float(partial_sum_deviation(arrivals.sequence, b).max())
        if p["sigma0"] == 0:
            if arrivals.sigma2_claim is None:
                raise ValidationError("parameters.sigma2: required for random arrivals "
                                      "with queue multipliers (or set sigma0)")
            beta = p.get("beta")
            if beta is None:
                raise ValidationError("parameters.beta: required with queue multipliers")
            # queue tracking gap expressed as alpha * sigma0
            p = dict(p, sigma0=2.0 * A.shape[0] * (sigma1_from_actions(A, actions) / beta
                                                   + arrivals.sigma2_claim))
        params = _solver_params(p, problem, strict, z1=z1, lambda1=p.get("lambda1"))
        source = QueueMultipliers(LinearConstraintSystem(A, b, arrivals), seed=seed)
        return ConstrainedSetup(problem, params, source, {"queue_sigma0": params.sigma0})
    params = _solver_params(p, problem, strict, z1=z1, lambda1=p.get("lambda1"))
    if mult == "exact":
        source = ExactMultipliers()
    elif mult == "perturbed":
        source = _perturbation_source(p, seed)
    else:
        raise ValidationError(f"parameters.multiplier: expected exact, perturbed or queue, got {mult!r}")
    return ConstrainedSetup(problem, params, source)


def build_privacy(config: ExperimentConfig) -> PrivacySetup:
    p = config.parameters
    base = config.source.parent if config.source else None
    arrivals = parse_arrivals(p["arrivals"], p.get("b"), base)
    return build_privacy_example(
        T_max=p["T_max"], E=p["E"], xi=p.get("xi"), arrivals=arrivals, b=p.get("b"),
        lambda_bar=p["lambda_bar"], lambda1=p.get("lambda1"), alpha=p["alpha"],
        beta=p["beta"], epsilon=p["epsilon"], gbar=p.get("gbar"),
    )
