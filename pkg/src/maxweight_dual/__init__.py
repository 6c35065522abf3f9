"""Greedy primal-dual optimisation over finite action sets.

Averaged greedy descent for convex objectives on the convex hull of a finite
action set, with clipped dual ascent for convex constraints and queue-based
multiplier estimates for linear constraints with stochastic right-hand sides.
"""
from .descent import (
    DescentConfig,
    DescentState,
    DescentTrace,
    average_update,
    beta_bound,
    detect_kbar,
    frank_wolfe_step,
    greedy_direct_step,
    run_unconstrained,
)
from .dual import (
    BoundReport,
    ConstrainedRun,
    DiamondAverages,
    ExactMultipliers,
    HookMultipliers,
    MultiplierState,
    PerturbedMultipliers,
    SolverParams,
    alpha_bound,
    back_solve_gamma1,
    bound_lagrangian_average,
    bound_main,
    bound_report,
    bound_slackness,
    check_params,
    dual_bound_from_slater,
    exponential_drift_hook,
    feasibility_cap,
    lambda_bar_requirement,
    lagrangian_value,
    multiplier_step,
    run_constrained,
    slater_margin,
    unified_primal_step,
)
from .exceptions import ContractViolationWarning, OracleError, ValidationError
from .oracle import (
    CurvatureReport,
    ReferenceSolution,
    brute_argmin,
    curvature_validate,
    minimize_over_hull,
    reference_dual,
    reference_primal,
)
from .problem import (
    ActionSet,
    ConstraintVector,
    ConvexFunctionSpec,
    ProblemInstance,
    constant_function,
    diameter,
    exp_sum_function,
    hull_membership_weights,
    lagrangian_curvature,
    linear_function,
    max_constraint_magnitude,
    quadratic_function,
)
from .queues import (
    ArrivalModel,
    LinearConstraintSystem,
    QueueMultipliers,
    QueueState,
    StochasticActionModel,
    clipped_accumulator_closed_form,
    clipped_iterate,
    estimate_pK,
    load_arrivals_csv,
    queue_action_direct,
    queue_action_fw,
    queue_step,
    run_paired_tracking,
    sequence_gap_check,
    tracking_gap_bound,
    write_arrivals_csv,
)
from .trace import RunTrace

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
