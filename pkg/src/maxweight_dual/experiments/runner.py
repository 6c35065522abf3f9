"""Running configured experiments and writing their outputs.

Each run writes ``trace.csv`` and ``summary.json`` into the output
directory. The trace starts with a schema line ``# trace-schema v1`` followed
by a header row; floats carry 17 significant digits so a trace round-trips
exactly.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from ..descent import detect_kbar, run_unconstrained
from ..dual import (
    alpha_bound,
    back_solve_gamma1,
    bound_lagrangian_average,
    bound_main,
    bound_slackness,
    feasibility_cap,
    lambda_bar_requirement,
    run_constrained,
    slater_margin,
)
from ..oracle import reference_dual, reference_primal
from ..problem import max_constraint_magnitude
from ..queues import run_paired_tracking, tracking_gap_bound
from ..trace import RunTrace
from .builders import (
    ConstrainedSetup,
    UnconstrainedSetup,
    build_custom,
    build_exp_example,
    build_privacy,
)
from .config import ExperimentConfig
from .privacy import privacy_problem, run_privacy

log = logging.getLogger(__name__)

SCHEMA_LINE = "# trace-schema v1"
EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME, EXIT_CONTRACT = 0, 1, 2, 3


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "nan"
    return format(v, ".17g")


def write_trace_csv(path, trace: RunTrace, keys: List[str]) -> None:
    """Write ``keys`` of ``trace``; vector columns expand to ``key1..keyd``."""
    cols, header = [], []
    for key in keys:
        if key not in trace:
            continue
        arr = trace[key]
        if arr.dtype == object:
            arr = np.array([np.full(_width(arr), np.nan) if v is None or (np.isscalar(v) and np.isnan(v))
                            else v for v in arr], dtype=float)
        if arr.ndim == 2:
            for j in range(arr.shape[1]):
                header.append(f"{key}{j + 1}")
                cols.append(arr[:, j])
        else:
            header.append(key)
            cols.append(arr)
    with Path(path).open("w", newline="") as fh:
        fh.write(SCHEMA_LINE + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(len(trace)):
            w.writerow([fmt(c[i]) for c in cols])


def _width(arr) -> int:
    for v in arr:
        if v is not None and not np.isscalar(v):
            return len(v)
    return 1


def read_trace_csv(path) -> Dict[str, np.ndarray]:
    with Path(path).open(newline="") as fh:
        first = fh.readline().rstrip("\n")
        if first != SCHEMA_LINE:
            raise ValueError(f"{path}: unsupported trace schema line {first!r}")
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    data = np.array([[float(x) for x in r] for r in body]) if body else np.empty((0, len(header)))
    return {h: data[:, j] for j, h in enumerate(header)}


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return None if not math.isfinite(v) else v
    if isinstance(v, Path):
        return str(v)
    return v


def write_summary(path, summary: Dict[str, Any]) -> None:
    with Path(path).open("w") as fh:
        json.dump(_jsonable(summary), fh, indent=2, sort_keys=True)
        fh.write("\n")


@dataclass
class ExperimentResult:
    exit_code: int
    summary: Dict[str, Any]
    trace_path: Optional[Path]
    summary_path: Optional[Path]
    run: Any = None


# --------------------------------------------------------------------------


_CONSTRAINED_KEYS = ["k", "count", "z", "lam", "lam_tilde", "L", "L_tilde", "q", "f_diamond",
                     "f_from_start", "f_gap", "main_lower", "main_upper", "g_diamond",
                     "slackness", "slack_lower", "slack_upper", "feas_cap", "L_diamond",
                     "lag_lower", "lag_upper", "contract_breach", "in_bracket"]


def _constrained(setup: ConstrainedSetup, config: ExperimentConfig):
    problem, params = setup.problem, setup.params
    ref = reference_primal(problem)
    f_star = ref.value
    run = run_constrained(problem, params, setup.source, f_star=f_star)
    tr = run.trace
    summary: Dict[str, Any] = {
        "experiment": config.experiment,
        "iterations": params.max_iterations,
        "alpha": params.alpha,
        "beta": params.beta,
        "gamma": params.gamma,
        "gamma1": params.gamma1,
        "epsilon": params.epsilon,
        "lambda_bar": params.lambda_bar,
        "sigma0": params.sigma0,
        "f_star": f_star,
        "f_star_bracket_width": ref.tolerance_achieved,
        "lambda_star": ref.multipliers,
        "gbar": run.gbar,
        "alpha_bound": alpha_bound(params.epsilon, params.gamma, params.gamma1, params.beta,
                                   problem.m, run.gbar, params.sigma0),
        "gamma1_back_solved": back_solve_gamma1(params.alpha, params.epsilon, params.gamma,
                                                params.beta, problem.m, run.gbar, params.sigma0),
        "slater_margin": slater_margin(problem),
        "lambda_bar_requirement": lambda_bar_requirement(problem, params.alpha, params.epsilon,
                                                         params.sigma0, f_star - ref.tolerance_achieved,
                                                         run.gbar),
        "kbar_window_start": run.kbar,
        "contract_violations": run.contract_violations,
        "first_contract_violation": run.first_violation,
        "bracket_violations": run.bracket_violations,
        "first_bracket_violation": run.first_bracket_violation,
        "param_warnings": run.param_warnings,
        "z_final": run.z_final,
        "lambda_final": run.lambda_final,
    }
    summary["lambda_bar_sufficient"] = params.lambda_bar >= summary["lambda_bar_requirement"]
    summary.update(setup.meta)
    if "q" in tr:
        gaps = tr["L"] - tr["q"]
        ok = np.isfinite(gaps)
        first, confirmed = detect_kbar(tr["k"][ok], gaps[ok], 2.0 * params.epsilon)
        summary["kbar_first_hit"] = first
        summary["kbar_confirmed"] = confirmed
        summary["lagrangian_gap_checkpoints"] = int(ok.sum())
        summary["last_dual_checkpoint"] = int(tr["k"][ok][-1]) if ok.any() else None
    if run.bounds is not None:
        last = len(tr) - 1
        summary["final"] = {
            "count": run.averages.count,
            "f_diamond": tr["f_diamond"][last],
            "f_gap": tr["f_gap"][last],
            "main_bracket": [run.bounds.main_lower, run.bounds.main_upper],
            "slackness": tr["slackness"][last],
            "slackness_bracket": [run.bounds.slackness_lower, run.bounds.slackness_upper],
            "g_diamond": tr["g_diamond"][last],
            "feasibility_cap": run.bounds.feasibility_caps[0],
        }
    exit_code = EXIT_CONTRACT if run.contract_violations else EXIT_OK
    return run, summary, _CONSTRAINED_KEYS, exit_code


def _unconstrained(setup: UnconstrainedSetup, config: ExperimentConfig):
    ref = reference_primal(setup.problem)
    tr = run_unconstrained(setup.problem, setup.config, setup.z1)
    trace = RunTrace()
    for i in range(tr.z.shape[0]):
        trace.record(k=i + 1, z=tr.z[i], f=tr.values[i], f_gap=tr.values[i] - ref.value)
    summary = {
        "experiment": config.experiment,
        "beta": tr.beta,
        "f_star": ref.value,
        "f_final": tr.values[-1],
        "final_gap": tr.values[-1] - ref.value,
        "two_epsilon": 2.0 * setup.config.epsilon,
        "within_two_epsilon": bool(tr.values[-1] - ref.value <= 2.0 * setup.config.epsilon),
    }
    return tr, trace, summary


def run_fig_q(alpha=1.0, beta=0.1, b=0.5, z1=0.5, steps=10_000, seeds=20, lambda_bar=math.inf,
              base_seed=0):
    """Scalar paired run: exact and queue multipliers on i.i.d. uniform actions from {0, 1}."""
    cap = lambda_bar
    sigma1 = 2.0  # 2 max |A x| over {0, 1}
    runs = []
    for i, child in enumerate(np.random.SeedSequence(base_seed).spawn(seeds)):
        rng = np.random.default_rng(child)
        xs = rng.integers(0, 2, size=steps).astype(float)
        runs.append(run_paired_tracking([[1.0]], [b], xs, np.full(steps, b), alpha, beta, [z1],
                                        cap=cap, sigma1=sigma1, sigma2=0.0))
    return runs


def run_experiment(config: ExperimentConfig, out_dir=None, seed: Optional[int] = None,
                   strict: Optional[bool] = None) -> ExperimentResult:
    """Run ``config``; outputs go to ``out_dir`` (or the config's output path) if set.

    Validation problems raise ``ValidationError`` and reference-solve
    failures raise ``OracleError``; the CLI maps them to exit codes.
    """
    out = Path(out_dir) if out_dir is not None else config.output_path
    seed = config.seed if seed is None else seed
    kind = config.experiment
    p = config.parameters
    trace, keys, run = None, [], None
    exit_code = EXIT_OK

    if kind == "exp_example":
        setup = build_exp_example(config, seed, strict)
        run, summary, keys, exit_code = _constrained(setup, config)
        trace = run.trace
        summary["seed"] = seed
    elif kind == "custom":
        setup = build_custom(config, seed, strict)
        if isinstance(setup, UnconstrainedSetup):
            run, trace, summary = _unconstrained(setup, config)
            keys = ["k", "z", "f", "f_gap"]
        else:
            run, summary, keys, exit_code = _constrained(setup, config)
            trace = run.trace
            src = setup.source
            if hasattr(src, "max_queue"):
                summary["max_queue"] = src.max_queue
        summary["seed"] = seed
    elif kind == "fig_q":
        runs = run_fig_q(p["alpha"], p["beta"], p["b"], p["z1"], p["steps"], p["seeds"],
                         p["lambda_bar"], seed)
        trace = RunTrace()
        for i, r in enumerate(runs):
            for k in range(r.gap.shape[0]):
                trace.record(seed=i, k=k + 1, lam=r.lam[k, 0], lam_tilde=r.lam_tilde[k, 0], gap=r.gap[k])
        max_gaps = [float(r.gap.max()) for r in runs]
        bound = runs[0].bound
        summary = {
            "experiment": kind, "seed": seed, "replicates": len(runs), "steps": p["steps"],
            "tracking_bound": bound, "max_gap_per_replicate": max_gaps,
            "max_gap": max(max_gaps), "bound_violations": int(sum(g > bound for g in max_gaps)),
        }
        keys = ["seed", "k", "lam", "lam_tilde", "gap"]
        run = runs
    elif kind == "privacy":
        setup = build_privacy(config)
        run = run_privacy(setup, p["iterations"], p["kbar"], p["log_every"], p["dense_until"], seed)
        trace = run.trace
        last = len(trace) - 1
        summary = {
            "experiment": kind, "seed": seed, "iterations": p["iterations"],
            "kbar": run.kbar, "kbar_first_hit": trace.flags.get("first_hit"),
            "gbar": setup.gbar, "b": setup.b, "xi": setup.xi,
            "cap_violations": run.cap_violations, "slackness_violations": run.slack_violations,
            "g_diamond_final": trace["g_diamond"][last], "feasibility_cap_final": trace["feas_cap"][last],
            "slackness_final": trace["slackness"][last],
            "slackness_bracket_final": [trace["slack_lower"][last], trace["slack_upper"][last]],
            "lambda_final": run.lam_final, "p_diamond": run.p_diamond,
        }
        keys = ["k", "count", "p", "lam", "b_k", "lag_gap", "g_diamond", "lam_diamond", "slackness",
                "feas_cap", "slack_lower", "slack_upper", "within_cap", "within_slack"]
    else:  # pragma: no cover - rejected by the config parser
        raise ValueError(kind)

    summary["exit_code"] = exit_code
    tpath = spath = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        tpath, spath = out / "trace.csv", out / "summary.json"
        write_trace_csv(tpath, trace, keys)
        write_summary(spath, summary)
        log.info("wrote %s and %s", tpath, spath)
    return ExperimentResult(exit_code, summary, tpath, spath, run)


# --------------------------------------------------------------------------
# bounds and oracle reports


_REPORT_KS = (100, 1_000, 10_000, 100_000, 1_000_000)


def bounds_report(config: ExperimentConfig, strict: Optional[bool] = None) -> Dict[str, Any]:
    """Theoretical quantities for ``config`` without running the iteration."""
    kind, p = config.experiment, config.parameters
    if kind == "fig_q":
        return {"experiment": kind,
                "tracking_bound": tracking_gap_bound(p["alpha"], p["beta"], 2.0, 0.0, 1)}
    if kind == "privacy":
        s = build_privacy(config)
        return {
            "experiment": kind, "gbar": s.gbar,
            "brackets": {str(k): {"slackness": bound_slackness(k, s.alpha, s.lambda_bar, s.gbar, 2),
                                  "feasibility_cap": feasibility_cap(k, s.alpha, s.lambda_bar)}
                         for k in _REPORT_KS},
        }
    setup = build_exp_example(config, strict=strict) if kind == "exp_example" else build_custom(config, strict=strict)
    if isinstance(setup, UnconstrainedSetup):
        from ..descent import beta_bound
        from ..problem import diameter
        c = setup.config
        return {"experiment": kind, "beta_bound": beta_bound(
            c.epsilon, c.gamma, setup.problem.objective.curvature,
            diameter(setup.problem.actions, c.diameter_convention))}
    problem, prm = setup.problem, setup.params
    gbar = prm.gbar if prm.gbar is not None else max_constraint_magnitude(problem)
    m = problem.m
    out = {
        "experiment": kind, "gbar": gbar, "alpha": prm.alpha, "beta": prm.beta,
        "alpha_bound": alpha_bound(prm.epsilon, prm.gamma, prm.gamma1, prm.beta, m, gbar, prm.sigma0),
        "gamma1_back_solved": back_solve_gamma1(prm.alpha, prm.epsilon, prm.gamma, prm.beta, m, gbar, prm.sigma0),
        "slater_margin": slater_margin(problem),
        "brackets": {
            str(k): {
                "main": bound_main(k, prm.alpha, prm.epsilon, prm.sigma0, prm.lambda_bar, gbar, m),
                "slackness": bound_slackness(k, prm.alpha, prm.lambda_bar, gbar, m),
                "lagrangian_average": bound_lagrangian_average(k, prm.alpha, prm.epsilon, prm.lambda_bar, gbar, m),
                "feasibility_cap": feasibility_cap(k, prm.alpha, prm.lambda_bar),
            } for k in _REPORT_KS
        },
    }
    ref = reference_primal(problem)
    out["lambda_bar_requirement"] = lambda_bar_requirement(
        problem, prm.alpha, prm.epsilon, prm.sigma0, ref.value - ref.tolerance_achieved, gbar)
    return out


def oracle_report(config: ExperimentConfig, lambdas) -> Dict[str, Any]:
    """``f*``, ``lambda*`` and ``q(lambda)`` for each requested multiplier."""
    kind = config.experiment
    if kind == "fig_q":
        from ..exceptions import ValidationError
        raise ValidationError("experiment.kind: fig_q has no optimisation problem for the oracle")
    if kind == "privacy":
        problem = privacy_problem(build_privacy(config))
    elif kind == "exp_example":
        problem = build_exp_example(config).problem
    else:
        problem = build_custom(config).problem
    ref = reference_primal(problem)
    out = {"experiment": kind, "f_star": ref.value, "f_star_bracket_width": ref.tolerance_achieved,
           "argpoint": ref.argpoint, "lambda_star": ref.multipliers, "dual": []}
    for lam in lambdas:
        sol = reference_dual(problem, lam, tolerance=1e-7 if kind == "privacy" else 1e-8)
        out["dual"].append({"lambda": lam, "q": sol.value, "tolerance": sol.tolerance_achieved,
                            "argpoint": sol.argpoint})
    return out
