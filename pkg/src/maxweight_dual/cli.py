"""Command-line entry point.

Exit codes: 0 success, 1 invalid input, 2 runtime or reference-solve
failure, 3 the run left the regime covered by the convergence bounds.
The log level is read from ``MAXWEIGHT_DUAL_LOG_LEVEL``.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import warnings
from typing import List, Optional

import numpy as np

from .exceptions import ContractViolationWarning, OracleError, ValidationError
from .experiments.config import load_config
from .experiments.runner import (
    EXIT_CONTRACT,
    EXIT_OK,
    EXIT_RUNTIME,
    EXIT_VALIDATION,
    _jsonable,
    bounds_report,
    oracle_report,
    run_experiment,
)

log = logging.getLogger("maxweight_dual")


def _parse_lambda(text: str) -> np.ndarray:
    try:
        lam = np.array([float(t) for t in text.split(",") if t.strip()])
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from None
    if lam.size == 0:
        raise argparse.ArgumentTypeError("empty multiplier list")
    return lam


def _override(text: str):
    key, sep, value = text.partition("=")
    if not sep or not key.strip():
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    return key.strip(), value.strip()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="maxweight-dual",
        description="Greedy primal-dual solvers over finite action sets.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config(p):
        p.add_argument("--config", required=True, help="INI experiment file")
        p.add_argument("--set", dest="overrides", action="append", type=_override, default=[],
                       metavar="KEY=VALUE", help="override a [parameters] entry")

    p = sub.add_parser("run", help="run an experiment and write trace.csv and summary.json")
    add_config(p)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--strict", action="store_true", help="reject step sizes above their bounds")
    p.add_argument("--out", default=None, help="output directory")

    p = sub.add_parser("validate", help="check a config without running it")
    add_config(p)
    p.add_argument("--strict", action="store_true")

    p = sub.add_parser("bounds", help="print theoretical bounds for a config")
    add_config(p)

    p = sub.add_parser("oracle", help="reference optimum and dual values for a config")
    add_config(p)
    p.add_argument("--lambda", dest="lambdas", action="append", type=_parse_lambda, default=[],
                   metavar="L1,L2,...", help="multiplier at which to evaluate the dual (repeatable)")
    return parser


def _emit(obj) -> None:
    json.dump(_jsonable(obj), sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")


def main(argv: Optional[List[str]] = None) -> int:
    logging.basicConfig(level=os.environ.get("MAXWEIGHT_DUAL_LOG_LEVEL", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config, dict(args.overrides))
        if args.command == "run":
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", ContractViolationWarning)
                result = run_experiment(config, args.out, args.seed,
                                        True if args.strict else None)
            _emit(result.summary)
            return result.exit_code
        if args.command == "validate":
            from .experiments.builders import build_custom, build_exp_example, build_privacy
            from .dual import check_params
            from .problem import max_constraint_magnitude
            strict = True if args.strict else None
            if config.experiment == "exp_example":
                s = build_exp_example(config, strict=strict)
            elif config.experiment == "custom":
                s = build_custom(config, strict=strict)
            elif config.experiment == "privacy":
                s = build_privacy(config)
            else:
                s = None
            params = getattr(s, "params", None)
            if params is not None:
                gbar = params.gbar if params.gbar is not None else max_constraint_magnitude(s.problem)
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    issues = check_params(s.problem, params, gbar)
                _emit({"valid": True, "warnings": issues})
            else:
                _emit({"valid": True, "warnings": []})
            return EXIT_OK
        if args.command == "bounds":
            _emit(bounds_report(config))
            return EXIT_OK
        if args.command == "oracle":
            _emit(oracle_report(config, args.lambdas))
            return EXIT_OK
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (OracleError, OSError, RuntimeError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_RUNTIME  # pragma: no cover


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
