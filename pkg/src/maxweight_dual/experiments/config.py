"""INI experiment configuration.

A config file has an ``[experiment]`` section naming the experiment and a
``[parameters]`` section of ``key = value`` pairs::

    [experiment]
    kind = exp_example
    seed = 0
    strict = true

    [parameters]
    epsilon = 0.05
    alpha = 7.29e-5

Vectors are comma separated, matrix rows are separated by ``;``.
"""
from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np

from ..exceptions import ValidationError

KINDS = ("exp_example", "fig_q", "privacy", "custom")


def _float(v: str) -> float:
    return float(v)


def _int(v: str) -> int:
    f = float(v)
    if not f.is_integer():
        raise ValueError(f"{v!r} is not an integer")
    return int(f)


def _bool(v: str) -> bool:
    s = v.strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"{v!r} is not a boolean")


def _vector(v: str) -> np.ndarray:
    return np.array([float(t) for t in v.split(",") if t.strip()], dtype=float)


def _matrix(v: str) -> np.ndarray:
    rows = [_vector(r) for r in v.split(";") if r.strip()]
    if len({len(r) for r in rows}) > 1:
        raise ValueError("matrix rows have unequal lengths")
    return np.array(rows, dtype=float)


def _kbar(v: str):
    s = v.strip().lower()
    return s if s in ("detect", "confirmed") else _int(v)


def _str(v: str) -> str:
    return v.strip()


# shared solver keys for the constrained experiments
_SOLVER = {
    "epsilon": (_float, 0.05),
    "gamma": (_float, 0.5),
    "gamma1": (_float, 0.4),
    "alpha": (_float, None),
    "beta": (_float, None),
    "lambda_bar": (_float, None),
    "sigma0": (_float, 0.0),
    "perturbation": (_str, "uniform"),
    "drift_onset": (_float, 1e5),
    "iterations": (_int, 10_000),
    "kbar": (_kbar, "detect"),
    "log_every": (_int, 100),
    "dense_until": (_int, 1000),
    "track_dual": (_bool, False),
    "dual_horizon": (_int, None),
    "update_rule": (_str, "direct"),
    "mode": (_str, "discrete"),
    "gbar": (_float, None),
    "mu_L": (_float, None),
    "diameter_convention": (_str, "strict"),
}

SCHEMAS: Dict[str, Dict[str, tuple]] = {
    "exp_example": {
        **_SOLVER,
        "n": (_int, 3),
        "s": (_float, None),
        "mu_L": (_float, 0.6),
        "diameter_convention": (_str, "max_norm"),
        "lambda_bar": (_float, 0.7),
        "gamma1": (_float, 0.4905),
        "alpha": (_float, 7.29e-5),
        "gbar_reference": (_float, 0.6211),
    },
    "fig_q": {
        "alpha": (_float, 1.0),
        "beta": (_float, 0.1),
        "b": (_float, 0.5),
        "z1": (_float, 0.5),
        "steps": (_int, 10_000),
        "seeds": (_int, 20),
        "lambda_bar": (_float, math.inf),
    },
    "privacy": {
        "T_max": (_int, 5),
        "E": (_float, math.log(5) / 5),
        "xi": (_float, None),
        "arrivals": (_str, "alternating:0,1"),
        "b": (_float, None),
        "lambda_bar": (_float, 0.5),
        "lambda1": (_vector, None),
        "alpha": (_float, 0.01),
        "beta": (_float, 0.01),
        "epsilon": (_float, 0.05),
        "iterations": (_int, 10_000),
        "kbar": (_kbar, "confirmed"),
        "log_every": (_int, 10),
        "dense_until": (_int, 1000),
        "gbar": (_float, None),
    },
    "custom": {
        **_SOLVER,
        "objective": (_str, None),
        "c": (_vector, None),
        "Q": (_matrix, None),
        "weights": (_vector, None),
        "curvature": (_float, None),
        "actions": (_matrix, None),
        "binary_grid_n": (_int, None),
        "binary_grid_s": (_float, 1.0),
        "constraint_A": (_matrix, None),
        "constraint_b": (_vector, None),
        "slater_point": (_vector, None),
        "z1": (_vector, None),
        "lambda1": (_vector, None),
        "multiplier": (_str, "exact"),
        "arrivals": (_str, None),
        "sigma2": (_float, None),
        "compute_f_star": (_bool, True),
    },
}

_EXPERIMENT_KEYS = {"kind", "seed", "strict", "output"}


@dataclass
class ExperimentConfig:
    experiment: str
    parameters: Dict[str, Any]
    output_path: Optional[Path] = None
    seed: int = 0
    strict: bool = False
    source: Optional[Path] = field(default=None, repr=False)

    def get(self, key, default=None):
        v = self.parameters.get(key)
        return default if v is None else v


def parse_parameters(kind: str, raw: Dict[str, str]) -> Dict[str, Any]:
    """Typed parameters for ``kind``; unknown keys and bad values raise with the field name."""
    if kind not in SCHEMAS:
        raise ValidationError(f"experiment.kind: unknown experiment {kind!r}; choose from {', '.join(KINDS)}")
    schema = SCHEMAS[kind]
    out = {k: default for k, (_, default) in schema.items()}
    for key, value in raw.items():
        if key not in schema:
            raise ValidationError(f"parameters.{key}: unknown parameter for {kind}")
        conv = schema[key][0]
        try:
            out[key] = conv(value)
        except ValueError as exc:
            raise ValidationError(f"parameters.{key}: {exc}") from None
    return out


def load_config(path, overrides: Optional[Dict[str, str]] = None) -> ExperimentConfig:
    path = Path(path)
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # keep key case (T_max, mu_L)
    try:
        with path.open() as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ValidationError(f"{path}: cannot read config ({exc.strerror})") from None
    except configparser.Error as exc:
        raise ValidationError(f"{path}: malformed config: {exc}") from None
    if not parser.has_section("experiment"):
        raise ValidationError(f"{path}: missing [experiment] section")
    exp = dict(parser["experiment"])
    extra = set(exp) - _EXPERIMENT_KEYS
    if extra:
        raise ValidationError(f"experiment.{sorted(extra)[0]}: unknown key")
    for sec in parser.sections():
        if sec not in ("experiment", "parameters"):
            raise ValidationError(f"{path}: unknown section [{sec}]")
    if "kind" not in exp:
        raise ValidationError("experiment.kind: required")
    raw = dict(parser["parameters"]) if parser.has_section("parameters") else {}
    raw.update(overrides or {})
    params = parse_parameters(exp["kind"].strip(), raw)
    try:
        seed = _int(exp.get("seed", "0"))
        strict = _bool(exp.get("strict", "false"))
    except ValueError as exc:
        raise ValidationError(f"experiment: {exc}") from None
    out = exp.get("output")
    if out:
        out = Path(out)
        if not out.is_absolute():
            out = path.parent / out
    return ExperimentConfig(exp["kind"].strip(), params, out, seed, strict, path)
