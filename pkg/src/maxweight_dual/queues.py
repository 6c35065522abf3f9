"""Queue occupancies as scaled approximate multipliers.

For linear constraints ``A z <= b`` the exact multiplier is driven by the
averaged iterate, ``lam <- clip(lam + alpha (A z_{k+1} - b))``, while the
queue ``Q <- clip(Q + A x_k - b_k, 0, lam_bar / alpha)`` only sees the
chosen action and the observed arrivals. ``lt = alpha Q`` stays within
``2 m alpha (sigma1 / beta + sigma2)`` of ``lam``.
"""
from __future__ import annotations

import csv
import itertools
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterator, Optional, Sequence

import numpy as np

from .exceptions import ContractViolationWarning, ValidationError
from .problem import ActionSet, ConstraintVector, ProblemInstance


# --------------------------------------------------------------------------
# queue state


@dataclass(frozen=True)
class QueueState:
    Q: np.ndarray
    cap: float = np.inf
    alpha: float = 1.0

    def __post_init__(self):
        Q = np.asarray(self.Q, dtype=float).ravel()
        if not self.alpha > 0:
            raise ValidationError("alpha must be positive")
        if not self.cap > 0:
            raise ValidationError("queue cap must be positive")
        if np.any(Q < 0) or np.any(Q > self.cap):
            raise ValidationError(f"queue occupancies {Q.tolist()} outside [0, {self.cap}]")
        object.__setattr__(self, "Q", Q)

    @property
    def lambda_tilde(self) -> np.ndarray:
        return self.alpha * self.Q

    @classmethod
    def for_multiplier_cap(cls, m: int, alpha: float, lambda_bar: float = np.inf, Q1=None):
        Q = np.zeros(m) if Q1 is None else Q1
        return cls(Q, lambda_bar / alpha, alpha)


def queue_step(state: QueueState, A, x, b_k) -> QueueState:
    """``clip(Q + A x - b_k, 0, cap)``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    inc = A @ np.atleast_1d(np.asarray(x, dtype=float)) - np.atleast_1d(np.asarray(b_k, dtype=float))
    return replace(state, Q=np.minimum(np.maximum(state.Q + inc, 0.0), state.cap))


def clipped_iterate(lambda1, deltas, cap: float = np.inf) -> np.ndarray:
    """Trajectory ``lam_1, ..., lam_{K+1}`` of ``lam <- clip(lam + delta, 0, cap)``."""
    deltas = np.asarray(deltas, dtype=float)
    out = np.empty((deltas.shape[0] + 1,) + deltas.shape[1:])
    out[0] = lambda1
    for i, d in enumerate(deltas):
        out[i + 1] = np.minimum(np.maximum(out[i] + d, 0.0), cap)
    return out


def clipped_accumulator_closed_form(lambda1: float, deltas: Sequence[float]) -> float:
    """Value after iterating ``lam <- max(lam + delta, 0)`` over ``deltas``.

    Equals ``S_k + max(Theta_k, lam_1)`` with ``S_k`` the total and
    ``Theta_k = -min_j S_j`` over the prefix sums.
    """
    deltas = np.asarray(deltas, dtype=float).ravel()
    if lambda1 < 0:
        raise ValidationError("lambda1 must be non-negative")
    if deltas.size == 0:
        return float(lambda1)
    prefix = np.cumsum(deltas)
    theta = -prefix.min()
    return float(prefix[-1] + max(theta, lambda1))


def sigma1_from_actions(A, actions: ActionSet) -> float:
    """``2 max_{z in C} ||A z||_inf``; a convex function peaks at a vertex."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    return float(2.0 * np.max(np.abs(actions.points @ A.T)))


def tracking_gap_bound(alpha: float, beta: float, sigma1: float, sigma2: float, m: int) -> float:
    """``2 m alpha (sigma1 / beta + sigma2)``."""
    if not alpha > 0:
        raise ValidationError("alpha must be positive")
    if not 0.0 < beta <= 1.0:
        raise ValidationError("beta must lie in (0, 1]")
    if sigma1 < 0 or sigma2 < 0:
        raise ValidationError("sigma1 and sigma2 must be non-negative")
    return float(2.0 * m * alpha * (sigma1 / beta + sigma2))


@dataclass
class GapReport:
    eps_hat: float
    max_gap: float
    passed: bool


def sequence_gap_check(lambda_trace, lambda_tilde_trace, delta_traces) -> GapReport:
    """Check that two clipped accumulators differ by at most twice the
    largest partial-sum difference of their increments.

    ``delta_traces`` is the pair ``(deltas, deltas_tilde)``; traces may be
    1-D or have one column per component.
    """
    lam = np.asarray(lambda_trace, dtype=float)
    lt = np.asarray(lambda_tilde_trace, dtype=float)
    d, dt = (np.asarray(a, dtype=float) for a in delta_traces)
    if lam.shape != lt.shape or d.shape != dt.shape:
        raise ValidationError("traces must have equal shapes")
    if not (d.shape[0] == lam.shape[0] or d.shape[0] + 1 == lam.shape[0]):
        raise ValidationError("delta traces must match the multiplier traces in length")
    eps_hat = float(np.max(np.abs(np.cumsum(d - dt, axis=0)), initial=0.0))
    max_gap = float(np.max(np.abs(lam - lt), initial=0.0))
    return GapReport(eps_hat, max_gap, max_gap <= 2.0 * eps_hat + 1e-12)


# --------------------------------------------------------------------------
# action rules driven by queue occupancy


def _as_index(scores) -> int:
    if not np.all(np.isfinite(scores)):
        bad = int(np.flatnonzero(~np.isfinite(scores))[0])
        raise ValidationError(f"non-finite score at candidate action {bad}")
    return int(np.argmin(scores))


def queue_action_direct(problem: ProblemInstance, z, Q, alpha: float, beta: float, A) -> int:
    """``argmin_x f((1 - beta) z + beta x) + alpha beta Q^T A x`` (index)."""
    P = problem.actions.points
    A = np.atleast_2d(np.asarray(A, dtype=float))
    z = np.asarray(z, dtype=float)
    w = alpha * beta * (np.asarray(Q, dtype=float) @ A)
    return _as_index(problem.objective.batch((1.0 - beta) * z + beta * P) + P @ w)


def queue_action_fw(problem: ProblemInstance, z, Q, alpha: float, A) -> int:
    """``argmin_x df(z)^T x + alpha Q^T A x`` (index)."""
    P = problem.actions.points
    A = np.atleast_2d(np.asarray(A, dtype=float))
    w = problem.objective.grad(z) + alpha * (np.asarray(Q, dtype=float) @ A)
    return _as_index(P @ w)


def lagrangian_action(problem: ProblemInstance, z, lam, beta: float, A, b) -> int:
    """``argmin_x L((1 - beta) z + beta x, lam)`` for ``g(z) = A z - b`` (index)."""
    P = problem.actions.points
    A = np.atleast_2d(np.asarray(A, dtype=float))
    Y = (1.0 - beta) * np.asarray(z, dtype=float) + beta * P
    return _as_index(problem.objective.batch(Y) + (Y @ A.T - b) @ np.asarray(lam, dtype=float))


# --------------------------------------------------------------------------
# arrivals


@dataclass
class ArrivalModel:
    """Source of per-step arrival vectors ``b_k`` with long-run mean ``mean``.

    ``kind`` is ``constant``, ``deterministic_sequence`` (``sequence`` is
    repeated cyclically), ``iid`` (``sampler(rng)`` returns one vector) or
    ``custom`` (``generator_factory(rng)`` returns an iterator).
    """

    kind: str
    mean: np.ndarray
    sequence: Optional[np.ndarray] = field(default=None, repr=False)
    sampler: Optional[Callable] = field(default=None, repr=False)
    generator_factory: Optional[Callable] = field(default=None, repr=False)
    sigma2_claim: Optional[float] = None
    seed: Optional[int] = None

    def __post_init__(self):
        self.mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        need = {"constant": None, "deterministic_sequence": "sequence", "iid": "sampler",
                "custom": "generator_factory"}
        if self.kind not in need:
            raise ValidationError(f"unknown arrival kind {self.kind!r}")
        attr = need[self.kind]
        if attr is not None and getattr(self, attr) is None:
            raise ValidationError(f"{self.kind} arrivals need {attr}")
        if self.sequence is not None:
            seq = np.asarray(self.sequence, dtype=float)
            self.sequence = seq.reshape(len(seq), -1)
            if self.sequence.shape[1] != self.mean.shape[0]:
                raise ValidationError("arrival sequence width does not match the mean")

    @property
    def m(self) -> int:
        return self.mean.shape[0]

    def stream(self, seed=None) -> Iterator[np.ndarray]:
        rng = np.random.default_rng(self.seed if seed is None else seed)
        if self.kind == "constant":
            return itertools.repeat(self.mean)
        if self.kind == "deterministic_sequence":
            return itertools.cycle(self.sequence)
        if self.kind == "iid":
            return (np.atleast_1d(np.asarray(self.sampler(rng), dtype=float))
                    for _ in itertools.count())
        return iter(self.generator_factory(rng))

    def take(self, K: int, seed=None) -> np.ndarray:
        out = np.array(list(itertools.islice(self.stream(seed), K)), dtype=float)
        return out.reshape(K, self.m)

    @classmethod
    def constant(cls, b) -> "ArrivalModel":
        return cls("constant", b, sigma2_claim=0.0)

    @classmethod
    def alternating(cls, values, sigma2_claim=None) -> "ArrivalModel":
        """Cyclic sequence of scalar or vector arrivals; the mean is the cycle mean."""
        seq = np.asarray(values, dtype=float)
        seq = seq.reshape(len(seq), -1)
        return cls("deterministic_sequence", seq.mean(axis=0), sequence=seq,
                   sigma2_claim=sigma2_claim)

    @classmethod
    def bernoulli(cls, p, seed=None) -> "ArrivalModel":
        p = np.atleast_1d(np.asarray(p, dtype=float))
        return cls("iid", p, sampler=lambda rng: (rng.random(p.shape) < p).astype(float), seed=seed)


def partial_sum_deviation(arrivals, mean) -> np.ndarray:
    """Per-component ``max_k |sum_{i<=k} (b_i - b)|``."""
    B = np.asarray(arrivals, dtype=float)
    B = B.reshape(B.shape[0], -1)
    if B.shape[0] == 0:
        return np.zeros(B.shape[1])
    dev = np.cumsum(B - np.atleast_1d(np.asarray(mean, dtype=float)), axis=0)
    return np.abs(dev).max(axis=0)


def estimate_pK(model: ArrivalModel, sigma2: float, K: int, replicates: int = 100,
                seed: int = 0):
    """Monte-Carlo estimate of ``P(max_k ||sum (B_i - b)||_inf <= sigma2)``.

    Replicates use independent child streams of ``seed``. Returns
    ``(estimate, deviations)`` with one deviation per replicate.
    """
    children = np.random.SeedSequence(seed).spawn(replicates)
    devs = np.array([partial_sum_deviation(model.take(K, seed=c), model.mean).max()
                     for c in children])
    return float(np.mean(devs <= sigma2)), devs


def load_arrivals_csv(path, mean=None, sigma2_claim=None) -> ArrivalModel:
    """Read a ``b1..bm`` CSV (one row per step) as a cyclic arrival model.

    The mean defaults to the column means of the file.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValidationError(f"{path}: empty arrivals file") from None
        expected = [f"b{j + 1}" for j in range(len(header))]
        if header != expected:
            raise ValidationError(f"{path}: header must be {','.join(expected)}, got {','.join(header)}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ValidationError(f"{path}:{lineno}: expected {len(header)} values, got {len(row)}")
            try:
                rows.append([float(c) for c in row])
            except ValueError as exc:
                raise ValidationError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise ValidationError(f"{path}: no arrival rows")
    seq = np.array(rows)
    if not np.all(np.isfinite(seq)):
        raise ValidationError(f"{path}: non-finite arrival values")
    mean = seq.mean(axis=0) if mean is None else mean
    return ArrivalModel("deterministic_sequence", mean, sequence=seq, sigma2_claim=sigma2_claim)


def write_arrivals_csv(path, arrivals) -> None:
    B = np.asarray(arrivals, dtype=float)
    B = B.reshape(B.shape[0], -1)
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"b{j + 1}" for j in range(B.shape[1])])
        w.writerows([[repr(float(v)) for v in row] for row in B])


# --------------------------------------------------------------------------
# linear systems and stochastic actions


@dataclass
class LinearConstraintSystem:
    """``A z <= b`` with arrivals ``b_k`` whose long-run mean is ``b``."""

    A: np.ndarray
    b: np.ndarray
    arrivals: Optional[ArrivalModel] = None

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.b = np.atleast_1d(np.asarray(self.b, dtype=float))
        if self.A.shape[0] != self.b.shape[0]:
            raise ValidationError("A and b disagree on the number of constraints")
        if self.arrivals is None:
            self.arrivals = ArrivalModel.constant(self.b)
        elif self.arrivals.m != self.b.shape[0]:
            raise ValidationError("arrival dimension does not match b")

    @property
    def m(self) -> int:
        return self.A.shape[0]

    def constraints(self) -> ConstraintVector:
        return ConstraintVector.linear(self.A, self.b)


@dataclass
class StochasticActionModel:
    """Row-stochastic outcome probabilities ``p[x, y]`` over the action set."""

    actions: ActionSet
    transition: np.ndarray
    expected_actions: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        T = np.asarray(self.transition, dtype=float)
        N = len(self.actions)
        if T.shape != (N, N):
            raise ValidationError(f"transition matrix must be {N}x{N}, got {T.shape}")
        if np.any(T < 0):
            raise ValidationError("transition probabilities must be non-negative")
        rows = T.sum(axis=1)
        if np.any(np.abs(rows - 1.0) > 1e-12):
            bad = int(np.argmax(np.abs(rows - 1.0)))
            raise ValidationError(f"row {bad} of the transition matrix sums to {rows[bad]!r}")
        self.transition = T
        self.expected_actions = T @ self.actions.points


def expected_action(model: StochasticActionModel, x) -> np.ndarray:
    """``sum_y y p[x, y]``; ``x`` is an index or a point of the action set."""
    if np.isscalar(x) and isinstance(x, (int, np.integer)):
        idx = int(x)
    else:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        hits = np.flatnonzero(np.all(model.actions.points == x, axis=1))
        if hits.size == 0:
            raise ValidationError(f"{x.tolist()} is not in the action set")
        idx = int(hits[0])
    return model.expected_actions[idx].copy()


# --------------------------------------------------------------------------
# run-time sources


class QueueMultipliers:
    """Multiplier source for the constrained loop using ``lt = alpha Q``.

    The queue sees ``A x_k - b_k`` with ``b_k`` pulled from ``arrivals``.
    When the arrival model carries ``sigma2_claim``, the realised partial-sum
    deviation is checked against it; a breach is counted in
    ``sigma2_breaches`` and warned about once rather than aborting the run.
    """

    def __init__(self, system: LinearConstraintSystem, Q1=None, seed=None, sigma0=None):
        self.system = system
        self.Q1 = Q1
        self.seed = seed
        self.sigma0 = sigma0

    def reset(self, problem, params):
        self._alpha = params.alpha
        self._cap = params.lambda_bar / params.alpha
        self._Q = np.zeros(self.system.m) if self.Q1 is None else np.asarray(self.Q1, dtype=float).copy()
        self._stream = self.system.arrivals.stream(self.seed)
        self.max_queue = float(self._Q.max(initial=0.0))
        self._dev = np.zeros(self.system.m)
        self.sigma2_breaches = 0

    def tilde(self, k, lam):
        return self._alpha * self._Q

    def observe(self, k, x):
        b_k = next(self._stream)
        claim = self.system.arrivals.sigma2_claim
        if claim is not None:
            self._dev += b_k - self.system.arrivals.mean
            if np.max(np.abs(self._dev)) > claim + 1e-12:
                if not self.sigma2_breaches:
                    warnings.warn(f"arrival partial sums deviate by {np.max(np.abs(self._dev)):.3g} "
                                  f"at k={k}, above sigma2={claim:g}", ContractViolationWarning,
                                  stacklevel=2)
                self.sigma2_breaches += 1
        self._Q = np.minimum(np.maximum(self._Q + self.system.A @ x - b_k, 0.0), self._cap)
        self.max_queue = max(self.max_queue, float(self._Q.max()))


@dataclass
class PairedTracking:
    lam: np.ndarray
    lam_tilde: np.ndarray
    z: np.ndarray
    gap: np.ndarray
    bound: float


def run_paired_tracking(A, b, actions_seq, arrivals_seq, alpha: float, beta: float,
                        z1, lambda1=None, cap: float = np.inf, sigma1: Optional[float] = None,
                        sigma2: float = 0.0) -> PairedTracking:
    """Run the exact multiplier (driven by ``A z_{k+1} - b``) and the queue
    multiplier (driven by ``A x_k - b_k``) on the same action sequence.

    Rows ``k`` of the returned ``lam``/``lam_tilde`` hold ``lam_{k+1}``;
    row 0 is the common start. ``gap`` is the Euclidean distance.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    X = np.asarray(actions_seq, dtype=float).reshape(len(actions_seq), -1)
    B = np.asarray(arrivals_seq, dtype=float).reshape(len(arrivals_seq), -1)
    if X.shape[0] != B.shape[0]:
        raise ValidationError("action and arrival sequences differ in length")
    m, K = A.shape[0], X.shape[0]
    lam = np.empty((K + 1, m))
    lt = np.empty((K + 1, m))
    zs = np.empty((K + 1, A.shape[1]))
    lam[0] = lt[0] = np.zeros(m) if lambda1 is None else lambda1
    zs[0] = z = np.asarray(z1, dtype=float).ravel()
    for k in range(K):
        z = (1.0 - beta) * z + beta * X[k]
        zs[k + 1] = z
        lam[k + 1] = np.minimum(np.maximum(lam[k] + alpha * (A @ z - b), 0.0), cap)
        lt[k + 1] = np.minimum(np.maximum(lt[k] + alpha * (A @ X[k] - B[k]), 0.0), cap)
    gap = np.linalg.norm(lam - lt, axis=1)
    if sigma1 is None:
        pts = np.unique(X, axis=0)
        sigma1 = float(2.0 * np.max(np.abs(pts @ A.T)))
    bound = tracking_gap_bound(alpha, beta, sigma1, sigma2, m)
    return PairedTracking(lam, lt, zs, gap, bound)
