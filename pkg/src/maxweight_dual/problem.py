"""Problems posed over the convex hull of a finite action set.

The feasible region is always ``C = conv(D)`` for a finite point set ``D``.
Functions are supplied as value/subgradient callbacks together with a declared
curvature constant ``mu`` such that

    h(z + d) - h(z) <= dh(z)^T d + mu * ||d||^2      for z, z + d in C.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import linprog

from .exceptions import ValidationError

ABS_TOL = 1e-12
SLATER_MARGIN_FLOOR = 1e-9
SLATER_LP_LIMIT = 200_000


class ActionSet:
    """Ordered, duplicate-free finite set of points in R^n.

    Order matters: every argmin in the package breaks ties by lowest index.
    """

    def __init__(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if np.asarray(points, dtype=float).ndim == 1:
            # a flat list is read as scalar actions
            pts = pts.reshape(-1, 1)
        if pts.size == 0 or pts.shape[0] == 0:
            raise ValidationError("action set must be non-empty")
        if not np.all(np.isfinite(pts)):
            raise ValidationError("action set contains non-finite coordinates")
        if np.unique(pts, axis=0).shape[0] != pts.shape[0]:
            raise ValidationError("action set contains duplicate points")
        pts.setflags(write=False)
        self._points = pts

    @property
    def points(self) -> np.ndarray:
        return self._points

    @property
    def dim(self) -> int:
        return self._points.shape[1]

    def __len__(self) -> int:
        return self._points.shape[0]

    def __getitem__(self, idx) -> np.ndarray:
        return self._points[idx]

    def __iter__(self):
        return iter(self._points)

    def __repr__(self) -> str:
        return f"ActionSet(n_points={len(self)}, dim={self.dim})"

    @classmethod
    def binary_grid(cls, n: int, s: float = 1.0) -> "ActionSet":
        """Corners ``{0, s}^n`` in lexicographic order (origin first)."""
        grid = np.array(np.meshgrid(*[[0.0, s]] * n, indexing="ij"))
        return cls(grid.reshape(n, -1).T)


@dataclass(frozen=True)
class ConvexFunctionSpec:
    """Convex function with a declared curvature constant.

    ``value_batch`` is an optional vectorised form taking an ``(N, n)`` array
    and returning ``N`` values; solvers use it when present.
    """

    value: Callable[[np.ndarray], float]
    subgradient: Callable[[np.ndarray], np.ndarray]
    curvature: float = 0.0
    value_batch: Optional[Callable[[np.ndarray], np.ndarray]] = None
    name: str = "h"

    def __post_init__(self):
        if not (self.curvature >= 0.0):
            raise ValidationError(f"curvature of {self.name} must be >= 0, got {self.curvature}")

    def __call__(self, z) -> float:
        return float(self.value(np.asarray(z, dtype=float)))

    def grad(self, z) -> np.ndarray:
        return np.asarray(self.subgradient(np.asarray(z, dtype=float)), dtype=float)

    def batch(self, points: np.ndarray) -> np.ndarray:
        if self.value_batch is not None:
            return np.asarray(self.value_batch(points), dtype=float)
        return np.array([self.value(p) for p in points], dtype=float)


def linear_function(c, const: float = 0.0, name: str = "linear") -> ConvexFunctionSpec:
    """``h(z) = c^T z + const`` (zero curvature)."""
    c = np.asarray(c, dtype=float).ravel()
    const = float(const)
    return ConvexFunctionSpec(
        value=lambda z: float(c @ z) + const,
        subgradient=lambda z: c.copy(),
        curvature=0.0,
        value_batch=lambda P: P @ c + const,
        name=name,
    )


def quadratic_function(A, name: str = "quadratic") -> ConvexFunctionSpec:
    """``h(z) = 0.5 z^T A z`` with curvature ``lambda_max(A)``."""
    A = np.asarray(A, dtype=float)
    if not np.allclose(A, A.T):
        raise ValidationError("quadratic form must be symmetric")
    eig = np.linalg.eigvalsh(A)
    if eig[0] < -ABS_TOL:
        raise ValidationError("quadratic form must be positive semidefinite")
    return ConvexFunctionSpec(
        value=lambda z: 0.5 * float(z @ A @ z),
        subgradient=lambda z: A @ z,
        curvature=float(eig[-1]),
        value_batch=lambda P: 0.5 * np.einsum("ij,jk,ik->i", P, A, P),
        name=name,
    )


def exp_sum_function(weights, curvature: float, name: str = "exp_sum") -> ConvexFunctionSpec:
    """``h(z) = sum_i exp(w_i z_i)``; the curvature constant is declared, not derived."""
    w = np.asarray(weights, dtype=float).ravel()
    return ConvexFunctionSpec(
        value=lambda z: float(np.exp(w * z).sum()),
        subgradient=lambda z: w * np.exp(w * z),
        curvature=float(curvature),
        value_batch=lambda P: np.exp(P * w).sum(axis=1),
        name=name,
    )


def constant_function(c: float = 1.0, dim: int = 1) -> ConvexFunctionSpec:
    return linear_function(np.zeros(dim), const=c, name="constant")


@dataclass(frozen=True)
class ConstraintVector:
    """Stacked constraints ``g(z) = [g^1(z), ..., g^m(z)]`` required ``<= 0``."""

    components: tuple
    affine: Optional[tuple] = field(default=None, repr=False, compare=False)

    def __init__(self, components: Sequence[ConvexFunctionSpec], affine=None):
        comps = tuple(components)
        if len(comps) < 1:
            raise ValidationError("a constraint vector needs at least one component")
        object.__setattr__(self, "components", comps)
        # (A, b) when every component is the affine row a_j^T z - b_j
        object.__setattr__(self, "affine", affine)

    @property
    def m(self) -> int:
        return len(self.components)

    @property
    def curvatures(self) -> np.ndarray:
        return np.array([c.curvature for c in self.components])

    def __call__(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if self.affine is not None:
            return self.affine[0] @ z - self.affine[1]
        return np.array([c.value(z) for c in self.components], dtype=float)

    def batch(self, points: np.ndarray) -> np.ndarray:
        """Values at each row of ``points``, shape ``(N, m)``."""
        if self.affine is not None:
            return points @ self.affine[0].T - self.affine[1]
        return np.column_stack([c.batch(points) for c in self.components])

    def jacobian(self, z) -> np.ndarray:
        """Rows are the chosen subgradients of each component, shape ``(m, n)``."""
        z = np.asarray(z, dtype=float)
        if self.affine is not None:
            return self.affine[0].copy()
        return np.vstack([c.grad(z) for c in self.components])

    @classmethod
    def linear(cls, A, b) -> "ConstraintVector":
        """``A z - b <= 0`` as one linear component per row."""
        A = np.array(A, dtype=float, ndmin=2)
        b = np.array(b, dtype=float, ndmin=1).ravel()
        if A.shape[0] != b.shape[0]:
            raise ValidationError(f"A has {A.shape[0]} rows but b has {b.shape[0]} entries")
        A.setflags(write=False)
        b.setflags(write=False)
        comps = [linear_function(A[j], -b[j], name=f"g{j + 1}") for j in range(A.shape[0])]
        return cls(comps, affine=(A, b))


def hull_membership_weights(points: np.ndarray, target: np.ndarray) -> Optional[np.ndarray]:
    """Convex weights expressing ``target`` from ``points``, or None if outside the hull."""
    N = points.shape[0]
    A_eq = np.vstack([points.T, np.ones((1, N))])
    b_eq = np.concatenate([target, [1.0]])
    res = linprog(np.zeros(N), A_eq=A_eq, b_eq=b_eq, bounds=[(0, None)] * N, method="highs")
    if res.status != 0:
        return None
    w = np.clip(res.x, 0.0, None)
    w /= w.sum()
    if np.max(np.abs(w @ points - target)) > 1e-9:
        return None
    return w


@dataclass(frozen=True)
class ProblemInstance:
    """minimise ``f(z)`` over ``conv(D)`` subject to ``g(z) <= 0``."""

    objective: ConvexFunctionSpec
    actions: ActionSet
    constraints: Optional[ConstraintVector] = None
    slater_point: Optional[np.ndarray] = None
    slater_weights: Optional[np.ndarray] = field(default=None, repr=False)
    lp_limit: int = SLATER_LP_LIMIT

    def __post_init__(self):
        if self.constraints is None:
            return
        if self.slater_point is None:
            raise ValidationError("constrained problems require a Slater point")
        zbar = np.asarray(self.slater_point, dtype=float).ravel()
        if zbar.shape[0] != self.actions.dim:
            raise ValidationError(
                f"Slater point has dimension {zbar.shape[0]}, actions have {self.actions.dim}"
            )
        object.__setattr__(self, "slater_point", zbar)
        gz = self.constraints(zbar)
        if not np.all(gz < 0):
            raise ValidationError(f"Slater point is not strictly feasible: g(zbar) = {gz.tolist()}")
        pts = self.actions.points
        if self.slater_weights is not None:
            w = np.asarray(self.slater_weights, dtype=float)
            if (w.shape != (len(self.actions),) or np.any(w < -ABS_TOL)
                    or abs(w.sum() - 1.0) > 1e-9 or np.max(np.abs(w @ pts - zbar)) > 1e-9):
                raise ValidationError("supplied Slater weights do not reproduce the Slater point")
        elif pts.size <= self.lp_limit:
            if hull_membership_weights(pts, zbar) is None:
                raise ValidationError("Slater point does not lie in conv(D)")
        else:
            raise ValidationError(
                "action set too large for the membership LP; supply slater_weights"
            )

    @property
    def dim(self) -> int:
        return self.actions.dim

    @property
    def m(self) -> int:
        return 0 if self.constraints is None else self.constraints.m

    def lagrangian(self, z, lam) -> float:
        val = self.objective(z)
        if self.constraints is not None:
            val += float(np.asarray(lam, dtype=float) @ self.constraints(z))
        return val

    def lagrangian_batch(self, points: np.ndarray, lam) -> np.ndarray:
        vals = self.objective.batch(points)
        if self.constraints is not None:
            vals = vals + self.constraints.batch(points) @ np.asarray(lam, dtype=float)
        return vals

    def lagrangian_grad(self, z, lam) -> np.ndarray:
        g = self.objective.grad(z)
        if self.constraints is not None:
            g = g + np.asarray(lam, dtype=float) @ self.constraints.jacobian(z)
        return g


def diameter(actions: ActionSet, convention: str = "strict") -> float:
    """Upper bound on ``||z - y||`` over the hull.

    ``strict`` returns ``2 max ||x||``. ``max_norm`` drops the factor 2 and
    matches the exponential example's published parameter choice; it is only
    a valid diameter bound when the hull contains the origin.
    """
    r = float(np.max(np.linalg.norm(actions.points, axis=1)))
    if convention == "strict":
        return 2.0 * r
    if convention == "max_norm":
        return r
    raise ValidationError(f"unknown diameter convention {convention!r}")


def max_constraint_magnitude(problem: ProblemInstance, probe_points=None,
                             exact_lower: bool = True, reference: Optional[float] = None) -> float:
    """``max_{z in C} ||g(z)||_inf``.

    The upper side is exact by vertex enumeration (a convex function peaks at
    an extreme point). The lower side ``-min g^j`` uses the vertices, any
    ``probe_points`` and, with ``exact_lower``, a conditional-gradient
    minimisation of each component over the hull.

    If ``reference`` is given and differs from the computed value a
    ``UserWarning`` is emitted.
    """
    if problem.constraints is None:
        raise ValidationError("max_constraint_magnitude requires constraints")
    pts = problem.actions.points
    if probe_points is not None:
        pts = np.vstack([pts, np.atleast_2d(np.asarray(probe_points, dtype=float))])
    G = problem.constraints.batch(pts)
    upper = G.max(axis=0)
    lower = G.min(axis=0)
    if exact_lower:
        from .oracle import minimize_over_hull

        for j, comp in enumerate(problem.constraints.components):
            if comp.curvature == 0.0 and comp.value_batch is not None:
                continue  # linear: the vertex minimum is exact
            sol = minimize_over_hull(comp.value, comp.subgradient, problem.actions, tolerance=1e-10)
            lower[j] = min(lower[j], sol.value - sol.tolerance_achieved)
    gbar = float(np.max(np.maximum(np.abs(upper), np.abs(lower))))
    if reference is not None and abs(reference - gbar) > 1e-6 * max(1.0, abs(gbar)):
        warnings.warn(
            f"supplied constraint magnitude {reference} differs from computed {gbar:.6g}",
            UserWarning,
            stacklevel=2,
        )
    return gbar


def lagrangian_curvature(mu_f: float, mu_g, lambda_cap: float) -> float:
    """Curvature constant of ``L(., lam)`` uniformly over ``0 <= lam <= lambda_cap``."""
    mu_g = np.atleast_1d(np.asarray(mu_g, dtype=float))
    if mu_f < 0 or np.any(mu_g < 0) or lambda_cap < 0:
        raise ValidationError("curvatures and multiplier cap must be non-negative")
    return float(mu_f + lambda_cap * mu_g.sum())
