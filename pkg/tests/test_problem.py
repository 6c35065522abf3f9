import numpy as np
import pytest

from maxweight_dual import (
    ActionSet,
    ConstraintVector,
    ConvexFunctionSpec,
    ProblemInstance,
    ValidationError,
    diameter,
    lagrangian_curvature,
    linear_function,
    max_constraint_magnitude,
    quadratic_function,
)
from maxweight_dual.problem import hull_membership_weights


class TestActionSet:
    def test_scalar_list_becomes_column(self):
        D = ActionSet([0.0, 1.0, 2.0])
        assert D.dim == 1 and len(D) == 3

    def test_rejects_duplicates(self):
        with pytest.raises(ValidationError, match="duplicate"):
            ActionSet([[0, 1], [0, 1]])

    def test_rejects_empty(self):
        with pytest.raises(ValidationError):
            ActionSet(np.empty((0, 2)))

    def test_rejects_non_finite(self):
        with pytest.raises(ValidationError):
            ActionSet([[0.0], [np.inf]])

    def test_points_are_read_only(self):
        D = ActionSet([[0, 0], [1, 1]])
        with pytest.raises(ValueError):
            D.points[0, 0] = 5.0

    def test_binary_grid_origin_first(self):
        D = ActionSet.binary_grid(3, 0.5)
        assert len(D) == 8
        np.testing.assert_array_equal(D[0], [0, 0, 0])
        assert set(map(tuple, D.points)) == {(a, b, c) for a in (0, .5) for b in (0, .5) for c in (0, .5)}


class TestDiameter:
    def test_unit_interval(self):
        assert diameter(ActionSet([0.0, 1.0])) == 2.0

    def test_three_four_five(self):
        assert diameter(ActionSet([[0, 0], [3, 4]])) == 10.0

    def test_exp_example_grid(self):
        s = 1 / np.sqrt(1.8)
        D = ActionSet.binary_grid(3, s)
        assert diameter(D) == pytest.approx(2 * s * np.sqrt(3), rel=1e-15)
        assert diameter(D) == pytest.approx(2.5820, abs=1e-4)
        assert diameter(D, "max_norm") == pytest.approx(s * np.sqrt(3), rel=1e-15)

    def test_unknown_convention(self):
        with pytest.raises(ValidationError):
            diameter(ActionSet([0.0, 1.0]), "other")

    def test_bounds_hull_distances(self, rng):
        D = ActionSet(rng.normal(size=(7, 3)))
        dbar = diameter(D)
        for _ in range(200):
            z = rng.dirichlet(np.ones(7)) @ D.points
            y = rng.dirichlet(np.ones(7)) @ D.points
            assert np.linalg.norm(z - y) <= dbar


class TestFunctions:
    def test_negative_curvature_rejected(self):
        with pytest.raises(ValidationError):
            ConvexFunctionSpec(lambda z: 0.0, lambda z: z, curvature=-1.0)

    def test_quadratic_curvature_is_top_eigenvalue(self):
        A = np.array([[2.0, 0.5], [0.5, 1.0]])
        assert quadratic_function(A).curvature == pytest.approx(np.linalg.eigvalsh(A)[-1])

    def test_quadratic_rejects_indefinite(self):
        with pytest.raises(ValidationError):
            quadratic_function([[1.0, 0.0], [0.0, -1.0]])

    def test_batch_matches_pointwise(self, rng):
        f = quadratic_function(np.diag([1.0, 3.0]))
        P = rng.normal(size=(5, 2))
        np.testing.assert_allclose(f.batch(P), [f(p) for p in P])

    def test_quadratic_curvature_inequality(self, rng):
        A = rng.normal(size=(3, 3))
        A = A @ A.T + 0.1 * np.eye(3)
        f = quadratic_function(A)
        for _ in range(200):
            z, d = rng.normal(size=3), rng.normal(size=3)
            assert f(z + d) - f(z) <= f.grad(z) @ d + f.curvature * d @ d + 1e-10


class TestConstraintVector:
    def test_linear_affine_path_matches_components(self, rng):
        A, b = rng.normal(size=(3, 2)), rng.normal(size=3)
        g = ConstraintVector.linear(A, b)
        generic = ConstraintVector(g.components)
        z = rng.normal(size=2)
        np.testing.assert_allclose(g(z), generic(z))
        P = rng.normal(size=(4, 2))
        np.testing.assert_allclose(g.batch(P), generic.batch(P))
        np.testing.assert_allclose(g.jacobian(z), generic.jacobian(z))

    def test_empty_rejected(self):
        with pytest.raises(ValidationError):
            ConstraintVector([])

    def test_shape_mismatch(self):
        with pytest.raises(ValidationError):
            ConstraintVector.linear(np.eye(2), [1.0])


class TestProblemInstance:
    def test_requires_slater_point(self):
        with pytest.raises(ValidationError, match="Slater"):
            ProblemInstance(linear_function([1.0]), ActionSet([0.0, 1.0]),
                            ConstraintVector.linear([[1.0]], [0.5]))

    def test_slater_point_must_be_strict(self):
        with pytest.raises(ValidationError, match="strictly"):
            ProblemInstance(linear_function([1.0]), ActionSet([0.0, 1.0]),
                            ConstraintVector.linear([[1.0]], [0.5]), slater_point=[0.5])

    def test_slater_point_must_be_in_hull(self):
        with pytest.raises(ValidationError, match="conv"):
            ProblemInstance(linear_function([1.0]), ActionSet([0.0, 1.0]),
                            ConstraintVector.linear([[1.0]], [5.0]), slater_point=[2.0])

    def test_slater_weights_used_when_lp_too_large(self):
        kw = dict(objective=linear_function([1.0]), actions=ActionSet([0.0, 1.0]),
                  constraints=ConstraintVector.linear([[1.0]], [0.5]), slater_point=[0.25], lp_limit=0)
        with pytest.raises(ValidationError, match="slater_weights"):
            ProblemInstance(**kw)
        ProblemInstance(**kw, slater_weights=[0.75, 0.25])
        with pytest.raises(ValidationError, match="weights"):
            ProblemInstance(**kw, slater_weights=[0.5, 0.5])

    def test_lagrangian(self):
        P = ProblemInstance(linear_function([1.0]), ActionSet([0.0, 3.0]),
                            ConstraintVector.linear([[1.0]], [1.0]), slater_point=[0.5])
        assert P.lagrangian([2.0], [3.0]) == 5.0
        assert P.lagrangian([2.0], [0.0]) == 2.0

    def test_membership_weights_reconstruct(self, rng):
        pts = rng.normal(size=(6, 3))
        w0 = rng.dirichlet(np.ones(6))
        w = hull_membership_weights(pts, w0 @ pts)
        np.testing.assert_allclose(w @ pts, w0 @ pts, atol=1e-9)
        assert hull_membership_weights(pts, pts.max(axis=0) + 1.0) is None


class TestConstraintMagnitude:
    def test_shifted_identity(self):
        P = ProblemInstance(linear_function([0.0]), ActionSet([0.0, 1.0]),
                            ConstraintVector.linear([[1.0]], [1.0]), slater_point=[0.5])
        assert max_constraint_magnitude(P) == 1.0

    def test_negation(self):
        P = ProblemInstance(linear_function([0.0]), ActionSet([0.0, 1.0]),
                            ConstraintVector.linear([[-1.0]], [0.0]), slater_point=[0.5])
        assert max_constraint_magnitude(P) == 1.0

    def test_missing_constraints(self):
        with pytest.raises(ValidationError):
            max_constraint_magnitude(ProblemInstance(linear_function([0.0]), ActionSet([0.0, 1.0])))

    def test_exp_example_value(self, exp_problem):
        # b - z over [0, s]^3 peaks at z = 0 on b_3 = s/4 and bottoms out at
        # z = s on b_1 - s = -11 s / 12
        s = 1 / np.sqrt(1.8)
        assert max_constraint_magnitude(exp_problem) == pytest.approx(11 * s / 12, rel=1e-14)
        assert max_constraint_magnitude(exp_problem) == pytest.approx(0.6832429931249357, rel=1e-14)

    def test_reference_mismatch_warns(self, exp_problem):
        with pytest.warns(UserWarning, match="0.6211"):
            max_constraint_magnitude(exp_problem, reference=0.6211)

    def test_nonlinear_lower_side_uses_hull_minimum(self):
        # (z - 0.5)^2 - 0.1 is smallest inside the hull, not at a vertex
        g = quadratic_function([[2.0]])
        shifted = ConvexFunctionSpec(lambda z: g(z - 0.5) - 0.1, lambda z: g.grad(z - 0.5),
                                     g.curvature)
        P = ProblemInstance(linear_function([0.0]), ActionSet([0.0, 1.0]),
                            ConstraintVector([shifted]), slater_point=[0.5])
        assert max_constraint_magnitude(P) == pytest.approx(0.15, abs=1e-9)
        assert max_constraint_magnitude(P, exact_lower=False) == pytest.approx(0.15)
        P2 = ProblemInstance(linear_function([0.0]), ActionSet([0.0, 1.0]),
                             ConstraintVector([ConvexFunctionSpec(lambda z: g(z - 0.5) - 0.3,
                                                                  lambda z: g.grad(z - 0.5), 2.0)]),
                             slater_point=[0.5])
        assert max_constraint_magnitude(P2, exact_lower=False) == pytest.approx(0.05)
        assert max_constraint_magnitude(P2) == pytest.approx(0.3, abs=1e-9)


class TestLagrangianCurvature:
    def test_linear_constraints(self):
        assert lagrangian_curvature(0.0, [0.0, 0.0], 5.0) == 0.0

    def test_arithmetic(self):
        assert lagrangian_curvature(0.1, [0.2, 0.3], 2.0) == pytest.approx(1.1)

    def test_exp_example_declared(self, exp_problem):
        mu = lagrangian_curvature(exp_problem.objective.curvature,
                                  exp_problem.constraints.curvatures, 0.7)
        assert mu == 0.6

    def test_negative_rejected(self):
        with pytest.raises(ValidationError):
            lagrangian_curvature(-1.0, [0.0], 1.0)
