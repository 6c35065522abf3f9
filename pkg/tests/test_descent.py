import numpy as np
import pytest

from maxweight_dual import (
    ActionSet,
    DescentConfig,
    DescentState,
    ProblemInstance,
    ValidationError,
    average_update,
    beta_bound,
    brute_argmin,
    detect_kbar,
    frank_wolfe_step,
    greedy_direct_step,
    linear_function,
    quadratic_function,
    reference_primal,
    run_unconstrained,
)
from maxweight_dual.problem import ConvexFunctionSpec, constant_function

UNIT = ActionSet([0.0, 1.0])


class TestBetaBound:
    def test_linear_objective_ignores_epsilon(self):
        assert beta_bound(0.01, 0.5, 0.0, 1.0) == 0.5

    def test_exp_example(self):
        s = 1 / np.sqrt(1.8)
        assert beta_bound(0.05, 0.5, 0.6, s * np.sqrt(3)) == pytest.approx(0.025, rel=1e-14)

    def test_capped_at_one(self):
        assert beta_bound(2.0, 0.5, 1.0, 1.0) == 0.5

    @pytest.mark.parametrize("args", [(0.0, 0.5, 1, 1), (0.1, 1.0, 1, 1), (0.1, 0.5, -1, 1),
                                      (0.1, 0.5, 1, 0)])
    def test_out_of_range(self, args):
        with pytest.raises(ValidationError):
            beta_bound(*args)


class TestGreedySteps:
    def test_linear_picks_smallest_coefficient(self):
        F = linear_function([1.0])
        for z in (0.0, 0.3, 1.0):
            assert greedy_direct_step(F, DescentState([z], beta=0.1), UNIT) == 0

    def test_direct_enumerates_candidates(self):
        q = quadratic_function([[2.0]])
        F = ConvexFunctionSpec(lambda z: q(z - 0.5), lambda z: q.grad(z - 0.5), 2.0)
        assert greedy_direct_step(F, DescentState([0.0], beta=0.5), UNIT) == 1

    def test_constant_picks_first(self):
        F = constant_function(3.0, 2)
        D = ActionSet([[1, 1], [0, 0], [2, 0]])
        st = DescentState([1.0, 1.0], beta=0.5)
        assert greedy_direct_step(F, st, D) == 0
        assert frank_wolfe_step(F, st, D) == 0

    def test_frank_wolfe_inner_product(self):
        F = linear_function([1.0, -1.0])
        D = ActionSet([[0, 0], [1, 0], [0, 1]])
        assert frank_wolfe_step(F, DescentState([0.0, 0.0]), D) == 2

    def test_non_finite_value_names_candidate(self):
        F = ConvexFunctionSpec(lambda z: np.inf if z[0] > 0.5 else 0.0, lambda z: z)
        with pytest.raises(ValidationError, match="candidate action 1"):
            greedy_direct_step(F, DescentState([0.0], beta=1.0), UNIT)

    def test_non_finite_subgradient(self):
        F = ConvexFunctionSpec(lambda z: 0.0, lambda z: np.array([np.nan]))
        with pytest.raises(ValidationError, match="subgradient"):
            frank_wolfe_step(F, DescentState([0.0]), UNIT)

    def test_beta_range(self):
        with pytest.raises(ValidationError):
            DescentState([0.0], beta=0.0)
        with pytest.raises(ValidationError):
            DescentState([0.0], beta=1.5)


class TestAverageUpdate:
    def test_cases(self):
        assert average_update(DescentState([0.0], beta=0.1), [1.0]).z[0] == pytest.approx(0.1)
        st = average_update(DescentState([1.0], 4, beta=0.37), [1.0])
        assert st.z[0] == 1.0 and st.k == 5
        np.testing.assert_allclose(average_update(DescentState([0.5, 0.5], beta=0.5), [1, 0]).z,
                                   [0.75, 0.25])


class TestRunUnconstrained:
    def test_linear_objective_monotone_to_vertex(self):
        D = ActionSet([[0, 0], [1, 0], [0, 1], [1, 1]])
        P = ProblemInstance(linear_function([1.0, 2.0]), D)
        tr = run_unconstrained(P, DescentConfig(epsilon=0.01, max_iterations=200), z1=[1.0, 1.0])
        assert tr.beta == 0.5
        assert np.all(np.diff(tr.values) <= 0)
        assert np.all(np.diff(tr.values)[tr.values[1:] > 0] < 0)
        assert tr.values[-1] == pytest.approx(0.0, abs=1e-50)
        np.testing.assert_array_equal(tr.actions, 0)

    def test_quadratic_ends_within_two_epsilon(self, box_quadratic):
        cfg = DescentConfig(epsilon=0.05, max_iterations=3000)
        tr = run_unconstrained(box_quadratic, cfg, z1=[1.0, 1.0])
        f_star = reference_primal(box_quadratic).value
        assert f_star == pytest.approx(0.0, abs=1e-8)
        assert 0.0 <= tr.values[-1] - f_star <= 2 * cfg.epsilon

    def test_frank_wolfe_rule(self, box_quadratic):
        cfg = DescentConfig(epsilon=0.05, max_iterations=3000, update_rule="frank_wolfe")
        tr = run_unconstrained(box_quadratic, cfg, z1=[1.0, 1.0])
        assert tr.values[-1] <= 0.1

    def test_constant_objective(self):
        P = ProblemInstance(constant_function(2.0, 1), UNIT)
        tr = run_unconstrained(P, DescentConfig(epsilon=0.1, max_iterations=17))
        assert tr.z.shape[0] == 18
        np.testing.assert_array_equal(tr.values, 2.0)

    def test_strict_beta_rejected_permissive_warns(self, box_quadratic):
        with pytest.raises(ValidationError, match="beta"):
            run_unconstrained(box_quadratic, DescentConfig(epsilon=0.05, beta=0.9))
        with pytest.warns(UserWarning, match="beta"):
            run_unconstrained(box_quadratic, DescentConfig(epsilon=0.05, beta=0.9, strict=False,
                                                           max_iterations=5))

    def test_rejects_constrained(self, scalar_problem):
        with pytest.raises(ValidationError):
            run_unconstrained(scalar_problem, DescentConfig(epsilon=0.1))

    def test_hull_weights_reconstruct(self, rng):
        D = ActionSet(rng.normal(size=(6, 2)))
        P = ProblemInstance(quadratic_function(np.diag([1.0, 2.0])), D)
        z1 = rng.dirichlet(np.ones(6)) @ D.points
        tr = run_unconstrained(P, DescentConfig(epsilon=0.1, max_iterations=300), z1=z1,
                               track_weights=True)
        basis = np.vstack([z1, D.points])
        np.testing.assert_allclose(tr.hull_weights.sum(axis=1), 1.0, atol=1e-12)
        assert np.all(tr.hull_weights >= 0)
        assert np.max(np.abs(tr.hull_weights @ basis - tr.z)) <= 1e-9

    def test_time_varying_objective(self):
        calls = []

        def F(k):
            calls.append(k)
            return linear_function([1.0 if k < 5 else -1.0])

        tr = run_unconstrained(ProblemInstance(linear_function([1.0]), UNIT),
                               DescentConfig(epsilon=0.1, max_iterations=8), z1=[0.5],
                               objective_at=F)
        assert list(tr.actions) == [0] * 4 + [1] * 4
        assert calls[0] == 1

    def test_lemma11_decrease(self, rng):
        # whenever F(z) - F* >= eps the greedy step gains at least gamma beta eps
        for _ in range(20):
            n = 3
            D = ActionSet(rng.uniform(-1, 1, size=(8, n)))
            A = rng.normal(size=(n, n))
            F = quadratic_function(A @ A.T + 0.1 * np.eye(n))
            eps, gamma = 0.05, 0.5
            P = ProblemInstance(F, D)
            f_star = reference_primal(P).value
            from maxweight_dual import diameter
            beta = beta_bound(eps, gamma, F.curvature, diameter(D))
            z = rng.dirichlet(np.ones(8)) @ D.points
            if F(z) - f_star < eps:
                continue
            idx, _, val = brute_argmin(lambda x: F((1 - beta) * z + beta * x), D)
            assert greedy_direct_step(F, DescentState(z, beta=beta), D) == idx
            assert val <= F(z) - gamma * beta * eps + 1e-12


class TestDetectKbar:
    def test_first_and_confirmed(self):
        ks = np.arange(1, 301)
        gaps = np.where((ks < 10) | (ks == 50), 1.0, 0.0)
        assert detect_kbar(ks, gaps, 0.1) == (10, 51)

    def test_unconfirmed_when_window_short(self):
        ks = np.arange(1, 101)
        gaps = np.where(ks < 60, 1.0, 0.0)
        assert detect_kbar(ks, gaps, 0.1) == (60, None)

    def test_never_hits(self):
        assert detect_kbar([1, 2], [1.0, 1.0], 0.1) == (None, None)

    def test_fails_at_end(self):
        assert detect_kbar(np.arange(1, 501), np.r_[np.zeros(499), 1.0], 0.1) == (1, None)
