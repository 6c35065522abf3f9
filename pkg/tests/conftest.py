import numpy as np
import pytest

from maxweight_dual import ActionSet, ConstraintVector, ProblemInstance, linear_function, quadratic_function
from maxweight_dual.experiments.builders import exp_example_problem


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def exp_problem():
    return exp_example_problem()


@pytest.fixture
def scalar_problem():
    """min z over [0, 1] subject to 0.25 - z <= 0."""
    return ProblemInstance(linear_function([1.0]), ActionSet([0.0, 1.0]),
                           ConstraintVector.linear([[-1.0]], [-0.25]), slater_point=[0.5])


@pytest.fixture
def box_quadratic():
    """0.5 z^T z over the corners of [-1, 1]^2 (Example 2 with A = I)."""
    return ProblemInstance(quadratic_function(np.eye(2)),
                           ActionSet([[-1, -1], [1, -1], [-1, 1], [1, 1]]))


_CRITERIA = []


@pytest.fixture(scope="session")
def criterion_log():
    """Collects one status line per acceptance criterion for the terminal summary."""
    def log(name: str, passed: bool, detail: str) -> None:
        line = f"{'PASS' if passed else 'FAIL'} {name}: {detail}"
        _CRITERIA.append(line)
        print(line)
    return log


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERIA:
            terminalreporter.write_line(line)
