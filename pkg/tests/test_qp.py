import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gridflow.qp import INFEASIBLE, SOLVED, MaxIterExceeded, QpProblem, kkt_residuals, qp_solve

from oracles import qp_enumerate


def random_feasible_qp(rng, n, k):
    A = rng.normal(size=(k, n))
    x0 = rng.normal(size=n)
    b = A @ x0 + rng.uniform(0, 1, k) * (rng.uniform(size=k) > 0.3)
    g = rng.normal(size=n) * 2
    return QpProblem(g, A, b)


def test_unconstrained():
    sol = qp_solve(QpProblem([1.0, -2.0], np.zeros((0, 2)), []))
    np.testing.assert_array_equal(sol.theta, [-1.0, 2.0])
    assert sol.duals.size == 0 and sol.status == SOLVED


def test_single_active_constraint():
    sol = qp_solve(QpProblem([1.0], [[1.0]], [-2.0]))
    assert sol.theta[0] == pytest.approx(-2.0)
    assert sol.duals[0] == pytest.approx(2.0)


def test_inactive_constraint_has_zero_dual():
    sol = qp_solve(QpProblem([1.0], [[1.0]], [5.0]))
    assert sol.theta[0] == -1.0 and sol.duals[0] == 0.0


@settings(max_examples=300, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), n=st.integers(1, 4), k=st.integers(0, 6))
def test_matches_enumeration_oracle(seed, n, k):
    qp = random_feasible_qp(np.random.default_rng(seed), n, k)
    sol = qp_solve(qp)
    x_ref, duals_ref = qp_enumerate(qp.g, qp.A, qp.b)
    np.testing.assert_allclose(sol.theta, x_ref, atol=1e-7)
    assert sol.status == SOLVED
    assert max(sol.stationarity_residual, sol.feasibility_residual, sol.complementarity_residual) <= 1e-8
    assert np.all(sol.duals >= 0)


def test_duplicate_constraints_are_handled():
    A = np.array([[1.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
    sol = qp_solve(QpProblem([-3.0, 0.0], A, [1.0, 1.0, 2.0]))
    np.testing.assert_allclose(sol.theta, [1.0, 0.0])
    assert max(kkt_residuals(QpProblem([-3.0, 0.0], A, [1.0, 1.0, 2.0]), sol.theta, sol.duals)) <= 1e-10


def test_infeasible_is_reported():
    A = np.array([[1.0], [-1.0]])
    sol = qp_solve(QpProblem([0.0], A, [-1.0, -1.0]))  # x <= -1 and x >= 1
    assert sol.status == INFEASIBLE


def test_iteration_cap_surfaces():
    rng = np.random.default_rng(1)
    A = rng.normal(size=(6, 4))
    qp = QpProblem(rng.normal(size=4) * 10, A, -np.abs(rng.normal(size=6)))
    with pytest.raises(MaxIterExceeded):
        qp_solve(qp, max_iter=1)


def test_problem_validation():
    with pytest.raises(ValueError):
        QpProblem([1.0, 2.0], [[1.0, 0.0]], [1.0, 2.0])
    with pytest.raises(ValueError):
        QpProblem([np.inf], [[1.0]], [1.0])
