#!/usr/bin/env python3
"""
Tests for the LP and QP solvers
"""

import numpy as np
import pytest
from scipy.optimize import linprog

from solvers import (LpProblem, QpProblem, SolveStatus, Status, check_kkt, solve_lp, solve_qp)


def test_lp_textbook_optimum():
    p = LpProblem([-1.0, -1.0], A=[[1.0, 2.0], [3.0, 1.0]], b=[4.0, 6.0], lo=[0.0, 0.0])
    result = solve_lp(p)
    assert result.status == Status.OPTIMAL
    assert np.allclose(result.x, [1.6, 1.2], atol=1e-9)
    assert result.objective == pytest.approx(-2.8, abs=1e-9)
    assert set(result.active) == {0, 1}
    assert check_kkt(p, result).ok()


def test_lp_infeasible_and_unbounded():
    infeasible = solve_lp(LpProblem([1.0], A=[[1.0]], b=[-1.0], lo=[0.0]))
    assert infeasible.status == Status.INFEASIBLE
    assert infeasible.x is None

    unbounded = solve_lp(LpProblem([-1.0, 0.0], A=[[0.0, 1.0]], b=[1.0], lo=[0.0, 0.0]))
    assert unbounded.status == Status.UNBOUNDED
    ray = unbounded.certificate
    assert ray is not None
    assert np.array([-1.0, 0.0]) @ ray < 0


def test_lp_equalities_and_bounds_kkt():
    p = LpProblem([2.0, -1.0, 1.0], A=[[1.0, 1.0, 1.0]], b=[3.0], Aeq=[[1.0, -1.0, 0.0]], beq=[0.5],
                  lo=[-1.0, -1.0, -2.0], hi=[2.0, 2.0, 2.0])
    result = solve_lp(p)
    reference = linprog([2.0, -1.0, 1.0], A_ub=[[1.0, 1.0, 1.0]], b_ub=[3.0], A_eq=[[1.0, -1.0, 0.0]],
                        b_eq=[0.5], bounds=[(-1, 2), (-1, 2), (-2, 2)], method="highs")
    assert result.optimal
    assert result.objective == pytest.approx(reference.fun, abs=1e-8)
    report = check_kkt(p, result)
    assert report.ok()
    assert report.gap <= 1e-7


def test_lp_cycling_example_terminates():
    # classic degenerate instance that cycles under pure Dantzig pricing
    cost = [-0.75, 20.0, -0.5, 6.0]
    A = [[0.25, -8.0, -1.0, 9.0], [0.5, -12.0, -0.5, 3.0], [0.0, 0.0, 1.0, 0.0]]
    b = [0.0, 0.0, 1.0]
    for bland_after in (None, 0):
        result = solve_lp(LpProblem(cost, A=A, b=b, lo=np.zeros(4)), bland_after=bland_after)
        assert result.status == Status.OPTIMAL
        assert result.objective == pytest.approx(-1.25, abs=1e-9)


def test_lp_matches_scipy_on_random_instances(rng):
    for _ in range(20):
        n, m = 4, 7
        A = rng.standard_normal((m, n))
        b = rng.uniform(0.5, 2.0, m)
        c = rng.standard_normal(n)
        result = solve_lp(LpProblem(c, A=A, b=b, lo=-np.ones(n), hi=np.ones(n)))
        reference = linprog(c, A_ub=A, b_ub=b, bounds=[(-1, 1)] * n, method="highs")
        assert result.optimal
        assert result.objective == pytest.approx(reference.fun, abs=1e-7)


def test_qp_projection_onto_orthant():
    target = np.array([0.7, -1.3, 2.0])
    p = QpProblem(np.eye(3), -target, A=np.eye(3), b=np.zeros(3), constant=0.5 * target @ target)
    result = solve_qp(p)
    assert result.optimal
    assert np.allclose(result.x, np.minimum(target, 0.0), atol=1e-9)
    assert result.objective == pytest.approx(0.5 * (0.7 ** 2 + 2.0 ** 2), abs=1e-9)
    assert check_kkt(p, result).ok()


def test_qp_equality_constrained():
    p = QpProblem(2.0 * np.eye(2), np.zeros(2), Aeq=[[1.0, 1.0]], beq=[1.0])
    result = solve_qp(p)
    assert result.optimal
    assert np.allclose(result.x, [0.5, 0.5], atol=1e-9)
    assert result.multipliers["eq"][0] == pytest.approx(-1.0, abs=1e-8)


def test_qp_infeasible_and_bad_hessian():
    p = QpProblem(np.eye(1), [0.0], A=[[1.0], [-1.0]], b=[-1.0, -1.0])
    assert solve_qp(p).status == Status.INFEASIBLE
    with pytest.raises(ValueError):
        QpProblem([[1.0, 2.0], [0.0, 1.0]], [0.0, 0.0])
    with pytest.raises(ValueError):
        QpProblem([[-1.0, 0.0], [0.0, 1.0]], [0.0, 0.0])


def test_qp_warm_start_reaches_same_point(rng):
    M = rng.standard_normal((4, 4))
    H = M @ M.T + 0.1 * np.eye(4)
    g = rng.standard_normal(4)
    A = np.vstack([np.eye(4), -np.eye(4)])
    b = np.full(8, 0.3)
    p = QpProblem(H, g, A=A, b=b)
    cold = solve_qp(p)
    warm = solve_qp(p, x0=np.zeros(4))
    assert cold.optimal and warm.optimal
    assert np.allclose(cold.x, warm.x, atol=1e-8)
    assert check_kkt(p, warm).ok()


def test_qp_tiny_scale_follows_unit_scale(rng):
    M = rng.standard_normal((4, 4))
    H = M @ M.T + 0.1 * np.eye(4)
    g = rng.standard_normal(4)
    A = np.vstack([np.eye(4), -np.eye(4), rng.standard_normal((6, 4))])
    b = np.concatenate([np.full(8, 0.3), rng.uniform(0.1, 0.5, 6)])
    unit = solve_qp(QpProblem(H, g, A=A, b=b))
    assert unit.optimal
    for scale in (1e-6, 1e-9, 1e-12):
        tiny_problem = QpProblem(H, scale * g, A=A, b=scale * b)
        for x0 in (None, np.zeros(4), scale * unit.x):
            tiny = solve_qp(tiny_problem, x0=x0)
            assert tiny.optimal
            assert np.allclose(tiny.x / scale, unit.x, atol=1e-7)
            assert set(tiny.active) == set(unit.active)


def test_qp_with_zero_hessian_matches_lp(rng):
    for _ in range(10):
        n = 3
        A = np.vstack([np.eye(n), -np.eye(n), rng.standard_normal((4, n))])
        b = np.concatenate([np.ones(2 * n), rng.uniform(0.5, 1.5, 4)])
        c = rng.standard_normal(n)
        qp = solve_qp(QpProblem(np.zeros((n, n)), c, A=A, b=b))
        lp = solve_lp(LpProblem(c, A=A, b=b))
        assert qp.optimal and lp.optimal
        assert qp.objective == pytest.approx(lp.objective, abs=1e-8)
        assert np.all(A @ qp.x <= b + 1e-9)


def test_lp_bound_multipliers_come_from_reduced_costs():
    p = LpProblem([1.0, 2.0, -1.0], A=[[1.0, 1.0, 1.0]], b=[10.0], lo=[0.0, 0.0, 0.0], hi=[np.inf, np.inf, 1.0])
    result = solve_lp(p)
    assert result.optimal
    assert np.allclose(result.x, [0.0, 0.0, 1.0])
    assert np.allclose(result.multipliers["lower"], [1.0, 2.0, 0.0])
    assert np.allclose(result.multipliers["upper"], [0.0, 0.0, 1.0])
    assert check_kkt(p, result).ok()

    # dropping the bound multipliers leaves a stationarity residual
    stripped = SolveStatus(Status.OPTIMAL, x=result.x, objective=result.objective,
                           multipliers={"ineq": result.multipliers["ineq"], "eq": result.multipliers["eq"]})
    report = check_kkt(p, stripped)
    assert report.stationarity == pytest.approx(2.0)
    assert not report.ok()


def test_lp_free_and_fixed_variables_kkt(rng):
    for _ in range(10):
        c = rng.standard_normal(4)
        A = np.vstack([np.eye(4), -np.eye(4)])
        b = np.full(8, 2.0)
        # x0 free, x3 fixed at 0.5
        p = LpProblem(c, A=A, b=b, lo=[-np.inf, -1.0, -np.inf, 0.5], hi=[np.inf, np.inf, 1.0, 0.5])
        result = solve_lp(p)
        assert result.optimal
        assert result.x[3] == pytest.approx(0.5)
        assert check_kkt(p, result).ok()


def test_qp_flat_direction_is_unbounded():
    p = QpProblem(np.diag([1.0, 0.0]), [0.0, -1.0])
    assert solve_qp(p).status == Status.UNBOUNDED


def test_solve_status_invariant():
    with pytest.raises(ValueError):
        SolveStatus(Status.OPTIMAL)
    with pytest.raises(ValueError):
        SolveStatus(Status.INFEASIBLE, x=np.zeros(1))
