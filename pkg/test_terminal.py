#!/usr/bin/env python3
"""
Tests for Riccati terminal ingredients and N-step sets
"""

import numpy as np
import pytest
from scipy.linalg import solve_discrete_are

from errors import DimensionMismatch, NotStabilizable, Unsupported, ZeroTerminalSet
from geometry import HPolytope, contains_set, vrep_from_hrep
from pclf import LinearSystem
from terminal import (RiccatiSolution, TerminalSet, controllable_set_N, dare_residual, polytopic_inner_approx,
                      restricted_dare, solve_dare, terminal_ellipsoid, tilde_region, tilde_set_membership)

EX1 = LinearSystem([[1.1, 0.0], [0.2, 1.1]], [[0.1, 0.1], [0.1, 0.0]])
EX2 = LinearSystem([[1.025, 0.0125], [0.025, 1.05]], 0.05 * np.eye(2))


def _same_set(P, Q, tol=1e-6):
    return contains_set(P, Q, tol) and contains_set(Q, P, tol)


def test_scalar_dare_is_golden_ratio():
    sol = solve_dare(LinearSystem([[1.0]], [[1.0]]), [[1.0]], [[1.0]])
    assert sol.P[0, 0] == pytest.approx((1.0 + np.sqrt(5.0)) / 2.0, abs=1e-8)
    assert sol.K[0, 0] == pytest.approx(-sol.P[0, 0] / (sol.P[0, 0] + 1.0), abs=1e-8)


@pytest.mark.parametrize("sys", [EX1, EX2])
def test_dare_matches_scipy(sys):
    Q, R = np.eye(2), 0.1 * np.eye(2)
    sol = solve_dare(sys, Q, R)
    reference = solve_discrete_are(sys.A, sys.B, Q, R)
    assert np.allclose(sol.P, reference, atol=1e-8)
    assert dare_residual(sys.A, sys.B, Q, R, sol.P) <= 1e-9 * np.max(np.abs(sol.P))
    assert np.max(np.abs(np.linalg.eigvals(sys.A + sys.B @ sol.K))) < 1.0


def test_restricted_dare_uses_selected_inputs_only():
    Q, R = np.eye(2), 0.1 * np.eye(2)
    sol = restricted_dare(EX1, Q, R, [1])
    assert np.all(sol.K[0] == 0.0)
    reference = solve_discrete_are(EX1.A, EX1.B[:, [1]], Q, R[[1]][:, [1]])
    assert np.allclose(sol.P, reference, atol=1e-8)
    full = solve_dare(EX1, Q, R)
    # fewer inputs cannot lower the optimal cost
    assert np.linalg.eigvalsh(sol.P - full.P)[0] >= -1e-8
    with pytest.raises(DimensionMismatch):
        restricted_dare(EX1, Q, R, [2])


def test_dare_rejects_unstabilizable_system():
    sys = LinearSystem([[2.0, 0.0], [0.0, 0.5]], [[0.0], [1.0]])
    with pytest.raises(NotStabilizable):
        solve_dare(sys, np.eye(2), np.eye(1))
    with pytest.raises(ValueError):
        solve_dare(EX2, np.eye(2), np.zeros((2, 2)))


def test_restricted_dare_rejects_unstabilizable_columns():
    sys = LinearSystem([[2.0, 0.0], [0.0, 0.5]], np.eye(2))
    assert solve_dare(sys, np.eye(2), np.eye(2)).P.shape == (2, 2)
    with pytest.raises(NotStabilizable):
        restricted_dare(sys, np.eye(2), np.eye(2), [1])


def test_full_gain_of_example1_has_no_terminal_ellipsoid():
    # u₁ ≥ 0 passes through the origin and the full LQR gain excites it
    X = HPolytope.box([-1.0, -1.0], [1.0, 1.0])
    U = HPolytope.box([0.0, -1.0], [1.0, 1.0])
    full = solve_dare(EX1, np.eye(2), 0.1 * np.eye(2))
    with pytest.raises(ZeroTerminalSet):
        terminal_ellipsoid(full, X, U)
    restricted = terminal_ellipsoid(restricted_dare(EX1, np.eye(2), 0.1 * np.eye(2), [1]), X, U)
    assert restricted.alpha > 0


def test_terminal_ellipsoid_touches_a_constraint():
    X = HPolytope.box([-1.0, -1.0], [1.0, 1.0])
    U = HPolytope.box([-1.0, -1.0], [1.0, 1.0])
    sol = solve_dare(EX2, np.eye(2), 0.1 * np.eye(2))
    ts = terminal_ellipsoid(sol, X, U)
    assert ts.kind == "ellipsoid" and ts.alpha > 0
    P_inv = np.linalg.inv(sol.P)
    rows = np.vstack([X.H, U.H @ sol.K])
    offsets = np.concatenate([X.h, U.h])
    reach = np.sqrt(ts.alpha * np.einsum("ij,jk,ik->i", rows, P_inv, rows))
    assert np.all(reach <= offsets + 1e-9)
    assert np.min(offsets - reach) == pytest.approx(0.0, abs=1e-9)
    assert ts.contains(np.zeros(2))
    assert TerminalSet.from_dict(ts.to_dict()).alpha == ts.alpha


def test_polytopic_inner_approximation():
    X = HPolytope.box([-1.0, -1.0], [1.0, 1.0])
    U = HPolytope.box([-1.0, -1.0], [1.0, 1.0])
    ts = terminal_ellipsoid(solve_dare(EX2, np.eye(2), 0.1 * np.eye(2)), X, U)
    inner = polytopic_inner_approx(ts, 64)
    assert inner.rows == 64
    vertices = vrep_from_hrep(inner).vertices.T
    assert all(ts.contains(v, 1e-9) for v in vertices)
    assert contains_set(X, inner)
    with pytest.raises(Unsupported):
        polytopic_inner_approx(TerminalSet(kind="ellipsoid", P=np.eye(3), alpha=1.0, K=np.zeros((1, 3))))
    with pytest.raises(ValueError):
        polytopic_inner_approx(TerminalSet(kind="polytope", polytope=X))


def test_controllable_set_routes_agree(toy, toy_sys, toy_assets):
    target = toy_assets.terminal_polytope
    by_projection = controllable_set_N(toy_sys, toy.X, toy.U, target, 1, method="projection")
    by_minkowski = controllable_set_N(toy_sys, toy.X, toy.U, target, 1, method="minkowski")
    assert _same_set(by_projection, by_minkowski)
    assert contains_set(toy.X, by_projection, 1e-9)
    with pytest.raises(ValueError):
        controllable_set_N(toy_sys, toy.X, toy.U, target, 1, method="exact")


def test_controllable_set_contains_invariant_target(toy):
    # a box that the input can hold in place
    sys = LinearSystem([[1.0, 0.0], [0.0, 1.0]], [[1.0], [1.0]])
    target = HPolytope.box([-0.5, -0.5], [0.5, 0.5])
    one = controllable_set_N(sys, toy.X, toy.U, target, 1)
    two = controllable_set_N(sys, toy.X, toy.U, target, 2)
    assert contains_set(one, target, 1e-9)
    assert contains_set(two, one, 1e-9)


def test_riccati_solution_round_trip():
    sol = solve_dare(EX2, np.eye(2), 0.1 * np.eye(2))
    again = RiccatiSolution.from_dict(sol.to_dict())
    assert np.array_equal(again.P, sol.P) and np.array_equal(again.K, sol.K)


def test_tilde_membership(toy_assets):
    tilde = toy_assets.controller("tilde")
    assert tilde_set_membership(tilde, np.zeros(2))
    far = np.array([5.0, 5.0])
    assert not tilde_set_membership(tilde, far)
    mask = tilde_region(tilde, np.array([[0.0, 0.0], [5.0, 5.0]]))
    assert mask.tolist() == [True, False]
    assert tilde_set_membership(tilde, np.zeros(2), toy_assets.terminal_polytope)
