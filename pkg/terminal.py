#!/usr/bin/env python3
"""
Riccati terminal ingredients
DARE solutions, ellipsoidal terminal sets, their polytopic approximation and N-step controllable sets
"""

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional, Dict, Any, Sequence, Union

import numpy as np

from errors import (DimensionMismatch, Infeasible, IterLimit, NotStabilizable, OutsideDoa, Unsupported,
                    ZeroTerminalSet)
from geometry import (HPolytope, VPolytope, contains, hrep_from_vrep, intersect, linear_preimage,
                      vrep_from_hrep)
from pclf import LinearSystem, pre_set

logger = logging.getLogger(__name__)

DIVERGENCE_BOUND = 1e12
MINKOWSKI_ABOVE_ROWS = 64


@dataclass(frozen=True, eq=False)
class RiccatiSolution:
    P: np.ndarray
    K: np.ndarray
    residual: float
    iterations: int = 0

    def to_dict(self) -> Dict[str, Any]:
        return {"type": "riccati", "P": self.P.tolist(), "K": self.K.tolist(),
                "residual": self.residual, "iterations": self.iterations}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RiccatiSolution":
        P = np.asarray(data["P"], dtype=float)
        K = np.asarray(data["K"], dtype=float).reshape(-1, P.shape[0])
        return cls(P=P, K=K, residual=float(data["residual"]), iterations=int(data["iterations"]))


def dare_residual(A: np.ndarray, B: np.ndarray, Q: np.ndarray, R: np.ndarray, P: np.ndarray) -> float:
    """max-abs entry of AᵀPA − P + Q − AᵀPB(BᵀPB+R)⁻¹BᵀPA"""
    correction = A.T @ P @ B @ np.linalg.solve(B.T @ P @ B + R, B.T @ P @ A) if B.shape[1] else 0.0
    return float(np.max(np.abs(A.T @ P @ A - P + Q - correction)))


def solve_dare(sys: LinearSystem, Q, R, tol: float = 1e-12, max_iter: int = 100000) -> RiccatiSolution:
    """Riccati fixed-point iteration from P₀ = Q"""
    A, B = sys.A, sys.B
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float)) if sys.m else np.zeros((0, 0))
    if Q.shape != (sys.n, sys.n) or R.shape != (sys.m, sys.m):
        raise DimensionMismatch("weight matrices do not match the system")
    if sys.m and np.linalg.eigvalsh(R)[0] <= 0:
        raise ValueError("R must be positive definite")
    if np.linalg.eigvalsh(Q)[0] < -1e-10:
        raise ValueError("Q must be positive semidefinite")

    P = Q.copy()
    K = np.zeros((sys.m, sys.n))
    for iteration in range(1, max_iter + 1):
        if sys.m:
            K = -np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)
            P_next = Q + A.T @ P @ A + A.T @ P @ B @ K
        else:
            P_next = Q + A.T @ P @ A
        P_next = 0.5 * (P_next + P_next.T)
        if not np.all(np.isfinite(P_next)) or np.max(np.abs(P_next)) > DIVERGENCE_BOUND:
            raise NotStabilizable(f"Riccati iteration diverges after {iteration} steps")
        change = float(np.max(np.abs(P_next - P)))
        P = P_next
        if change <= tol * max(1.0, float(np.max(np.abs(P)))):
            break
    else:
        raise IterLimit(f"Riccati iteration did not converge in {max_iter} steps")

    if sys.m:
        K = -np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)
    radius = float(np.max(np.abs(np.linalg.eigvals(A + B @ K))))
    if radius >= 1.0:
        raise NotStabilizable(f"A + BK has spectral radius {radius:.6g}")
    residual = dare_residual(A, B, Q, R, P)
    if residual > 1e-9 * max(1.0, float(np.max(np.abs(P)))):
        raise IterLimit(f"DARE residual {residual:.3g} above tolerance")
    return RiccatiSolution(P=P, K=K, residual=residual, iterations=iteration)


def restricted_dare(sys: LinearSystem, Q, R, active_input_columns: Sequence[int],
                    tol: float = 1e-12, max_iter: int = 100000) -> RiccatiSolution:
    """DARE for a subset of input columns; the gain is zero on the other inputs"""
    cols = sorted(set(int(c) for c in active_input_columns))
    if not cols or cols[0] < 0 or cols[-1] >= sys.m:
        raise DimensionMismatch(f"input columns {cols} out of range for {sys.m} inputs")
    R = np.atleast_2d(np.asarray(R, dtype=float))
    sub = solve_dare(LinearSystem(sys.A, sys.B[:, cols]), Q, R[np.ix_(cols, cols)], tol, max_iter)
    K = np.zeros((sys.m, sys.n))
    K[cols] = sub.K
    return RiccatiSolution(P=sub.P, K=K, residual=sub.residual, iterations=sub.iterations)


@dataclass(frozen=True, eq=False)
class TerminalSet:
    """Ellipsoid {xᵀPx ≤ alpha} with its gain K, or a polytope"""
    kind: str
    P: Optional[np.ndarray] = None
    alpha: float = 0.0
    K: Optional[np.ndarray] = None
    polytope: Optional[HPolytope] = None

    def contains(self, x, tol: float = 1e-9) -> bool:
        x = np.asarray(x, dtype=float)
        if self.kind == "ellipsoid":
            return bool(x @ self.P @ x <= self.alpha * (1.0 + tol) + tol)
        return contains(self.polytope, x, tol)

    def to_dict(self) -> Dict[str, Any]:
        if self.kind == "ellipsoid":
            return {"type": "terminal", "kind": "ellipsoid", "P": self.P.tolist(), "alpha": self.alpha,
                    "K": self.K.tolist()}
        return {"type": "terminal", "kind": "polytope", "polytope": self.polytope.to_dict()}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "TerminalSet":
        if data["kind"] == "ellipsoid":
            P = np.asarray(data["P"], dtype=float)
            return cls(kind="ellipsoid", P=P, alpha=float(data["alpha"]),
                       K=np.asarray(data["K"], dtype=float).reshape(-1, P.shape[0]))
        return cls(kind="polytope", polytope=HPolytope.from_dict(data["polytope"]))


def terminal_ellipsoid(sol: RiccatiSolution, X: HPolytope, U: HPolytope, tol: float = 1e-12) -> TerminalSet:
    """Largest level set of xᵀPx inside {x ∈ X, Kx ∈ U}"""
    rows = np.vstack([X.H, U.H @ sol.K])
    offsets = np.concatenate([X.h, U.h])
    P_inv = np.linalg.inv(sol.P)
    alpha = np.inf
    for g, offset in zip(rows, offsets):
        if np.linalg.norm(g) <= tol:
            continue
        if offset <= tol:
            raise ZeroTerminalSet("a constraint excited by the gain passes through the origin")
        alpha = min(alpha, offset ** 2 / float(g @ P_inv @ g))
    return TerminalSet(kind="ellipsoid", P=sol.P, alpha=float(alpha), K=sol.K)


def polytopic_inner_approx(ts: TerminalSet, points: int = 1000) -> HPolytope:
    """Hull of equally-angled boundary points of the ellipsoid"""
    if ts.kind != "ellipsoid":
        raise ValueError("inner approximation needs an ellipsoidal terminal set")
    if ts.P.shape[0] != 2:
        raise Unsupported("polytopic approximation is implemented for 2-D states")
    L = np.linalg.cholesky(ts.P)
    theta = 2.0 * np.pi * np.arange(points) / points
    unit = np.vstack([np.cos(theta), np.sin(theta)])
    boundary = np.sqrt(ts.alpha) * np.linalg.solve(L.T, unit)
    return hrep_from_vrep(VPolytope(boundary))


def _pre_set_minkowski(sys: LinearSystem, target: HPolytope, U: HPolytope) -> HPolytope:
    """Pre(T) = {x | Ax ∈ T ⊕ (−BU)} for invertible A"""
    if abs(np.linalg.det(sys.A)) <= 1e-12:
        raise Unsupported("Minkowski pre-set needs an invertible A")
    shifts = -sys.B @ vrep_from_hrep(U).vertices
    tv = vrep_from_hrep(target).vertices
    sums = (tv[:, :, None] + shifts[:, None, :]).reshape(sys.n, -1)
    return linear_preimage(hrep_from_vrep(VPolytope(sums)), sys.A)


def controllable_set_N(sys: LinearSystem, X: HPolytope, U: HPolytope, target: HPolytope, N: int,
                       method: str = "auto") -> HPolytope:
    """N-step backward reachable set of `target` inside X.

    method: "projection" (Fourier-Motzkin), "minkowski" (vertex sums, invertible A)
    or "auto", which switches to the Minkowski route for targets above 64 rows.
    """
    if method not in ("auto", "projection", "minkowski"):
        raise ValueError(f"unknown pre-set method '{method}'")
    T = target
    for k in range(N):
        use_minkowski = method == "minkowski" or (method == "auto" and T.rows > MINKOWSKI_ABOVE_ROWS
                                                  and sys.n <= 3 and abs(np.linalg.det(sys.A)) > 1e-12)
        pre = _pre_set_minkowski(sys, T, U) if use_minkowski else pre_set(sys, T, U, 1.0)
        T = intersect(X, pre)
        logger.info("controllable set step %d: %d rows", k + 1, T.rows)
    return T


def tilde_set_membership(controller, x, target: Union[TerminalSet, HPolytope, None] = None) -> bool:
    """x ∈ 𝒳̃_N: the tilde problem's predicted terminal state lies in the terminal set"""
    try:
        result = controller.solve(x)
    except (Infeasible, OutsideDoa):
        return False
    target = controller.terminal if target is None else target
    final = result.states[-1]
    if isinstance(target, TerminalSet):
        return target.contains(final)
    return contains(target, final, 1e-9)


def _membership_chunk(args):
    controller, points, target = args
    return [tilde_set_membership(controller, x, target) for x in points]


def tilde_region(controller, points: np.ndarray, target: Union[TerminalSet, HPolytope, None] = None,
                 jobs: int = 1) -> np.ndarray:
    """Membership mask of 𝒳̃_N over the given points (rows)"""
    points = np.atleast_2d(points)
    if jobs > 1 and len(points) > jobs:
        chunks = np.array_split(points, jobs * 4)
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            parts = pool.map(_membership_chunk, [(controller, c, target) for c in chunks])
            return np.array([flag for part in parts for flag in part], dtype=bool)
    return np.array(_membership_chunk((controller, points, target)), dtype=bool)
