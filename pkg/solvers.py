#!/usr/bin/env python3
"""
Dense LP and QP solvers
Bounded-variable revised simplex and a primal active-set method for convex QPs
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Dict, Tuple, List, Union

import numpy as np

from errors import DimensionMismatch

logger = logging.getLogger(__name__)

PIVOT_TOL = 1e-9
CURVATURE_FLOOR = 1e-10
NEAR_TOL = 1e-12
STEP_TOL = 1e-12
REFACTOR_EVERY = 50


class Status(str, Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    ITER_LIMIT = "IterLimit"


def _as_matrix(a, cols: int, name: str) -> np.ndarray:
    if a is None:
        return np.zeros((0, cols))
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        return np.zeros((0, cols))
    a = np.atleast_2d(a)
    if a.shape[1] != cols:
        raise DimensionMismatch(f"{name} has {a.shape[1]} columns, expected {cols}")
    return a


def _as_vector(b, size: int, name: str, fill: float = 0.0) -> np.ndarray:
    if b is None:
        return np.full(size, fill)
    b = np.asarray(b, dtype=float).reshape(-1)
    if b.size != size:
        raise DimensionMismatch(f"{name} has length {b.size}, expected {size}")
    return b


@dataclass
class LpProblem:
    """min cᵀx s.t. Ax ≤ b, Aeq x = beq, lo ≤ x ≤ hi (free by default)"""
    cost: np.ndarray
    A: Optional[np.ndarray] = None
    b: Optional[np.ndarray] = None
    Aeq: Optional[np.ndarray] = None
    beq: Optional[np.ndarray] = None
    lo: Optional[np.ndarray] = None
    hi: Optional[np.ndarray] = None

    def __post_init__(self):
        self.cost = np.asarray(self.cost, dtype=float).reshape(-1)
        n = self.cost.size
        self.A = _as_matrix(self.A, n, "A")
        self.b = _as_vector(self.b, self.A.shape[0], "b")
        self.Aeq = _as_matrix(self.Aeq, n, "Aeq")
        self.beq = _as_vector(self.beq, self.Aeq.shape[0], "beq")
        self.lo = _as_vector(self.lo, n, "lo", -np.inf)
        self.hi = _as_vector(self.hi, n, "hi", np.inf)
        if not (np.all(np.isfinite(self.b)) and np.all(np.isfinite(self.beq))):
            raise ValueError("constraint offsets must be finite")

    @property
    def n(self) -> int:
        return self.cost.size


@dataclass
class QpProblem:
    """min ½xᵀHx + gᵀx + constant s.t. Ax ≤ b, Aeq x = beq"""
    hessian: np.ndarray
    linear: np.ndarray
    A: Optional[np.ndarray] = None
    b: Optional[np.ndarray] = None
    Aeq: Optional[np.ndarray] = None
    beq: Optional[np.ndarray] = None
    constant: float = 0.0

    def __post_init__(self):
        self.linear = np.asarray(self.linear, dtype=float).reshape(-1)
        n = self.linear.size
        H = np.asarray(self.hessian, dtype=float).reshape(n, n) if n else np.zeros((0, 0))
        scale = max(1.0, float(np.max(np.abs(H)))) if n else 1.0
        if n and np.max(np.abs(H - H.T)) > 1e-10 * scale:
            raise ValueError("Hessian is not symmetric")
        self.hessian = 0.5 * (H + H.T)
        if n and np.linalg.eigvalsh(self.hessian)[0] < -1e-8 * scale:
            raise ValueError("Hessian is not positive semidefinite")
        self.A = _as_matrix(self.A, n, "A")
        self.b = _as_vector(self.b, self.A.shape[0], "b")
        self.Aeq = _as_matrix(self.Aeq, n, "Aeq")
        self.beq = _as_vector(self.beq, self.Aeq.shape[0], "beq")
        if not (np.all(np.isfinite(self.b)) and np.all(np.isfinite(self.beq))):
            raise ValueError("constraint offsets must be finite")

    @property
    def n(self) -> int:
        return self.linear.size

    def objective(self, x: np.ndarray) -> float:
        return float(0.5 * x @ self.hessian @ x + self.linear @ x + self.constant)


@dataclass
class SolveStatus:
    """Outcome of a solver call; x and objective are set only when Optimal"""
    status: Status
    x: Optional[np.ndarray] = None
    objective: Optional[float] = None
    active: Tuple[int, ...] = ()
    multipliers: Dict[str, np.ndarray] = field(default_factory=dict)
    iterations: int = 0
    certificate: Optional[np.ndarray] = None

    def __post_init__(self):
        if (self.status == Status.OPTIMAL) != (self.x is not None):
            raise ValueError("a solution is present exactly when the status is Optimal")

    @property
    def optimal(self) -> bool:
        return self.status == Status.OPTIMAL


# ---------------------------------------------------------------------------
# Revised simplex
# ---------------------------------------------------------------------------

def _simplex(K: np.ndarray, rhs: np.ndarray, cost: np.ndarray, upper: np.ndarray,
             basis: List[int], at_upper: np.ndarray, max_iter: int, tol: float,
             bland_after: int, iterations: int):
    """Bounded-variable primal simplex on {Ky = rhs, 0 ≤ y ≤ upper} from a feasible basis.

    Returns (status, basis, at_upper, values, duals, iterations, ray).
    """
    m, ncol = K.shape
    Binv = np.linalg.inv(K[:, basis]) if m else np.zeros((0, 0))
    since_refactor = 0
    while True:
        y = np.where(at_upper, upper, 0.0)
        y[basis] = 0.0
        y[basis] = Binv @ (rhs - K @ y)
        duals = Binv.T @ cost[basis]
        reduced = cost - K.T @ duals

        is_basic = np.zeros(ncol, dtype=bool)
        is_basic[basis] = True
        can_rise = ~is_basic & ~at_upper & (upper > tol) & (reduced < -tol)
        can_fall = ~is_basic & at_upper & (reduced > tol)
        eligible = np.flatnonzero(can_rise | can_fall)
        if eligible.size == 0:
            return Status.OPTIMAL, basis, at_upper, y, duals, iterations, None
        if iterations >= max_iter:
            return Status.ITER_LIMIT, basis, at_upper, y, duals, iterations, None

        if iterations < bland_after:
            j = int(eligible[np.argmax(np.abs(reduced[eligible]))])
        else:
            j = int(eligible[0])
        direction = 1.0 if can_rise[j] else -1.0
        w = Binv @ K[:, j]
        delta = direction * w
        yb = y[basis]
        ub = upper[basis]

        ratios = np.full(m, np.inf)
        to_upper = np.zeros(m, dtype=bool)
        falling = delta > PIVOT_TOL
        ratios[falling] = np.maximum(yb[falling], 0.0) / delta[falling]
        rising = (delta < -PIVOT_TOL) & np.isfinite(ub)
        ratios[rising] = np.maximum(ub[rising] - yb[rising], 0.0) / (-delta[rising])
        to_upper[rising] = True

        t_min = float(ratios.min()) if m else np.inf
        t_flip = float(upper[j])
        iterations += 1
        if not np.isfinite(t_min) and not np.isfinite(t_flip):
            ray = np.zeros(ncol)
            ray[j] = direction
            ray[basis] = -delta
            return Status.UNBOUNDED, basis, at_upper, y, duals, iterations, ray
        if t_flip <= t_min:
            at_upper[j] = not at_upper[j]
            continue

        ties = np.flatnonzero(ratios <= t_min + 1e-12)
        r = int(ties[np.argmin(np.asarray(basis)[ties])])
        leaving = basis[r]
        at_upper[leaving] = bool(to_upper[r])
        basis[r] = j
        at_upper[j] = False

        pivot_row = Binv[r] / w[r]
        Binv -= np.outer(w, pivot_row)
        Binv[r] = pivot_row
        since_refactor += 1
        if since_refactor >= REFACTOR_EVERY:
            Binv = np.linalg.inv(K[:, basis])
            since_refactor = 0


def solve_lp(p: LpProblem, tol: float = 1e-9, max_iter: int = 20000,
             bland_after: Optional[int] = None) -> SolveStatus:
    """Solve an LP with the two-phase bounded-variable revised simplex.

    Pricing is Dantzig's rule until `bland_after` pivots, then Bland's rule.
    Ties in the entering and leaving choice go to the lowest index.
    """
    n = p.n
    lo, hi = p.lo, p.hi
    if np.any(lo > hi + tol):
        return SolveStatus(Status.INFEASIBLE)

    # Substitute x = shift + M y with 0 ≤ y ≤ upper
    shift = np.zeros(n)
    columns: List[Tuple[int, float, float]] = []
    for j in range(n):
        if np.isfinite(lo[j]):
            shift[j] = lo[j]
            columns.append((j, 1.0, hi[j] - lo[j] if np.isfinite(hi[j]) else np.inf))
        elif np.isfinite(hi[j]):
            shift[j] = hi[j]
            columns.append((j, -1.0, np.inf))
        else:
            columns.append((j, 1.0, np.inf))
            columns.append((j, -1.0, np.inf))
    ny = len(columns)
    M = np.zeros((n, ny))
    for k, (j, sign, _) in enumerate(columns):
        M[j, k] = sign
    upper_y = np.array([u for _, _, u in columns])

    m_ub, m_eq = p.A.shape[0], p.Aeq.shape[0]
    m = m_ub + m_eq
    K = np.vstack([
        np.hstack([p.A @ M, np.eye(m_ub)]),
        np.hstack([p.Aeq @ M, np.zeros((m_eq, m_ub))]),
    ]) if m else np.zeros((0, ny))
    rhs = np.concatenate([p.b - p.A @ shift, p.beq - p.Aeq @ shift])
    cost = np.concatenate([M.T @ p.cost, np.zeros(m_ub)])
    upper = np.concatenate([upper_y, np.full(m_ub, np.inf)])

    # Slack basis where possible, artificials elsewhere
    needs_artificial = [i for i in range(m) if i >= m_ub or rhs[i] < 0]
    n_art = len(needs_artificial)
    art = np.zeros((m, n_art))
    for k, i in enumerate(needs_artificial):
        art[i, k] = 1.0 if rhs[i] >= 0 else -1.0
    K = np.hstack([K, art])
    base = ny + m_ub
    basis = [ny + i for i in range(m_ub)] + [0] * m_eq
    for k, i in enumerate(needs_artificial):
        basis[i] = base + k
    cost = np.concatenate([cost, np.zeros(n_art)])
    upper = np.concatenate([upper, np.full(n_art, np.inf)])
    at_upper = np.zeros(K.shape[1], dtype=bool)
    if bland_after is None:
        bland_after = 50 * (m + 1)

    iterations = 0
    if n_art:
        phase1_cost = np.zeros(K.shape[1])
        phase1_cost[base:] = 1.0
        status, basis, at_upper, y, duals, iterations, _ = _simplex(
            K, rhs, phase1_cost, upper, basis, at_upper, max_iter, tol, bland_after, iterations)
        if status == Status.ITER_LIMIT:
            logger.warning("LP phase 1 hit the iteration limit (%d)", max_iter)
            return SolveStatus(Status.ITER_LIMIT, iterations=iterations)
        infeasibility = float(np.sum(y[base:]))
        if infeasibility > 1e-8 * (1.0 + float(np.max(np.abs(rhs)))):
            return SolveStatus(Status.INFEASIBLE, iterations=iterations, certificate=duals)
        upper[base:] = 0.0

    status, basis, at_upper, y, duals, iterations, ray = _simplex(
        K, rhs, cost, upper, basis, at_upper, max_iter, tol, bland_after, iterations)
    if status == Status.ITER_LIMIT:
        logger.warning("LP phase 2 hit the iteration limit (%d)", max_iter)
        return SolveStatus(Status.ITER_LIMIT, iterations=iterations)
    if status == Status.UNBOUNDED:
        return SolveStatus(Status.UNBOUNDED, iterations=iterations, certificate=M @ ray[:ny])

    x = shift + M @ y[:ny]
    mu = -duals[:m_ub]
    nu = -duals[m_ub:]
    z_lo, z_hi = _bound_multipliers(columns, cost - K.T @ duals, basis, at_upper, n)
    slack = p.b - p.A @ x
    active = tuple(int(i) for i in np.flatnonzero(slack <= 1e-8 * (1.0 + np.abs(p.b))))
    return SolveStatus(
        Status.OPTIMAL, x=x, objective=float(p.cost @ x), active=active,
        multipliers={"ineq": mu, "eq": nu, "lower": z_lo, "upper": z_hi},
        iterations=iterations,
    )


def _bound_multipliers(columns: List[Tuple[int, float, float]], reduced: np.ndarray,
                       basis: List[int], at_upper: np.ndarray, n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Bound multipliers of x from the reduced costs of nonbasic y columns.

    A column at y = 0 holds x at lo (sign +1) or at hi (sign -1); a column at
    its finite upper holds x at hi. Basic columns and both halves of a split
    free variable carry no bound multiplier.
    """
    z_lo, z_hi = np.zeros(n), np.zeros(n)
    owners = [j for j, _, _ in columns]
    split = {j for j in owners if owners.count(j) == 2}
    is_basic = np.zeros(len(reduced), dtype=bool)
    is_basic[basis] = True
    for k, (j, sign, upper) in enumerate(columns):
        if is_basic[k] or j in split:
            continue
        if upper <= 0.0:
            # fixed variable, both bounds active
            z_lo[j], z_hi[j] = max(reduced[k], 0.0), max(-reduced[k], 0.0)
        elif at_upper[k]:
            z_hi[j] = -reduced[k]
        elif sign > 0:
            z_lo[j] = reduced[k]
        else:
            z_hi[j] = reduced[k]
    return z_lo, z_hi


# ---------------------------------------------------------------------------
# Active-set QP
# ---------------------------------------------------------------------------

def _independent_rows(rows: np.ndarray, candidates: List[int], seed: Optional[np.ndarray] = None) -> List[int]:
    """Greedy pick of candidate rows that keep the stacked matrix full row rank"""
    basis = [] if seed is None else [v for v in seed]
    kept = []
    for i in candidates:
        a = rows[i]
        residual = a.copy()
        for q in basis:
            residual -= (q @ residual) * q
        norm = np.linalg.norm(residual)
        if norm > 1e-10 * max(1.0, np.linalg.norm(a)):
            basis.append(residual / norm)
            kept.append(i)
    return kept


def _feasible(p: QpProblem, x: np.ndarray, tol: float) -> bool:
    """Constraint violations within tol relative to each row's own scale at x"""
    scale_x = np.linalg.norm(x)
    if p.A.shape[0]:
        room = tol * (np.abs(p.b) + np.linalg.norm(p.A, axis=1) * scale_x)
        if np.any(p.A @ x - p.b > room):
            return False
    if p.Aeq.shape[0]:
        room = tol * (np.abs(p.beq) + np.linalg.norm(p.Aeq, axis=1) * scale_x)
        if np.any(np.abs(p.Aeq @ x - p.beq) > room):
            return False
    return True


def _active_set(p: QpProblem, x: np.ndarray, iterations: int, tol: float, max_iter: int) -> SolveStatus:
    """Primal active-set iterations from a feasible point.

    Every test is relative to the scale of the gradient, the step or the
    constraint row, so a problem with tiny data (a state near the origin)
    takes the same path as its rescaled copy. After a step that does not
    move, drops and adds go to the lowest eligible index.
    """
    n = p.n
    H, g = p.hessian, p.linear
    A, b = p.A, p.b
    eq_rows = _independent_rows(p.Aeq, list(range(p.Aeq.shape[0])))
    E = p.Aeq[eq_rows]
    eq_basis = []
    for i in range(E.shape[0]):
        v = E[i].copy()
        for q in eq_basis:
            v -= (q @ v) * q
        eq_basis.append(v / np.linalg.norm(v))

    row_norms = np.linalg.norm(A, axis=1)
    slack = b - A @ x
    near = np.flatnonzero(slack <= NEAR_TOL * (np.abs(b) + row_norms * np.linalg.norm(x)))
    working = sorted(_independent_rows(A, [int(i) for i in near], eq_basis))

    scale = max(1.0, float(np.max(np.abs(H)))) if n else 1.0
    floor = CURVATURE_FLOOR * scale
    status = Status.ITER_LIMIT
    lam = np.zeros(0)
    at_minimizer = False
    degenerate = False
    for _ in range(max_iter):
        iterations += 1
        grad = H @ x + g
        grad_scale = np.linalg.norm(H @ x) + np.linalg.norm(g)
        C = np.vstack([E, A[working]]) if working else E
        k = C.shape[0]
        if k:
            Qf, _ = np.linalg.qr(C.T, mode="complete")
            Z = Qf[:, k:]
        else:
            Z = np.eye(n)

        unbounded_direction = False
        step = np.zeros(n)
        if not at_minimizer and Z.shape[1]:
            rz = Z.T @ grad
            curv, V = np.linalg.eigh(Z.T @ H @ Z)
            flat = curv <= floor
            flat_part = V[:, flat] @ (V[:, flat].T @ rz)
            if np.linalg.norm(flat_part) > tol * grad_scale:
                step = -Z @ flat_part
                unbounded_direction = True
            else:
                Vc = V[:, ~flat]
                step = -Z @ (Vc @ ((Vc.T @ rz) / curv[~flat]))

        if not unbounded_direction and (at_minimizer or np.linalg.norm(step) <= STEP_TOL * np.linalg.norm(x)):
            lam = np.linalg.lstsq(C.T, -grad, rcond=None)[0] if k else np.zeros(0)
            lam_ineq = lam[E.shape[0]:]
            negative = np.flatnonzero(lam_ineq < -tol * grad_scale)
            if negative.size == 0:
                status = Status.OPTIMAL
                break
            drop = negative[0] if degenerate else negative[np.argmin(lam_ineq[negative])]
            working.pop(int(drop))
            at_minimizer = False
            continue

        Ap = A @ step
        slack = np.maximum(b - A @ x, 0.0)
        alpha = np.inf if unbounded_direction else 1.0
        blocking = None
        in_working = np.zeros(A.shape[0], dtype=bool)
        in_working[working] = True
        step_norm = np.linalg.norm(step)
        candidates = np.flatnonzero(~in_working & (Ap > PIVOT_TOL * row_norms * step_norm))
        if candidates.size:
            ratios = slack[candidates] / Ap[candidates]
            best = float(ratios.min())
            if best < alpha:
                alpha = best
                blocking = int(candidates[np.flatnonzero(ratios <= best * (1.0 + 1e-12) + 1e-15)[0]])
        if not np.isfinite(alpha):
            return SolveStatus(Status.UNBOUNDED, iterations=iterations, certificate=step)
        x = x + alpha * step
        if blocking is not None:
            working.append(blocking)
            working.sort()
            degenerate = alpha * step_norm <= STEP_TOL * np.linalg.norm(x)
            at_minimizer = False
        else:
            degenerate = False
            at_minimizer = True

    if status != Status.OPTIMAL:
        logger.warning("QP active-set loop hit the iteration limit (%d)", max_iter)
        return SolveStatus(Status.ITER_LIMIT, iterations=iterations)

    mu = np.zeros(A.shape[0])
    mu[working] = np.maximum(lam[E.shape[0]:], 0.0)
    nu = np.zeros(p.Aeq.shape[0])
    nu[eq_rows] = lam[:E.shape[0]]
    return SolveStatus(Status.OPTIMAL, x=x, objective=p.objective(x), active=tuple(working),
                       multipliers={"ineq": mu, "eq": nu}, iterations=iterations)


def solve_qp(p: QpProblem, tol: float = 1e-9, max_iter: int = 5000,
             x0: Optional[np.ndarray] = None) -> SolveStatus:
    """Solve a convex QP with a primal active-set method (null-space steps).

    A feasible `x0` skips the LP phase 1; if that warm start runs out of
    iterations the solve is repeated from the phase-1 point. Reduced
    curvature below the floor is treated as flat; a descent direction along
    it that no constraint blocks makes the problem Unbounded.
    """
    n = p.n
    if x0 is not None:
        x0 = np.asarray(x0, dtype=float).reshape(-1)
        if x0.size == n and _feasible(p, x0, 1e-9):
            result = _active_set(p, x0.copy(), 0, tol, max_iter)
            if result.status != Status.ITER_LIMIT:
                return result
            logger.warning("warm-started QP hit the iteration limit, retrying from a cold start")
    start = solve_lp(LpProblem(np.zeros(n), p.A, p.b, p.Aeq, p.beq), tol=tol)
    if start.status != Status.OPTIMAL:
        return SolveStatus(start.status, iterations=start.iterations, certificate=start.certificate)
    return _active_set(p, start.x, start.iterations, tol, max_iter)


# ---------------------------------------------------------------------------
# Optimality checks
# ---------------------------------------------------------------------------

@dataclass
class KktReport:
    stationarity: float
    primal: float
    dual: float
    complementarity: float
    gap: float
    scale: float

    def ok(self, tol: float = 1e-6) -> bool:
        bound = tol * self.scale
        return max(self.stationarity, self.primal, self.dual, self.complementarity) <= bound


def check_kkt(problem: Union[LpProblem, QpProblem], result: SolveStatus) -> KktReport:
    """Recompute KKT residuals of an Optimal result directly from the problem data"""
    if not result.optimal:
        raise ValueError("KKT check needs an Optimal result")
    x = result.x
    mu = result.multipliers.get("ineq", np.zeros(problem.A.shape[0]))
    nu = result.multipliers.get("eq", np.zeros(problem.Aeq.shape[0]))
    ineq_slack = problem.b - problem.A @ x
    eq_resid = problem.Aeq @ x - problem.beq
    primal = max([0.0] + list(-ineq_slack) + list(np.abs(eq_resid)))
    dual = max([0.0] + list(-mu))
    comp = list(np.abs(mu * ineq_slack))

    if isinstance(problem, QpProblem):
        grad = problem.hessian @ x + problem.linear
        residual = grad + problem.A.T @ mu + problem.Aeq.T @ nu
        lagrangian_dual = None
    else:
        grad = problem.cost
        z_lo = result.multipliers.get("lower", np.zeros(problem.n))
        z_hi = result.multipliers.get("upper", np.zeros(problem.n))
        residual = grad + problem.A.T @ mu + problem.Aeq.T @ nu - z_lo + z_hi
        finite_lo, finite_hi = np.isfinite(problem.lo), np.isfinite(problem.hi)
        primal = max([primal] + list(problem.lo[finite_lo] - x[finite_lo]) + list(x[finite_hi] - problem.hi[finite_hi]))
        dual = max([dual] + list(-z_lo) + list(-z_hi))
        # multipliers on infinite bounds must vanish
        dual = max([dual] + list(z_lo[~finite_lo]) + list(z_hi[~finite_hi]))
        comp += list(np.abs(z_lo[finite_lo] * (x[finite_lo] - problem.lo[finite_lo])))
        comp += list(np.abs(z_hi[finite_hi] * (problem.hi[finite_hi] - x[finite_hi])))
        lagrangian_dual = (-problem.b @ mu - problem.beq @ nu
                           + z_lo[finite_lo] @ problem.lo[finite_lo] - z_hi[finite_hi] @ problem.hi[finite_hi])

    objective = result.objective
    gap = 0.0 if lagrangian_dual is None else abs(objective - lagrangian_dual)
    scale = 1.0 + max(float(np.max(np.abs(grad))) if grad.size else 0.0, abs(objective))
    return KktReport(
        stationarity=float(np.max(np.abs(residual))) if residual.size else 0.0,
        primal=float(primal), dual=float(dual),
        complementarity=float(max(comp)) if comp else 0.0,
        gap=float(gap), scale=scale,
    )
