#!/usr/bin/env python3
"""
Finite-horizon optimal control problems and the MPC controllers built on them
Dense condensing into QPs; baseline, PCLF-based and dual-mode controllers
"""

import logging
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Optional, Dict, ClassVar

import numpy as np
from scipy.linalg import block_diag

from errors import DimensionMismatch, Infeasible, IterLimit, OutsideDoa
from geometry import HPolytope, contains, contains_set
from pclf import LinearSystem, Pclf, PclfCertificate, beta_star_at, eval_vp_first_order
from solvers import QpProblem, Status, solve_qp
from terminal import TerminalSet

logger = logging.getLogger(__name__)

DOA_TOL = 1e-6
TERMINAL_KINDS = ("polytope", "pclf_cost", "pclf_constraint")


@dataclass(frozen=True, eq=False)
class MpcProblem:
    """Dynamics, horizon, weights and constraints shared by all controllers"""
    sys: LinearSystem
    N: int
    Q: np.ndarray
    R: np.ndarray
    X: HPolytope
    U: HPolytope

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("horizon must be at least 1")
        Q = np.atleast_2d(np.array(self.Q, dtype=float))
        R = np.atleast_2d(np.array(self.R, dtype=float))
        if Q.shape != (self.sys.n, self.sys.n) or R.shape != (self.sys.m, self.sys.m):
            raise DimensionMismatch("weight matrices do not match the system")
        if self.X.dim != self.sys.n or self.U.dim != self.sys.m:
            raise DimensionMismatch("constraint sets do not match the system")
        if np.linalg.eigvalsh(Q)[0] < -1e-10:
            raise ValueError("Q must be positive semidefinite")
        if np.linalg.eigvalsh(R)[0] <= 0:
            raise ValueError("R must be positive definite")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)

    def with_horizon(self, N: int) -> "MpcProblem":
        return replace(self, N=N)

    def stage_cost(self, x: np.ndarray, u: np.ndarray) -> float:
        return float(x @ self.Q @ x + u @ self.R @ u)


@dataclass(frozen=True, eq=False)
class TerminalSpec:
    """Terminal ingredients: a constraint (polytope or {Fx ≤ 1} / {Fx ≤ ξ}) and an optional xᵀPx cost"""
    kind: str
    polytope: Optional[HPolytope] = None
    F: Optional[np.ndarray] = None
    beta: float = 0.0
    P: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in TERMINAL_KINDS:
            raise ValueError(f"unknown terminal kind '{self.kind}'")
        if self.kind == "polytope" and self.polytope is None:
            raise ValueError("polytope terminal needs a polytope")
        if self.kind != "polytope" and self.F is None:
            raise ValueError(f"{self.kind} terminal needs F")
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")

    @classmethod
    def polytope_set(cls, polytope: HPolytope, P: Optional[np.ndarray] = None) -> "TerminalSpec":
        return cls(kind="polytope", polytope=polytope, P=P)

    @classmethod
    def pclf_cost(cls, F: np.ndarray, beta: float) -> "TerminalSpec":
        return cls(kind="pclf_cost", F=F, beta=beta)

    @classmethod
    def pclf_constraint(cls, F: np.ndarray, P: Optional[np.ndarray] = None) -> "TerminalSpec":
        return cls(kind="pclf_constraint", F=F, P=P)

    @property
    def region(self) -> HPolytope:
        if self.kind == "polytope":
            return self.polytope
        norms = np.linalg.norm(self.F, axis=1)
        return HPolytope._raw(self.F / norms[:, None], 1.0 / norms)


@dataclass(frozen=True, eq=False)
class DecaySpec:
    """One-step constraint F(Ax + Bu(0)) ≤ lam·max(Fx)·1"""
    F: np.ndarray
    lam: float


@dataclass(frozen=True, eq=False)
class FhocpSpec:
    problem: MpcProblem
    terminal: TerminalSpec
    decay: Optional[DecaySpec] = None
    check_terminal: bool = True

    def __post_init__(self):
        if self.check_terminal and not contains_set(self.problem.X, self.terminal.region, 1e-7):
            raise ValueError("terminal set is not contained in the state constraints")

    @property
    def sys(self) -> LinearSystem:
        return self.problem.sys

    @property
    def N(self) -> int:
        return self.problem.N

    @property
    def nz(self) -> int:
        return self.problem.N * self.problem.sys.m + (1 if self.terminal.kind == "pclf_cost" else 0)

    @cached_property
    def prediction(self):
        """(Sx, Su) with φ(k) = Sx[k] x + Su[k] u for k = 0..N"""
        sys, N = self.problem.sys, self.problem.N
        n, m = sys.n, sys.m
        Sx = np.zeros((N + 1, n, n))
        Su = np.zeros((N + 1, n, N * m))
        Sx[0] = np.eye(n)
        for k in range(N):
            Sx[k + 1] = sys.A @ Sx[k]
            Su[k + 1] = sys.A @ Su[k]
            Su[k + 1][:, k * m:(k + 1) * m] = sys.B
        return Sx, Su

    @cached_property
    def template(self) -> Dict[str, np.ndarray]:
        """x-independent parts of the condensed QP; offsets are b0 + Bx·x"""
        pb, term = self.problem, self.terminal
        N, n, m = pb.N, pb.sys.n, pb.sys.m
        Sx, Su = self.prediction
        P_N = term.P if term.P is not None else np.zeros((n, n))
        Qbar = block_diag(*([pb.Q] * N + [P_N]))
        Rbar = np.kron(np.eye(N), pb.R)
        Phi_x = Sx.reshape((N + 1) * n, n)
        Phi_u = Su.reshape((N + 1) * n, N * m)

        rows, b0, bx = [], [], []
        for k in range(N):
            block = np.zeros((pb.U.rows, N * m))
            block[:, k * m:(k + 1) * m] = pb.U.H
            rows.append(block)
            b0.append(pb.U.h)
            bx.append(np.zeros((pb.U.rows, n)))
        for k in range(1, N):
            rows.append(pb.X.H @ Su[k])
            b0.append(pb.X.h)
            bx.append(-pb.X.H @ Sx[k])
        if term.kind != "polytope":
            # predicted states stay in 𝒳∞, which keeps the closed loop inside it
            for k in range(1, N):
                rows.append(term.F @ Su[k])
                b0.append(np.ones(term.F.shape[0]))
                bx.append(-term.F @ Sx[k])
        if term.kind == "polytope":
            rows.append(term.polytope.H @ Su[N])
            b0.append(term.polytope.h)
            bx.append(-term.polytope.H @ Sx[N])
        else:
            rows.append(term.F @ Su[N])
            b0.append(np.zeros(term.F.shape[0]) if term.kind == "pclf_cost" else np.ones(term.F.shape[0]))
            bx.append(-term.F @ Sx[N])
        A_u = np.vstack(rows)
        b_0 = np.concatenate(b0)
        B_x = np.vstack(bx)

        if term.kind == "pclf_cost":
            r = term.F.shape[0]
            xi_col = np.zeros((A_u.shape[0], 1))
            xi_col[-r:] = -1.0
            bounds = np.zeros((2, N * m + 1))
            bounds[0, -1], bounds[1, -1] = 1.0, -1.0
            A_u = np.vstack([np.hstack([A_u, xi_col]), bounds])
            b_0 = np.concatenate([b_0, [1.0, 0.0]])
            B_x = np.vstack([B_x, np.zeros((2, n))])

        return {
            "Huu": 2.0 * (Phi_u.T @ Qbar @ Phi_u + Rbar),
            "Hux": 2.0 * Phi_u.T @ Qbar @ Phi_x,
            "Cxx": Phi_x.T @ Qbar @ Phi_x,
            "A": A_u, "b0": b_0, "Bx": B_x,
        }


@dataclass(frozen=True)
class ControlResult:
    inputs: np.ndarray
    states: np.ndarray
    objective: float
    status: Status = Status.OPTIMAL
    xi: Optional[float] = None
    beta: Optional[float] = None
    branch: Optional[str] = None

    @property
    def first_input(self) -> np.ndarray:
        return self.inputs[0]


def condense(spec: FhocpSpec, x, beta: Optional[float] = None) -> QpProblem:
    """QP in the stacked inputs (plus ξ for a PCLF terminal cost) at initial state x"""
    pb, term = spec.problem, spec.terminal
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != pb.sys.n:
        raise DimensionMismatch(f"state has {x.size} entries, system has {pb.sys.n}")
    t = spec.template
    Nm = pb.N * pb.sys.m
    H = np.zeros((spec.nz, spec.nz))
    H[:Nm, :Nm] = t["Huu"]
    g = np.zeros(spec.nz)
    g[:Nm] = t["Hux"] @ x
    if term.kind == "pclf_cost":
        H[-1, -1] = 2.0 * (term.beta if beta is None else beta)
    A = t["A"]
    b = t["b0"] + t["Bx"] @ x
    if spec.decay is not None:
        F = spec.decay.F
        decay_rows = np.zeros((F.shape[0], spec.nz))
        decay_rows[:, :pb.sys.m] = F @ pb.sys.B
        level = float(np.max(F @ x))
        A = np.vstack([A, decay_rows])
        b = np.concatenate([b, spec.decay.lam * level - F @ pb.sys.A @ x])
    return QpProblem(H, g, A, b, constant=float(x @ t["Cxx"] @ x))


def _predict(sys: LinearSystem, x: np.ndarray, inputs: np.ndarray) -> np.ndarray:
    states = [x]
    for u in inputs:
        states.append(sys.A @ states[-1] + sys.B @ u)
    return np.array(states)


def _warm_start(spec: FhocpSpec, x: np.ndarray, previous: Optional[np.ndarray],
                shift: bool = True) -> Optional[np.ndarray]:
    """Previous input sequence shifted by one step (or taken as is), padded with zero"""
    if previous is None:
        return None
    pb = spec.problem
    previous = np.asarray(previous, dtype=float).reshape(-1, pb.sys.m)
    inputs = np.zeros((pb.N, pb.sys.m))
    tail = previous[1:pb.N + 1] if shift else previous[:pb.N]
    inputs[:tail.shape[0]] = tail
    z = inputs.reshape(-1)
    if spec.terminal.kind == "pclf_cost":
        final = _predict(pb.sys, x, inputs)[-1]
        z = np.concatenate([z, [min(max(float(np.max(spec.terminal.F @ final)), 0.0), 1.0)]])
    return z


def solve_fhocp(spec: FhocpSpec, x, beta: Optional[float] = None,
                warm_start: Optional[np.ndarray] = None, shift: bool = True) -> ControlResult:
    x = np.asarray(x, dtype=float).reshape(-1)
    qp = condense(spec, x, beta)
    result = solve_qp(qp, x0=_warm_start(spec, x, warm_start, shift))
    if result.status == Status.INFEASIBLE:
        raise Infeasible("finite-horizon problem is infeasible at this state")
    if result.status != Status.OPTIMAL:
        logger.warning("QP stopped after %d iterations at x = %s", result.iterations, x)
        raise IterLimit(f"QP ended with status {result.status.value}")
    pb = spec.problem
    Nm = pb.N * pb.sys.m
    inputs = result.x[:Nm].reshape(pb.N, pb.sys.m)
    xi = float(result.x[-1]) if spec.terminal.kind == "pclf_cost" else None
    used_beta = (spec.terminal.beta if beta is None else beta) if spec.terminal.kind == "pclf_cost" else None
    return ControlResult(inputs=inputs, states=_predict(pb.sys, x, inputs), objective=result.objective,
                         status=result.status, xi=xi, beta=used_beta)


def _check_doa(pclf: Pclf, x: np.ndarray):
    level = eval_vp_first_order(pclf, x)
    if level > 1.0 + DOA_TOL:
        raise OutsideDoa(f"max(Fx) = {level:.6g} > 1")


# ---------------------------------------------------------------------------
# Controllers
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class StandardController:
    """Baseline MPC: Riccati terminal cost and polytopic terminal set"""
    name: ClassVar[str] = "standard"
    problem: MpcProblem
    P: np.ndarray
    terminal_polytope: HPolytope

    @cached_property
    def spec(self) -> FhocpSpec:
        return FhocpSpec(self.problem, TerminalSpec.polytope_set(self.terminal_polytope, self.P))

    def solve(self, x, warm_start=None) -> ControlResult:
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.size != self.problem.sys.n:
            raise DimensionMismatch(f"state has {x.size} entries")
        if not contains(self.problem.X, x, 1e-9):
            raise Infeasible("state violates the state constraints")
        return solve_fhocp(self.spec, x, warm_start=warm_start)


@dataclass(frozen=True, eq=False)
class Mpc1Controller:
    """PCLF terminal cost β·(max Fφ(N))² with {Fφ(N) ≤ 1}"""
    name: ClassVar[str] = "mpc1"
    problem: MpcProblem
    pclf: Pclf
    beta: float

    @cached_property
    def spec(self) -> FhocpSpec:
        return FhocpSpec(self.problem, TerminalSpec.pclf_cost(self.pclf.F, self.beta))

    def solve(self, x, warm_start=None) -> ControlResult:
        x = np.asarray(x, dtype=float).reshape(-1)
        _check_doa(self.pclf, x)
        return solve_fhocp(self.spec, x, warm_start=warm_start)


@dataclass(frozen=True, eq=False)
class Mpc1bController:
    """MPC 1 with the state-dependent weight β*(x) from the level table"""
    name: ClassVar[str] = "mpc1b"
    problem: MpcProblem
    pclf: Pclf
    cert: PclfCertificate

    @cached_property
    def spec(self) -> FhocpSpec:
        return FhocpSpec(self.problem, TerminalSpec.pclf_cost(self.pclf.F, self.cert.beta_star))

    def solve(self, x, warm_start=None) -> ControlResult:
        x = np.asarray(x, dtype=float).reshape(-1)
        _check_doa(self.pclf, x)
        beta = beta_star_at(self.cert, self.pclf, x, DOA_TOL)
        return solve_fhocp(self.spec, x, beta=beta, warm_start=warm_start)


@dataclass(frozen=True, eq=False)
class TildeController:
    """Riccati terminal cost with the relaxed terminal constraint {Fφ(N) ≤ 1}"""
    name: ClassVar[str] = "tilde"
    problem: MpcProblem
    pclf: Pclf
    P: np.ndarray
    terminal: Optional[TerminalSet] = None

    @cached_property
    def spec(self) -> FhocpSpec:
        return FhocpSpec(self.problem, TerminalSpec.pclf_constraint(self.pclf.F, self.P))

    def solve(self, x, warm_start=None) -> ControlResult:
        x = np.asarray(x, dtype=float).reshape(-1)
        _check_doa(self.pclf, x)
        return solve_fhocp(self.spec, x, warm_start=warm_start)


@dataclass(frozen=True, eq=False)
class Mpc2Controller:
    """Riccati terminal cost, {Fφ(N) ≤ 1} and the one-step decay constraint"""
    name: ClassVar[str] = "mpc2"
    problem: MpcProblem
    pclf: Pclf
    lam: float
    P: np.ndarray

    @cached_property
    def spec(self) -> FhocpSpec:
        return FhocpSpec(self.problem, TerminalSpec.pclf_constraint(self.pclf.F, self.P),
                         DecaySpec(self.pclf.F, self.lam))

    def solve(self, x, warm_start=None) -> ControlResult:
        x = np.asarray(x, dtype=float).reshape(-1)
        _check_doa(self.pclf, x)
        return solve_fhocp(self.spec, x, warm_start=warm_start)


@dataclass(frozen=True, eq=False)
class Mpc1aController:
    """Dual mode: the tilde solution when its terminal state is in 𝕏_f, MPC 1 otherwise"""
    name: ClassVar[str] = "mpc1a"
    problem: MpcProblem
    pclf: Pclf
    beta: float
    P: np.ndarray
    terminal: TerminalSet

    @cached_property
    def tilde(self) -> TildeController:
        return TildeController(self.problem, self.pclf, self.P, self.terminal)

    @cached_property
    def fallback(self) -> Mpc1Controller:
        return Mpc1Controller(self.problem, self.pclf, self.beta)

    def solve(self, x, warm_start=None) -> ControlResult:
        result = self.tilde.solve(x, warm_start=warm_start)
        if self.terminal.contains(result.states[-1]):
            return replace(result, branch="tilde")
        return replace(self.fallback.solve(x), branch="pclf")


@dataclass(frozen=True, eq=False)
class Mpc2aController:
    """Dual mode MPC 2: the tilde solution when its terminal state is in 𝕏_f, MPC 2 otherwise"""
    name: ClassVar[str] = "mpc2a"
    problem: MpcProblem
    pclf: Pclf
    lam: float
    P: np.ndarray
    terminal: TerminalSet

    @cached_property
    def tilde(self) -> TildeController:
        return TildeController(self.problem, self.pclf, self.P, self.terminal)

    @cached_property
    def fallback(self) -> Mpc2Controller:
        return Mpc2Controller(self.problem, self.pclf, self.lam, self.P)

    def solve(self, x, warm_start=None) -> ControlResult:
        result = self.tilde.solve(x, warm_start=warm_start)
        if self.terminal.contains(result.states[-1]):
            return replace(result, branch="tilde")
        return replace(self.fallback.solve(x, warm_start=warm_start), branch="decay")


# Module-level entry points mirroring the controller classes

def solve_standard(problem: MpcProblem, P: np.ndarray, terminal_polytope: HPolytope, x) -> ControlResult:
    return StandardController(problem, P, terminal_polytope).solve(x)


def solve_mpc1(problem: MpcProblem, pclf: Pclf, beta: float, x) -> ControlResult:
    return Mpc1Controller(problem, pclf, beta).solve(x)


def solve_mpc1b(problem: MpcProblem, pclf: Pclf, cert: PclfCertificate, x) -> ControlResult:
    return Mpc1bController(problem, pclf, cert).solve(x)


def solve_tilde(problem: MpcProblem, pclf: Pclf, P: np.ndarray, x) -> ControlResult:
    return TildeController(problem, pclf, P).solve(x)


def solve_mpc2(problem: MpcProblem, pclf: Pclf, lam: float, P: np.ndarray, x) -> ControlResult:
    return Mpc2Controller(problem, pclf, lam, P).solve(x)


def solve_mpc1a(problem: MpcProblem, pclf: Pclf, cert: PclfCertificate, P: np.ndarray,
                terminal: TerminalSet, x) -> ControlResult:
    return Mpc1aController(problem, pclf, cert.beta_star, P, terminal).solve(x)


def stacked_cost(problem: MpcProblem, result: ControlResult, beta: float = 0.0,
                 pclf: Optional[Pclf] = None, P: Optional[np.ndarray] = None) -> float:
    """Recompute Σℓ + terminal cost of a returned sequence from its predicted states"""
    total = sum(problem.stage_cost(x, u) for x, u in zip(result.states[:-1], result.inputs))
    final = result.states[-1]
    if pclf is not None:
        total += beta * eval_vp_first_order(pclf, final) ** 2
    if P is not None:
        total += float(final @ P @ final)
    return float(total)
