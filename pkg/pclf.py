#!/usr/bin/env python3
"""
Polyhedral control Lyapunov functions
Maximal λ-contractive sets, the decay-rate LP and the certificate constants
"""

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Dict, Any, Tuple

import numpy as np

from errors import (DimensionMismatch, EmptyDoa, EmptySet, NotControlledInvariant, NotStabilizable,
                    OutsideDoa, SingularSector, Unsupported)
from geometry import (HPolytope, VPolytope, chebyshev_center, contains_set, intersect, project,
                      vrep_from_hrep)
from solvers import LpProblem, Status, solve_lp

logger = logging.getLogger(__name__)

DEFAULT_LEVELS = 20
SMALLEST_LEVEL = 1e-3


@dataclass(frozen=True, eq=False)
class LinearSystem:
    """x⁺ = Ax + Bu"""
    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.array(self.A, dtype=float))
        B = np.array(self.B, dtype=float)
        if B.ndim == 1:
            B = B.reshape(-1, 1)
        if A.shape[0] != A.shape[1]:
            raise DimensionMismatch(f"A must be square, got {A.shape}")
        if B.shape[0] != A.shape[0]:
            raise DimensionMismatch(f"B has {B.shape[0]} rows, A has {A.shape[0]}")
        A.setflags(write=False)
        B.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    def step(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        return self.A @ x + self.B @ u

    def is_stabilizable(self) -> bool:
        """Checks that the DARE gain for Q = I, R = I makes A + BK Schur stable"""
        from terminal import solve_dare
        try:
            solve_dare(self, np.eye(self.n), np.eye(self.m))
        except NotStabilizable:
            return False
        return True

    def to_dict(self) -> Dict[str, Any]:
        return {"A": self.A.tolist(), "B": self.B.tolist()}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "LinearSystem":
        return cls(np.asarray(data["A"], dtype=float), np.asarray(data["B"], dtype=float))


@dataclass(frozen=True, eq=False)
class Pclf:
    """V_p(x) = (max Fx)², with 𝒳∞ = {x | Fx ≤ 1}"""
    F: np.ndarray
    lam: float = 0.0
    eps: float = 0.0
    iterations: int = 0
    converged: bool = True

    def __post_init__(self):
        F = np.atleast_2d(np.array(self.F, dtype=float))
        F.setflags(write=False)
        object.__setattr__(self, "F", F)

    @property
    def r(self) -> int:
        return self.F.shape[0]

    @property
    def n(self) -> int:
        return self.F.shape[1]

    @cached_property
    def polytope(self) -> HPolytope:
        norms = np.linalg.norm(self.F, axis=1)
        return HPolytope._raw(self.F / norms[:, None], 1.0 / norms)

    @cached_property
    def vertices(self) -> VPolytope:
        return vrep_from_hrep(self.polytope)

    def check(self, X: HPolytope, tol: float = 1e-9):
        """Boundedness (via the vertices) and {Fx ≤ 1} ⊆ X"""
        if self.vertices.count < self.n + 1:
            raise EmptyDoa("PCLF level set is not full-dimensional")
        if not contains_set(X, self.polytope, tol):
            raise EmptyDoa("PCLF level set leaves the state constraints")

    def to_dict(self) -> Dict[str, Any]:
        return {"type": "pclf", "F": self.F.tolist(), "lam": self.lam, "eps": self.eps,
                "iterations": self.iterations, "converged": self.converged}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Pclf":
        return cls(F=np.asarray(data["F"], dtype=float), lam=float(data["lam"]), eps=float(data["eps"]),
                   iterations=int(data["iterations"]), converged=bool(data["converged"]))


@dataclass(frozen=True)
class LevelEntry:
    level: float
    lambda_star: float
    beta_star: float


@dataclass(frozen=True)
class PclfCertificate:
    """Decay constants of a PCLF and the per-level β*(s) lookup table (ascending levels)"""
    lam: float
    alpha1: float
    alpha2: float
    alpha3: float
    c: float
    beta_star: float
    lambda_q: float
    lambda_r: float
    level_table: Tuple[LevelEntry, ...] = field(default_factory=tuple)

    @property
    def decay_rate(self) -> float:
        """Contraction rate the full set verifiably achieves"""
        if not self.level_table:
            return self.lam
        return max(self.lam, self.level_table[-1].lambda_star)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "type": "certificate", "lam": self.lam, "alpha1": self.alpha1, "alpha2": self.alpha2,
            "alpha3": self.alpha3, "c": self.c, "beta_star": self.beta_star,
            "lambda_q": self.lambda_q, "lambda_r": self.lambda_r,
            "level_table": [[e.level, e.lambda_star, e.beta_star] for e in self.level_table],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "PclfCertificate":
        table = tuple(LevelEntry(float(s), float(l), float(b)) for s, l, b in data["level_table"])
        return cls(lam=float(data["lam"]), alpha1=float(data["alpha1"]), alpha2=float(data["alpha2"]),
                   alpha3=float(data["alpha3"]), c=float(data["c"]), beta_star=float(data["beta_star"]),
                   lambda_q=float(data["lambda_q"]), lambda_r=float(data["lambda_r"]), level_table=table)


def eval_vp_first_order(p: Pclf, x) -> float:
    """max(Fx); rows of a 2-D argument are evaluated separately"""
    x = np.asarray(x, dtype=float)
    if x.ndim == 2:
        return np.max(x @ p.F.T, axis=1)
    return float(np.max(p.F @ x))


def eval_vp(p: Pclf, x) -> float:
    return eval_vp_first_order(p, x) ** 2


def pre_set(sys: LinearSystem, target: HPolytope, U: Optional[HPolytope], lam: float = 1.0) -> HPolytope:
    """{x | ∃u ∈ U: Ax + Bu ∈ lam·target}, possibly unbounded (then with few or no rows)"""
    n, m = sys.n, sys.m
    if m == 0 or U is None:
        rows = HPolytope(target.H @ sys.A, lam * target.h, validate=False)
        return rows
    if U.dim != m:
        raise DimensionMismatch(f"input set has dimension {U.dim}, system has {m} inputs")
    H = np.vstack([np.hstack([target.H @ sys.A, target.H @ sys.B]),
                   np.hstack([np.zeros((U.rows, n)), U.H])])
    h = np.concatenate([lam * target.h, U.h])
    return project(HPolytope(H, h, validate=False), n)


def max_contractive_set(sys: LinearSystem, X: HPolytope, U: Optional[HPolytope], eps: float,
                        max_iter: int = 1000, tol: float = 1e-8, max_rows: int = 512) -> Pclf:
    """Maximal λ-contractive subset of X, λ = 1 - eps, as a PCLF.

    Iterates S_{k+1} = S_k ∩ Pre_λ(S_k) from S_0 = X until S_k ⊆ S_{k+1} within tol.
    """
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    if X.dim != sys.n:
        raise DimensionMismatch(f"state set has dimension {X.dim}, system has {sys.n} states")
    if np.any(X.h <= 0):
        raise EmptyDoa("the origin must be interior to the state constraints")
    lam = 1.0 - eps
    S = X
    converged = False
    iteration = 0
    for iteration in range(1, max_iter + 1):
        try:
            nxt = intersect(S, pre_set(sys, S, U, lam))
        except EmptySet as e:
            raise EmptyDoa(f"iteration {iteration} produced an empty set") from e
        if np.any(nxt.h <= tol) or chebyshev_center(nxt)[1] <= tol:
            raise EmptyDoa(f"iteration {iteration} lost the origin from the interior")
        if not contains_set(S, nxt, 1e-7):
            logger.warning("iterate %d is not contained in its predecessor", iteration)
        done = contains_set(nxt, S, tol)
        S = nxt
        logger.info("contractive set iteration %d: %d rows", iteration, S.rows)
        if done:
            converged = True
            break
        if S.rows > max_rows:
            logger.warning("row count %d exceeds %d, stopping", S.rows, max_rows)
            break
    if not converged:
        logger.warning("contractive set not converged after %d iterations", iteration)
    F = S.H / S.h[:, None]
    return Pclf(F=F, lam=lam, eps=eps, iterations=iteration, converged=converged)


def _origin_weights(X: np.ndarray, tol: float) -> np.ndarray:
    """Convex weights c ≥ 0, 1ᵀc = 1 with Xc = 0"""
    n, v = X.shape
    aeq = np.vstack([X, np.ones((1, v))])
    beq = np.concatenate([np.zeros(n), [1.0]])
    result = solve_lp(LpProblem(np.zeros(v), Aeq=aeq, beq=beq, lo=np.zeros(v)), tol=tol)
    if result.status != Status.OPTIMAL:
        raise NotControlledInvariant("origin is not in the convex hull of the vertices")
    return result.x


def lambda_test(V: VPolytope, sys: LinearSystem, U: Optional[HPolytope],
                tol: float = 1e-9) -> Tuple[float, np.ndarray, np.ndarray]:
    """Smallest λ with AX + BU = XW, W ≥ 0, 1ᵀW = λ1ᵀ and admissible vertex controls.

    The columns of W decouple, so each vertex gets its own LP
    min 1ᵀw s.t. Ax_j + Bu_j = Xw, w ≥ 0, u_j ∈ U. Columns below the common
    λ* are topped up with weights that combine the vertices to the origin.

    Returns (lambda_star, Umat m×v, W v×v).
    """
    X = V.vertices
    n, v = X.shape
    m = sys.m
    if n != sys.n:
        raise DimensionMismatch(f"vertices have dimension {n}, system has {sys.n} states")
    nvar = m + v
    aeq = np.hstack([sys.B, -X])
    a = [np.concatenate([np.zeros(m), np.ones(v)])]
    b = [1.0]
    if m and U is not None:
        a.extend(np.hstack([U.H, np.zeros((U.rows, v))]))
        b.extend(U.h)
    a, b = np.vstack(a), np.asarray(b)
    lo = np.concatenate([np.full(m, -np.inf), np.zeros(v)])
    cost = np.concatenate([np.zeros(m), np.ones(v)])

    Umat = np.zeros((m, v))
    W = np.zeros((v, v))
    for j in range(v):
        result = solve_lp(LpProblem(cost, a, b, aeq, -sys.A @ X[:, j], lo), tol=tol)
        if result.status != Status.OPTIMAL:
            raise NotControlledInvariant(f"decay-rate LP at vertex {j} is {result.status.value}")
        Umat[:, j] = result.x[:m]
        W[:, j] = result.x[m:]
    sums = W.sum(axis=0)
    lam = float(sums.max())
    if lam >= 1.0 - 1e-12:
        raise NotControlledInvariant("polytope is not contractive (λ* = 1)")
    short = lam - sums
    if np.any(short > 0.0):
        W += np.outer(_origin_weights(X, tol), np.maximum(short, 0.0))
    logger.debug("decay-rate LPs over %d vertices: λ* = %.6g", v, lam)
    return max(lam, 0.0), Umat, W


def alpha_bounds(p: Pclf) -> Tuple[float, float]:
    """(α₁, α₂) with α₁‖x‖² ≤ V_p(x) ≤ α₂‖x‖²"""
    alpha2 = float(np.max(np.linalg.norm(p.F, axis=1)) ** 2)
    radius = float(np.max(np.linalg.norm(p.vertices.vertices, axis=0)))
    return 1.0 / radius ** 2, alpha2


def vertex_gain_bound(p: Pclf, sys: LinearSystem, U: Optional[HPolytope]) -> float:
    """max over simplicial sectors of ‖U_h X_h⁻¹‖ for the decay-rate LP vertex controls"""
    V = p.vertices.vertices
    _, Umat, _ = lambda_test(p.vertices, sys, U)
    if sys.n == 1:
        return float(max(np.linalg.norm(Umat[:, j] / V[0, j]) for j in range(V.shape[1])))
    if sys.n != 2:
        raise Unsupported("sector gains need a 1-D or 2-D state")
    v = V.shape[1]
    gain = 0.0
    for h in range(v):
        cols = [h, (h + 1) % v]
        Xh = V[:, cols]
        if abs(np.linalg.det(Xh)) <= 1e-12 * max(1.0, np.linalg.norm(Xh) ** 2):
            raise SingularSector(f"vertices {cols} are collinear with the origin")
        gain = max(gain, float(np.linalg.norm(Umat[:, cols] @ np.linalg.inv(Xh), 2)))
    return gain


def _level_lambda(args) -> float:
    vertices, A, B, U = args
    lam, _, _ = lambda_test(VPolytope(vertices), LinearSystem(A, B), U)
    return lam


def certificate(p: Pclf, sys: LinearSystem, U: Optional[HPolytope], Q: np.ndarray, R: np.ndarray,
                c_override: Optional[float] = None, levels: int = DEFAULT_LEVELS,
                smallest_level: float = SMALLEST_LEVEL, jobs: int = 1) -> PclfCertificate:
    """Certificate constants plus the λ*(s)/β*(s) table over scaled copies of 𝒳∞"""
    lam = p.lam
    alpha1, alpha2 = alpha_bounds(p)
    alpha3 = (1.0 - lam ** 2) * alpha1
    c = float(c_override) if c_override is not None else vertex_gain_bound(p, sys, U)
    lambda_q = float(np.max(np.linalg.eigvalsh(np.atleast_2d(Q))))
    lambda_r = float(np.max(np.linalg.eigvalsh(np.atleast_2d(R)))) if sys.m else 0.0
    numerator = lambda_q + c ** 2 * lambda_r
    beta_star = numerator / alpha3

    scales = np.geomspace(smallest_level, 1.0, levels) if levels > 1 else np.array([1.0])
    tasks = [(s * p.vertices.vertices, sys.A, sys.B, U) for s in scales]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            lambdas = list(pool.map(_level_lambda, tasks))
    else:
        lambdas = [_level_lambda(t) for t in tasks]
    # conservative: λ*(s) nondecreasing in s
    lambdas = np.maximum.accumulate(np.asarray(lambdas))
    table = tuple(LevelEntry(float(s), float(l), float(numerator / (alpha1 * (1.0 - l ** 2))))
                  for s, l in zip(scales, lambdas))
    logger.info("certificate: alpha1=%.4g beta*=%.4g, table %.4g..%.4g",
                alpha1, beta_star, table[0].beta_star, table[-1].beta_star)
    return PclfCertificate(lam=lam, alpha1=alpha1, alpha2=alpha2, alpha3=alpha3, c=c,
                           beta_star=beta_star, lambda_q=lambda_q, lambda_r=lambda_r, level_table=table)


def beta_star_at(cert: PclfCertificate, p: Pclf, x, tol: float = 1e-6) -> float:
    """β*(s) of the smallest tabulated level s ≥ max(Fx)"""
    level = eval_vp_first_order(p, x)
    if level > 1.0 + tol:
        raise OutsideDoa(f"max(Fx) = {level:.6g} exceeds 1")
    for entry in cert.level_table:
        if entry.level >= level:
            return entry.beta_star
    return cert.level_table[-1].beta_star
