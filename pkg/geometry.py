#!/usr/bin/env python3
"""
Polytope computations for constraint and level sets
H/V representations, Fourier-Motzkin projection, redundancy removal, membership and sampling
"""

import itertools
import logging
from typing import Optional, Dict, Any, Tuple, List

import numpy as np

from errors import EmptySet, UnboundedSet, DegenerateSet, Unsupported, IterLimit, DimensionMismatch
from solvers import LpProblem, Status, solve_lp

logger = logging.getLogger(__name__)

TOL = 1e-9
ZERO_ROW = 1e-12
CHEBYSHEV_CAP = 1e6
SAMPLE_MODES = ("interior-uniform-rejection", "boundary-near", "vertices")


# ---------------------------------------------------------------------------
# Row bookkeeping
# ---------------------------------------------------------------------------

def _normalize(H: np.ndarray, h: np.ndarray, tol: float = TOL) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Scale rows to unit norm; drop 0 ≤ c rows. Returns (H, h, kept indices)."""
    norms = np.linalg.norm(H, axis=1)
    zero = norms <= ZERO_ROW
    if np.any(h[zero] < -tol):
        raise EmptySet("constraint 0 ≤ c with c < 0")
    kept = np.flatnonzero(~zero)
    return H[kept] / norms[kept, None], h[kept] / norms[kept], kept


def _dedupe(H: np.ndarray, h: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Merge rows with the same normal, keeping the tightest offset"""
    if H.shape[0] == 0:
        return H, h, np.arange(0)
    keys = np.round(H, 9) + 0.0
    _, first, inverse = np.unique(keys, axis=0, return_index=True, return_inverse=True)
    inverse = inverse.reshape(-1)
    best = np.full(first.size, -1)
    for row, group in enumerate(inverse):
        if best[group] < 0 or h[row] < h[best[group]]:
            best[group] = row
    return H[best], h[best], best


def _support(H: np.ndarray, h: np.ndarray, c: np.ndarray, tol: float = TOL) -> Tuple[float, Optional[np.ndarray]]:
    """max cᵀx over {Hx ≤ h}, solved in dual form (d equality rows).

    Returns (+inf, None) when the maximum is unbounded.
    """
    q = H.shape[0]
    if q == 0:
        return (0.0, np.zeros(c.size)) if not np.any(c) else (np.inf, None)
    result = solve_lp(LpProblem(h, Aeq=H.T, beq=c, lo=np.zeros(q)), tol=tol)
    if result.status == Status.OPTIMAL:
        return result.objective, -result.multipliers["eq"]
    if result.status == Status.INFEASIBLE:
        return np.inf, None
    if result.status == Status.UNBOUNDED:
        raise EmptySet("polyhedron is empty")
    raise IterLimit("support LP hit the iteration limit")


def _prune(H: np.ndarray, h: np.ndarray, tol: float = TOL) -> np.ndarray:
    """Indices of irredundant rows, tested one at a time against the remaining rows"""
    q = H.shape[0]
    keep = np.ones(q, dtype=bool)
    for i in range(q):
        others = keep.copy()
        others[i] = False
        if not others.any():
            continue
        value, _ = _support(H[others], h[others], H[i], tol)
        if value <= h[i] + tol:
            keep[i] = False
    return np.flatnonzero(keep)


def _chebyshev(H: np.ndarray, h: np.ndarray) -> Tuple[np.ndarray, float]:
    d = H.shape[1]
    lifted = np.vstack([np.hstack([H, np.ones((H.shape[0], 1))]),
                        np.hstack([np.zeros((1, d)), np.ones((1, 1))])])
    offsets = np.concatenate([h, [CHEBYSHEV_CAP]])
    value, point = _support(lifted, offsets, np.eye(d + 1)[d])
    if point is None:
        raise UnboundedSet("Chebyshev ball is unbounded")
    return point[:d], float(value)


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------

class HPolytope:
    """Compact convex polytope {x | Hx ≤ h} with unit-norm, duplicate-free rows"""

    def __init__(self, H, h, validate: bool = True, tol: float = TOL):
        H = np.asarray(H, dtype=float)
        h = np.asarray(h, dtype=float).reshape(-1)
        if H.ndim != 2 or H.shape[0] != h.size:
            raise DimensionMismatch(f"H has shape {H.shape} but h has {h.size} entries")
        H, h, _ = _normalize(H, h, tol)
        H, h, _ = _dedupe(H, h)
        self._set(H, h)
        if validate:
            self._validate(tol)

    @classmethod
    def _raw(cls, H: np.ndarray, h: np.ndarray) -> "HPolytope":
        """Wrap already normalized rows without any checks"""
        obj = cls.__new__(cls)
        obj._set(np.asarray(H, dtype=float), np.asarray(h, dtype=float))
        return obj

    def _set(self, H: np.ndarray, h: np.ndarray):
        self.H = np.array(H)
        self.h = np.array(h)
        self.H.setflags(write=False)
        self.h.setflags(write=False)

    def _validate(self, tol: float):
        if self.H.shape[0] == 0:
            raise UnboundedSet("no constraints")
        _, radius = _chebyshev(self.H, self.h)
        if radius < -tol:
            raise EmptySet("no point satisfies all constraints")
        if radius <= tol:
            raise DegenerateSet("set has no interior")
        for i in range(self.dim):
            for sign in (1.0, -1.0):
                value, _ = _support(self.H, self.h, sign * np.eye(self.dim)[i], tol)
                if not np.isfinite(value):
                    raise UnboundedSet(f"unbounded along coordinate {i}")

    @classmethod
    def box(cls, lower, upper) -> "HPolytope":
        lower = np.asarray(lower, dtype=float).reshape(-1)
        upper = np.asarray(upper, dtype=float).reshape(-1)
        eye = np.eye(lower.size)
        return cls(np.vstack([eye, -eye]), np.concatenate([upper, -lower]))

    @property
    def dim(self) -> int:
        return self.H.shape[1]

    @property
    def rows(self) -> int:
        return self.H.shape[0]

    def to_dict(self) -> Dict[str, Any]:
        return {"type": "hpolytope", "dim": self.dim, "H": self.H.tolist(), "h": self.h.tolist()}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "HPolytope":
        dim = int(data["dim"])
        H = np.asarray(data["H"], dtype=float).reshape(-1, dim)
        return cls._raw(H, np.asarray(data["h"], dtype=float))

    def __repr__(self):
        return f"HPolytope(dim={self.dim}, rows={self.rows})"


class VPolytope:
    """Polytope given by its vertices, one per column"""

    def __init__(self, vertices):
        vertices = np.array(vertices, dtype=float)
        if vertices.ndim != 2:
            raise DimensionMismatch("vertices must be a d×v matrix")
        self.vertices = vertices
        self.vertices.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.vertices.shape[0]

    @property
    def count(self) -> int:
        return self.vertices.shape[1]

    def verify(self, tol: float = TOL) -> bool:
        """True when no column lies in the convex hull of the others"""
        v = self.count
        if v <= 1:
            return True
        for j in range(v):
            others = np.delete(self.vertices, j, axis=1)
            aeq = np.vstack([others, np.ones((1, v - 1))])
            beq = np.concatenate([self.vertices[:, j], [1.0]])
            result = solve_lp(LpProblem(np.zeros(v - 1), Aeq=aeq, beq=beq, lo=np.zeros(v - 1)), tol=tol)
            if result.status == Status.OPTIMAL:
                return False
        return True

    def to_dict(self) -> Dict[str, Any]:
        return {"type": "vpolytope", "dim": self.dim, "vertices": self.vertices.T.tolist()}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "VPolytope":
        dim = int(data["dim"])
        return cls(np.asarray(data["vertices"], dtype=float).reshape(-1, dim).T)

    def __repr__(self):
        return f"VPolytope(dim={self.dim}, vertices={self.count})"


# ---------------------------------------------------------------------------
# Conversions
# ---------------------------------------------------------------------------

def _counterclockwise(points: np.ndarray) -> np.ndarray:
    centroid = points.mean(axis=0)
    angles = np.arctan2(points[:, 1] - centroid[1], points[:, 0] - centroid[0])
    return points[np.argsort(angles, kind="stable")]


def vrep_from_hrep(P: HPolytope, tol: float = TOL) -> VPolytope:
    """All vertices by solving every d-subset of rows; 2-D results are counterclockwise"""
    d = P.dim
    H, h = P.H, P.h
    if d > 3:
        raise Unsupported(f"vertex enumeration is limited to d ≤ 3 (got {d})")
    if d == 1:
        up, down = H[:, 0] > 0, H[:, 0] < 0
        if not up.any() or not down.any():
            raise UnboundedSet("interval is unbounded")
        upper = float(np.min(h[up] / H[up, 0]))
        lower = float(np.max(h[down] / H[down, 0]))
        if lower > upper + tol:
            raise EmptySet("interval is empty")
        return VPolytope(np.array([[lower, upper]]))

    combos = np.array(list(itertools.combinations(range(H.shape[0]), d)), dtype=int)
    if combos.size == 0:
        raise UnboundedSet("too few constraints for a bounded set")
    systems = H[combos]
    regular = np.abs(np.linalg.det(systems)) > 1e-10
    if not regular.any():
        raise UnboundedSet("no vertex found")
    points = np.linalg.solve(systems[regular], h[combos[regular]][..., None])[..., 0]
    feasible = np.all(points @ H.T <= h + tol, axis=1)
    points = points[feasible]
    if points.shape[0] == 0:
        raise EmptySet("no feasible vertex")
    _, first = np.unique(np.round(points, 8) + 0.0, axis=0, return_index=True)
    points = points[np.sort(first)]
    if d == 2:
        points = _counterclockwise(points)
    else:
        points = points[np.lexsort(points.T[::-1])]
    return VPolytope(points.T)


def _hull_2d(points: np.ndarray, tol: float) -> np.ndarray:
    """Monotone-chain convex hull, counterclockwise, collinear points dropped"""
    ordered = sorted(map(tuple, points))

    def turn(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: List[tuple] = []
    for p in ordered:
        while len(lower) > 1 and turn(lower[-2], lower[-1], p) <= tol:
            lower.pop()
        lower.append(p)
    upper: List[tuple] = []
    for p in reversed(ordered):
        while len(upper) > 1 and turn(upper[-2], upper[-1], p) <= tol:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1])


def hrep_from_vrep(V: VPolytope, tol: float = TOL) -> HPolytope:
    """Facet description of the convex hull of the vertex columns"""
    pts = V.vertices.T
    d = V.dim
    if d > 3:
        raise Unsupported(f"facet enumeration is limited to d ≤ 3 (got {d})")
    if pts.shape[0] < d + 1 or np.linalg.matrix_rank(pts[1:] - pts[0], tol=1e-9) < d:
        raise DegenerateSet("vertex set is not full-dimensional")

    if d == 1:
        return HPolytope(np.array([[1.0], [-1.0]]), np.array([pts.max(), -pts.min()]))

    if d == 2:
        hull = _hull_2d(pts, 1e-12 * max(1.0, float(np.max(np.abs(pts)))) ** 2)
        edges = np.roll(hull, -1, axis=0) - hull
        normals = np.column_stack([edges[:, 1], -edges[:, 0]])
        normals /= np.linalg.norm(normals, axis=1)[:, None]
        offsets = np.einsum("ij,ij->i", normals, hull)
        return HPolytope(normals, offsets)

    rows, offsets = [], []
    for i, j, k in itertools.combinations(range(pts.shape[0]), 3):
        normal = np.cross(pts[j] - pts[i], pts[k] - pts[i])
        norm = np.linalg.norm(normal)
        if norm <= 1e-12:
            continue
        normal /= norm
        offset = normal @ pts[i]
        side = pts @ normal - offset
        if np.all(side <= tol):
            rows.append(normal)
            offsets.append(offset)
        elif np.all(side >= -tol):
            rows.append(-normal)
            offsets.append(-offset)
    H, h, _ = _dedupe(np.array(rows), np.array(offsets))
    return HPolytope(H, h)


# ---------------------------------------------------------------------------
# Set operations
# ---------------------------------------------------------------------------

def remove_redundant(P: HPolytope, tol: float = TOL) -> HPolytope:
    keep = _prune(P.H, P.h, tol)
    return HPolytope._raw(P.H[keep], P.h[keep])


def _clean(H: np.ndarray, h: np.ndarray, ancestors: List[int], tol: float):
    H, h, kept = _normalize(H, h, tol)
    ancestors = [ancestors[i] for i in kept]
    H, h, kept = _dedupe(H, h)
    ancestors = [ancestors[i] for i in kept]
    kept = _prune(H, h, tol)
    return H[kept], h[kept], [ancestors[i] for i in kept]


def project(P: HPolytope, keep: int, tol: float = TOL) -> HPolytope:
    """Shadow of P on its first `keep` coordinates by Fourier-Motzkin elimination.

    Rows combining more than k+1 original rows after k eliminations are
    dropped before the LP redundancy pass.
    """
    if not 0 < keep <= P.dim:
        raise DimensionMismatch(f"cannot keep {keep} of {P.dim} coordinates")
    H, h = np.array(P.H), np.array(P.h)
    ancestors = [1 << i for i in range(H.shape[0])]
    for eliminated, col in enumerate(range(P.dim - 1, keep - 1, -1), start=1):
        a = H[:, col]
        pos = np.flatnonzero(a > ZERO_ROW)
        neg = np.flatnonzero(a < -ZERO_ROW)
        zero = np.flatnonzero(np.abs(a) <= ZERO_ROW)

        Hp, hp = H[pos] / a[pos, None], h[pos] / a[pos]
        Hn, hn = H[neg] / -a[neg, None], h[neg] / -a[neg]
        combined_H = (Hp[:, None, :] + Hn[None, :, :]).reshape(-1, H.shape[1])
        combined_h = (hp[:, None] + hn[None, :]).reshape(-1)
        combined_anc = [ancestors[i] | ancestors[j] for i in pos for j in neg]
        small = np.array([anc.bit_count() <= eliminated + 1 for anc in combined_anc], dtype=bool)

        H = np.vstack([H[zero], combined_H[small]]) if small.size else H[zero]
        h = np.concatenate([h[zero], combined_h[small]]) if small.size else h[zero]
        ancestors = [ancestors[i] for i in zero] + [anc for anc, s in zip(combined_anc, small) if s]
        H = np.delete(H, col, axis=1)
        H, h, ancestors = _clean(H, h, ancestors, tol)
        logger.debug("eliminated coordinate %d: %d rows", col, H.shape[0])
    return HPolytope._raw(H, h)


def intersect(P: HPolytope, Q: HPolytope, tol: float = TOL) -> HPolytope:
    if P.dim != Q.dim:
        raise DimensionMismatch("intersecting polytopes of different dimension")
    H, h, _ = _dedupe(np.vstack([P.H, Q.H]), np.concatenate([P.h, Q.h]))
    keep = _prune(H, h, tol)
    return HPolytope._raw(H[keep], h[keep])


def contains(P: HPolytope, x, tol: float = TOL) -> bool:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != P.dim:
        raise DimensionMismatch(f"point has {x.size} entries, polytope has dimension {P.dim}")
    return bool(np.all(P.H @ x <= P.h + tol))


def contains_points(P: HPolytope, points: np.ndarray, tol: float = TOL) -> np.ndarray:
    """Vectorized membership for points given as rows"""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    return np.all(points @ P.H.T <= P.h + tol, axis=1)


def scale(P: HPolytope, s: float) -> HPolytope:
    if s <= 0:
        raise ValueError("scale factor must be positive")
    if np.any(P.h <= 0):
        raise Unsupported("scaling needs the origin in the interior")
    return HPolytope._raw(P.H, s * P.h)


def contains_set(P: HPolytope, Q: HPolytope, tol: float = TOL) -> bool:
    """Q ⊆ P"""
    for row, offset in zip(P.H, P.h):
        value, _ = _support(Q.H, Q.h, row)
        if value > offset + tol:
            return False
    return True


def support(P: HPolytope, direction) -> float:
    value, _ = _support(P.H, P.h, np.asarray(direction, dtype=float))
    return float(value)


def chebyshev_center(P: HPolytope) -> Tuple[np.ndarray, float]:
    return _chebyshev(P.H, P.h)


def bounding_box(P: HPolytope) -> Tuple[np.ndarray, np.ndarray]:
    eye = np.eye(P.dim)
    upper = np.array([support(P, e) for e in eye])
    lower = -np.array([support(P, -e) for e in eye])
    return lower, upper


def minkowski_sum(P: HPolytope, Q: HPolytope) -> HPolytope:
    """P ⊕ Q through vertex sums and a hull, d ≤ 3"""
    vp = vrep_from_hrep(P).vertices
    vq = vrep_from_hrep(Q).vertices
    sums = (vp[:, :, None] + vq[:, None, :]).reshape(P.dim, -1)
    return hrep_from_vrep(VPolytope(sums))


def linear_preimage(P: HPolytope, M: np.ndarray) -> HPolytope:
    """{x | Mx ∈ P}"""
    M = np.asarray(M, dtype=float)
    return HPolytope(P.H @ M, P.h)


def sample(P: HPolytope, mode: str, count: int, seed: Optional[int] = None,
           rho: Tuple[float, float] = (0.95, 0.999)) -> np.ndarray:
    """Draw `count` points (rows) from P"""
    rng = np.random.default_rng(seed)
    d = P.dim
    if mode == "vertices":
        vertices = vrep_from_hrep(P).vertices.T
        picks = rng.choice(vertices.shape[0], size=count, replace=count > vertices.shape[0])
        return vertices[picks]
    if mode == "boundary-near":
        if np.any(P.h <= 0):
            raise Unsupported("boundary sampling needs the origin in the interior")
        directions = rng.standard_normal((count, d))
        directions /= np.linalg.norm(directions, axis=1)[:, None]
        reach = directions @ P.H.T
        with np.errstate(divide="ignore"):
            limits = np.where(reach > 0, P.h / np.where(reach > 0, reach, 1.0), np.inf)
        boundary = directions * limits.min(axis=1)[:, None]
        return boundary * rng.uniform(rho[0], rho[1], size=(count, 1))
    if mode == "interior-uniform-rejection":
        lower, upper = bounding_box(P)
        accepted: List[np.ndarray] = []
        total = 0
        for _ in range(10000):
            batch = rng.uniform(lower, upper, size=(max(count, 16), d))
            batch = batch[contains_points(P, batch, 0.0)]
            accepted.append(batch)
            total += batch.shape[0]
            if total >= count:
                return np.vstack(accepted)[:count]
        raise IterLimit("rejection sampling did not collect enough points")
    raise ValueError(f"unknown sampling mode '{mode}', expected one of {SAMPLE_MODES}")
