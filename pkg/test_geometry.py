#!/usr/bin/env python3
"""
Tests for polytope representations and set operations
"""

import itertools

import numpy as np
import pytest

from errors import DegenerateSet, EmptySet, UnboundedSet, Unsupported
from geometry import (HPolytope, VPolytope, bounding_box, chebyshev_center, contains, contains_points,
                      contains_set, hrep_from_vrep, intersect, linear_preimage, minkowski_sum, project,
                      remove_redundant, sample, scale, support, vrep_from_hrep)

UNIT_BOX = HPolytope.box([-1.0, -1.0], [1.0, 1.0])


def _vertex_set(V: VPolytope):
    return {tuple(np.round(v, 8) + 0.0) for v in V.vertices.T}


def _same_set(P: HPolytope, Q: HPolytope, tol: float = 1e-7) -> bool:
    return contains_set(P, Q, tol) and contains_set(Q, P, tol)


def test_box_construction_and_normalization():
    P = HPolytope([[2.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -3.0]], [2.0, 1.0, 1.0, 3.0])
    assert P.dim == 2 and P.rows == 4
    assert np.allclose(np.linalg.norm(P.H, axis=1), 1.0)
    assert _same_set(P, UNIT_BOX)


def test_construction_errors():
    with pytest.raises(EmptySet):
        HPolytope([[1.0], [-1.0]], [-1.0, -1.0])
    with pytest.raises(UnboundedSet):
        HPolytope([[1.0, 0.0], [-1.0, 0.0]], [1.0, 1.0])
    with pytest.raises(DegenerateSet):
        HPolytope([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]], [0.0, 0.0, 1.0, 1.0])


def test_vertices_of_box_simplex_and_cut_box():
    assert _vertex_set(vrep_from_hrep(UNIT_BOX)) == {(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)}

    simplex = HPolytope([[-1.0, 0.0], [0.0, -1.0], [1.0, 1.0]], [0.0, 0.0, 1.0])
    assert _vertex_set(vrep_from_hrep(simplex)) == {(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)}

    cut = intersect(UNIT_BOX, HPolytope._raw(np.array([[1.0, 1.0]]) / np.sqrt(2), np.array([1.5 / np.sqrt(2)])))
    V = vrep_from_hrep(cut)
    # brute force over all pairs of rows
    H, h = cut.H, cut.h
    expected = set()
    for i, j in itertools.combinations(range(H.shape[0]), 2):
        M = H[[i, j]]
        if abs(np.linalg.det(M)) < 1e-12:
            continue
        x = np.linalg.solve(M, h[[i, j]])
        if np.all(H @ x <= h + 1e-9):
            expected.add(tuple(np.round(x, 8) + 0.0))
    assert V.count == 5
    assert _vertex_set(V) == expected
    assert V.verify()


def test_two_dimensional_vertices_are_counterclockwise():
    V = vrep_from_hrep(UNIT_BOX).vertices.T
    edges = np.roll(V, -1, axis=0) - V
    cross = edges[:, 0] * np.roll(edges, -1, axis=0)[:, 1] - edges[:, 1] * np.roll(edges, -1, axis=0)[:, 0]
    assert np.all(cross > 0)


def test_hrep_from_vrep_round_trip_and_degenerate():
    P = hrep_from_vrep(VPolytope(np.array([[1, -1, -1, 1], [1, 1, -1, -1]], dtype=float)))
    assert P.rows == 4
    assert _same_set(P, UNIT_BOX)
    with pytest.raises(DegenerateSet):
        hrep_from_vrep(VPolytope(np.array([[0.5], [0.5]])))
    with pytest.raises(DegenerateSet):
        hrep_from_vrep(VPolytope(np.array([[0.0, 1.0, 2.0], [0.0, 1.0, 2.0]])))

    cut = intersect(UNIT_BOX, HPolytope([[1.0, 1.0], [-1.0, 0.0], [0.0, -1.0]], [1.5, 1.0, 1.0]))
    again = hrep_from_vrep(vrep_from_hrep(cut))
    assert again.rows == 5
    assert _same_set(again, cut)


def test_round_trip_random_2d_and_3d(rng):
    for d in (2, 3):
        for _ in range(5):
            points = rng.standard_normal((12, d))
            P = hrep_from_vrep(VPolytope(points.T))
            again = hrep_from_vrep(vrep_from_hrep(P))
            assert _same_set(P, again)
            assert np.all(contains_points(P, points, 1e-9))


def test_vertex_enumeration_limited_to_three_dimensions():
    with pytest.raises(Unsupported):
        vrep_from_hrep(HPolytope.box(-np.ones(4), np.ones(4)))


def test_projection_examples():
    P = HPolytope([[1, 0], [-1, 0], [0, 1], [0, -1], [1, 1]], [1, 1, 1, 1, 0.5])
    shadow = project(P, 1)
    assert support(shadow, [1.0]) == pytest.approx(1.0, abs=1e-9)
    assert support(shadow, [-1.0]) == pytest.approx(1.0, abs=1e-9)

    independent = HPolytope.box([-2.0, -1.0], [3.0, 1.0])
    assert _same_set(project(independent, 1), HPolytope.box([-2.0], [3.0]))

    band = HPolytope([[0, 1], [0, -1], [1, -1], [-1, 1]], [1, 1, 0.2, 0.2])
    assert _same_set(project(band, 1), HPolytope.box([-1.2], [1.2]))


def test_projection_matches_vertex_shadow(rng):
    for _ in range(5):
        points = rng.standard_normal((10, 3))
        P = hrep_from_vrep(VPolytope(points.T))
        shadow = project(P, 2)
        hull = hrep_from_vrep(VPolytope(vrep_from_hrep(P).vertices[:2]))
        assert _same_set(HPolytope(shadow.H, shadow.h), hull, 1e-6)


def test_remove_redundant():
    dup = HPolytope._raw(np.vstack([UNIT_BOX.H, UNIT_BOX.H[:1]]), np.concatenate([UNIT_BOX.h, UNIT_BOX.h[:1]]))
    assert remove_redundant(dup).rows == 4
    dominated = HPolytope._raw(np.vstack([UNIT_BOX.H, [[1.0, 0.0]]]), np.concatenate([UNIT_BOX.h, [2.0]]))
    assert remove_redundant(dominated).rows == 4

    theta = np.linspace(0, 2 * np.pi, 100, endpoint=False)
    disc = HPolytope._raw(np.column_stack([np.cos(theta), np.sin(theta)]), np.ones(100))
    assert remove_redundant(disc).rows == 100


def test_remove_redundant_keeps_membership(rng):
    H = rng.standard_normal((30, 2))
    P = HPolytope(H, np.ones(30) + rng.uniform(0, 1, 30))
    reduced = remove_redundant(P)
    points = rng.uniform(-3, 3, (1000, 2))
    assert np.array_equal(contains_points(P, points), contains_points(reduced, points))


def test_membership_scaling_and_inclusion(rng):
    assert contains(UNIT_BOX, [0.0, 0.0])
    assert not contains(UNIT_BOX, [1.1, 0.0])
    half = scale(UNIT_BOX, 0.5)
    assert _same_set(half, HPolytope.box([-0.5, -0.5], [0.5, 0.5]))
    assert contains_set(UNIT_BOX, half)
    assert not contains_set(half, UNIT_BOX)

    P = hrep_from_vrep(VPolytope(rng.standard_normal((2, 9)) + 0.0))
    center, _ = chebyshev_center(P)
    P0 = HPolytope(P.H, P.h - P.H @ center)
    points = rng.uniform(-3, 3, (500, 2))
    for s in (0.3, 1.7):
        assert np.array_equal(contains_points(scale(P0, s), points), contains_points(P0, points / s))

    with pytest.raises(Unsupported):
        scale(HPolytope.box([0.0, 0.0], [1.0, 1.0]), 2.0)


def test_chebyshev_center_and_bounding_box():
    center, radius = chebyshev_center(HPolytope.box([0.0, 0.0], [4.0, 2.0]))
    assert radius == pytest.approx(1.0, abs=1e-9)
    assert center[1] == pytest.approx(1.0, abs=1e-9)
    lower, upper = bounding_box(HPolytope([[-1.0, 0.0], [0.0, -1.0], [1.0, 1.0]], [0.0, 0.0, 1.0]))
    assert np.allclose(lower, [0.0, 0.0], atol=1e-9)
    assert np.allclose(upper, [1.0, 1.0], atol=1e-9)


def test_minkowski_sum_and_preimage():
    total = minkowski_sum(UNIT_BOX, scale(UNIT_BOX, 0.5))
    assert _same_set(total, HPolytope.box([-1.5, -1.5], [1.5, 1.5]))
    M = np.array([[2.0, 0.0], [0.0, 0.5]])
    pre = linear_preimage(UNIT_BOX, M)
    assert _same_set(pre, HPolytope.box([-0.5, -2.0], [0.5, 2.0]))


def test_sampling_modes():
    inner = sample(UNIT_BOX, "interior-uniform-rejection", 200, seed=3)
    assert inner.shape == (200, 2)
    assert np.all(contains_points(UNIT_BOX, inner))

    near = sample(UNIT_BOX, "boundary-near", 200, seed=3)
    reach = np.max(np.abs(near), axis=1)
    assert np.all(reach >= 0.95 - 1e-12) and np.all(reach <= 0.999 + 1e-12)

    corners = sample(UNIT_BOX, "vertices", 4, seed=3)
    assert np.allclose(np.abs(corners), 1.0)
    assert np.array_equal(sample(UNIT_BOX, "boundary-near", 5, seed=9), sample(UNIT_BOX, "boundary-near", 5, seed=9))
    with pytest.raises(ValueError):
        sample(UNIT_BOX, "grid", 3)


def test_serialization_round_trip():
    V = vrep_from_hrep(UNIT_BOX)
    assert np.array_equal(VPolytope.from_dict(V.to_dict()).vertices, V.vertices)
    P = HPolytope.from_dict(UNIT_BOX.to_dict())
    assert np.array_equal(P.H, UNIT_BOX.H) and np.array_equal(P.h, UNIT_BOX.h)
