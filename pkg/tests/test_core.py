import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hdist.core import SQRT3, Aabb, CellIndex, Point3, aabb_of, as_points, cheb_dist, dist, sq_dist

coord = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)
point = st.tuples(coord, coord, coord)


def test_dist_examples():
    assert dist((0, 0, 0), (3, 4, 0)) == 5.0
    assert dist((1, 2, 3), (1, 2, 3)) == 0.0
    assert dist((0, 0, 0), (1, 1, 1)) == pytest.approx(1.7320508, abs=1e-7)
    assert sq_dist((0, 0, 0), (3, 4, 0)) == 25.0


def test_cheb_examples():
    assert cheb_dist((0, 0, 0), (3, 4, 0)) == 4.0
    assert cheb_dist((0, 0, 0), (1, 1, 1)) == 1.0


@given(point, point, point)
def test_metric_axioms(p, q, r):
    assert dist(p, q) >= 0
    assert dist(p, q) == dist(q, p)
    assert dist(p, p) == 0
    lhs, rhs = dist(p, r), dist(p, q) + dist(q, r)
    assert lhs <= rhs * (1 + 1e-12) + 1e-300


@given(point, point)
def test_cheb_euclid_sandwich(p, q):
    c, e = cheb_dist(p, q), dist(p, q)
    assert c <= e * (1 + 1e-12)
    assert e <= SQRT3 * c * (1 + 1e-12)


def test_cheb_euclid_sandwich_1000_pairs():
    rng = np.random.default_rng(7)
    for p, q in rng.normal(scale=100, size=(1000, 2, 3)):
        assert cheb_dist(p, q) <= dist(p, q) <= SQRT3 * cheb_dist(p, q) * (1 + 1e-12)


def test_point3_rejects_non_finite():
    with pytest.raises(ValueError):
        Point3(0.0, math.nan, 1.0)
    with pytest.raises(ValueError):
        Point3(math.inf, 0.0, 1.0)
    assert tuple(Point3(1, 2, 3)) == (1, 2, 3)


def test_aabb_examples():
    box = aabb_of([(0, 0, 0), (10, 2, 0)])
    assert tuple(box.min) == (0, 0, 0) and tuple(box.max) == (10, 2, 0)
    assert box.extent == (10, 2, 0)
    single = aabb_of([(1.5, -2, 3)])
    assert single.min == single.max == Point3(1.5, -2, 3)


def test_aabb_invariant_enforced():
    with pytest.raises(ValueError):
        Aabb(Point3(1, 0, 0), Point3(0, 0, 0))


def test_aabb_contains_random_points():
    pts = np.random.default_rng(3).uniform(-5, 5, size=(500, 3))
    box = aabb_of(pts)
    assert all(box.contains(p) for p in pts)
    assert not box.contains((6, 0, 0))


def test_aabb_of_empty_raises():
    with pytest.raises(ValueError):
        aabb_of(np.empty((0, 3)))


def test_as_points_shape_checks():
    assert as_points([(1, 2, 3)]).shape == (1, 3)
    with pytest.raises(ValueError):
        as_points([(1, 2)])


def test_cell_index_is_integral():
    c = CellIndex(-1, 2, 3)
    assert tuple(c) == (-1, 2, 3)
