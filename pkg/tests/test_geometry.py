import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from kdrmpc.geometry import (Box, EmptyResult, HPolytope, UnboundedSupport, box_support_rows,
                             contains, contains_many, linear_map_box, minkowski_sum_boxes,
                             pontryagin_diff_box, pontryagin_diff_boxes, support)

finite = st.floats(-5, 5, allow_nan=False)
halfw = st.floats(0, 3, allow_nan=False)


@st.composite
def boxes(draw, n=2):
    c = draw(arrays(float, n, elements=finite))
    w = draw(arrays(float, n, elements=halfw))
    return Box(c, w)


def unit_square():
    return Box(np.zeros(2), np.ones(2)).to_hpolytope()


def vertex_oracle_support(H, h, a):
    """Max of a.x over the vertices of a 2-D polygon, by pairwise row intersection."""
    best = -np.inf
    for i, j in itertools.combinations(range(len(h)), 2):
        M = H[[i, j]]
        if abs(np.linalg.det(M)) < 1e-12:
            continue
        v = np.linalg.solve(M, h[[i, j]])
        if np.all(H @ v <= h + 1e-9):
            best = max(best, float(a @ v))
    return best


class TestConstruction:
    def test_rejects_zero_row(self):
        with pytest.raises(ValueError):
            HPolytope([[1.0, 0.0], [0.0, 0.0]], [1.0, 1.0])

    def test_rejects_bad_h_shape(self):
        with pytest.raises(ValueError):
            HPolytope([[1.0, 0.0]], [1.0, 2.0])

    def test_rejects_negative_halfwidth(self):
        with pytest.raises(ValueError):
            Box([0.0], [-1.0])

    def test_scalar_halfwidth_broadcasts(self):
        assert np.array_equal(Box([0.0, 1.0], 0.5).halfwidth, [0.5, 0.5])

    def test_box_to_hpolytope_is_lossless(self, rng):
        b = Box([0.3, -0.2, 1.0], [0.5, 0.1, 2.0])
        P = b.to_hpolytope()
        assert P.n_rows == 6
        pts = rng.uniform(-4, 4, size=(2000, 3))
        assert np.array_equal(contains_many(b, pts), contains_many(P, pts))

    def test_immutable(self):
        b = Box([0.0], [1.0])
        with pytest.raises(ValueError):
            b.center[0] = 3.0

    def test_empty_detection(self):
        P = HPolytope([[1.0], [-1.0]], [-1.0, 0.0])
        assert P.is_empty()
        assert not unit_square().is_empty()


class TestSupport:
    def test_unit_box(self):
        assert support(Box(np.zeros(2), [1, 1]), [1, 0]) == 1.0

    def test_box_closed_form(self):
        assert support(Box([0.5, 0.0], [0.2, 0.3]), [1, 1]) == pytest.approx(1.0, abs=1e-15)

    def test_polytope_unit_square(self, backend):
        assert support(unit_square(), [1.0, 1.0]) == pytest.approx(2.0, abs=1e-9)

    def test_polytope_matches_vertex_oracle(self, rng, backend):
        for _ in range(20):
            # random polygon containing the origin
            k = rng.integers(3, 8)
            ang = np.sort(rng.uniform(0, 2 * np.pi, size=k))
            H = np.column_stack([np.cos(ang), np.sin(ang)])
            h = rng.uniform(0.5, 2.0, size=k)
            H = np.vstack([H, np.eye(2), -np.eye(2)])
            h = np.concatenate([h, np.full(4, 3.0)])
            a = rng.normal(size=2)
            assert support(HPolytope(H, h), a) == pytest.approx(vertex_oracle_support(H, h, a), abs=1e-7)

    def test_unbounded(self):
        with pytest.raises(UnboundedSupport):
            support(HPolytope([[1.0, 0.0]], [1.0]), [0.0, 1.0])

    def test_empty(self):
        with pytest.raises(EmptyResult):
            support(HPolytope([[1.0], [-1.0]], [-1.0, 0.0]), [1.0])

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            support(Box(np.zeros(2), 1.0), [1.0, 0.0, 0.0])

    def test_rowwise_matches_scalar(self, rng):
        b = Box(rng.normal(size=3), rng.uniform(0, 1, size=3))
        H = rng.normal(size=(5, 3))
        assert np.allclose(box_support_rows(H, b), [support(b, r) for r in H], atol=1e-14)


class TestLinearMap:
    def test_identity(self):
        b = Box([1.0, -2.0], [0.3, 0.4])
        out = linear_map_box(np.eye(2), b)
        assert np.array_equal(out.center, b.center) and np.array_equal(out.halfwidth, b.halfwidth)

    def test_scaling(self):
        out = linear_map_box(2 * np.eye(3), Box(np.zeros(3), 1.0))
        assert np.array_equal(out.halfwidth, [2.0, 2.0, 2.0])

    def test_matches_vertex_bounding_box(self, rng):
        for _ in range(20):
            M = rng.normal(size=(2, 2))
            b = Box(np.zeros(2), np.ones(2))
            img = b.vertices() @ M.T
            out = linear_map_box(M, b)
            assert np.allclose(out.lower, img.min(axis=0), atol=1e-12)
            assert np.allclose(out.upper, img.max(axis=0), atol=1e-12)

    def test_column_mismatch(self):
        with pytest.raises(ValueError):
            linear_map_box(np.eye(3), Box(np.zeros(2), 1.0))


class TestPontryagin:
    def test_singleton_origin(self):
        P = unit_square()
        out = pontryagin_diff_box(P, Box.zero(2))
        assert np.array_equal(out.h, P.h)

    def test_square_minus_box(self):
        out = pontryagin_diff_box(unit_square(), Box(np.zeros(2), 0.2))
        assert np.allclose(out.h, 0.8, atol=1e-15)

    def test_triangle_against_vertex_oracle(self):
        P = HPolytope([[1.0, 1.0], [-1.0, 0.0], [0.0, -1.0]], [1.0, 0.0, 0.0])
        b = Box(np.zeros(2), 0.1)
        out = pontryagin_diff_box(P, b)
        assert np.allclose(P.h - out.h, [0.2, 0.1, 0.1], atol=1e-15)
        g = np.linspace(-0.2, 1.2, 57)
        for x in itertools.product(g, g):
            oracle = all(contains(P, np.asarray(x) + v, tol=0.0) for v in b.vertices())
            got = contains(out, x, tol=0.0)
            # grid points exactly on a boundary are excluded from the comparison
            if np.min(np.abs(out.H @ np.asarray(x) - out.h)) > 1e-12:
                assert got == oracle, x

    def test_empty_flagged(self):
        with pytest.raises(EmptyResult):
            pontryagin_diff_box(unit_square(), Box(np.zeros(2), 1.5))

    def test_box_minus_box_shortfall(self):
        out, short = pontryagin_diff_boxes(Box([0, 0], [1.0, 0.1]), Box([0, 0], [0.3, 0.2]))
        assert np.allclose(out.halfwidth, [0.7, 0.0])
        assert np.allclose(short, [0.0, 0.1])


class TestMinkowskiAndContains:
    def test_sum_with_zero(self):
        a = Box([1.0, 2.0], [0.5, 0.1])
        out = minkowski_sum_boxes(a, Box.zero(2))
        assert np.array_equal(out.center, a.center) and np.array_equal(out.halfwidth, a.halfwidth)

    def test_interval_sum(self):
        out = minkowski_sum_boxes(Box([0.0], [1.0]), Box([0.0], [2.0]))
        assert (out.lower[0], out.upper[0]) == (-3.0, 3.0)

    def test_sum_grid_oracle(self):
        a = Box([0.2, -0.1], [0.5, 0.3])
        b = Box([-0.4, 0.1], [0.2, 0.6])
        s = minkowski_sum_boxes(a, b)
        g = np.linspace(-2, 2, 41)
        for x in itertools.product(g, g):
            x = np.asarray(x)
            # x in a+b iff the interval x - b meets a in every coordinate
            lo = np.maximum(a.lower, x - b.upper)
            hi = np.minimum(a.upper, x - b.lower)
            assert contains(s, x, tol=1e-12) == bool(np.all(lo <= hi + 1e-12))

    def test_contains_tolerance(self):
        unit = Box(np.zeros(2), 1.0)
        assert contains(unit, [0.0, 0.0])
        assert not contains(unit, [1 + 2e-9, 0.0])
        assert contains(unit, [1 + 0.5e-9, 0.0])

    def test_contains_many_matches_direct(self, rng):
        P = HPolytope(rng.normal(size=(6, 3)), rng.uniform(0.5, 1.5, size=6))
        X = rng.normal(size=(500, 3))
        direct = np.array([np.all(P.H @ x <= P.h + 1e-9) for x in X])
        assert np.array_equal(contains_many(P, X), direct)
        assert all(contains(P, x) == d for x, d in zip(X, direct))


@given(boxes(), arrays(float, 2, elements=finite))
def test_width_nonnegative(b, a):
    assert support(b, a) + support(b, -a) >= -1e-12


@given(boxes(), boxes(), arrays(float, 2, elements=finite))
def test_support_additive_under_sum(a, b, d):
    lhs = support(minkowski_sum_boxes(a, b), d)
    assert lhs == pytest.approx(support(a, d) + support(b, d), abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), boxes())
def test_pontryagin_then_sum_stays_inside(seed, b):
    r = np.random.default_rng(seed)
    P = HPolytope(r.normal(size=(5, 2)), r.uniform(2.0, 6.0, size=5))
    try:
        Pm = pontryagin_diff_box(P, Box(np.zeros(2), b.halfwidth))
    except EmptyResult:
        return
    # points of (P - b) + b sampled from a bounding region
    pts = r.uniform(-20, 20, size=(400, 2))
    inner = pts[contains_many(Pm, pts)]
    verts = Box(np.zeros(2), b.halfwidth).vertices()
    for v in verts:
        assert np.all(contains_many(P, inner + v, tol=1e-7))


@given(arrays(float, (2, 2), elements=finite), arrays(float, (2, 2), elements=finite), boxes())
def test_composed_map_is_tighter(M1, M2, b):
    direct = linear_map_box(M1 @ M2, b)
    staged = linear_map_box(M1, linear_map_box(M2, b))
    assert np.all(direct.halfwidth <= staged.halfwidth + 1e-9)
