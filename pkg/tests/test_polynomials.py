"""Unit tests for polynomial maps: evaluation, interval enclosures, variety
surface-measure estimates, box counts, tangents, and Newton refinement."""

import math

import numpy as np
import pytest

import fracperc as fp
from fracperc.errors import SingularityError
from fracperc.polynomials import (
    polynomial_from_text,
    polynomial_to_text,
    variety_box_count,
    variety_cube_measure,
    variety_tangent,
)


def circle_poly(cx=0.5, cy=0.5, r=0.4):
    # (x - cx)^2 + (y - cy)^2 - r^2 expanded into monomials.
    comp = {
        (2, 0): 1.0,
        (0, 2): 1.0,
        (1, 0): -2 * cx,
        (0, 1): -2 * cy,
        (0, 0): cx * cx + cy * cy - r * r,
    }
    return fp.PolynomialMap(ambient=2, components=(comp,))


def sphere_poly(c=0.5, r=0.4):
    comp = {
        (2, 0, 0): 1.0,
        (0, 2, 0): 1.0,
        (0, 0, 2): 1.0,
        (1, 0, 0): -2 * c,
        (0, 1, 0): -2 * c,
        (0, 0, 1): -2 * c,
        (0, 0, 0): 3 * c * c - r * r,
    }
    return fp.PolynomialMap(ambient=3, components=(comp,))


def test_evaluation_and_jacobian():
    poly = circle_poly()
    x = np.array([0.9, 0.5])
    assert poly(x)[0] == pytest.approx(0.0, abs=1e-12)
    jac = poly.jacobian(x)
    assert jac.shape == (1, 2)
    assert jac[0] == pytest.approx([2 * (0.9 - 0.5), 0.0], abs=1e-12)


def test_interval_encloses_values():
    poly = circle_poly()
    rng = np.random.default_rng(4)
    for _ in range(50):
        lo = rng.uniform(0, 0.8, 2)
        hi = lo + rng.uniform(0.01, 0.2, 2)
        ilo, ihi = poly.interval(lo, hi)
        for _ in range(20):
            x = rng.uniform(lo, hi)
            v = poly(x)[0]
            assert ilo[0] - 1e-12 <= v <= ihi[0] + 1e-12


def test_interval_inclusion_monotone():
    poly = circle_poly()
    lo, hi = np.array([0.2, 0.3]), np.array([0.5, 0.6])
    big = poly.interval(lo - 0.05, hi + 0.05)
    small = poly.interval(lo, hi)
    assert big[0][0] <= small[0][0] + 1e-12
    assert big[1][0] >= small[1][0] - 1e-12


def test_may_vanish():
    poly = circle_poly()
    # Box crossing the circle.
    assert poly.may_vanish(np.array([0.85, 0.45]), np.array([0.95, 0.55]))
    # Small box well inside the circle: provably negative by the enclosure.
    assert not poly.may_vanish(np.array([0.475, 0.475]), np.array([0.525, 0.525]))


def test_circle_length():
    cube = fp.DyadicCube(level=0, index=np.zeros(2, dtype=np.int64))
    est = variety_cube_measure(circle_poly(), cube)
    assert est == pytest.approx(2 * math.pi * 0.4, rel=0.02)


def test_sphere_area():
    cube = fp.DyadicCube(level=0, index=np.zeros(3, dtype=np.int64))
    est = variety_cube_measure(sphere_poly(), cube)
    assert est == pytest.approx(4 * math.pi * 0.16, rel=0.02)


def test_codimension_two_circle_in_space():
    # Intersection of the cylinder x^2 + y^2 = r^2 (recentred) with the plane
    # z = 0.5: a circle of length 2 pi r embedded in R^3.
    r = 0.35
    cyl = {
        (2, 0, 0): 1.0,
        (0, 2, 0): 1.0,
        (1, 0, 0): -1.0,
        (0, 1, 0): -1.0,
        (0, 0, 0): 0.5 - r * r,
    }
    plane = {(0, 0, 1): 1.0, (0, 0, 0): -0.5}
    poly = fp.PolynomialMap(ambient=3, components=(cyl, plane))
    cube = fp.DyadicCube(level=0, index=np.zeros(3, dtype=np.int64))
    est = variety_cube_measure(poly, cube)
    assert est == pytest.approx(2 * math.pi * r, rel=0.03)


def test_measure_additive_over_children():
    poly = circle_poly()
    parent = fp.DyadicCube(level=0, index=np.zeros(2, dtype=np.int64))
    total = variety_cube_measure(poly, parent)
    parts = sum(
        variety_cube_measure(poly, fp.DyadicCube(level=1, index=np.array([i, j])))
        for i in (0, 1)
        for j in (0, 1)
    )
    # Children use a finer smoothing width, so agreement is approximate.
    assert parts == pytest.approx(total, rel=0.03)


def test_with_detail_reports_diagnostics():
    cube = fp.DyadicCube(level=0, index=np.zeros(2, dtype=np.int64))
    res = variety_cube_measure(circle_poly(), cube, with_detail=True)
    assert res.estimate > 0 and res.se > 0
    assert res.epsilon == pytest.approx(1 / 32)
    assert res.min_jacobian > 0.1


def test_singular_point_raises():
    # (x-.5)^2 + (y-.5)^2 vanishes only at its critical point, where the
    # Jacobian degenerates.
    comp = {
        (2, 0): 1.0,
        (0, 2): 1.0,
        (1, 0): -1.0,
        (0, 1): -1.0,
        (0, 0): 0.5,
    }
    poly = fp.PolynomialMap(ambient=2, components=(comp,))
    cube = fp.DyadicCube(level=0, index=np.zeros(2, dtype=np.int64))
    with pytest.raises(SingularityError):
        variety_cube_measure(poly, cube)


def test_box_count_scaling():
    counts = np.asarray(
        variety_box_count(
            circle_poly(),
            fp.DyadicCube(level=0, index=np.zeros(2, dtype=np.int64)),
            levels=7,
        ),
        dtype=float,
    )
    assert np.all(np.diff(counts) > 0)
    # A smooth curve in the plane: counts double per level once the interval
    # enclosures tighten (coarse levels over-count conservatively).
    assert 1.7 < counts[-1] / counts[-2] < 2.3


def test_tangent_orthogonal_to_gradient():
    poly = circle_poly()
    pt = np.array([0.5 + 0.4 * math.cos(0.7), 0.5 + 0.4 * math.sin(0.7)])
    tan = variety_tangent(poly, pt)
    assert tan.basis.shape == (1, 2)
    grad = poly.jacobian(pt)[0]
    assert abs(tan.basis[0] @ grad) < 1e-8
    assert tan.point_distance(pt) < 1e-8


def test_newton_refine_lands_on_variety():
    poly = circle_poly()
    x0 = np.array([0.93, 0.55])
    x, conv = fp.newton_refine(poly, x0)
    assert conv
    assert abs(poly(x)[0]) < 1e-10
    assert np.linalg.norm(x - x0) < 0.1


def test_newton_refine_fails_without_roots():
    comp = {(2, 0): 1.0, (0, 2): 1.0, (0, 0): 1.0}  # x^2 + y^2 + 1 > 0
    poly = fp.PolynomialMap(ambient=2, components=(comp,))
    _, conv = fp.newton_refine(poly, np.array([0.5, 0.5]))
    assert not conv


def test_text_round_trip():
    poly = fp.PolynomialMap(
        ambient=3,
        components=(
            {(2, 0, 0): 1.5, (0, 1, 1): -2.0, (0, 0, 0): 0.25},
            {(0, 0, 1): 1.0},
        ),
    )
    back = polynomial_from_text(polynomial_to_text(poly))
    assert back.ambient == poly.ambient
    assert back.components == poly.components
