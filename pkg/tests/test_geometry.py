"""Geometry oracles: exact points, normals, lengths, corners, constants.

Closed-form values (sector points, the square's bi-Lipschitz constant 3*sqrt(2),
the circle's 3*pi/(2*sqrt(2))) were derived by hand first.
"""

import numpy as np
import pytest
from scipy.integrate import quad

from igabem.geometry import (
    Curve,
    bilipschitz_constant,
    circle,
    curve_from_config,
    curve_to_config,
    pacman,
    slit,
    square,
)
from igabem.splines import KnotVector


def test_slit_basic():
    c = slit()
    np.testing.assert_allclose(c.point([0.0, 0.25, 1.0]), [[-1, 0], [-0.5, 0], [1, 0]], atol=1e-15)
    np.testing.assert_allclose(c.speed(np.linspace(0, 1, 9)), 2.0, atol=1e-14)
    assert c.length == pytest.approx(2.0, rel=1e-14)
    assert c.corner_params().size == 0
    assert not c.closed


def test_square_points_and_normals():
    c = square()
    np.testing.assert_allclose(
        c.point([0.0, 0.25, 0.5, 0.75]),
        [[0, 0], [0.5, 0], [0.5, 0.5], [0, 0.5]],
        atol=1e-15,
    )
    np.testing.assert_allclose(c.point([0.125]), [[0.25, 0.0]], atol=1e-15)
    # outward normals, one per edge midpoint
    mids = np.array([0.125, 0.375, 0.625, 0.875])
    np.testing.assert_allclose(
        c.normal(mids), [[0, -1], [1, 0], [0, 1], [-1, 0]], atol=1e-14
    )
    assert c.length == pytest.approx(2.0, rel=1e-14)
    np.testing.assert_allclose(c.corner_params(), [0.0, 0.25, 0.5, 0.75], atol=1e-15)
    # wrap-around evaluation
    np.testing.assert_allclose(c.point([1.25]), c.point([0.25]), atol=1e-15)


def test_square_initial_mesh_size_assumption():
    c = square()
    assert np.max(c.element_lengths) <= c.length / 4 + 1e-14


def test_pacman_exact_sector():
    c = pacman()
    r, half = 0.1, 7 * np.pi / 8
    # straight edge: affine in the parameter
    np.testing.assert_allclose(
        c.point([1 / 12]), [[0.05 * np.cos(half), -0.05 * np.sin(half)]], atol=1e-15
    )
    np.testing.assert_allclose(c.point([0.0]), [[0, 0]], atol=1e-15)
    np.testing.assert_allclose(c.point([1 / 6]), [[r * np.cos(half), -r * np.sin(half)]], atol=1e-16)
    # circular part: exact radius everywhere
    ts = np.linspace(1 / 6, 5 / 6, 301)
    radii = np.hypot(*c.point(ts).T)
    np.testing.assert_allclose(radii, r, atol=1e-15)
    # arc junctions and symmetry axis
    np.testing.assert_allclose(c.point([0.5]), [[r, 0.0]], atol=1e-15)
    ang = 7 * np.pi / 24
    np.testing.assert_allclose(c.point([7 / 18]), [[r * np.cos(ang), -r * np.sin(ang)]], atol=1e-15)
    # straight edges have zero second derivative
    np.testing.assert_allclose(c.frame([0.08], 2)[0, 2], [0.0, 0.0], atol=1e-12)


def test_pacman_corners_and_length():
    c = pacman()
    np.testing.assert_allclose(c.corner_params(), [0.0, 1 / 6, 5 / 6], atol=1e-15)
    exact = 0.2 + 0.1 * 7 * np.pi / 4
    assert c.length == pytest.approx(exact, rel=1e-12)
    ref, err = quad(lambda t: c.speed([t])[0], 0.0, 1.0, points=c.knots.breakpoints, limit=200)
    assert err < 1e-10
    assert c.length == pytest.approx(ref, rel=1e-10)
    # initial elements satisfy the quarter-length mesh assumption
    assert np.max(c.element_lengths) <= c.length / 4 + 1e-14


def test_pacman_outward_normal():
    c = pacman()
    # on the circular part the outward normal is radial
    ts = np.array([0.3, 0.5, 0.7])
    nu = c.normal(ts)
    pts = c.point(ts)
    np.testing.assert_allclose(nu, pts / 0.1, atol=1e-13)
    # on the lower straight edge it points away from the sector interior:
    # tangent (cos h, -sin h) with h = 7pi/8, rotated clockwise
    half = 7 * np.pi / 8
    nu_edge = c.normal(np.array([0.08]))[0]
    np.testing.assert_allclose(nu_edge, [-np.sin(half), -np.cos(half)], atol=1e-14)


def test_circle_exactness():
    c = circle()
    ts = np.linspace(0, 1, 257, endpoint=False)
    np.testing.assert_allclose(np.hypot(*c.point(ts).T), 1.0, atol=1e-14)
    assert c.length == pytest.approx(2 * np.pi, rel=1e-12)
    assert c.corner_params().size == 0
    nu = c.normal(ts)
    np.testing.assert_allclose(nu, c.point(ts), atol=1e-12)


def test_frame_derivatives_match_finite_differences():
    c = pacman()
    ts = np.array([0.25, 0.47, 0.62])
    h = 1e-6
    fr = c.frame(ts, 2)
    d1 = (c.point(ts + h) - c.point(ts - h)) / (2 * h)
    d2 = (c.point(ts + h) - 2 * c.point(ts) + c.point(ts - h)) / h**2
    np.testing.assert_allclose(fr[:, 1], d1, rtol=1e-7, atol=1e-9)
    np.testing.assert_allclose(fr[:, 2], d2, rtol=1e-3, atol=1e-4)


def test_param_delta():
    sq = square()
    assert sq.param_delta(0.9, 0.1) == pytest.approx(-0.2, abs=1e-15)
    assert sq.param_delta(0.1, 0.9) == pytest.approx(0.2, abs=1e-15)
    # exact half-period separation resolves to the negative image
    assert sq.param_delta(0.6, 0.1) == pytest.approx(-0.5, abs=1e-15)
    sl = slit()
    assert sl.param_delta(0.9, 0.1) == pytest.approx(0.8, abs=1e-15)


def test_bilipschitz_constants():
    assert bilipschitz_constant(slit()) == pytest.approx(1.0, abs=1e-12)
    assert bilipschitz_constant(circle()) == pytest.approx(3 * np.pi / (2 * np.sqrt(2)), rel=1e-3)
    assert bilipschitz_constant(square()) == pytest.approx(3 * np.sqrt(2), rel=1e-3)


def test_refinement_preserves_geometry():
    c = pacman()
    fine = c.refined([0.05, 0.5, 0.5, 0.91])
    assert fine.knots.n_elements == c.knots.n_elements + 3
    assert fine.knots.multiplicity_of(0.5) == 2
    ts = np.linspace(0, 1, 211, endpoint=False)
    np.testing.assert_allclose(fine.point(ts), c.point(ts), atol=1e-13)
    np.testing.assert_allclose(fine.speed(ts), c.speed(ts), atol=1e-11)
    assert fine.length == pytest.approx(c.length, rel=1e-12)


def test_config_roundtrip(tmp_path):
    c = pacman()
    path = tmp_path / "geom.json"
    curve_to_config(c, path)
    c2 = curve_from_config(path)
    assert c2.knots == c.knots
    ts = np.linspace(0, 1, 83, endpoint=False)
    np.testing.assert_allclose(c2.point(ts), c.point(ts), atol=1e-15)
    # builtin names resolve too
    c3 = curve_from_config("square")
    assert c3.closed and c3.knots.dim == 5


def test_curve_validation():
    kv = KnotVector(1, (0.0, 1.0), (2, 2))
    with pytest.raises(ValueError):
        Curve(kv, np.zeros((3, 2)), np.ones(3))  # wrong row count
    with pytest.raises(ValueError):
        Curve(kv, np.zeros((2, 2)), np.array([1.0, -1.0]))  # negative weight
