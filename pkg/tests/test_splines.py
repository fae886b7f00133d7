"""Spline engine and knot-vector oracles.

Hand values below (hat functions, the cardinal quadratic, the rational
quarter-circle weights) were computed on paper before the engine existed.
"""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from igabem.splines import (
    KnotVector,
    bspline_dense,
    bspline_derivatives,
    bspline_values,
    insert_knot,
    rational_basis,
)

HALF_SQRT2 = np.sqrt(2.0) / 2.0


def eval_rational(kv, basis_weights, coeffs, ts, side="right"):
    """Σ coeffs[q] R_q(t) via windowed evaluation (test helper)."""
    first, R = rational_basis(kv, basis_weights, np.asarray(ts, float), nd=0, side=side)
    cols = first[:, None] + np.arange(kv.degree + 1)[None, :]
    return np.sum(R[:, 0, :] * np.asarray(coeffs)[cols], axis=1)


def storage_weights(kv, store_w):
    """Per-basis weights from storage rows (identity for open vectors)."""
    return np.asarray(store_w)[kv.period_slot(np.arange(kv.dim))]


# ------------------------------------------------------------------ engine


def test_hat_function_values():
    # degree 1 on {0,1,2}: the single basis function is the unit hat at 1
    ts = np.array([0.0, 0.5, 1.0, 1.5, 2.0])
    vals = bspline_dense([0.0, 1.0, 2.0], 1, ts)
    assert vals.shape == (5, 1, 1)
    np.testing.assert_allclose(vals[:, 0, 0], [0.0, 0.5, 1.0, 0.5, 0.0], atol=1e-15)


def test_cardinal_quadratic_midpoint():
    # degree 2 on {0,1,2,3}: value 3/4 at the center of the middle span
    vals = bspline_dense([0.0, 1.0, 2.0, 3.0], 2, np.array([1.5]))
    assert vals[0, 0, 0] == pytest.approx(0.75, abs=1e-15)
    # and 1/2 at the interior knots
    vals = bspline_dense([0.0, 1.0, 2.0, 3.0], 2, np.array([1.0, 2.0]))
    np.testing.assert_allclose(vals[:, 0, 0], [0.5, 0.5], atol=1e-15)


def test_clamped_linears():
    first, vals = bspline_values([0.0, 0.0, 1.0, 1.0], 1, np.array([0.0, 0.25, 1.0]))
    np.testing.assert_array_equal(first, [0, 0, 0])
    np.testing.assert_allclose(vals, [[1.0, 0.0], [0.75, 0.25], [0.0, 1.0]], atol=1e-15)


def test_window_indices_cover_dense():
    kv = KnotVector(2, (0.0, 0.25, 0.5, 1.0), (3, 1, 2, 3))
    ts = np.linspace(0.0, 1.0, 17)
    first, win = bspline_values(kv.eval_knots, 2, ts)
    dense = bspline_dense(kv.eval_knots, 2, ts)
    for i, t in enumerate(ts):
        scat = np.zeros(kv.dim)
        scat[first[i] : first[i] + 3] = win[i]
        np.testing.assert_allclose(scat, dense[i, 0], atol=1e-15)


def test_derivatives_match_finite_differences():
    kv = KnotVector(3, (0.0, 0.3, 0.7, 1.0), (4, 2, 1, 4))
    rng = np.random.default_rng(7)
    coeffs = rng.standard_normal(kv.dim)
    ts = np.array([0.11, 0.36, 0.55, 0.81])
    h = 1e-6

    def f(t):
        first, vals = bspline_values(kv.eval_knots, 3, t)
        cols = first[:, None] + np.arange(4)
        return np.sum(vals * coeffs[cols], axis=1)

    first, ders = bspline_derivatives(kv.eval_knots, 3, ts, 2)
    cols = first[:, None] + np.arange(4)
    d1 = np.sum(ders[:, 1, :] * coeffs[cols], axis=1)
    d2 = np.sum(ders[:, 2, :] * coeffs[cols], axis=1)
    fd1 = (f(ts + h) - f(ts - h)) / (2 * h)
    fd2 = (f(ts + h) - 2 * f(ts) + f(ts - h)) / h**2
    np.testing.assert_allclose(d1, fd1, rtol=1e-8, atol=1e-8)
    np.testing.assert_allclose(d2, fd2, rtol=1e-3, atol=1e-3)


def test_one_sided_limits_at_discontinuity():
    # degree 1 with an interior double knot: discontinuous basis at 0.5
    kv = KnotVector(1, (0.0, 0.5, 1.0), (2, 2, 2))
    t = np.array([0.5])
    dense_r = bspline_dense(kv.eval_knots, 1, t, side="right")[0, 0]
    dense_l = bspline_dense(kv.eval_knots, 1, t, side="left")[0, 0]
    np.testing.assert_allclose(dense_r, [0.0, 0.0, 1.0, 0.0], atol=1e-15)
    np.testing.assert_allclose(dense_l, [0.0, 1.0, 0.0, 0.0], atol=1e-15)


# ------------------------------------------------------------- knot vectors


def test_dim_formulas():
    slit = KnotVector(1, (0.0, 1.0), (2, 2))
    assert slit.dim == 2 and slit.n_elements == 1
    square = KnotVector(1, (0.0, 0.25, 0.5, 0.75, 1.0), (2, 1, 1, 1, 2), periodic=True)
    assert square.dim == 5 and square.n_store == 5
    fan = KnotVector(
        2,
        (0.0, 1 / 6, 7 / 18, 11 / 18, 5 / 6, 1.0),
        (3, 2, 2, 2, 2, 3),
        periodic=True,
    )
    assert fan.dim == 11 and fan.n_store == 11
    smooth_loop = KnotVector(2, (0.0, 0.25, 0.5, 0.75, 1.0), (1, 1, 1, 1, 1), periodic=True)
    assert smooth_loop.dim == 6 and smooth_loop.n_store == 4


def test_full_seam_multiplicity_reduces_to_clamped():
    fan = KnotVector(
        2,
        (0.0, 1 / 6, 7 / 18, 11 / 18, 5 / 6, 1.0),
        (3, 2, 2, 2, 2, 3),
        periodic=True,
    )
    clamped = KnotVector(2, fan.breakpoints, fan.multiplicities, periodic=False)
    np.testing.assert_array_equal(fan.eval_knots, clamped.eval_knots)
    np.testing.assert_array_equal(fan.period_slot(np.arange(fan.dim)), np.arange(fan.dim))


def test_validation_rejects_bad_vectors():
    with pytest.raises(ValueError):
        KnotVector(1, (0.0, 1.0), (1, 2))  # not clamped
    with pytest.raises(ValueError):
        KnotVector(1, (0.0, 0.5, 1.0), (2, 3, 2))  # multiplicity too high
    with pytest.raises(ValueError):
        KnotVector(1, (0.0, 0.5, 0.5, 1.0), (2, 1, 1, 2))  # not increasing
    with pytest.raises(ValueError):
        KnotVector(2, (0.0, 1.0), (2, 1), periodic=True)  # unequal seam mults
    with pytest.raises(ValueError):
        KnotVector(2, (0.0, 1.0), (2, 2), periodic=True)  # too few knots per period


def test_partition_of_unity_clamped():
    kv = KnotVector(3, (0.0, 0.2, 0.45, 0.8, 1.0), (4, 2, 3, 1, 4))
    ts = np.linspace(0.0, 1.0, 1000)
    dense = bspline_dense(kv.eval_knots, 3, ts)
    assert dense.shape[2] == kv.dim
    np.testing.assert_allclose(dense[:, 0, :].sum(axis=1), 1.0, atol=1e-13)
    assert np.all(dense[:, 0, :] >= -1e-15)


def test_partition_of_unity_periodic_smooth_seam():
    kv = KnotVector(2, (0.0, 0.25, 0.5, 0.75, 1.0), (1, 1, 1, 1, 1), periodic=True)
    ts = np.linspace(0.0, 1.0, 1000, endpoint=False)
    dense = bspline_dense(kv.eval_knots, 2, ts)
    np.testing.assert_allclose(dense[:, 0, :].sum(axis=1), 1.0, atol=1e-13)


def test_periodic_eval_knots_extension():
    kv = KnotVector(2, (0.0, 0.5, 1.0), (1, 2, 1), periodic=True)
    # period knots in [0,1): [0.0, 0.5, 0.5]; dim = 3 + 3 - 1 = 5
    assert kv.dim == 5
    np.testing.assert_allclose(kv.period_knots, [0.0, 0.5, 0.5])
    np.testing.assert_allclose(kv.eval_knots, [-0.5, -0.5, 0.0, 0.5, 0.5, 1.0, 1.5, 1.5])


def test_collocation_points_slit_and_monotone():
    slit = KnotVector(1, (0.0, 1.0), (2, 2))
    np.testing.assert_allclose(slit.collocation_points(), [1 / 3, 2 / 3], atol=1e-15)
    fan = KnotVector(
        2,
        (0.0, 1 / 6, 7 / 18, 11 / 18, 5 / 6, 1.0),
        (3, 2, 2, 2, 2, 3),
        periodic=True,
    )
    pts = fan.collocation_points()
    assert pts[0] == pytest.approx(1 / 24)
    assert np.all(np.diff(pts) > 0)
    # no collocation point may sit on a geometry corner of the fan sector
    for corner in (0.0, 1 / 6, 5 / 6):
        assert np.min(np.abs(pts - corner)) > 1e-12


def test_element_queries():
    kv = KnotVector(1, (0.0, 0.25, 0.5, 0.75, 1.0), (2, 1, 1, 1, 2))
    assert kv.element_of(0.3) == 1
    assert kv.element_of(0.25) == 1
    assert kv.element_of(0.25, side="left") == 0
    np.testing.assert_array_equal(kv.element_basis(0), [0, 1])
    np.testing.assert_array_equal(kv.element_basis(3), [3, 4])
    assert kv.multiplicity_of(0.25) == 1
    assert kv.multiplicity_of(0.3) == 0


# ------------------------------------------------------------------- NURBS


def test_quarter_circle_rational_values():
    kv = KnotVector(2, (0.0, 1.0), (3, 3))
    w = np.array([1.0, HALF_SQRT2, 1.0])
    first, R = rational_basis(kv, w, np.array([0.5]))
    np.testing.assert_allclose(
        R[0, 0],
        [(2 - np.sqrt(2)) / 2, np.sqrt(2) - 1, (2 - np.sqrt(2)) / 2],
        atol=1e-15,
    )
    # rational functions always sum to one
    ts = np.linspace(0, 1, 97)
    _, R = rational_basis(kv, w, ts, nd=2)
    np.testing.assert_allclose(R[:, 0, :].sum(axis=1), 1.0, atol=1e-14)
    np.testing.assert_allclose(R[:, 1, :].sum(axis=1), 0.0, atol=1e-12)
    np.testing.assert_allclose(R[:, 2, :].sum(axis=1), 0.0, atol=1e-11)


def test_rational_derivatives_match_finite_differences():
    kv = KnotVector(2, (0.0, 0.4, 1.0), (3, 1, 3))
    w = np.array([1.0, 0.8, 1.3, 0.9])
    coeffs = np.array([0.2, -1.0, 0.7, 1.5])
    ts = np.array([0.15, 0.55, 0.85])
    h = 1e-6
    first, R = rational_basis(kv, w, ts, nd=2)
    cols = first[:, None] + np.arange(3)
    d1 = np.sum(R[:, 1, :] * coeffs[cols], axis=1)
    d2 = np.sum(R[:, 2, :] * coeffs[cols], axis=1)
    f = lambda t: eval_rational(kv, w, coeffs, t)
    fd1 = (f(ts + h) - f(ts - h)) / (2 * h)
    fd2 = (f(ts + h) - 2 * f(ts) + f(ts - h)) / h**2
    np.testing.assert_allclose(d1, fd1, rtol=1e-7)
    np.testing.assert_allclose(d2, fd2, rtol=1e-3)


# ---------------------------------------------------------- knot insertion


def test_insertion_guards():
    kv = KnotVector(1, (0.0, 0.5, 1.0), (2, 2, 2))
    coeffs = np.zeros((kv.dim, 1))
    with pytest.raises(ValueError):
        insert_knot(kv, coeffs, 0.5)  # multiplicity already p + 1
    with pytest.raises(ValueError):
        insert_knot(kv, coeffs, 1.5)  # outside the interval
    with pytest.raises(ValueError):
        insert_knot(kv, np.zeros((kv.dim + 1, 1)), 0.25)  # wrong row count


def test_insertion_structure():
    kv = KnotVector(2, (0.0, 1.0), (3, 3))
    coeffs = np.eye(3)
    kv2, c2 = insert_knot(kv, coeffs, 0.5)
    assert kv2.breakpoints == (0.0, 0.5, 1.0)
    assert kv2.multiplicities == (3, 1, 3)
    assert c2.shape == (4, 3)
    kv3, _ = insert_knot(kv2, c2, 0.5)
    assert kv3.multiplicities == (3, 2, 3)


grid = st.sampled_from([i / 32 for i in range(1, 32)])


@st.composite
def clamped_setups(draw):
    p = draw(st.integers(0, 3))
    interior = draw(st.lists(grid, min_size=0, max_size=3, unique=True))
    bp = (0.0, *sorted(interior), 1.0)
    mults = (p + 1, *(draw(st.integers(1, p + 1)) for _ in interior), p + 1)
    kv = KnotVector(p, bp, mults)
    w = draw(
        st.lists(st.floats(0.5, 2.0), min_size=kv.dim, max_size=kv.dim).map(np.array)
    )
    c = draw(
        st.lists(st.floats(-2.0, 2.0), min_size=kv.dim, max_size=kv.dim).map(np.array)
    )
    t_new = draw(st.sampled_from([i / 64 for i in range(1, 64)]))
    return kv, w, c, t_new


@settings(max_examples=60, deadline=None)
@given(clamped_setups())
def test_insertion_preserves_rational_functions(setup):
    kv, w, c, t_new = setup
    if kv.multiplicity_of(t_new) >= kv.degree + 1:
        return
    hom = np.column_stack((w * c, w))
    kv2, hom2 = insert_knot(kv, hom, t_new)
    assert kv2.dim == kv.dim + 1
    w2 = hom2[:, 1]
    c2 = hom2[:, 0] / w2
    ts = np.linspace(0.0, 1.0, 73)
    f1 = eval_rational(kv, w, c, ts)
    f2 = eval_rational(kv2, w2, c2, ts)
    np.testing.assert_allclose(f2, f1, atol=1e-12, rtol=1e-12)
    assert np.min(w2) >= np.min(w) - 1e-14
    assert np.max(w2) <= np.max(w) + 1e-14


@st.composite
def periodic_setups(draw):
    p = draw(st.integers(0, 3))
    seam = draw(st.integers(1, p + 1))
    n_interior = draw(st.integers(max(1, p + 1 - seam), p + 4))
    interior = draw(
        st.lists(grid, min_size=n_interior, max_size=n_interior, unique=True)
    )
    bp = (0.0, *sorted(interior), 1.0)
    mults = (seam, *(1 for _ in interior), seam)
    kv = KnotVector(p, bp, mults, periodic=True)
    w = draw(
        st.lists(st.floats(0.5, 2.0), min_size=kv.n_store, max_size=kv.n_store).map(np.array)
    )
    c = draw(
        st.lists(st.floats(-2.0, 2.0), min_size=kv.n_store, max_size=kv.n_store).map(np.array)
    )
    t_new = draw(st.sampled_from([i / 64 for i in range(64)]))
    return kv, w, c, t_new


@settings(max_examples=60, deadline=None)
@given(periodic_setups())
def test_periodic_insertion_preserves_rational_functions(setup):
    kv, w_store, c_store, t_new = setup
    if kv.multiplicity_of(t_new) >= kv.degree + 1:
        return
    hom = np.column_stack((w_store * c_store, w_store))
    kv2, hom2 = insert_knot(kv, hom, t_new)
    # a seam-multiplicity raise does not enlarge the restriction space
    assert kv2.dim == kv.dim + (0 if t_new == 0.0 else 1)
    assert kv2.n_store == kv.n_store + 1
    w2s = hom2[:, 1]
    c2s = hom2[:, 0] / w2s
    ts = np.linspace(0.0, 1.0, 73, endpoint=False)
    f1 = eval_rational(kv, storage_weights(kv, w_store), c_store[kv.period_slot(np.arange(kv.dim))], ts)
    f2 = eval_rational(kv2, storage_weights(kv2, w2s), c2s[kv2.period_slot(np.arange(kv2.dim))], ts)
    np.testing.assert_allclose(f2, f1, atol=1e-12, rtol=1e-12)


def test_periodic_seam_multiplicity_raise():
    kv = KnotVector(1, (0.0, 0.25, 0.5, 0.75, 1.0), (1, 1, 1, 1, 1), periodic=True)
    rng = np.random.default_rng(3)
    c = rng.standard_normal(kv.n_store)
    w = np.ones(kv.n_store)
    hom = np.column_stack((w * c, w))
    kv2, hom2 = insert_knot(kv, hom, 0.0)
    assert kv2.multiplicities[0] == 2 and kv2.multiplicities[-1] == 2
    ts = np.linspace(0.0, 1.0, 50, endpoint=False)
    f1 = eval_rational(kv, storage_weights(kv, w), c[kv.period_slot(np.arange(kv.dim))], ts)
    w2 = hom2[:, 1]
    c2 = hom2[:, 0] / w2
    f2 = eval_rational(kv2, storage_weights(kv2, w2), c2[kv2.period_slot(np.arange(kv2.dim))], ts)
    np.testing.assert_allclose(f2, f1, atol=1e-12)
