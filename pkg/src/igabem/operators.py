"""Boundary integral operators on NURBS curves.

Single-layer operator with kernel -log|x - y| / (2 pi).  Element pairs are
integrated in three regimes:

* identical pair: the parameter-difference transform turns the double
  integral of log|s - t| against a smooth factor into a one-dimensional
  integral with logarithmic weight, handled by a dedicated Gauss rule; the
  remaining kernel part log(|gamma(s) - gamma(t)| / |s - t|) is analytic on
  the element square and gets a plain tensor rule.
* pair of elements sharing one corner: two Duffy substitutions anchored at
  the corner.  Under u = h x, v = h' x y the kernel splits as
  log x + log(|gamma(s) - gamma(t)| / x) where the second term is analytic
  in (x, y) even across a geometric corner, because the Duffy map unfolds
  the direction dependence.  Each triangle needs one log-weight rule and one
  plain rule in the x direction.
* separated pair: plain tensor Gauss, assembled in vectorized blocks.  On
  the shape-regular meshes produced by the refinement driver the parameter
  distance between non-touching elements is comparable to their size, so
  plain Gauss converges geometrically.

The same regime split drives pointwise evaluation of the single-layer
potential (collocation rows, residual sampling) and of the double-layer
potential used for Dirichlet right-hand sides.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .geometry import Curve
from .quadrature import gauss_log, gauss_unit, graded_unit
from .splines import rational_basis

logger = logging.getLogger(__name__)

DEFAULT_ORDER = 16
NEAR_FACTOR = 0.75  # parameter-distance/size ratio below which grading kicks in
GRADE_MAX_LEVELS = 48
_TWO_PI = 2.0 * np.pi

__all__ = [
    "ElementCache",
    "element_cache",
    "galerkin_matrix",
    "galerkin_rhs",
    "collocation_matrix",
    "single_layer_values",
    "double_layer_values",
    "dirichlet_rhs",
]


# --------------------------------------------------------------------------
# shared per-element quadrature data
# --------------------------------------------------------------------------


@dataclass
class ElementCache:
    """Gauss data on every element: parameters, points, speeds, basis."""

    curve: Curve
    order: int
    params: np.ndarray  # (n_el, q)
    points: np.ndarray  # (n_el, q, 2)
    speeds: np.ndarray  # (n_el, q)
    first: np.ndarray  # (n_el,) first basis index per element
    basis: np.ndarray  # (n_el, q, p+1) rational basis values
    wbasis: np.ndarray  # basis * speed * gauss weight * element length

    @property
    def n_elements(self) -> int:
        return self.params.shape[0]

    def flat_points(self) -> np.ndarray:
        return self.points.reshape(-1, 2)

    def density_weights(self, coeffs: np.ndarray) -> np.ndarray:
        """(n_el, q) integration-ready values of the density sum c_q R_q."""
        p = self.curve.degree
        cols = self.first[:, None] + np.arange(p + 1)[None, :]
        return np.einsum("eqb,eb->eq", self.wbasis, np.asarray(coeffs)[cols])


def element_cache(curve: Curve, order: int = DEFAULT_ORDER) -> ElementCache:
    kv = curve.knots
    xg, wg = gauss_unit(order)
    elems = kv.elements
    lo = elems[:, 0][:, None]
    hs = (elems[:, 1] - elems[:, 0])[:, None]
    params = lo + hs * xg[None, :]
    flat = params.ravel()
    fr = curve.frame(flat, 1)
    pts = fr[:, 0].reshape(len(elems), order, 2)
    sp = np.hypot(fr[:, 1, 0], fr[:, 1, 1]).reshape(len(elems), order)
    first, R = rational_basis(kv, curve.basis_weights, flat)
    first = first.reshape(len(elems), order)[:, 0]
    basis = R[:, 0, :].reshape(len(elems), order, kv.degree + 1)
    wbasis = basis * (sp * wg[None, :] * hs)[:, :, None]
    return ElementCache(curve, order, params, pts, sp, first, basis, wbasis)


# --------------------------------------------------------------------------
# kernel helpers
# --------------------------------------------------------------------------


def _phi_windows(curve: Curve, ts: np.ndarray):
    """Rational basis windows times speed at the given parameters."""
    first, R = rational_basis(curve.knots, curve.basis_weights, ts)
    sp = curve.speed(ts)
    return first, R[:, 0, :] * sp[:, None]


def _smooth_log_part(curve: Curve, s: np.ndarray, t: np.ndarray) -> np.ndarray:
    """log(|gamma(s) - gamma(t)| / |s - t|) with diagonal limit log|gamma'|.

    Callers pass parameter values whose plain difference is already the
    minimal periodic image.
    """
    d = np.abs(s - t)
    ps = curve.point(s)
    pt = curve.point(t)
    dist = np.hypot(ps[:, 0] - pt[:, 0], ps[:, 1] - pt[:, 1])
    ratio = np.empty_like(dist)
    tiny = d < 1e-14
    np.divide(dist, d, out=ratio, where=~tiny)
    if tiny.any():
        ratio[tiny] = curve.speed(np.asarray(t)[tiny])
    return np.log(ratio)


def _grade_levels(h: float, d: float) -> int:
    # deeper panels than the floating-point grid near the endpoint can
    # resolve would collapse onto it, so cap by ~ h / (256 eps)
    cap = min(GRADE_MAX_LEVELS, max(2, int(np.log2(max(h, 1e-30)) + 44.0)))
    return int(np.clip(np.ceil(np.log2(h / max(d, 1e-300))) + 2, 2, cap))


# --------------------------------------------------------------------------
# Galerkin assembly
# --------------------------------------------------------------------------


def _identical_block(curve: Curve, lo: float, hi: float, order: int) -> np.ndarray:
    """Element matrix of the full log kernel over one element squared."""
    h = hi - lo
    xg, wg = gauss_unit(order)
    xl, wl = gauss_log(order)

    # analytic kernel part on the plain tensor grid
    sgrid = lo + h * xg
    S, T = np.meshgrid(sgrid, sgrid, indexing="ij")
    smooth = _smooth_log_part(curve, S.ravel(), T.ravel()).reshape(order, order)
    _, phi = _phi_windows(curve, sgrid)
    wphi = phi * (h * wg)[:, None]
    block = np.einsum("ij,ia,jb->ab", smooth, wphi, wphi)

    # log|s - t| part through the difference transform: with w = h x,
    #   int int log|s-t| F = h [ log h Gauss_x(G) - LogRule_x(G) ],
    #   G(hx) = int F(t + hx, t) + F(t, t + hx) dt over the shrunken strip.
    xall = np.concatenate([xg, xl])
    span = h * (1.0 - xall)
    tpar = lo + span[:, None] * xg[None, :]
    spar = tpar + (h * xall)[:, None]
    _, phis = _phi_windows(curve, spar.ravel())
    _, phit = _phi_windows(curve, tpar.ravel())
    nb = phi.shape[1]
    phis = phis.reshape(2 * order, order, nb)
    phit = phit.reshape(2 * order, order, nb)
    G = np.einsum("kq,kqa,kqb->kab", span[:, None] * wg[None, :], phis, phit)
    G = G + np.transpose(G, (0, 2, 1))
    block += h * (np.log(h) * np.einsum("k,kab->ab", wg, G[:order])
                  - np.einsum("k,kab->ab", wl, G[order:]))
    return block


def _adjacent_pair_matrix(curve: Curve, t_lo: float, t_hi: float, s_len: float,
                          order: int, basis_shift: float) -> np.ndarray:
    """Element matrix over {s in [t_hi, t_hi + s_len]} x {t in [t_lo, t_hi]}.

    The two elements share the corner t_hi in contiguous coordinates;
    ``basis_shift`` is subtracted from s before basis evaluation (one period
    for the seam pair of a closed curve, else zero).  Returns M[a, b] pairing
    the s-element basis window against the t-element window.
    """
    h1 = t_hi - t_lo
    h2 = s_len
    corner = t_hi
    xg, wg = gauss_unit(order)
    xl, wl = gauss_log(order)
    M = np.zeros((curve.degree + 1, curve.degree + 1))

    for swap in (False, True):
        for xs, ws, is_log in ((xg, wg, False), (xl, wl, True)):
            X, Y = np.meshgrid(xs, xg, indexing="ij")
            WX, WY = np.meshgrid(ws, wg, indexing="ij")
            if swap:
                s = corner + h2 * X * Y
                t = corner - h1 * X
            else:
                s = corner + h2 * X
                t = corner - h1 * X * Y
            sf, tf, xf = s.ravel(), t.ravel(), X.ravel()
            if is_log:
                wcomb = -(WX * WY).ravel() * xf
            else:
                ps = curve.point(sf)
                pt = curve.point(tf)
                dist = np.hypot(ps[:, 0] - pt[:, 0], ps[:, 1] - pt[:, 1])
                wcomb = (WX * WY).ravel() * xf * np.log(dist / xf)
            _, phis = _phi_windows(curve, sf - basis_shift)
            _, phit = _phi_windows(curve, tf)
            M += h1 * h2 * np.einsum("q,qa,qb->ab", wcomb, phis, phit)
    return M


def galerkin_matrix(curve: Curve, order: int = DEFAULT_ORDER) -> np.ndarray:
    """Symmetric Galerkin matrix of the single-layer operator."""
    kv = curve.knots
    dim = kv.dim
    n_el = kv.n_elements
    if curve.closed and n_el < 3:
        raise ValueError("closed curves need at least three elements for assembly")
    cache = element_cache(curve, order)
    p = kv.degree
    A = np.zeros((dim, dim))

    # separated pairs, vectorized row-element by row-element (upper triangle)
    offsets = np.arange(p + 1)
    for e in range(n_el):
        exclude = {e, e + 1}
        if curve.closed:
            exclude |= {(e - 1) % n_el, (e + 1) % n_el}
        cols_keep = np.array(
            [f for f in range(e + 1, n_el) if f not in exclude], dtype=int
        )
        if len(cols_keep) == 0:
            continue
        pe = cache.points[e]
        pk = cache.points[cols_keep].reshape(-1, 2)
        dx = pe[:, None, 0] - pk[None, :, 0]
        dy = pe[:, None, 1] - pk[None, :, 1]
        K = np.log(np.hypot(dx, dy)).reshape(order, len(cols_keep), order)
        tmp = np.einsum("qfr,frb->qfb", K, cache.wbasis[cols_keep])
        blocks = np.einsum("qa,qfb->afb", cache.wbasis[e], tmp)
        rows = cache.first[e] + offsets
        cols = cache.first[cols_keep][:, None] + offsets[None, :]
        np.add.at(A, (rows[:, None, None], cols[None, :, :]), blocks)
    A = A + A.T

    # identical pairs
    for e, (lo, hi) in enumerate(kv.elements):
        rows = cache.first[e] + offsets
        A[np.ix_(rows, rows)] += _identical_block(curve, float(lo), float(hi), order)

    # touching pairs (t element, s element, parameter shift for s)
    pairs = [(e, e + 1, 0.0) for e in range(n_el - 1)]
    if curve.closed:
        pairs.append((n_el - 1, 0, kv.period))
    for et, es, shift in pairs:
        t_lo, t_hi = kv.elements[et]
        s_lo, s_hi = kv.elements[es]
        M = _adjacent_pair_matrix(
            curve, float(t_lo), float(t_hi), float(s_hi - s_lo), order, shift
        )
        rows = cache.first[es] + offsets
        cols = cache.first[et] + offsets
        A[np.ix_(rows, cols)] += M
        A[np.ix_(cols, rows)] += M.T

    A /= -_TWO_PI
    return 0.5 * (A + A.T)


def _corner_graded_rule(lo: float, hi: float, at_lo: bool, at_hi: bool,
                        order: int):
    """Rule on [lo, hi] graded toward whichever endpoints are corners."""
    h = hi - lo
    levels = min(30, max(2, int(np.log2(max(h, 1e-30)) + 44.0)))
    xs, ws = graded_unit(order, levels, 0.0)
    if at_lo and at_hi:
        t = np.concatenate([lo + 0.5 * h * xs, hi - 0.5 * h * xs[::-1]])
        w = np.concatenate([0.5 * h * ws, 0.5 * h * ws[::-1]])
        return t, w
    if at_hi:
        return hi - h * xs[::-1], h * ws[::-1]
    return lo + h * xs, h * ws


def galerkin_rhs(curve: Curve, f_of_params, order: int = DEFAULT_ORDER) -> np.ndarray:
    """Load vector <f, R_i> with f given as a function of curve parameters.

    Elements ending at a corner get a rule graded toward it: Dirichlet data
    of corner domains stays bounded there but its derivatives do not, and
    plain Gauss on those elements loses enough digits to spoil computed
    energies once the mesh is deeply refined.
    """
    cache = element_cache(curve, order)
    kv = curve.knots
    p = curve.degree
    b = np.zeros(kv.dim)
    plain = np.ones(cache.n_elements, dtype=bool)
    corners = curve.corner_params()
    if corners.size:
        elems = kv.elements
        gap_lo = np.abs(curve.param_delta(
            elems[:, 0][:, None], corners[None, :])).min(axis=1)
        gap_hi = np.abs(curve.param_delta(
            elems[:, 1][:, None], corners[None, :])).min(axis=1)
        at_lo = gap_lo < 1e-12
        at_hi = gap_hi < 1e-12
        plain = ~(at_lo | at_hi)
        for e in np.flatnonzero(~plain):
            lo, hi = elems[e]
            tq, wq = _corner_graded_rule(float(lo), float(hi),
                                         bool(at_lo[e]), bool(at_hi[e]), order)
            vals = np.asarray(f_of_params(tq))
            first, phi = _phi_windows(curve, tq)  # phi carries the speed
            np.add.at(b, first[:, None] + np.arange(p + 1)[None, :],
                      (vals * wq)[:, None] * phi)
    if plain.any():
        vals = np.asarray(f_of_params(cache.params[plain].ravel()))
        contrib = np.einsum("eq,eqb->eb", vals.reshape(-1, cache.order),
                            cache.wbasis[plain])
        cols = cache.first[plain][:, None] + np.arange(p + 1)[None, :]
        np.add.at(b, cols, contrib)
    return b


# --------------------------------------------------------------------------
# pointwise single layer (collocation rows, residual sampling)
# --------------------------------------------------------------------------


def _wrap_params(kv, params: np.ndarray) -> np.ndarray:
    """Map parameters of a closed curve into the fundamental period."""
    if not kv.periodic:
        return params
    return kv.a + np.mod(params - kv.a, kv.period)


def _near_elements(curve: Curve, params: np.ndarray) -> np.ndarray:
    """Boolean (n_params, n_el) mask of elements needing singular treatment."""
    kv = curve.knots
    elems = kv.elements
    hs = elems[:, 1] - elems[:, 0]
    mids = 0.5 * (elems[:, 0] + elems[:, 1])
    D = np.abs(curve.param_delta(params[:, None], mids[None, :])) - 0.5 * hs[None, :]
    mask = np.maximum(D, 0.0) < NEAR_FACTOR * hs[None, :]
    for i, x in enumerate(params):
        mask[i, kv.element_of(float(x))] = True
    return mask


def _containing_element_integral(curve: Curve, x: float, lo: float, hi: float,
                                 order: int) -> np.ndarray:
    """Integrals of log|gamma(x) - gamma(.)| against the element basis window.

    The element [lo, hi] contains the target x; each side [x, hi] and
    [lo, x] is mapped to the unit interval where log|x - t| contributes a
    known log factor plus the analytic remainder.
    """
    xg, wg = gauss_unit(order)
    xl, wl = gauss_log(order)
    out = np.zeros(curve.degree + 1)
    for ell, orient in ((hi - x, 1.0), (x - lo, -1.0)):
        if ell <= 0.0:
            continue
        tg = x + orient * ell * xg
        tl = x + orient * ell * xl
        sm = _smooth_log_part(curve, np.full(order, x), tg)
        _, phig = _phi_windows(curve, tg)
        _, phil = _phi_windows(curve, tl)
        out += ell * (((np.log(ell) + sm) * wg) @ phig - wl @ phil)
    return out


def _graded_rule_toward(curve: Curve, x: float, lo: float, hi: float, order: int):
    """Composite rule on [lo, hi] graded toward the endpoint nearest to x."""
    h = hi - lo
    d_lo = float(np.abs(curve.param_delta(x, lo)))
    d_hi = float(np.abs(curve.param_delta(x, hi)))
    toward = 0.0 if d_lo <= d_hi else 1.0
    levels = _grade_levels(h, min(d_lo, d_hi))
    xs, ws = graded_unit(order, levels, toward)
    return lo + h * xs, h * ws


def _graded_pair_rules(curve: Curve, params: np.ndarray, pair_i: np.ndarray,
                       pair_e: np.ndarray, order: int):
    """Group (target, element) pairs sharing a graded-rule shape.

    Yields (targets, elements, t_params, t_weights) per group, the rule of
    each pair graded toward its target, so callers evaluate geometry and
    data once per group instead of once per pair.
    """
    elems = curve.knots.elements
    hs = elems[:, 1] - elems[:, 0]
    d_lo = np.abs(np.asarray(
        curve.param_delta(params[pair_i], elems[pair_e, 0]), dtype=float))
    d_hi = np.abs(np.asarray(
        curve.param_delta(params[pair_i], elems[pair_e, 1]), dtype=float))
    toward = (d_lo > d_hi).astype(float)
    lv = np.array([_grade_levels(float(h), float(d))
                   for h, d in zip(hs[pair_e], np.minimum(d_lo, d_hi))])
    for key_lv, key_tw in sorted({(int(a), float(b))
                                  for a, b in zip(lv, toward)}):
        pick = (lv == key_lv) & (toward == key_tw)
        ii, ee = pair_i[pick], pair_e[pick]
        xs, ws = graded_unit(order, key_lv, key_tw)
        tp = elems[ee, 0][:, None] + hs[ee][:, None] * xs[None, :]
        tw = hs[ee][:, None] * ws[None, :]
        yield ii, ee, tp, tw


def _v_row_windows(curve: Curve, x: float, cache: ElementCache, order: int,
                   near_row: np.ndarray) -> np.ndarray:
    """Integrals of log|gamma(x) - gamma(.)| against every basis function."""
    kv = curve.knots
    p = kv.degree
    row = np.zeros(kv.dim)
    px = curve.point(np.array([x]))[0]
    inside = kv.element_of(x)

    far = ~near_row
    if far.any():
        pf = cache.points[far].reshape(-1, 2)
        K = np.log(np.hypot(pf[:, 0] - px[0], pf[:, 1] - px[1]))
        contrib = np.einsum("fr,frb->fb", K.reshape(-1, order), cache.wbasis[far])
        cols = cache.first[far][:, None] + np.arange(p + 1)[None, :]
        np.add.at(row, cols, contrib)

    for e in np.flatnonzero(near_row):
        lo, hi = (float(v) for v in kv.elements[e])
        cols = cache.first[e] + np.arange(p + 1)
        if e == inside:
            row[cols] += _containing_element_integral(curve, x, lo, hi, order)
            continue
        tp, tw = _graded_rule_toward(curve, x, lo, hi, order)
        pt = curve.point(tp)
        K = np.log(np.hypot(pt[:, 0] - px[0], pt[:, 1] - px[1]) + 1e-300)
        _, phi = _phi_windows(curve, tp)
        row[cols] += (tw * K) @ phi
    return row


def collocation_matrix(curve: Curve, order: int = DEFAULT_ORDER) -> np.ndarray:
    """Square collocation system: row i evaluates V at collocation point i.

    Raises ValueError when a collocation point falls on a geometric corner:
    the jump factor of the boundary identity depends on the interior angle
    there, so such a configuration is ambiguous.
    """
    kv = curve.knots
    cache = element_cache(curve, order)
    pts = kv.collocation_points()
    corners = curve.corner_params()
    if len(corners):
        gaps = np.abs(curve.param_delta(pts[:, None], corners[None, :]))
        hit = np.nonzero(gaps.min(axis=1) < 1e-12)[0]
        if len(hit):
            raise ValueError(
                f"collocation point t={float(pts[hit[0]]):g} lies on a corner, "
                "where "
                "the jump factor depends on the interior angle; refine or "
                "reparametrize so collocation points avoid corners"
            )
    near = _near_elements(curve, pts)
    B = np.empty((kv.dim, kv.dim))
    for i, x in enumerate(pts):
        B[i] = _v_row_windows(curve, float(x), cache, order, near[i])
    return B / (-_TWO_PI)


def single_layer_values(curve: Curve, coeffs: np.ndarray, params: np.ndarray,
                        order: int = DEFAULT_ORDER,
                        cache: ElementCache | None = None) -> np.ndarray:
    """Evaluate V phi_h on the curve at the given parameters.

    phi_h = sum coeffs[q] R_q.  Same near/far regime split as the
    collocation assembly, contracting the density along the way.
    """
    kv = curve.knots
    p = kv.degree
    coeffs = np.asarray(coeffs, dtype=float)
    if cache is None or cache.order != order:
        cache = element_cache(curve, order)
    dens_flat = cache.density_weights(coeffs).ravel()
    params = _wrap_params(kv, np.atleast_1d(np.asarray(params, dtype=float)))
    m = len(params)
    out = np.empty(m)

    px_all = curve.point(params)
    pts_flat = cache.flat_points()
    near = _near_elements(curve, params)
    n_el = kv.n_elements
    elems = kv.elements

    chunk = max(1, int(2e6 // max(pts_flat.shape[0], 1)))
    for s0 in range(0, m, chunk):
        sl = slice(s0, min(s0 + chunk, m))
        dx = px_all[sl, None, 0] - pts_flat[None, :, 0]
        dy = px_all[sl, None, 1] - pts_flat[None, :, 1]
        K = np.log(np.hypot(dx, dy) + 1e-300).reshape(-1, n_el, order)
        K[near[sl]] = 0.0
        out[sl] = K.reshape(K.shape[0], -1) @ dens_flat

    cw_all = coeffs[cache.first[:, None] + np.arange(p + 1)[None, :]]

    # containing element, split at the target with the log factor lifted
    # (vector form of _containing_element_integral)
    inside = np.array([kv.element_of(float(x)) for x in params])
    xg, wg = gauss_unit(order)
    xl, wl = gauss_log(order)
    for orient in (1.0, -1.0):
        if orient > 0:
            ell = elems[inside, 1] - params
        else:
            ell = params - elems[inside, 0]
        idx = np.flatnonzero(ell > 0.0)
        if not len(idx):
            continue
        ei = ell[idx]
        tg = params[idx, None] + orient * ei[:, None] * xg[None, :]
        tl = params[idx, None] + orient * ei[:, None] * xl[None, :]
        sm = _smooth_log_part(curve, np.repeat(params[idx], order),
                              tg.ravel()).reshape(tg.shape)
        _, phig = _phi_windows(curve, tg.ravel())
        _, phil = _phi_windows(curve, tl.ravel())
        cw = cw_all[inside[idx]]
        dg = np.einsum("knb,kb->kn", phig.reshape(len(idx), order, p + 1), cw)
        dl = np.einsum("knb,kb->kn", phil.reshape(len(idx), order, p + 1), cw)
        out[idx] += ei * (
            ((np.log(ei)[:, None] + sm) * wg[None, :] * dg).sum(axis=1)
            - (wl[None, :] * dl).sum(axis=1)
        )

    # remaining near elements, rules graded toward the target
    pair_i, pair_e = np.nonzero(near)
    keep = pair_e != inside[pair_i]
    for ii, ee, tp, tw in _graded_pair_rules(curve, params, pair_i[keep],
                                             pair_e[keep], order):
        ptg = curve.point(tp.ravel()).reshape(tp.shape + (2,))
        K = np.log(np.hypot(ptg[..., 0] - px_all[ii, None, 0],
                            ptg[..., 1] - px_all[ii, None, 1]) + 1e-300)
        _, phi = _phi_windows(curve, tp.ravel())
        dens = np.einsum("knb,kb->kn", phi.reshape(tp.shape + (p + 1,)),
                         cw_all[ee])
        np.add.at(out, ii, np.einsum("kn,kn->k", tw * K, dens))
    return out / (-_TWO_PI)


# --------------------------------------------------------------------------
# double layer potential (Dirichlet data)
# --------------------------------------------------------------------------


def _dl_frame_parts(frames: np.ndarray):
    """Split frames into point, tangent, rotated tangent and diagonal limit."""
    pt = frames[:, 0]
    d1 = frames[:, 1]
    d2 = frames[:, 2]
    rot = np.column_stack((d1[:, 1], -d1[:, 0]))
    diag = np.einsum("ij,ij->i", d2, rot) / (2.0 * np.einsum("ij,ij->i", d1, d1))
    return pt, d1, rot, diag


def _dl_kernel_core(x_point, pt, d1, rot, delta, diag, diag_eps=0.0):
    """Broadcastable stable double-layer kernel.

    Kernel (gamma(x) - gamma(t)) . nu(t) |gamma'(t)| / |gamma(x) - gamma(t)|^2
    through the divided difference g = (gamma(x) - gamma(t)) / (x - t):
    (g - gamma'(t)) . rot(gamma'(t)) / ((x - t) |g|^2), exact also across
    corners since gamma' . rot(gamma') = 0.  ``diag`` carries the coincidence
    limit gamma'' . rot(gamma') / (2 |gamma'|^2), substituted where |delta| <
    ``diag_eps``.  Only the element containing the target may pass a nonzero
    ``diag_eps``: the limit assumes a smooth arc between the two points, and
    substituting it for pairs that straddle a corner erases the angle mass
    concentrated there.
    """
    with np.errstate(divide="ignore", invalid="ignore"):
        g = (x_point - pt) / delta[..., None]
        gm2 = np.einsum("...i,...i->...", g, g)
        val = np.einsum("...i,...i->...", g - d1, rot) / (delta * gm2)
    if diag_eps == 0.0:
        # a target and a foreign quadrature node can round onto the same
        # parameter once elements approach ulp scale; that pair's true
        # weighted contribution is below resolution, so drop it rather
        # than poison the sum with 0/0
        return np.where(delta == 0.0, 0.0, val)
    return np.where(np.abs(delta) < diag_eps, diag, val)


def double_layer_values(curve: Curve, g_of_points, params: np.ndarray,
                        order: int = DEFAULT_ORDER) -> np.ndarray:
    """Evaluate the double-layer potential K g on the curve at parameters.

    ``g_of_points`` maps an (m, 2) array of boundary points to values.  The
    kernel is bounded along smooth arcs and grows like 1/distance across
    corners, so near elements get graded composite rules.  A target may sit
    on a corner only if g decays there fast enough to keep the integrand
    bounded (as it does for data vanishing along straight edges).
    """
    kv = curve.knots
    params = _wrap_params(kv, np.atleast_1d(np.asarray(params, dtype=float)))
    m = len(params)
    n_el = kv.n_elements
    elems = kv.elements
    hs = elems[:, 1] - elems[:, 0]
    xg, wg = gauss_unit(order)

    grid = (elems[:, 0][:, None] + hs[:, None] * xg[None, :]).ravel()
    pt, d1, rot, diag = _dl_frame_parts(curve.frame(grid, 2))
    gjac = np.asarray(g_of_points(pt)) * (hs[:, None] * wg[None, :]).ravel()

    x_pts = curve.point(params)
    near = _near_elements(curve, params)
    out = np.empty(m)

    chunk = max(1, int(2e6 // max(len(grid), 1)))
    for s0 in range(0, m, chunk):
        sl = slice(s0, min(s0 + chunk, m))
        delta = np.asarray(curve.param_delta(params[sl, None], grid[None, :]),
                           dtype=float)
        kern = _dl_kernel_core(x_pts[sl, None], pt[None], d1[None], rot[None],
                               delta, diag[None])
        kern = kern.reshape(-1, n_el, order)
        kern[near[sl]] = 0.0
        out[sl] = kern.reshape(kern.shape[0], -1) @ gjac

    # The kernel is smooth inside the element containing the target, so the
    # correction rule there is plain Gauss, i.e. the cached grid itself.
    inside = np.array([kv.element_of(float(x)) for x in params])
    src = inside[:, None] * order + np.arange(order)[None, :]
    delta = np.asarray(curve.param_delta(params[:, None], grid[src]), dtype=float)
    kern = _dl_kernel_core(x_pts[:, None], pt[src], d1[src], rot[src], delta,
                           diag[src], diag_eps=1e-9)
    out += np.einsum("ij,ij->i", kern, gjac[src])

    # Remaining near elements get rules graded toward the target.  Pairs are
    # grouped by rule shape so frames and g are evaluated once per group.
    pair_i, pair_e = np.nonzero(near)
    keep = pair_e != inside[pair_i]
    for ii, ee, tp, tw in _graded_pair_rules(curve, params, pair_i[keep],
                                             pair_e[keep], order):
        gpt, gd1, grot, gdiag = _dl_frame_parts(curve.frame(tp.ravel(), 2))
        gv = np.asarray(g_of_points(gpt)).reshape(tp.shape)
        delta = np.asarray(curve.param_delta(params[ii][:, None], tp),
                           dtype=float)
        kern = _dl_kernel_core(
            x_pts[ii][:, None, :], gpt.reshape(tp.shape + (2,)),
            gd1.reshape(tp.shape + (2,)), grot.reshape(tp.shape + (2,)),
            delta, gdiag.reshape(tp.shape))
        np.add.at(out, ii, np.einsum("ij,ij->i", kern * tw, gv))
    return out / _TWO_PI


def dirichlet_rhs(curve: Curve, g_of_points, params,
                  order: int = DEFAULT_ORDER) -> np.ndarray:
    """(K + 1/2) g at the given parameters, for Dirichlet trace data g."""
    params = np.atleast_1d(np.asarray(params, dtype=float))
    pts = curve.point(params)
    return double_layer_values(curve, g_of_points, params, order) + 0.5 * np.asarray(
        g_of_points(pts)
    )
