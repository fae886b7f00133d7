"""A-posteriori error estimation for the single-layer equation.

Both estimators work on the boundary residual r = f - V phi_h, sampled once
per element at a Gauss grid and carried around as a per-element polynomial
interpolant.  Indicators live on mesh nodes z and their two-element patches
omega(z) (one element at the open endpoints of a curve, wrap-around at the
seam of a closed one).

* Faermann indicator: squared H^(1/2) seminorm of the residual on the patch,

      eta(z)^2 = int int_(omega x omega)
                 (r(s) - r(t))^2 |gamma'(s)| |gamma'(t)| / |x_s - x_t|^2,

  evaluated in parameters with physical distances.  The integrand extends
  continuously to the diagonal with value (dr/dt)^2.
* weighted-residual indicator: mu(z)^2 = weight(z) * int_omega (r')^2 with
  the arclength derivative r'; the weight is the parameter patch length for
  driving mesh refinement and the arclength patch length in estimates that
  compare against eta.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .geometry import Curve
from .operators import single_layer_values
from .quadrature import gauss_unit, graded_unit
from .splines import rational_basis

__all__ = [
    "ResidualData",
    "sample_residual",
    "mesh_nodes",
    "node_patches",
    "faermann_indicators",
    "residual_indicators",
    "partition_quality",
    "PartitionCheck",
]

_RULE = 16  # quadrature order inside the patch integrals
_CROSS_LEVELS = 2  # dyadic grading toward the shared node in cross terms


# --------------------------------------------------------------------------
# residual sampling and interpolation
# --------------------------------------------------------------------------


@lru_cache(maxsize=None)
def _bary_data(q: int):
    """Gauss nodes on [0, 1] with barycentric weights and diff matrix."""
    x, _ = gauss_unit(q)
    diff = x[:, None] - x[None, :]
    np.fill_diagonal(diff, 1.0)
    w = 1.0 / np.prod(diff, axis=1)
    w = w / np.max(np.abs(w))
    D = (w[None, :] / w[:, None]) / diff
    np.fill_diagonal(D, 0.0)
    np.fill_diagonal(D, -D.sum(axis=1))
    for arr in (x, w, D):
        arr.flags.writeable = False
    return x, w, D


def _bary_matrix(q: int, xs: np.ndarray) -> np.ndarray:
    """Evaluation matrix from values at the q Gauss nodes to points xs."""
    nodes, w, _ = _bary_data(q)
    diff = xs[:, None] - nodes[None, :]
    hit = diff == 0.0
    diff[hit] = 1.0
    C = w[None, :] / diff
    M = C / C.sum(axis=1, keepdims=True)
    rows = hit.any(axis=1)
    if rows.any():
        M[rows] = hit[rows].astype(float)
    return M


@dataclass
class ResidualData:
    """Residual samples on a per-element Gauss grid plus interpolants."""

    curve: Curve
    q_int: int
    params: np.ndarray  # (n_el, q) parameter grid
    values: np.ndarray  # (n_el, q) residual samples
    deriv_nodes: np.ndarray  # (n_el, q) interpolant derivative, unit coords

    @classmethod
    def from_samples(cls, curve: Curve, values: np.ndarray, q_int: int):
        elems = curve.knots.elements
        xg, _ = gauss_unit(q_int)
        params = elems[:, 0][:, None] + (elems[:, 1] - elems[:, 0])[:, None] * xg
        values = np.asarray(values, dtype=float).reshape(params.shape)
        _, _, D = _bary_data(q_int)
        return cls(curve, q_int, params, values, values @ D.T)

    @classmethod
    def from_function(cls, curve: Curve, func, q_int: int = 8):
        elems = curve.knots.elements
        xg, _ = gauss_unit(q_int)
        params = elems[:, 0][:, None] + (elems[:, 1] - elems[:, 0])[:, None] * xg
        return cls.from_samples(curve, func(params.ravel()), q_int)

    def eval(self, matrix: np.ndarray) -> np.ndarray:
        """Apply an evaluation matrix to all element value rows: (n_el, m)."""
        return self.values @ matrix.T

    def eval_deriv(self, matrix: np.ndarray) -> np.ndarray:
        return self.deriv_nodes @ matrix.T


def sample_residual(curve: Curve, coeffs: np.ndarray, f_of_params,
                    order: int = 16, q_int: int | None = None) -> ResidualData:
    """Sample r = f - V phi_h on every element's interior Gauss grid."""
    if q_int is None:
        q_int = max(curve.degree + 2, 6)
    elems = curve.knots.elements
    xg, _ = gauss_unit(q_int)
    params = elems[:, 0][:, None] + (elems[:, 1] - elems[:, 0])[:, None] * xg
    flat = params.ravel()
    res = np.asarray(f_of_params(flat)) - single_layer_values(
        curve, coeffs, flat, order=order
    )
    return ResidualData.from_samples(curve, res, q_int)


# --------------------------------------------------------------------------
# node and patch bookkeeping
# --------------------------------------------------------------------------


def mesh_nodes(kv) -> np.ndarray:
    """Node parameters carrying indicators: breakpoints, seam counted once."""
    bp = np.asarray(kv.breakpoints, dtype=float)
    return bp[:-1] if kv.periodic else bp


def node_patches(kv) -> list[tuple[int, ...]]:
    """Element indices of each node's patch, aligned with mesh_nodes."""
    n = kv.n_elements
    if kv.periodic:
        return [((j - 1) % n, j) for j in range(n)]
    patches: list[tuple[int, ...]] = [(0,)]
    patches += [(j - 1, j) for j in range(1, n)]
    patches.append((n - 1,))
    return patches


# --------------------------------------------------------------------------
# Faermann indicator
# --------------------------------------------------------------------------


def _element_square_integrals(res: ResidualData) -> np.ndarray:
    """For every element T: the double integral of the seminorm over T x T.

    T x T is split into four subsquares at the midpoint so that the two
    congruent halves share their one-dimensional point sets; the integrand
    is evaluated with the diagonal limit where points coincide.
    """
    curve = res.curve
    elems = curve.knots.elements
    hs = elems[:, 1] - elems[:, 0]
    xg, wg = gauss_unit(_RULE)
    halves = (0.5 * xg, 0.5 + 0.5 * xg)
    mats = [_bary_matrix(res.q_int, hx) for hx in halves]

    vals = [res.eval(m) for m in mats]  # (n_el, RULE) each half
    ders = [res.eval_deriv(m) for m in mats]
    params = [elems[:, 0][:, None] + hs[:, None] * hx for hx in halves]
    frames = [curve.frame(p.ravel(), 1) for p in params]
    pts = [fr[:, 0].reshape(len(elems), _RULE, 2) for fr in frames]
    sps = [np.hypot(fr[:, 1, 0], fr[:, 1, 1]).reshape(len(elems), _RULE)
           for fr in frames]

    out = np.zeros(len(elems))
    w2 = wg[:, None] * wg[None, :]
    for a in range(2):
        for b in range(2):
            dr = vals[a][:, :, None] - vals[b][:, None, :]
            dx = pts[a][:, :, None, 0] - pts[b][:, None, :, 0]
            dy = pts[a][:, :, None, 1] - pts[b][:, None, :, 1]
            dist2 = dx * dx + dy * dy
            spsp = sps[a][:, :, None] * sps[b][:, None, :]
            ds = params[a][:, :, None] - params[b][:, None, :]
            diag = np.abs(ds) < 1e-13 * hs[:, None, None]
            dist2[diag] = 1.0
            integrand = dr * dr * spsp / dist2
            if diag.any():
                dmid = 0.5 * (ders[a][:, :, None] + ders[b][:, None, :])
                limit = (dmid / hs[:, None, None]) ** 2
                integrand[diag] = limit[diag]
            out += 0.25 * np.einsum("eij,ij->e", integrand, w2)
    return out * hs**2


def _cross_integral(res: ResidualData, e_left: int, e_right: int) -> float:
    """Patch cross term over T_left x T_right sharing one node.

    The integrand only sees physical distances, so the seam pair of a closed
    curve needs no special casing beyond picking the right two elements.
    """
    curve = res.curve
    elems = curve.knots.elements
    lo1, hi1 = (float(v) for v in elems[e_left])
    lo2, hi2 = (float(v) for v in elems[e_right])
    h1, h2 = hi1 - lo1, hi2 - lo2

    xs1, ws1 = graded_unit(_RULE, _CROSS_LEVELS, toward=1.0)
    xs2, ws2 = graded_unit(_RULE, _CROSS_LEVELS, toward=0.0)
    m1 = _bary_matrix(res.q_int, xs1)
    m2 = _bary_matrix(res.q_int, xs2)
    r1 = (res.values[e_left] @ m1.T)
    r2 = (res.values[e_right] @ m2.T)
    p1 = lo1 + h1 * xs1
    p2 = lo2 + h2 * xs2
    f1 = curve.frame(p1, 1)
    f2 = curve.frame(p2, 1)
    sp1 = np.hypot(f1[:, 1, 0], f1[:, 1, 1])
    sp2 = np.hypot(f2[:, 1, 0], f2[:, 1, 1])

    dr = r1[:, None] - r2[None, :]
    dx = f1[:, None, 0, 0] - f2[None, :, 0, 0]
    dy = f1[:, None, 0, 1] - f2[None, :, 0, 1]
    dist2 = dx * dx + dy * dy
    integrand = dr * dr * (sp1[:, None] * sp2[None, :]) / dist2
    return float(h1 * h2 * np.einsum("ij,i,j->", integrand, ws1, ws2))


def faermann_indicators(res: ResidualData) -> np.ndarray:
    """Squared Faermann indicators on the mesh nodes."""
    kv = res.curve.knots
    squares = _element_square_integrals(res)
    patches = node_patches(kv)
    out = np.empty(len(patches))
    for j, patch in enumerate(patches):
        if len(patch) == 1:
            out[j] = squares[patch[0]]
            continue
        eL, eR = patch
        out[j] = (squares[eL] + squares[eR]
                  + 2.0 * _cross_integral(res, eL, eR))
    return out


# --------------------------------------------------------------------------
# weighted-residual indicator
# --------------------------------------------------------------------------


def _element_derivative_integrals(res: ResidualData) -> np.ndarray:
    """int_T (r')^2 per element, r' the arclength derivative of the residual."""
    curve = res.curve
    elems = curve.knots.elements
    hs = elems[:, 1] - elems[:, 0]
    xg, wg = gauss_unit(_RULE)
    M = _bary_matrix(res.q_int, xg)
    dv = res.eval_deriv(M)  # d/dx on unit coords, (n_el, RULE)
    params = elems[:, 0][:, None] + hs[:, None] * xg
    sp = curve.speed(params.ravel()).reshape(params.shape)
    # int (R'(t)/|gamma'|)^2 |gamma'| dt = (1/h) int (dR/dx)^2 / |gamma'| dx
    return (dv * dv / sp) @ wg / hs


def residual_indicators(res: ResidualData, weight: str = "parameter") -> np.ndarray:
    """Squared weighted-residual indicators on the mesh nodes.

    weight="parameter" scales by the parameter patch length (used for
    marking); weight="arclength" by the physical patch length (used when
    comparing against the Faermann indicator).
    """
    kv = res.curve.knots
    curve = res.curve
    integrals = _element_derivative_integrals(res)
    if weight == "parameter":
        lens = kv.elements[:, 1] - kv.elements[:, 0]
    elif weight == "arclength":
        lens = curve.element_lengths
    else:
        raise ValueError(f"unknown weight {weight!r}")
    patches = node_patches(kv)
    out = np.empty(len(patches))
    for j, patch in enumerate(patches):
        idx = list(patch)
        out[j] = float(np.sum(lens[idx])) * float(np.sum(integrals[idx]))
    return out


# --------------------------------------------------------------------------
# partition-of-unity quality of the discrete space
# --------------------------------------------------------------------------


@dataclass
class PartitionCheck:
    q_min: float
    contained: bool
    q_per_element: np.ndarray


def partition_quality(curve: Curve, order: int = 16) -> PartitionCheck:
    """Per element: pick the basis function of smallest support containing
    it and measure how close that function is to the constant one on its
    support,

        q_T = 1 - ||1 - psi_T||^2_{L2(supp)} / |supp|,

    both in arclength.  Candidates whose support stays inside the
    ceil(p/2)-layer element patch around T are preferred (ties break toward
    the smallest parameter support, then smallest arclength, then index);
    ``contained`` reports whether every element found such a candidate.
    Positive q_min together with containment is what the weighted-residual
    reliability argument needs from the space.
    """
    kv = curve.knots
    p = kv.degree
    n_el = kv.n_elements
    xg, wg = gauss_unit(order)
    elems = kv.elements
    hs = elems[:, 1] - elems[:, 0]
    params = elems[:, 0][:, None] + hs[:, None] * xg
    flat = params.ravel()
    first, R = rational_basis(kv, curve.basis_weights, flat)
    first = first.reshape(n_el, order)[:, 0]
    basis = R[:, 0, :].reshape(n_el, order, p + 1)
    sp = curve.speed(flat).reshape(n_el, order)
    arc = curve.element_lengths

    # elements covered by each basis function, via the element windows
    cover: dict[int, list[int]] = {}
    for e in range(n_el):
        for q in range(first[e], first[e] + p + 1):
            cover.setdefault(int(q), []).append(e)

    m_layers = (p + 1) // 2
    q_per_element = np.empty(n_el)
    contained = True
    for e in range(n_el):
        if kv.periodic:
            patch = {(e + k) % n_el for k in range(-m_layers, m_layers + 1)}
        else:
            patch = {e2 for e2 in range(e - m_layers, e + m_layers + 1)
                     if 0 <= e2 < n_el}
        cands = []
        for q in range(first[e], first[e] + p + 1):
            els = cover[int(q)]
            fits = set(els) <= patch
            cands.append((not fits, float(np.sum(hs[els])),
                          float(np.sum(arc[els])), q))
        cands.sort()
        bad, _, supp_arc, q_best = cands[0]
        if bad:
            contained = False
        els = cover[int(q_best)]
        err = 0.0
        for e2 in els:
            psi = basis[e2][:, q_best - first[e2]]
            err += float(hs[e2] * np.sum(wg * (1.0 - psi) ** 2 * sp[e2]))
        q_per_element[e] = 1.0 - err / supp_arc
    return PartitionCheck(float(q_per_element.min()), contained, q_per_element)
