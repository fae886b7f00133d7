"""NURBS boundary curves: evaluation, benchmark geometries, config files.

A :class:`Curve` couples a :class:`~igabem.splines.KnotVector` with control
points and weights in per-period storage (see ``KnotVector.n_store``).  All
kinematic quantities (points, tangents, normals, speeds) are evaluated
through homogeneous coordinates, so circles and circular arcs are exact.

Closed curves are parametrized counterclockwise; the outward unit normal is
then the clockwise rotation of the unit tangent.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .quadrature import gauss_unit
from .splines import KnotVector, bspline_derivatives, insert_knot

__all__ = [
    "Curve",
    "slit",
    "square",
    "pacman",
    "circle",
    "bilipschitz_constant",
    "curve_to_config",
    "curve_from_config",
]

_LENGTH_RULE = 16  # Gauss points per element for arclength integrals
_CORNER_TOL = 1e-8  # angular tolerance for tangent jumps


@dataclass(frozen=True)
class Curve:
    """NURBS curve over a knot vector, with per-period control storage.

    Parameters
    ----------
    knots : KnotVector
    controls : ndarray, shape (n_store, 2)
    weights : ndarray, shape (n_store,)
        Strictly positive NURBS weights.
    """

    knots: KnotVector
    controls: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.controls, dtype=float))
        w = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "controls", c)
        object.__setattr__(self, "weights", w)
        n = self.knots.n_store
        if c.shape != (n, 2):
            raise ValueError(f"controls must have shape ({n}, 2), got {c.shape}")
        if w.shape != (n,):
            raise ValueError(f"weights must have shape ({n},), got {w.shape}")
        if not np.all(np.isfinite(c)) or not np.all(np.isfinite(w)):
            raise ValueError("controls and weights must be finite")
        if np.any(w <= 0):
            raise ValueError("weights must be positive")

    # -- basic facts ---------------------------------------------------------

    @property
    def closed(self) -> bool:
        return self.knots.periodic

    @property
    def degree(self) -> int:
        return self.knots.degree

    @cached_property
    def basis_weights(self) -> np.ndarray:
        """Weights in basis order (length ``knots.dim``)."""
        return self.weights[self.knots.period_slot(np.arange(self.knots.dim))]

    @cached_property
    def _hom(self) -> np.ndarray:
        """Homogeneous rows (w x, w y, w) in storage order."""
        return np.column_stack((self.weights[:, None] * self.controls, self.weights))

    # -- evaluation ----------------------------------------------------------

    def frame(self, ts, nd: int = 0, side: str = "right") -> np.ndarray:
        """Curve point and derivatives: array of shape (npts, nd + 1, 2).

        ``frame(ts, 2)[:, k]`` is the k-th parameter derivative of γ.  Closed
        curves accept any real parameter (periodic extension); derivatives at
        breakpoints are one-sided per ``side``.
        """
        kv = self.knots
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        if self.closed:
            # wrap strictly-outside parameters; keep t = b so callers can
            # take left limits at the seam
            inside = (ts >= kv.a) & (ts <= kv.b)
            if not np.all(inside):
                ts = ts.copy()
                wrapped = kv.a + (ts[~inside] - kv.a) % kv.period
                wrapped[wrapped >= kv.b] = kv.a
                ts[~inside] = wrapped
        first, ders = bspline_derivatives(kv.eval_knots, kv.degree, ts, nd, side)
        cols = kv.period_slot(first[:, None] + np.arange(kv.degree + 1)[None, :])
        hom = self._hom[cols]  # (npts, p + 1, 3)
        A = np.einsum("mkr,mrj->mkj", ders, hom)  # (npts, nd + 1, 3)
        out = np.empty((len(ts), nd + 1, 2))
        wsum = A[:, :, 2]
        out[:, 0] = A[:, 0, :2] / wsum[:, 0, None]
        for k in range(1, nd + 1):
            acc = A[:, k, :2].copy()
            binom = 1.0
            for j in range(1, k + 1):
                binom = binom * (k - j + 1) / j
                acc -= binom * out[:, k - j] * wsum[:, j, None]
            out[:, k] = acc / wsum[:, 0, None]
        return out

    def point(self, ts) -> np.ndarray:
        return self.frame(ts)[:, 0]

    def tangent(self, ts, side: str = "right") -> np.ndarray:
        return self.frame(ts, 1, side)[:, 1]

    def speed(self, ts, side: str = "right") -> np.ndarray:
        d = self.tangent(ts, side)
        return np.hypot(d[:, 0], d[:, 1])

    def normal(self, ts, side: str = "right") -> np.ndarray:
        """Unit normal (outward for counterclockwise closed curves)."""
        d = self.tangent(ts, side)
        sp = np.hypot(d[:, 0], d[:, 1])
        return np.column_stack((d[:, 1], -d[:, 0])) / sp[:, None]

    # -- parameter bookkeeping ------------------------------------------------

    def param_delta(self, s, t) -> np.ndarray:
        """Signed parameter difference s - t, wrapped to the minimal image
        for closed curves."""
        d = np.asarray(s, dtype=float) - np.asarray(t, dtype=float)
        if self.closed:
            P = self.knots.period
            d = (d + 0.5 * P) % P - 0.5 * P
        return d

    # -- arclength ------------------------------------------------------------

    @cached_property
    def element_lengths(self) -> np.ndarray:
        xs, ws = gauss_unit(_LENGTH_RULE)
        elems = self.knots.elements
        out = np.empty(len(elems))
        for k, (lo, hi) in enumerate(elems):
            sp = self.speed(lo + (hi - lo) * xs)
            out[k] = (hi - lo) * (ws @ sp)
        return out

    @property
    def length(self) -> float:
        return float(self.element_lengths.sum())

    def arclength_between(self, t0: float, t1: float, n: int = 64) -> float:
        """Arclength of γ([t0, t1]) by composite Gauss (t0 <= t1 expected)."""
        xs, ws = gauss_unit(n)
        sp = self.speed(t0 + (t1 - t0) * xs)
        return float((t1 - t0) * (ws @ sp))

    def arclength_table(self, per_element: int = 64):
        """Dense (params, cumulative arclength) sampling across the curve."""
        elems = self.knots.elements
        ts = np.concatenate(
            [np.linspace(lo, hi, per_element, endpoint=False) for lo, hi in elems]
            + [[self.knots.b]]
        )
        sp = self.speed(ts)
        dt = np.diff(ts)
        cum = np.concatenate(([0.0], np.cumsum(0.5 * (sp[:-1] + sp[1:]) * dt)))
        return ts, cum

    # -- corners ---------------------------------------------------------------

    def corner_params(self) -> np.ndarray:
        """Parameters of geometric corners (tangent direction jumps).

        Interior breakpoints are inspected for open curves, all breakpoints
        (with the seam reported at ``a``) for closed ones.
        """
        kv = self.knots
        candidates = list(kv.breakpoints[1:-1])
        if self.closed:
            candidates.append(kv.a)
        corners = []
        for z in candidates:
            zl = z if z != kv.a else kv.b
            tl = self.frame(np.array([zl]), 1, side="left")[0, 1]
            tr = self.frame(np.array([z]), 1, side="right")[0, 1]
            tl = tl / np.hypot(*tl)
            tr = tr / np.hypot(*tr)
            if 1.0 - tl @ tr > _CORNER_TOL:
                corners.append(z)
        return np.array(sorted(corners))

    # -- refinement --------------------------------------------------------------

    def refined(self, new_knots) -> "Curve":
        """Insert knots (repeats raise multiplicities); geometry is unchanged."""
        kv = self.knots
        hom = self._hom
        for t in sorted(np.atleast_1d(np.asarray(new_knots, dtype=float))):
            kv, hom = insert_knot(kv, hom, t)
        w = hom[:, 2]
        return Curve(kv, hom[:, :2] / w[:, None], w)


# ---------------------------------------------------------------------------
# benchmark geometries
# ---------------------------------------------------------------------------


def slit() -> Curve:
    """The straight slit [-1, 1] x {0}, parametrized affinely on [0, 1]."""
    kv = KnotVector(1, (0.0, 1.0), (2, 2))
    controls = np.array([[-1.0, 0.0], [1.0, 0.0]])
    return Curve(kv, controls, np.ones(2))


def square(side: float = 0.5) -> Curve:
    """Boundary of [0, side]^2, counterclockwise from the origin."""
    kv = KnotVector(1, (0.0, 0.25, 0.5, 0.75, 1.0), (2, 1, 1, 1, 2), periodic=True)
    s = float(side)
    controls = np.array([[0, 0], [s, 0], [s, s], [0, s], [0, 0]], dtype=float)
    return Curve(kv, controls, np.ones(5))


def pacman(radius: float = 0.1, opening: float = 0.25 * np.pi) -> Curve:
    """Circular sector with a reentrant corner at the origin.

    The sector spans the angle ``2 pi - opening`` symmetrically about the
    positive x axis; the parametrization runs counterclockwise, starting and
    closing at the reentrant corner, with the two straight edges on the first
    and last sixth of the parameter interval and the circular part split into
    three equal rational arcs.
    """
    r = float(radius)
    half = np.pi - 0.5 * opening  # edge angle magnitude (7/8 pi by default)
    angles = np.linspace(-half, half, 4)  # arc junctions, three equal arcs
    delta = 0.5 * (angles[1] - angles[0])
    wa = np.cos(delta)

    def on_circle(alpha):
        return [r * np.cos(alpha), r * np.sin(alpha)]

    def arc_mid(a0, a1):
        m = 0.5 * (a0 + a1)
        return [r / np.cos(0.5 * (a1 - a0)) * np.cos(m), r / np.cos(0.5 * (a1 - a0)) * np.sin(m)]

    p1 = on_circle(angles[0])
    p2 = on_circle(angles[3])
    controls = np.array(
        [
            [0.0, 0.0],
            [0.5 * p1[0], 0.5 * p1[1]],
            p1,
            arc_mid(angles[0], angles[1]),
            on_circle(angles[1]),
            arc_mid(angles[1], angles[2]),
            on_circle(angles[2]),
            arc_mid(angles[2], angles[3]),
            p2,
            [0.5 * p2[0], 0.5 * p2[1]],
            [0.0, 0.0],
        ]
    )
    weights = np.array([1, 1, 1, wa, 1, wa, 1, wa, 1, 1, 1], dtype=float)
    kv = KnotVector(
        2,
        (0.0, 1 / 6, 7 / 18, 11 / 18, 5 / 6, 1.0),
        (3, 2, 2, 2, 2, 3),
        periodic=True,
    )
    return Curve(kv, controls, weights)


def circle(radius: float = 1.0) -> Curve:
    """Exact circle from four rational quadrant arcs (seam at angle 0)."""
    r = float(radius)
    c = np.array(
        [
            [r, 0], [r, r], [0, r], [-r, r], [-r, 0],
            [-r, -r], [0, -r], [r, -r], [r, 0],
        ],
        dtype=float,
    )
    s = np.sqrt(2.0) / 2.0
    w = np.array([1, s, 1, s, 1, s, 1, s, 1], dtype=float)
    kv = KnotVector(2, (0.0, 0.25, 0.5, 0.75, 1.0), (3, 2, 2, 2, 3), periodic=True)
    return Curve(kv, c, w)


# ---------------------------------------------------------------------------
# geometric constants
# ---------------------------------------------------------------------------


def bilipschitz_constant(curve: Curve, samples: int = 1200) -> float:
    """Bi-Lipschitz constant of the arclength parametrization.

    Computed as the maximal ratio of arclength distance to chord distance
    over a dense sampling; for closed curves only pairs with forward
    arclength distance up to three quarters of the total length enter
    (chords can vanish for larger separations).  Always >= 1.
    """
    ts, cum = curve.arclength_table(per_element=max(2, samples // curve.knots.n_elements))
    pts = curve.point(ts)
    L = cum[-1]
    arc = np.abs(cum[:, None] - cum[None, :])
    chord = np.hypot(pts[:, None, 0] - pts[None, :, 0], pts[:, None, 1] - pts[None, :, 1])
    cap = 0.75 * L + 1e-12
    best = 1.0
    candidates = (arc, L - arc) if curve.closed else (arc,)
    for A in candidates:
        m = (A > 0) & (A <= cap) & (chord > 0)
        if m.any():
            best = max(best, float((A[m] / chord[m]).max()))
    return best


# ---------------------------------------------------------------------------
# config files
# ---------------------------------------------------------------------------


def curve_to_config(curve: Curve, path=None) -> dict:
    """Serialize a curve to a plain dict (and optionally a JSON file)."""
    cfg = {
        "degree": curve.degree,
        "breakpoints": list(curve.knots.breakpoints),
        "multiplicities": list(curve.knots.multiplicities),
        "periodic": curve.closed,
        "controls": curve.controls.tolist(),
        "weights": curve.weights.tolist(),
    }
    if path is not None:
        Path(path).write_text(json.dumps(cfg, indent=2) + "\n", encoding="utf-8")
    return cfg


_BUILTIN_CURVES = {}


def curve_from_config(source) -> Curve:
    """Build a curve from a dict, a JSON file path, or a builtin name."""
    if isinstance(source, (str, Path)) and str(source) in _BUILTIN_CURVES:
        return _BUILTIN_CURVES[str(source)]()
    if isinstance(source, (str, Path)):
        source = json.loads(Path(source).read_text(encoding="utf-8"))
    kv = KnotVector(
        int(source["degree"]),
        tuple(source["breakpoints"]),
        tuple(source["multiplicities"]),
        bool(source.get("periodic", False)),
    )
    return Curve(kv, np.asarray(source["controls"], dtype=float), np.asarray(source["weights"], dtype=float))


_BUILTIN_CURVES.update({"slit": slit, "square": square, "pacman": pacman, "circle": circle})
