"""B-spline and NURBS spline spaces on an interval or a closed parameter loop.

Two layers live here.  The low-level engine (``find_span``, ``bspline_values``,
``bspline_derivatives``, ``bspline_dense``) works on raw expanded knot arrays
and is a vectorized transcription of the classical basis-function recurrences
(Piegl & Tiller, algorithms A2.2/A2.3): all branch bounds depend only on the
degree and derivative order, never on the evaluation point, so whole batches
of points are processed with numpy at once.

The high-level :class:`KnotVector` describes a spline space by breakpoints and
multiplicities.  Open (clamped) vectors carry multiplicity ``p + 1`` at both
ends.  Periodic vectors describe spline spaces on a parameter loop of period
``b - a``; the two stored endpoints are identified, and basis functions are
restrictions to ``[a, b)`` of the line splines on the periodically extended
knot sequence.  Both cases expose the same ``eval_knots`` array, so every
consumer evaluates through one code path.

Knot insertion transports coefficient rows in homogeneous form and never
changes the represented function; for periodic vectors it inserts the knot
image in the three central periods of a five-period window of the extended
sequence and reads the new per-period coefficients back out.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "find_span",
    "bspline_values",
    "bspline_derivatives",
    "bspline_dense",
    "KnotVector",
    "rational_basis",
    "insert_knot",
]


# --------------------------------------------------------------------------
# low-level engine on raw expanded knot arrays
# --------------------------------------------------------------------------


def find_span(knots: np.ndarray, degree: int, ts: np.ndarray, side: str = "right") -> np.ndarray:
    """Locate the knot span index for each evaluation point.

    Returns indices ``s`` with ``knots[s] <= t < knots[s+1]`` for
    ``side='right'`` (right limits at interior knots) or
    ``knots[s] < t <= knots[s+1]`` for ``side='left'`` (left limits).
    Only nonempty spans with full basis windows are returned; points at or
    beyond the ends are clamped into the outermost such span, which yields
    one-sided extension values there.
    """
    knots = np.asarray(knots, dtype=float)
    ts = np.asarray(ts, dtype=float)
    lo, hi = degree, len(knots) - degree - 2
    starts = np.arange(lo, hi + 1)
    starts = starts[knots[starts] < knots[starts + 1]]
    if len(starts) == 0:
        raise ValueError("knot array has no nonempty span with a full basis window")
    idx = np.searchsorted(knots[starts], ts, side=side) - 1
    return starts[np.clip(idx, 0, len(starts) - 1)]


def _basis_windows(knots, degree, spans, ts):
    """All nonzero basis values at each point: shape (npts, degree + 1)."""
    m = len(ts)
    p = degree
    vals = np.zeros((m, p + 1))
    vals[:, 0] = 1.0
    left = np.zeros((m, p + 1))
    right = np.zeros((m, p + 1))
    for j in range(1, p + 1):
        left[:, j] = ts - knots[spans + 1 - j]
        right[:, j] = knots[spans + j] - ts
        saved = np.zeros(m)
        for r in range(j):
            # denominator spans the current (nonempty) knot interval, so > 0
            temp = vals[:, r] / (right[:, r + 1] + left[:, j - r])
            vals[:, r] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        vals[:, j] = saved
    return vals


def _derivative_windows(knots, degree, spans, ts, nd):
    """Nonzero basis values and derivatives: shape (npts, nd + 1, degree + 1)."""
    m = len(ts)
    p = degree
    ndu = np.zeros((m, p + 1, p + 1))
    ndu[:, 0, 0] = 1.0
    left = np.zeros((m, p + 1))
    right = np.zeros((m, p + 1))
    for j in range(1, p + 1):
        left[:, j] = ts - knots[spans + 1 - j]
        right[:, j] = knots[spans + j] - ts
        saved = np.zeros(m)
        for r in range(j):
            ndu[:, j, r] = right[:, r + 1] + left[:, j - r]
            temp = ndu[:, r, j - 1] / ndu[:, j, r]
            ndu[:, r, j] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        ndu[:, j, j] = saved

    ders = np.zeros((m, nd + 1, p + 1))
    ders[:, 0, :] = ndu[:, :, p]
    a = np.zeros((m, 2, p + 1))
    for r in range(p + 1):
        s1, s2 = 0, 1
        a[:, 0, :] = 0.0
        a[:, 1, :] = 0.0
        a[:, s1, 0] = 1.0
        for k in range(1, nd + 1):
            d = np.zeros(m)
            rk = r - k
            pk = p - k
            if r >= k:
                a[:, s2, 0] = a[:, s1, 0] / ndu[:, pk + 1, rk]
                d = a[:, s2, 0] * ndu[:, rk, pk]
            j1 = 1 if rk >= -1 else -rk
            j2 = k - 1 if r - 1 <= pk else p - r
            for j in range(j1, j2 + 1):
                a[:, s2, j] = (a[:, s1, j] - a[:, s1, j - 1]) / ndu[:, pk + 1, rk + j]
                d = d + a[:, s2, j] * ndu[:, rk + j, pk]
            if r <= pk:
                a[:, s2, k] = -a[:, s1, k - 1] / ndu[:, pk + 1, r]
                d = d + a[:, s2, k] * ndu[:, r, pk]
            ders[:, k, r] = d
            s1, s2 = s2, s1

    fac = 1.0
    for k in range(1, nd + 1):
        fac *= p - k + 1
        ders[:, k, :] *= fac
    return ders


def bspline_values(knots, degree, ts, side="right"):
    """Evaluate the nonzero B-spline basis window at each point.

    Parameters
    ----------
    knots : array_like
        Expanded (repeated) nondecreasing knot array.
    degree : int
    ts : array_like
        Evaluation points.
    side : {'right', 'left'}
        Which one-sided limit to take at knots of reduced smoothness.

    Returns
    -------
    first : ndarray of int
        Index of the first nonzero basis function at each point.
    vals : ndarray, shape (npts, degree + 1)
        ``vals[i, r]`` is basis ``first[i] + r`` evaluated at ``ts[i]``.
    """
    knots = np.asarray(knots, dtype=float)
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    spans = find_span(knots, degree, ts, side)
    return spans - degree, _basis_windows(knots, degree, spans, ts)


def bspline_derivatives(knots, degree, ts, nd, side="right"):
    """Like :func:`bspline_values` but returns derivatives 0..nd.

    ``ders[i, k, r]`` is the k-th derivative of basis ``first[i] + r`` at
    ``ts[i]`` (one-sided limits per ``side``).
    """
    knots = np.asarray(knots, dtype=float)
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    spans = find_span(knots, degree, ts, side)
    return spans - degree, _derivative_windows(knots, degree, spans, ts, nd)


def bspline_dense(knots, degree, ts, nd=0, side="right"):
    """Dense evaluation of every basis function of a raw knot array.

    Pads the array with phantom outer knots so that short vectors (down to a
    single basis function) evaluate cleanly, then scatters the windows.

    Returns an array of shape ``(npts, nd + 1, ndim)`` where
    ``ndim = len(knots) - degree - 1``.
    """
    knots = np.asarray(knots, dtype=float)
    p = degree
    ndim = len(knots) - p - 1
    if ndim < 1:
        raise ValueError("knot array too short for the requested degree")
    pad_lo = knots[0] - np.arange(p, 0, -1, dtype=float)
    pad_hi = knots[-1] + np.arange(1, p + 1, dtype=float)
    padded = np.concatenate((pad_lo, knots, pad_hi))
    first, ders = bspline_derivatives(padded, p, ts, nd, side)
    first = first - p  # phantom offset
    out = np.zeros((ders.shape[0], nd + 1, ndim))
    cols = first[:, None] + np.arange(p + 1)[None, :]
    keep = (cols >= 0) & (cols < ndim)
    rows = np.broadcast_to(np.arange(ders.shape[0])[:, None], cols.shape)
    for k in range(nd + 1):
        out[rows[keep], k, cols[keep]] = ders[:, k, :][keep]
    return out


# --------------------------------------------------------------------------
# knot vectors
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class KnotVector:
    """Breakpoint/multiplicity description of a univariate spline space.

    Parameters
    ----------
    degree : int
    breakpoints : tuple of float
        Strictly increasing, including both interval ends.
    multiplicities : tuple of int
        One entry per breakpoint, each in ``[1, degree + 1]``.  Open vectors
        must be clamped (end multiplicities exactly ``degree + 1``).  Periodic
        vectors must carry equal multiplicities at the two (identified) ends.
    periodic : bool
        Whether the parameter domain is a loop of period ``b - a``.

    Notes
    -----
    For periodic vectors the spline space consists of the restrictions to
    ``[a, b)`` of degree-p splines on the periodically extended knot
    sequence.  With seam multiplicity ``degree + 1`` the extended evaluation
    array coincides with the clamped one, so closed curves with a corner at
    the seam look exactly like open ones to every evaluation routine.
    """

    degree: int
    breakpoints: tuple[float, ...]
    multiplicities: tuple[int, ...]
    periodic: bool = False

    def __post_init__(self):
        p = self.degree
        bp = tuple(float(z) for z in self.breakpoints)
        mult = tuple(int(m) for m in self.multiplicities)
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "multiplicities", mult)
        if p < 0:
            raise ValueError("degree must be nonnegative")
        if len(bp) < 2:
            raise ValueError("need at least two breakpoints")
        if len(bp) != len(mult):
            raise ValueError("breakpoints and multiplicities length mismatch")
        if any(z1 <= z0 for z0, z1 in zip(bp, bp[1:])):
            raise ValueError("breakpoints must be strictly increasing")
        if any(m < 1 or m > p + 1 for m in mult):
            raise ValueError(f"multiplicities must lie in [1, {p + 1}]")
        if self.periodic:
            if mult[0] != mult[-1]:
                raise ValueError("periodic vector needs equal end multiplicities")
            if self.n_period_knots < p + 1:
                raise ValueError("periodic vector needs at least degree + 1 knots per period")
        else:
            if mult[0] != p + 1 or mult[-1] != p + 1:
                raise ValueError("open vector must be clamped with end multiplicity degree + 1")

    # -- basic geometry of the parameter domain ----------------------------

    @property
    def a(self) -> float:
        return self.breakpoints[0]

    @property
    def b(self) -> float:
        return self.breakpoints[-1]

    @property
    def period(self) -> float:
        return self.b - self.a

    @property
    def n_elements(self) -> int:
        return len(self.breakpoints) - 1

    @property
    def elements(self) -> np.ndarray:
        """Array of shape (n_elements, 2) with element endpoints."""
        bp = np.asarray(self.breakpoints)
        return np.column_stack((bp[:-1], bp[1:]))

    @property
    def n_period_knots(self) -> int:
        """Knots per period counting multiplicity (periodic vectors)."""
        return int(sum(self.multiplicities[1:]))

    @property
    def seam_multiplicity(self) -> int:
        return self.multiplicities[0]

    @property
    def dim(self) -> int:
        if self.periodic:
            return self.n_period_knots + self.degree + 1 - self.seam_multiplicity
        return int(sum(self.multiplicities)) - self.degree - 1

    # -- expanded arrays ----------------------------------------------------

    @cached_property
    def period_knots(self) -> np.ndarray:
        """One period of the extended sequence, as values in [a, b).

        The seam knot sits at ``a`` with its full multiplicity.  Only
        meaningful for periodic vectors.
        """
        reps = (self.seam_multiplicity,) + self.multiplicities[1:-1]
        arr = np.repeat(np.asarray(self.breakpoints[:-1]), reps)
        arr.flags.writeable = False
        return arr

    @cached_property
    def eval_knots(self) -> np.ndarray:
        """Expanded knot array consumed by the evaluation engine.

        Basis function ``q`` (0-based, ``q < dim``) has support knots
        ``eval_knots[q : q + degree + 2]``.
        """
        if not self.periodic:
            arr = np.repeat(np.asarray(self.breakpoints), np.asarray(self.multiplicities))
        else:
            pk = self.period_knots
            n = len(pk)
            full = np.concatenate((pk - self.period, pk, pk + self.period))
            lo = n + self.seam_multiplicity - self.degree - 1
            arr = full[lo : 2 * n + self.degree + 1].copy()
        arr.flags.writeable = False
        return arr

    def period_slot(self, q) -> np.ndarray:
        """Map basis indices to per-period storage slots.

        Periodic spaces store one control point / weight per period knot;
        basis ``q`` reads slot ``(q + seam_mult - degree - 1) mod N``.  For
        open vectors this is the identity.
        """
        q = np.asarray(q, dtype=int)
        if not self.periodic:
            return q
        return (q + self.seam_multiplicity - self.degree - 1) % self.n_period_knots

    @property
    def n_store(self) -> int:
        """Rows of coefficient storage: dim for open, knots-per-period for periodic."""
        return self.n_period_knots if self.periodic else self.dim

    # -- queries ------------------------------------------------------------

    def multiplicity_of(self, t: float) -> int:
        t = self._normalize(t)
        for z, m in zip(self.breakpoints, self.multiplicities):
            if z == t:
                return m
        return 0

    def _normalize(self, t: float) -> float:
        """Reduce a parameter into [a, b) for periodic vectors.

        Parameters already inside come back bitwise unchanged, so exact
        breakpoint comparisons stay reliable.
        """
        if self.periodic:
            if self.a <= t < self.b:
                return t
            r = self.a + (t - self.a) % self.period
            # guard against roundoff pushing the reduction to b
            return self.a if r >= self.b else r
        return t

    def element_of(self, t: float, side: str = "right") -> int:
        """Index of the element containing t (one-sided at breakpoints)."""
        t = self._normalize(t) if self.periodic else t
        bp = np.asarray(self.breakpoints)
        k = int(np.searchsorted(bp, t, side=side)) - 1
        return min(max(k, 0), self.n_elements - 1)

    def element_basis(self, k: int) -> np.ndarray:
        """Indices of the basis functions supported on element k."""
        lo, hi = self.breakpoints[k], self.breakpoints[k + 1]
        mid = 0.5 * (lo + hi)
        span = int(find_span(self.eval_knots, self.degree, np.array([mid]), "right")[0])
        return np.arange(span - self.degree, span + 1)

    def collocation_points(self) -> np.ndarray:
        """One point per basis function: the mean of its support knots.

        Support-knot averages are strictly increasing (consecutive windows
        differ by a positive knot difference), so the points are distinct.
        Periodic vectors reduce them into [a, b).
        """
        E = self.eval_knots
        p = self.degree
        window = np.lib.stride_tricks.sliding_window_view(E, p + 2)[: self.dim]
        pts = window.mean(axis=1)
        if self.periodic:
            outside = (pts < self.a) | (pts >= self.b)
            wrapped = self.a + (pts[outside] - self.a) % self.period
            wrapped[wrapped >= self.b] = self.a
            pts[outside] = wrapped
        return pts

    # -- refinement ---------------------------------------------------------

    def with_knot(self, t: float) -> "KnotVector":
        """Knot structure after inserting t (use :func:`insert_knot` to
        transport coefficients)."""
        t = self._normalize(t)
        bp = list(self.breakpoints)
        mult = list(self.multiplicities)
        if t in bp:
            i = bp.index(t)
            if self.periodic and i in (0, len(bp) - 1):
                if mult[0] >= self.degree + 1:
                    raise ValueError("seam multiplicity already maximal")
                mult[0] += 1
                mult[-1] += 1
            else:
                if i in (0, len(bp) - 1):
                    raise ValueError("cannot raise end multiplicity of an open vector")
                if mult[i] >= self.degree + 1:
                    raise ValueError(f"multiplicity at {t} already maximal")
                mult[i] += 1
        else:
            if not self.a < t < self.b:
                raise ValueError(f"knot {t} outside parameter interval")
            i = int(np.searchsorted(np.asarray(bp), t))
            bp.insert(i, t)
            mult.insert(i, 1)
        return KnotVector(self.degree, tuple(bp), tuple(mult), self.periodic)


# --------------------------------------------------------------------------
# rational (NURBS) basis windows
# --------------------------------------------------------------------------


def rational_basis(kv: KnotVector, basis_weights: np.ndarray, ts, nd: int = 0, side: str = "right"):
    """Weighted (rational) basis window values and derivatives.

    ``basis_weights`` has one positive entry per basis function (length
    ``kv.dim``).  Returns ``(first, R)`` with ``R`` of shape
    ``(npts, nd + 1, degree + 1)``; derivatives come from the Leibniz
    expansion of ``R * W = w * B``.
    """
    p = kv.degree
    first, ders = bspline_derivatives(kv.eval_knots, p, ts, nd, side)
    cols = first[:, None] + np.arange(p + 1)[None, :]
    wwin = np.asarray(basis_weights)[cols]
    num = wwin[:, None, :] * ders
    wsum = num.sum(axis=2)
    R = np.empty_like(num)
    R[:, 0] = num[:, 0] / wsum[:, 0, None]
    for k in range(1, nd + 1):
        acc = num[:, k].copy()
        binom = 1.0
        for j in range(1, k + 1):
            binom = binom * (k - j + 1) / j
            acc -= binom * R[:, k - j] * wsum[:, j, None]
        R[:, k] = acc / wsum[:, 0, None]
    return first, R


# --------------------------------------------------------------------------
# knot insertion
# --------------------------------------------------------------------------


def _boehm(knots, degree, coeffs, t):
    """One Boehm insertion into a raw expanded array.

    ``coeffs`` has one row per basis function of ``knots``.  Returns the new
    expanded array and coefficient rows; the represented spline is unchanged
    wherever full basis windows exist.
    """
    p = degree
    k = int(find_span(knots, p, np.array([t]), "right")[0])
    new_knots = np.insert(knots, k + 1, t)
    n_new = coeffs.shape[0] + 1
    out = np.empty((n_new, coeffs.shape[1]))
    out[: k - p + 1] = coeffs[: k - p + 1]
    out[k + 1 :] = coeffs[k:]
    for i in range(k - p + 1, k + 1):
        alpha = (t - knots[i]) / (knots[i + p] - knots[i])
        out[i] = alpha * coeffs[i] + (1.0 - alpha) * coeffs[i - 1]
    return new_knots, out


def insert_knot(kv: KnotVector, coeffs: np.ndarray, t: float) -> tuple[KnotVector, np.ndarray]:
    """Insert a knot, transporting coefficient storage rows.

    ``coeffs`` is the storage array (shape ``(kv.n_store, d)``): one row per
    basis function for open vectors, one per period knot for periodic ones.
    Rows are transported linearly, so callers representing rational data must
    pass homogeneous coordinates.  Raising a multiplicity past ``degree + 1``
    raises ``ValueError``.

    Returns the refined vector and the new storage array (one extra row).
    """
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.ndim == 1:
        coeffs = coeffs[:, None]
    if coeffs.shape[0] != kv.n_store:
        raise ValueError(f"expected {kv.n_store} coefficient rows, got {coeffs.shape[0]}")
    p = kv.degree
    t = kv._normalize(t)
    new_kv = kv.with_knot(t)  # validates range and multiplicity

    if not kv.periodic:
        _, out = _boehm(kv.eval_knots, p, coeffs, t)
        return new_kv, out

    # Periodic: materialize five periods of the extended sequence, insert the
    # knot image into the three central ones, then read the central period's
    # coefficient rows back out.  Row r of the window is line basis r - 2N,
    # whose storage slot is r mod N.
    P = kv.period
    pk = kv.period_knots
    n = len(pk)
    wknots = np.concatenate([pk + s * P for s in (-2, -1, 0, 1, 2)])
    wcoeffs = np.tile(coeffs, (5, 1))[: 5 * n - p - 1]
    for shift in (-1.0, 0.0, 1.0):
        wknots, wcoeffs = _boehm(wknots, p, wcoeffs, t + shift * P)
    n_new = n + 1
    lo = n + n_new
    return new_kv, wcoeffs[lo : lo + n_new].copy()
