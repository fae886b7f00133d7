"""Gaussian quadrature rules for smooth and logarithmically singular integrands.

Everything in here is plain numerics on the reference intervals [-1, 1] and
[0, 1].  Rules are returned as ``(nodes, weights)`` pairs of read-only arrays
and are cached per order, so repeated requests are cheap and bitwise
reproducible.

Three families are provided:

* ``gauss_legendre`` / ``gauss_unit``: classical Gauss-Legendre rules,
  computed by Newton iteration on the Legendre recurrence.
* ``gauss_log``: Gauss rules for the weight log(1/x) on [0, 1], built with
  the modified Chebyshev algorithm (shifted-Legendre modified moments) and
  the Golub-Welsch eigenvalue step.
* ``graded_unit``: composite Gauss rules on dyadically graded partitions of
  [0, 1], used near integrable endpoint singularities.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.linalg import eigh_tridiagonal

__all__ = [
    "gauss_legendre",
    "gauss_unit",
    "gauss_log",
    "graded_unit",
    "mapped_rule",
]

_NEWTON_TOL = 1e-15
_NEWTON_MAXIT = 100


def _legendre_with_derivative(n: int, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate P_n and P_n' at the points x via the three-term recurrence."""
    p_prev = np.ones_like(x)
    p = x.copy()
    for k in range(2, n + 1):
        p_prev, p = p, ((2 * k - 1) * x * p - (k - 1) * p_prev) / k
    # derivative from the standard identity; |x| < 1 at all Newton iterates
    dp = n * (x * p - p_prev) / (x * x - 1.0)
    return p, dp


@lru_cache(maxsize=None)
def _gauss_legendre_impl(n: int) -> tuple[np.ndarray, np.ndarray]:
    if n < 1:
        raise ValueError(f"rule order must be >= 1, got {n}")
    k = np.arange(n, dtype=float)
    x = np.cos(np.pi * (k + 0.75) / (n + 0.5))
    for _ in range(_NEWTON_MAXIT):
        p, dp = _legendre_with_derivative(n, x)
        dx = p / dp
        x -= dx
        if np.max(np.abs(dx)) < _NEWTON_TOL:
            break
    _, dp = _legendre_with_derivative(n, x)
    w = 2.0 / ((1.0 - x * x) * dp * dp)
    order = np.argsort(x)
    x, w = x[order], w[order]
    # enforce exact symmetry about the origin
    x = 0.5 * (x - x[::-1])
    w = 0.5 * (w + w[::-1])
    x.flags.writeable = False
    w.flags.writeable = False
    return x, w


def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    """n-point Gauss-Legendre rule on [-1, 1].

    Returns
    -------
    nodes, weights : ndarray
        Read-only arrays of length n, nodes ascending, weights summing to 2.
    """
    return _gauss_legendre_impl(int(n))


@lru_cache(maxsize=None)
def _gauss_unit_impl(n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = gauss_legendre(n)
    xu = 0.5 * (x + 1.0)
    wu = 0.5 * w
    xu.flags.writeable = False
    wu.flags.writeable = False
    return xu, wu


def gauss_unit(n: int) -> tuple[np.ndarray, np.ndarray]:
    """n-point Gauss-Legendre rule mapped to [0, 1] (weights sum to 1)."""
    return _gauss_unit_impl(int(n))


@lru_cache(maxsize=None)
def _gauss_log_impl(n: int) -> tuple[np.ndarray, np.ndarray]:
    if n < 1:
        raise ValueError(f"rule order must be >= 1, got {n}")
    nmom = 2 * n
    # Modified moments of log(1/x) against monic shifted Legendre polynomials:
    #   m_0 = 1,   m_k = (-1)^k / (k (k+1)) * (k!)^2 / (2k)!
    # computed with a ratio recursion to avoid factorial overflow.
    m = np.empty(nmom)
    m[0] = 1.0
    c = 1.0
    for k in range(1, nmom):
        c *= k / (2.0 * (2 * k - 1))
        m[k] = (-1.0) ** k / (k * (k + 1.0)) * c
    # Recurrence coefficients of the auxiliary (monic shifted Legendre) family.
    a = np.full(nmom, 0.5)
    ell = np.arange(nmom, dtype=float)
    b = np.zeros(nmom)
    b[1:] = ell[1:] ** 2 / (4.0 * (4.0 * ell[1:] ** 2 - 1.0))

    # Modified Chebyshev algorithm: shear the mixed-moment table row by row
    # until the diagonal yields the recurrence coefficients of the log weight.
    alpha = np.empty(n)
    beta = np.empty(n)
    alpha[0] = a[0] + m[1] / m[0]
    beta[0] = m[0]
    sig_prev = np.zeros(nmom + 1)
    sig_cur = np.zeros(nmom + 1)
    sig_cur[:nmom] = m
    for k in range(1, n):
        sig_new = np.zeros(nmom + 1)
        for j in range(k, nmom - k):
            sig_new[j] = (
                sig_cur[j + 1]
                - (alpha[k - 1] - a[j]) * sig_cur[j]
                - beta[k - 1] * sig_prev[j]
                + b[j] * sig_cur[j - 1]
            )
        alpha[k] = a[k] + sig_new[k + 1] / sig_new[k] - sig_cur[k] / sig_cur[k - 1]
        beta[k] = sig_new[k] / sig_cur[k - 1]
        sig_prev, sig_cur = sig_cur, sig_new

    if n == 1:
        nodes = alpha.copy()
        weights = beta.copy()
    else:
        vals, vecs = eigh_tridiagonal(alpha, np.sqrt(beta[1:]))
        nodes = vals
        weights = beta[0] * vecs[0, :] ** 2
    nodes.flags.writeable = False
    weights.flags.writeable = False
    return nodes, weights


def gauss_log(n: int) -> tuple[np.ndarray, np.ndarray]:
    """n-point Gauss rule for integrals of the form ∫_0^1 f(x) log(1/x) dx.

    The rule is exact for polynomial f up to degree 2n - 1 and has positive
    weights summing to 1.  Apply it to plain f; the log factor is built into
    the weights.
    """
    return _gauss_log_impl(int(n))


def mapped_rule(
    nodes: np.ndarray,
    weights: np.ndarray,
    lo: float,
    hi: float,
    source: tuple[float, float] = (0.0, 1.0),
) -> tuple[np.ndarray, np.ndarray]:
    """Affinely map a rule from its source interval onto [lo, hi]."""
    s0, s1 = source
    scale = (hi - lo) / (s1 - s0)
    return lo + (nodes - s0) * scale, weights * scale


def graded_unit(n: int, levels: int, toward: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Composite n-point Gauss rule on [0, 1], dyadically graded toward one end.

    The interval is split at 2^-levels, ..., 1/4, 1/2 (so ``levels + 1``
    panels) with the panels accumulating geometrically at the endpoint
    ``toward`` (0.0 or 1.0).  Suitable for integrands with an integrable
    singularity at that endpoint, e.g. log or weak algebraic blow-up.
    """
    if levels < 0:
        raise ValueError(f"levels must be >= 0, got {levels}")
    if toward not in (0.0, 1.0):
        raise ValueError(f"toward must be 0.0 or 1.0, got {toward}")
    edges = np.concatenate(([0.0], 0.5 ** np.arange(levels, -1, -1, dtype=float)))
    xs, ws = gauss_unit(n)
    parts_x = []
    parts_w = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        parts_x.append(lo + (hi - lo) * xs)
        parts_w.append((hi - lo) * ws)
    x = np.concatenate(parts_x)
    w = np.concatenate(parts_w)
    if toward == 1.0:
        x = 1.0 - x[::-1]
        w = w[::-1].copy()
    return x, w
