"""Adaptive knot refinement driven by nodewise error indicators.

The mesh is tracked as a curve plus one bisection level per element.  A
refinement step translates a set of marked nodes into element operations:

* elements with both endpoint nodes marked are bisected;
* every other marked node gets its knot multiplicity raised by one, unless
  it is already at degree + 1, in which case the elements of its patch are
  bisected instead (open curve endpoints are always saturated, so marking a
  tip bisects the tip element);
* bisections are closed so that neighboring levels never differ by more
  than one, which keeps the meshes locally quasi-uniform: the ratio of
  neighboring element widths never exceeds twice that of the initial mesh.

Multiplicity raises change neither the element list nor the levels.
Elements already at the width floor ``MIN_WIDTH`` are never bisected; a
step whose every operation is floored returns the state unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .estimators import mesh_nodes, node_patches
from .geometry import Curve

__all__ = [
    "MIN_WIDTH",
    "MeshState",
    "initial_state",
    "dorfler_marking",
    "refine",
    "uniform_refine",
    "level_gaps_ok",
    "kappa",
]

# Elements are never bisected below this parameter width.  Strongly graded
# meshes (a reentrant corner needs widths ~ N^-6) otherwise reach the
# resolution of double precision around N ~ 400, where knot arithmetic
# starts colliding parameters and the assembled energies pick up noise.
MIN_WIDTH = 1e-12


@dataclass(frozen=True)
class MeshState:
    curve: Curve
    levels: tuple[int, ...]

    def __post_init__(self):
        if len(self.levels) != self.curve.knots.n_elements:
            raise ValueError("one level per element required")


def initial_state(curve: Curve) -> MeshState:
    return MeshState(curve, (0,) * curve.knots.n_elements)


def dorfler_marking(indicators_sq, theta: float) -> np.ndarray:
    """Minimal node set carrying a theta-fraction of the total square sum.

    Nodes are taken in order of decreasing indicator (ties by index), so the
    returned set is the canonical minimal one.  Returns sorted node indices.
    """
    if not 0.0 < theta <= 1.0:
        raise ValueError(f"theta must lie in (0, 1], got {theta}")
    sq = np.asarray(indicators_sq, dtype=float)
    total = float(sq.sum())
    if total <= 0.0:
        return np.empty(0, dtype=int)
    order = np.lexsort((np.arange(len(sq)), -sq))
    csum = np.cumsum(sq[order])
    target = theta * total
    k = int(np.searchsorted(csum, target - 1e-12 * total)) + 1
    return np.sort(order[: min(k, len(sq))])


def _neighbors(e: int, n: int, periodic: bool) -> list[int]:
    if periodic:
        return [(e - 1) % n, (e + 1) % n]
    return [f for f in (e - 1, e + 1) if 0 <= f < n]


def refine(state: MeshState, marked_nodes) -> MeshState:
    """Apply one adaptive step for the given marked node indices."""
    curve = state.curve
    kv = curve.knots
    n = kv.n_elements
    p = kv.degree
    marked = {int(z) for z in np.atleast_1d(np.asarray(marked_nodes, dtype=int))}
    if not marked:
        return state
    nodes = mesh_nodes(kv)
    patches = node_patches(kv)
    if not marked <= set(range(len(nodes))):
        raise ValueError("marked node index out of range")

    if kv.periodic:
        ends = [(e, (e + 1) % n) for e in range(n)]
    else:
        ends = [(e, e + 1) for e in range(n)]
    bisect = {e for e, (u, v) in enumerate(ends) if u in marked and v in marked}
    covered = set()
    for e in bisect:
        covered.update(ends[e])

    raises: list[float] = []
    for z in sorted(marked - covered):
        t = float(nodes[z])
        if kv.multiplicity_of(t) < p + 1:
            raises.append(t)
        else:
            bisect.update(patches[z])

    # close bisections so adjacent levels keep differing by at most one;
    # elements at the width floor refuse to split, and anything whose
    # closure would need them gives up its own split to keep the invariant
    elems = kv.elements
    levels = state.levels
    blocked = {e for e in range(n) if elems[e, 1] - elems[e, 0] < 2.0 * MIN_WIDTH}
    bisect -= blocked
    changed = True
    while changed:
        changed = False
        for e in list(bisect):
            for f in _neighbors(e, n, kv.periodic):
                if f not in bisect and levels[f] < levels[e]:
                    if f in blocked:
                        bisect.discard(e)
                    else:
                        bisect.add(f)
                    changed = True

    mids = [float(0.5 * (elems[e, 0] + elems[e, 1])) for e in sorted(bisect)]
    if not mids and not raises:
        return state
    new_levels: list[int] = []
    for e in range(n):
        if e in bisect:
            new_levels += [levels[e] + 1, levels[e] + 1]
        else:
            new_levels.append(levels[e])
    return MeshState(curve.refined(mids + raises), tuple(new_levels))


def uniform_refine(state: MeshState) -> MeshState:
    elems = state.curve.knots.elements
    mids = 0.5 * (elems[:, 0] + elems[:, 1])
    levels = tuple(lv + 1 for lv in state.levels for _ in range(2))
    return MeshState(state.curve.refined(mids), levels)


def level_gaps_ok(state: MeshState) -> bool:
    """Whether neighboring bisection levels differ by at most one."""
    lv = np.asarray(state.levels)
    if len(lv) < 2:
        return True
    gaps = np.abs(np.diff(lv))
    if state.curve.knots.periodic:
        gaps = np.append(gaps, abs(int(lv[0]) - int(lv[-1])))
    return bool(np.all(gaps <= 1))


def kappa(state: MeshState) -> float:
    """Largest ratio of neighboring element parameter widths."""
    elems = state.curve.knots.elements
    hs = elems[:, 1] - elems[:, 0]
    if len(hs) < 2:
        return 1.0
    ratios = hs[1:] / hs[:-1]
    if state.curve.knots.periodic:
        ratios = np.append(ratios, hs[0] / hs[-1])
    return float(np.max(np.maximum(ratios, 1.0 / ratios)))
