"""Max-norm cone geometry.

The horizontal cone of parameter alpha > 1 is the closed set
Delta_h = {(u1, u2): |u2| <= alpha*|u1|}; the vertical cone Delta_v is its
open complement.  Together they partition R^2 minus the origin, and ties on
the boundary always go to the horizontal side.

Besides membership, this module certifies that a linear map sends the
vertical cone strictly inside the horizontal one (the three-ray test on
extremal directions), and computes the minimum max-norm expansion of E^-1
over unit vectors of either cone.  The minimization is exact: on the segment
of unit directions the objective is piecewise linear, so its extrema sit at
endpoint or breakpoint values which we enumerate in rational arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, List, Optional, Sequence, Tuple

from .intmat import IntMatrix2, SingularMatrixError

VERTICAL = "vertical"
HORIZONTAL = "horizontal"

BOUNDARY_SLACK = 1e-12


@dataclass(frozen=True)
class Cone:
    """A vertical (open) or horizontal (closed) max-norm cone of slope alpha."""

    alpha: float
    orientation: str

    def __post_init__(self):
        if not self.alpha > 1:
            raise ValueError(f"cone parameter must exceed 1, got alpha={self.alpha}")
        if self.orientation not in (VERTICAL, HORIZONTAL):
            raise ValueError(f"orientation must be {VERTICAL!r} or {HORIZONTAL!r}")


@dataclass(frozen=True)
class ExpansionConstants:
    """Minimal max-norm expansion of E^-1 over each cone (e_v vertical, e_h horizontal)."""

    e_v: float
    e_h: float

    def __post_init__(self):
        if not (0 < self.e_h <= self.e_v):
            raise ValueError(
                f"expansion constants must satisfy 0 < e_h <= e_v, got e_h={self.e_h}, e_v={self.e_v}"
            )


def contains(cone: Cone, v: Sequence[float]) -> bool:
    """Exact cone membership; boundary |v2| = alpha*|v1| counts as horizontal."""
    v1, v2 = float(v[0]), float(v[1])
    if v1 == 0.0 and v2 == 0.0:
        raise ValueError("zero vector belongs to no cone")
    horizontal = abs(v2) <= cone.alpha * abs(v1)
    return horizontal if cone.orientation == HORIZONTAL else not horizontal


def certify_alpha(E: IntMatrix2, alpha: float, slack: float = BOUNDARY_SLACK) -> bool:
    """Certify that E^-1 maps the closure of the vertical cone into the
    horizontal cone.

    Sufficient test on the three extremal rays (1, alpha), (1, -alpha), (0, 1):
    cones are unions of rays between extremals and E^-1 is linear.  The
    comparison is closed (boundary contact allowed, up to `slack`): natural
    integer matrices meet the bound with equality on an extremal ray.
    """
    if E.det == 0:
        raise SingularMatrixError(f"matrix {E.flat()} is singular")
    if not alpha > 1:
        raise ValueError(f"cone parameter must exceed 1, got alpha={alpha}")
    adj = E.adjugate()
    d = abs(E.det)  # |det| scales both components; sign cancels in the comparison
    for ray in ((1.0, alpha), (1.0, -alpha), (0.0, 1.0)):
        u1 = adj.e11 * ray[0] + adj.e12 * ray[1]
        u2 = adj.e21 * ray[0] + adj.e22 * ray[1]
        if abs(u2) > alpha * abs(u1) + slack * d:
            return False
    return True


def search_alpha(E: IntMatrix2, candidates: Optional[Iterable[float]] = None) -> Optional[float]:
    """Heuristic coarse search for a certifiable cone parameter.

    Tries a fixed grid (or user-supplied candidates) and returns the first
    value passing certify_alpha, or None.  This is a convenience only; there
    is no claim of optimality or completeness.
    """
    if candidates is None:
        candidates = [1.25, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0, 12.0, 16.0, 24.0, 32.0]
    for alpha in candidates:
        if alpha > 1 and certify_alpha(E, alpha):
            return float(alpha)
    return None


def _affine_roots_in(lo: Fraction, hi: Fraction, coeffs: Sequence[Tuple[Fraction, Fraction]]):
    """Roots of the affine maps s -> c1*s + c0 inside [lo, hi]."""
    roots = []
    for c1, c0 in coeffs:
        if c1 != 0:
            s = -c0 / c1
            if lo <= s <= hi:
                roots.append(s)
    return roots


def min_expansion(E: IntMatrix2, cone: Cone) -> float:
    """Infimum of ||E^-1 v||_inf over max-norm unit vectors v in the cone's closure.

    Unit vectors of the closed vertical cone are (s, 1) with |s| <= 1/alpha
    (up to sign, which the norm ignores); horizontal ones are (1, s) with
    |s| <= alpha.  Writing E^-1 v(s) = (p(s), q(s)) with p, q affine, the
    objective max(|p|, |q|) is piecewise linear, so its minimum over the
    segment is attained at an endpoint or a breakpoint: a root of p, q,
    p - q, or p + q.  All candidates are evaluated in exact rationals.
    """
    if E.det == 0:
        raise SingularMatrixError(f"matrix {E.flat()} is singular")
    alpha = Fraction(cone.alpha)
    adj = E.adjugate()
    det = Fraction(E.det)

    if cone.orientation == VERTICAL:
        lo, hi = -1 / alpha, 1 / alpha
        # v(s) = (s, 1)
        p1, p0 = Fraction(adj.e11) / det, Fraction(adj.e12) / det
        q1, q0 = Fraction(adj.e21) / det, Fraction(adj.e22) / det
    else:
        lo, hi = -alpha, alpha
        # v(s) = (1, s)
        p1, p0 = Fraction(adj.e12) / det, Fraction(adj.e11) / det
        q1, q0 = Fraction(adj.e22) / det, Fraction(adj.e21) / det

    candidates: List[Fraction] = [lo, hi]
    candidates += _affine_roots_in(
        lo, hi, [(p1, p0), (q1, q0), (p1 - q1, p0 - q0), (p1 + q1, p0 + q0)]
    )
    best = min(max(abs(p1 * s + p0), abs(q1 * s + q0)) for s in candidates)
    return float(best)


def expansion_constants(E: IntMatrix2, alpha: float) -> ExpansionConstants:
    """The pair (e_v, e_h) of minimal expansions of E^-1 for a given alpha."""
    e_v = min_expansion(E, Cone(alpha, VERTICAL))
    e_h = min_expansion(E, Cone(alpha, HORIZONTAL))
    return ExpansionConstants(e_v=e_v, e_h=e_h)


def _pl_extreme(u1_c, u2_c, lo: float, hi: float, alpha: float) -> float:
    """Max of alpha*|u1(s)| - |u2(s)| over s in [lo, hi], u1/u2 affine (floats).

    Piecewise linear, so the maximum sits at an endpoint or at a sign change
    of u1 or u2.
    """
    cands = [lo, hi]
    for c1, c0 in (u1_c, u2_c):
        if c1 != 0.0:
            s = -c0 / c1
            if lo <= s <= hi:
                cands.append(s)
    worst = -float("inf")
    for s in cands:
        u1 = u1_c[0] * s + u1_c[1]
        u2 = u2_c[0] * s + u2_c[1]
        worst = max(worst, alpha * abs(u1) - abs(u2))
    return worst


def vertical_invariance_margin(M, alpha: float) -> float:
    """Worst margin of M * (closure of vertical cone) against the open vertical cone.

    Directions are parametrized (s, 1), |s| <= 1/alpha; the returned value is
    max over the closed cone of alpha*|u1| - |u2| for u = M v(s).  Strictly
    negative means M maps the cone closure strictly inside the open vertical
    cone; non-negative means some direction escapes (or touches the boundary).
    """
    m11, m12 = float(M[0][0]), float(M[0][1])
    m21, m22 = float(M[1][0]), float(M[1][1])
    u1_c = (m11, m12)  # u1(s) = m11*s + m12
    u2_c = (m21, m22)
    return _pl_extreme(u1_c, u2_c, -1.0 / alpha, 1.0 / alpha, alpha)


def sector_into_vertical_margin(M, alpha: float, s_lo: float, s_hi: float) -> float:
    """Worst margin of M * {(1, s): s_lo <= s <= s_hi} against the open vertical cone.

    Used for sub-sectors of the horizontal cone (|s| <= alpha).  Same sign
    convention as vertical_invariance_margin.
    """
    m11, m12 = float(M[0][0]), float(M[0][1])
    m21, m22 = float(M[1][0]), float(M[1][1])
    u1_c = (m12, m11)  # u1(s) = m12*s + m11 for v = (1, s)
    u2_c = (m22, m21)
    return _pl_extreme(u1_c, u2_c, float(s_lo), float(s_hi), alpha)
