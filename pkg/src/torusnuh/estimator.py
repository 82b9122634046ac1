"""Preimage-tree averages of log pullback norms.

For a degree-d covering map f with constant Jacobian, the central quantity is
the determinant-weighted average over the n-step preimage tree

    I(x, v; f^n) = d^-n * sum over the d^n branches y of log ||(D_y f^n)^-1 v||,

together with the per-layer statistics: g_i counts branches whose pulled-back
direction lies in the (open) vertical cone after i steps, and the layer
averages J_i decompose I additively: I(x, v; f^n) = sum_{i<n} J_i, where J_i
averages the one-step quantity I(y, w; f) over the depth-i tree nodes.

A positive uniform lower bound on I(x, v; f^n)/n over all (x, v) is the
quantity whose positivity certifies a negative exponent; this module computes
grid estimates of it (upper estimates of the infimum — sampling can only ever
overshoot an infimum).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .endo import EndoMap, PreconditionError, reduce_torus

DEFAULT_BUDGET = 10**7


class BudgetError(RuntimeError):
    """Raised when a tree or sampling request exceeds the branch budget."""

    def __init__(self, requested: int, budget: int):
        super().__init__(f"requested {requested} branches, budget is {budget}")
        self.requested = requested
        self.budget = budget


@dataclass(frozen=True)
class TangentSample:
    """A base point on the torus and a max-norm unit tangent direction."""

    x: Tuple[float, float]
    v: Tuple[float, float]

    def __post_init__(self):
        norm = max(abs(self.v[0]), abs(self.v[1]))
        if norm == 0.0:
            raise ValueError("tangent direction must be nonzero")
        if abs(norm - 1.0) > 1e-12:
            object.__setattr__(self, "v", (self.v[0] / norm, self.v[1] / norm))
        object.__setattr__(self, "x", (float(self.x[0]) % 1.0, float(self.x[1]) % 1.0))


@dataclass(frozen=True)
class PreimageTreeStats:
    """Layerwise statistics of one preimage tree.

    g[i], b[i] count vertical/non-vertical pulled-back directions among the
    d^i branches at depth i (g[0] is 1 or 0 for the root direction itself);
    a[i] = g[i]/d^i; J[i] is the depth-i layer average, and I_n their sum,
    computed independently as the plain leaf average.
    """

    n: int
    degree: int
    g: Tuple[int, ...]
    b: Tuple[int, ...]
    a: Tuple[float, ...]
    J: Tuple[float, ...]
    I_n: float

    def layer_sum(self) -> float:
        """The dual route to I_n: sum of the layer averages."""
        return math.fsum(self.J)

    def to_record(self) -> dict:
        return {
            "n": self.n,
            "g": list(self.g),
            "b": list(self.b),
            "a": list(self.a),
            "J": list(self.J),
            "I": self.I_n,
        }


@dataclass(frozen=True)
class RecursionConstants:
    """Constants of the good-fraction recursion a_{n+1} >= c*a_n + e."""

    tau2: int
    c: Fraction
    e: Fraction

    @staticmethod
    def for_tau2(tau2: int) -> "RecursionConstants":
        if tau2 < 5:
            raise PreconditionError(f"the recursion requires tau2 >= 5, got {tau2}")
        m = (tau2 - 1) // 2
        return RecursionConstants(
            tau2=tau2, c=Fraction(tau2 - 1 - m, tau2), e=Fraction(m, tau2)
        )


def good_fraction_bound(tau2: int, n: int) -> Fraction:
    """Exact lower bound for the fraction a_n of vertical branches at depth n:
    m/(1+m) * (1 - c^n) with c = (tau2-1-m)/tau2, m = floor((tau2-1)/2).

    This is the closed form of iterating a_{n+1} >= c*a_n + e from a_0 >= 0;
    note e/(1-c) = m/(1+m) because 1 - c = (1+m)/tau2.
    """
    if n < 0:
        raise ValueError(f"depth must be >= 0, got {n}")
    rc = RecursionConstants.for_tau2(tau2)
    m = (tau2 - 1) // 2
    return Fraction(m, 1 + m) * (1 - rc.c ** n)


def _is_vertical(W: np.ndarray, alpha: float) -> np.ndarray:
    """Strict vertical-cone membership; boundary ties count as horizontal."""
    return np.abs(W[:, 1]) > alpha * np.abs(W[:, 0])


def pullback_tree(f: EndoMap, sample: TangentSample, n: int,
                  budget: int = DEFAULT_BUDGET) -> PreimageTreeStats:
    """Enumerate all d^n preimage branches of sample.x, pulling the direction
    back with renormalization and accumulating log norms additively.

    Branches are laid out symbol-major (lexicographic in the branch word), so
    the floating-point reduction order is fixed and runs reproduce bit-equal.
    I_n comes from the leaf accumulations; the layer averages J_i come from
    each layer's step sums, giving an independent route to the same value.
    """
    if n < 0:
        raise ValueError(f"depth must be >= 0, got {n}")
    d = f.degree
    if d ** n > budget:
        raise BudgetError(d ** n, budget)

    X = np.array([sample.x], dtype=float)
    V = np.array([sample.v], dtype=float)
    acc = np.zeros(1, dtype=float)

    g = [int(_is_vertical(V, f.alpha)[0])]
    J: List[float] = []
    for i in range(n):
        N = X.shape[0]
        Xe = np.repeat(X, d, axis=0)
        Ve = np.repeat(V, d, axis=0)
        syms = np.tile(np.arange(d, dtype=int), N)
        Y = f.backward_step(Xe, syms)
        W, step_logs = f.pullback_directions(Y, Ve)
        acc = np.repeat(acc, d) + step_logs
        J.append(float(np.sum(step_logs)) / d ** (i + 1))
        g.append(int(np.count_nonzero(_is_vertical(W, f.alpha))))
        X, V = Y, W

    I_n = float(np.sum(acc)) / d ** n if n > 0 else 0.0
    b = tuple(d ** i - gi for i, gi in enumerate(g))
    a = tuple(gi / d ** i for i, gi in enumerate(g))
    return PreimageTreeStats(n=n, degree=d, g=tuple(g), b=b, a=a, J=tuple(J), I_n=I_n)


@dataclass(frozen=True)
class CChiEstimate:
    """Grid estimate of the uniform pullback-average rate at depth n."""

    value: float
    n: int
    argmin_x: Tuple[float, float]
    argmin_v: Tuple[float, float]
    grid: Tuple[int, int, int]


def direction_grid(ndirs: int) -> np.ndarray:
    """Max-norm unit directions at angles (2j+1)*pi/(2*ndirs), j = 0..ndirs-1.

    The half-integer offsets avoid the axes and the exact cone boundary."""
    angles = (2 * np.arange(ndirs) + 1) * math.pi / (2 * ndirs)
    V = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    return V / np.max(np.abs(V), axis=1)[:, None]


def midpoint_grid(nx: int, ny: int) -> np.ndarray:
    """Midpoints of a uniform nx x ny partition of the torus (they avoid the
    band boundaries of the canonical profiles)."""
    xs = (np.arange(nx) + 0.5) / nx
    ys = (np.arange(ny) + 0.5) / ny
    XX, YY = np.meshgrid(xs, ys, indexing="ij")
    return np.stack([XX.ravel(), YY.ravel()], axis=1)


def estimate_c_chi(f: EndoMap, n: int, nx: int = 8, ny: int = 8, ndirs: int = 8,
                   budget: int = DEFAULT_BUDGET) -> CChiEstimate:
    """min over an (nx x ny) x ndirs grid of (1/n) I(x, v; f^n), with argmin.

    This upper-estimates the true infimum over all (x, v): a finer grid can
    only decrease the reported minimum.
    """
    if n <= 0:
        raise ValueError(f"depth must be >= 1, got {n}")
    d = f.degree
    total = (nx * ny * ndirs) * (d ** n)
    if total > budget:
        raise BudgetError(total, budget)

    points = midpoint_grid(nx, ny)
    dirs = direction_grid(ndirs)
    best = math.inf
    best_x = best_v = None
    for x in points:
        for v in dirs:
            stats = pullback_tree(f, TangentSample((x[0], x[1]), (v[0], v[1])), n,
                                  budget=budget)
            val = stats.I_n / n
            if val < best:
                best = val
                best_x = (float(x[0]), float(x[1]))
                best_v = (float(v[0]), float(v[1]))
    return CChiEstimate(value=best, n=n, argmin_x=best_x, argmin_v=best_v,
                        grid=(nx, ny, ndirs))


def c_det(f: EndoMap) -> float:
    """The determinant growth rate: log d exactly for this constant-Jacobian
    family (the shear is conservative, so |det Df| = |det G| everywhere)."""
    return f.log_det
