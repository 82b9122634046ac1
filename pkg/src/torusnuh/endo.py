"""The shear-deformed torus endomorphism family f_t = E o h_t.

h_t(x1, x2) = (x1, x2 + t*s(x1)) is a conservative vertical shear driven by a
trigonometric-polynomial profile s, and E is an integer matrix in normal
position (preimage lattice (1/tau2)Z x (1/tau1)Z).  The circle splits into
four bands: two narrow "critical" bands I1, I3 (closed) where s' is small and
changes sign, and two "good" bands in between where s' is uniformly signed
and large (a <= |s'| <= b).  The whole construction is chosen so that, for
large t, pulled-back tangent vectors fall into the vertical max-norm cone on
most preimage branches and expand there.

Composition order: the default is E o h_t ("EH"); the alternative h_t o E
("HE") is available behind the `order` flag for the curve experiments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import cones
from .intmat import (
    HomothetyError,
    IntMatrix2,
    SingularMatrixError,
    coset_representatives,
    lattice_predicate,
    smith_normal_form,
)

TWO_PI = 2.0 * math.pi
SNAP = 1e-12  # torus reduction snap-to-zero

CRITICAL = "critical"
GOOD_PLUS = "good_plus"
GOOD_MINUS = "good_minus"

ORDER_EH = "EH"  # f = E o h_t
ORDER_HE = "HE"  # f = h_t o E

_GRID_POINTS = 10_000  # profile validation grid


class PreconditionError(ValueError):
    """Raised when construction-time hypotheses (degree structure, profile
    derivative conditions, cone certificate) fail."""


def reduce_torus(x):
    """Reduce coordinates to [0, 1) with a snap-to-zero for values within
    SNAP of an integer, so region classification does not flap at 1.0-eps."""
    r = np.asarray(x, dtype=float) % 1.0
    r = np.where(r > 1.0 - SNAP, 0.0, r)
    r = np.where(np.abs(r) < SNAP, 0.0, r)
    return r


def torus_dist(x, y):
    """Max-norm distance on the torus, coordinate-wise minimal representative."""
    d = np.abs(np.asarray(x, dtype=float) - np.asarray(y, dtype=float)) % 1.0
    d = np.minimum(d, 1.0 - d)
    return np.max(d, axis=-1)


def circle_dist(u, v):
    d = abs((float(u) - float(v)) % 1.0)
    return min(d, 1.0 - d)


@dataclass(frozen=True)
class ShearProfile:
    """A shear profile s: T^1 -> R given as a finite trigonometric polynomial
    s(u) = sum_j cos_amps[j-1]*cos(2 pi j u) + sin_amps[j-1]*sin(2 pi j u),
    together with its derivative bounds and the band endpoints.

    a and b bound the derivative: a <= s' <= b on I4 = (x4, x1) (wrapping
    through 0), -b <= s' <= -a on I2 = (x2, x3), and |s'| <= b everywhere;
    the critical bands are I1 = [x1, x2] and I3 = [x3, x4], both of width
    2*delta.  Comparisons are closed: the canonical profile attains the
    bounds at band boundaries.
    """

    sin_amps: Tuple[float, ...]
    cos_amps: Tuple[float, ...]
    a: float
    b: float
    x1: float
    x2: float
    x3: float
    x4: float
    delta: float

    def __post_init__(self):
        if len(self.sin_amps) != len(self.cos_amps):
            raise ValueError("sin_amps and cos_amps must have equal length")
        if not (0.0 <= self.x1 < self.x2 < self.x3 < self.x4 < 1.0):
            raise ValueError(
                f"band endpoints must satisfy 0 <= x1 < x2 < x3 < x4 < 1, got "
                f"({self.x1}, {self.x2}, {self.x3}, {self.x4})"
            )
        if not (0.0 < self.a < self.b):
            raise ValueError(f"derivative bounds must satisfy 0 < a < b, got a={self.a}, b={self.b}")
        w1 = self.x2 - self.x1
        w3 = self.x4 - self.x3
        if abs(w1 - 2.0 * self.delta) > 1e-9 or abs(w3 - 2.0 * self.delta) > 1e-9:
            raise ValueError("critical bands must both have width 2*delta")

    # -- evaluation (vectorized) ----------------------------------------------

    def value(self, u):
        u = np.asarray(u, dtype=float)
        out = np.zeros_like(u)
        for j, (ca, sa) in enumerate(zip(self.cos_amps, self.sin_amps), start=1):
            w = TWO_PI * j * u
            if ca != 0.0:
                out = out + ca * np.cos(w)
            if sa != 0.0:
                out = out + sa * np.sin(w)
        return out

    def derivative(self, u):
        u = np.asarray(u, dtype=float)
        out = np.zeros_like(u)
        for j, (ca, sa) in enumerate(zip(self.cos_amps, self.sin_amps), start=1):
            w = TWO_PI * j * u
            c = TWO_PI * j
            if ca != 0.0:
                out = out - c * ca * np.sin(w)
            if sa != 0.0:
                out = out + c * sa * np.cos(w)
        return out

    def second_derivative_sup(self) -> float:
        """Certified bound on sup|s''| from the coefficient magnitudes."""
        return sum(
            (TWO_PI * j) ** 2 * (abs(ca) + abs(sa))
            for j, (ca, sa) in enumerate(zip(self.cos_amps, self.sin_amps), start=1)
        )

    # -- band geometry ---------------------------------------------------------

    def classify(self, u: float) -> str:
        """Band label from the first coordinate; critical bands are closed."""
        r = float(reduce_torus(u))
        if self.x1 <= r <= self.x2 or self.x3 <= r <= self.x4:
            return CRITICAL
        if self.x2 < r < self.x3:
            return GOOD_MINUS
        return GOOD_PLUS  # the wrapping band (x4, 1) u [0, x1)

    def distance_to_critical(self, u: float) -> float:
        r = float(reduce_torus(u))
        best = math.inf
        for lo, hi in ((self.x1, self.x2), (self.x3, self.x4)):
            if lo <= r <= hi:
                return 0.0
            best = min(best, circle_dist(r, lo), circle_dist(r, hi))
        return best

    def validate_derivative_conditions(self) -> None:
        """Check the three derivative conditions on a dense grid, with the
        second-derivative bound turning the sample check into an interval one."""
        step = 1.0 / _GRID_POINTS
        slack = 0.5 * self.second_derivative_sup() * step + 1e-9
        u = np.arange(_GRID_POINTS) * step
        sp = self.derivative(u)

        if np.max(np.abs(sp)) > self.b + slack:
            raise PreconditionError(
                f"profile violates |s'| <= b: max |s'| = {np.max(np.abs(sp)):.6f} vs b = {self.b}"
            )
        in_plus = (u > self.x4) | (u < self.x1)
        in_minus = (u > self.x2) & (u < self.x3)
        if np.min(sp[in_plus]) < self.a - slack:
            raise PreconditionError(
                f"profile violates s' >= a on the plus band: min = {np.min(sp[in_plus]):.6f} vs a = {self.a}"
            )
        if np.max(sp[in_minus]) > -self.a + slack:
            raise PreconditionError(
                f"profile violates s' <= -a on the minus band: max = {np.max(sp[in_minus]):.6f}"
            )


def canonical_profile(tau2: int, delta: Optional[float] = None) -> ShearProfile:
    """The standard profile s(u) = sin(2 pi u) with band endpoints
    {1/4 - delta, 1/4 + delta, 3/4 - delta, 3/4 + delta} and delta = 1/(4 tau2),
    giving a = 2 pi sin(2 pi delta) and b = 2 pi."""
    if tau2 < 2:
        raise ValueError(f"tau2 must be >= 2, got {tau2}")
    if delta is None:
        delta = 1.0 / (4.0 * tau2)
    a = TWO_PI * math.sin(TWO_PI * delta)
    return ShearProfile(
        sin_amps=(1.0,),
        cos_amps=(0.0,),
        a=a,
        b=TWO_PI,
        x1=0.25 - delta,
        x2=0.25 + delta,
        x3=0.75 - delta,
        x4=0.75 + delta,
        delta=delta,
    )


@dataclass(frozen=True)
class EndoMap:
    """The torus endomorphism f_t = E o h_t (or h_t o E with order="HE").

    Immutable after construction.  Construction enforces the structural
    hypotheses (tau2 >= 5, non-homothety, normal-position lattice, certified
    cone parameter, profile derivative conditions) unless built through
    EndoMap.unchecked, which is meant for degenerate test maps only.
    """

    G: IntMatrix2
    t: float
    profile: ShearProfile
    alpha: float
    order: str = ORDER_EH
    reps: Tuple[Tuple[int, int], ...] = field(default=())
    tau1: int = 0
    tau2: int = 0
    _skip_checks: bool = False

    def __post_init__(self):
        if self.order not in (ORDER_EH, ORDER_HE):
            raise ValueError(f"order must be 'EH' or 'HE', got {self.order!r}")
        if self.G.det == 0:
            raise SingularMatrixError(f"matrix {self.G.flat()} is singular")
        snf = smith_normal_form(self.G)
        object.__setattr__(self, "tau1", snf.tau1)
        object.__setattr__(self, "tau2", snf.tau2)
        object.__setattr__(self, "reps", tuple(coset_representatives(self.G)))
        if not self._skip_checks:
            if self.G.is_homothety:
                raise HomothetyError(
                    f"matrix {self.G.flat()} is a homothety; the construction excludes it"
                )
            if snf.tau2 < 5:
                raise PreconditionError(
                    f"the construction requires tau2 >= 5, got tau2 = {snf.tau2}"
                )
            if not lattice_predicate(self.G, snf.tau1, snf.tau2):
                raise PreconditionError(
                    "linear part is not in normal position "
                    "(run normalize_position and pass G = P^-1 E P)"
                )
            if self.G.e12 == 0:
                raise PreconditionError("(0,1) must not be an eigenvector of the linear part")
            if not cones.certify_alpha(self.G, self.alpha):
                raise PreconditionError(
                    f"alpha = {self.alpha} is not certified for this linear part"
                )
            delta_cap = 1.0 / (4.0 * snf.tau2)
            if self.profile.delta > delta_cap + 1e-12:
                raise PreconditionError(
                    f"delta = {self.profile.delta} exceeds 1/(4 tau2) = {delta_cap}"
                )
            m = (snf.tau2 - 1) // 2
            band_min = m / snf.tau2
            width2 = self.profile.x3 - self.profile.x2
            width4 = 1.0 - self.profile.x4 + self.profile.x1
            if width2 < band_min - 1e-12 or width4 < band_min - 1e-12:
                raise PreconditionError(
                    f"good bands too narrow: widths ({width2:.6f}, {width4:.6f}) vs m/tau2 = {band_min:.6f}"
                )
            self.profile.validate_derivative_conditions()
        if self.t < 0:
            raise PreconditionError(f"shear strength must be >= 0, got t = {self.t}")
        adj = self.G.adjugate()
        ginv = np.array([[adj.e11, adj.e12], [adj.e21, adj.e22]], dtype=float) / self.G.det
        object.__setattr__(self, "_ginv_arr", ginv)
        object.__setattr__(self, "_gmat_arr", np.array(self.G.rows(), dtype=float))
        object.__setattr__(self, "_reps_arr", np.array(self.reps, dtype=float))

    @staticmethod
    def unchecked(G: IntMatrix2, t: float, profile: ShearProfile, alpha: float,
                  order: str = ORDER_EH) -> "EndoMap":
        """Escape hatch for test maps that fail the structural hypotheses
        (homotheties, tau2 < 5).  Dynamics methods still work."""
        return EndoMap(G=G, t=t, profile=profile, alpha=alpha, order=order, _skip_checks=True)

    # -- structural quantities -------------------------------------------------

    @property
    def degree(self) -> int:
        return self.G.degree

    @property
    def m(self) -> int:
        return (self.tau2 - 1) // 2

    @property
    def log_det(self) -> float:
        """log |det Df|, constant over the torus (the shear is conservative)."""
        return math.log(self.G.degree)

    def _ginv(self) -> np.ndarray:
        return self._ginv_arr

    def _gmat(self) -> np.ndarray:
        return self._gmat_arr

    # -- evaluation --------------------------------------------------------------

    def shear_lift(self, p):
        """h_t on the plane (or torus representatives): (x1, x2 + t s(x1))."""
        p = np.asarray(p, dtype=float)
        out = p.copy()
        out[..., 1] += self.t * self.profile.value(p[..., 0])
        return out

    def shear_lift_inverse(self, p):
        p = np.asarray(p, dtype=float)
        out = p.copy()
        out[..., 1] -= self.t * self.profile.value(p[..., 0])
        return out

    def evaluate_lift(self, p):
        """The plane lift f~ (no reduction)."""
        p = np.asarray(p, dtype=float)
        if self.order == ORDER_EH:
            return self.shear_lift(p) @ self._gmat().T
        return self.shear_lift(p @ self._gmat().T)

    def evaluate(self, x):
        """f on the torus, coordinates reduced to [0, 1)."""
        return reduce_torus(self.evaluate_lift(reduce_torus(x)))

    def derivative(self, x) -> np.ndarray:
        """D_x f as a 2x2 array; x may be a torus point or a plane point
        (the derivative is Z^2-periodic)."""
        x = np.asarray(x, dtype=float)
        G = self._gmat()
        if self.order == ORDER_EH:
            sp = float(self.profile.derivative(x[0]))
            shear = np.array([[1.0, 0.0], [self.t * sp, 1.0]])
            return G @ shear
        u = float((G[0, 0] * x[0] + G[0, 1] * x[1]))
        sp = float(self.profile.derivative(u))
        shear = np.array([[1.0, 0.0], [self.t * sp, 1.0]])
        return shear @ G

    # -- preimages ----------------------------------------------------------------

    def lift_inverse_branch(self, p, i: int):
        """F_i(p) = f~^-1(p + w_i) on the plane, branch symbols i in {1..d}."""
        if not (1 <= i <= self.degree):
            raise ValueError(f"branch symbol must be in 1..{self.degree}, got {i}")
        p = np.asarray(p, dtype=float)
        w = np.array(self.reps[i - 1], dtype=float)
        z = (p + w) @ self._ginv().T
        if self.order == ORDER_EH:
            return self.shear_lift_inverse(z)
        return self.shear_lift_inverse(p + w) @ self._ginv().T

    def preimages(self, x) -> np.ndarray:
        """All d preimages of a torus point, as a (d, 2) array ordered by
        branch symbol (w_1 = 0 first)."""
        x = reduce_torus(np.asarray(x, dtype=float))
        out = np.empty((self.degree, 2), dtype=float)
        for i in range(self.degree):
            out[i] = self.lift_inverse_branch(x, i + 1)
        return reduce_torus(out)

    def backward_step(self, X: np.ndarray, symbols: np.ndarray) -> np.ndarray:
        """Vectorized single backward step: X is (N, 2) on the torus, symbols
        is (N,) with 0-based branch indices; returns the (N, 2) preimages."""
        W = self._reps_arr[symbols]
        if self.order == ORDER_EH:
            Z = (X + W) @ self._ginv().T
            Z[:, 1] -= self.t * self.profile.value(Z[:, 0])
        else:
            Z = X + W
            Z[:, 1] = Z[:, 1] - self.t * self.profile.value(Z[:, 0])
            Z = Z @ self._ginv().T
        return reduce_torus(Z)

    def preimages_array(self, X: np.ndarray) -> np.ndarray:
        """All-branch preimages for a batch: (N, 2) -> (N, d, 2), branch-major order."""
        N = X.shape[0]
        out = np.empty((N, self.degree, 2), dtype=float)
        for i in range(self.degree):
            out[:, i, :] = self.backward_step(X, np.full(N, i, dtype=int))
        return out

    # -- tangent transport ----------------------------------------------------------

    def pullback_directions(self, Y: np.ndarray, V: np.ndarray):
        """Apply (D_y f)^-1 to direction vectors: Y, V are (N, 2); returns
        (W_normalized, lognorms) where lognorms[i] = log ||(D_{Y_i} f)^-1 V_i||
        for max-norm-unit V_i."""
        Y = np.asarray(Y, dtype=float)
        V = np.asarray(V, dtype=float)
        if self.order == ORDER_EH:
            U = V @ self._ginv().T
            sp = self.profile.derivative(Y[:, 0])
            W = np.empty_like(U)
            W[:, 0] = U[:, 0]
            W[:, 1] = U[:, 1] - self.t * sp * U[:, 0]
        else:
            G = self._gmat()
            u_mid = G[0, 0] * Y[:, 0] + G[0, 1] * Y[:, 1]
            sp = self.profile.derivative(u_mid)
            U = np.empty_like(V)
            U[:, 0] = V[:, 0]
            U[:, 1] = V[:, 1] - self.t * sp * V[:, 0]
            W = U @ self._ginv().T
        norms = np.max(np.abs(W), axis=1)
        return W / norms[:, None], np.log(norms)

    def push_directions(self, X: np.ndarray, V: np.ndarray):
        """Apply D_x f to direction vectors with renormalization; returns
        (W_normalized, lognorms)."""
        X = np.asarray(X, dtype=float)
        V = np.asarray(V, dtype=float)
        G = self._gmat()
        if self.order == ORDER_EH:
            sp = self.profile.derivative(X[:, 0])
            U = np.empty_like(V)
            U[:, 0] = V[:, 0]
            U[:, 1] = V[:, 1] + self.t * sp * V[:, 0]
            W = U @ G.T
        else:
            u_mid = G[0, 0] * X[:, 0] + G[0, 1] * X[:, 1]
            sp = self.profile.derivative(u_mid)
            W = V @ G.T
            W[:, 1] = W[:, 1] + self.t * sp * W[:, 0]
        norms = np.max(np.abs(W), axis=1)
        return W / norms[:, None], np.log(norms)

    # -- regions -----------------------------------------------------------------

    def shear_argument(self, X: np.ndarray) -> np.ndarray:
        """The coordinate the shear derivative is evaluated at: the first
        coordinate itself when the shear acts first, the first coordinate of
        the linear image when it acts last.  Affine in X, so band boundaries
        are affine lines in either order."""
        X = np.asarray(X, dtype=float)
        if self.order == ORDER_EH:
            return X[..., 0]
        G = self._gmat()
        return G[0, 0] * X[..., 0] + G[0, 1] * X[..., 1]

    def classify_region(self, x) -> str:
        x = np.asarray(x, dtype=float)
        u = float(self.shear_argument(x)) if x.ndim else float(x)
        return self.profile.classify(u)

    def region_labels(self, X: np.ndarray) -> np.ndarray:
        """Vectorized band classification of (N, 2) points by the shear
        argument: 0 = critical, +1 = good_plus, -1 = good_minus."""
        u = reduce_torus(self.shear_argument(X))
        p = self.profile
        crit = ((u >= p.x1) & (u <= p.x2)) | ((u >= p.x3) & (u <= p.x4))
        minus = (u > p.x2) & (u < p.x3)
        out = np.ones(len(u), dtype=int)
        out[minus] = -1
        out[crit] = 0
        return out

    def distance_to_critical(self, x) -> float:
        x = np.asarray(x, dtype=float)
        u = float(self.shear_argument(x)) if x.ndim else float(x)
        return self.profile.distance_to_critical(u)


def standard_family(k: int, t: float, order: str = ORDER_EH, alpha: float = 2.0,
                    delta: Optional[float] = None) -> EndoMap:
    """The explicit family with linear part [[2k+1, 2k+1], [0, 2k+1]] and the
    canonical sine profile.  Requires k >= 2 so that tau2 = 2k+1 >= 5."""
    if k < 2:
        raise PreconditionError(f"family parameter k must be >= 2 (tau2 = 2k+1 >= 5), got k={k}")
    n = 2 * k + 1
    G = IntMatrix2(n, n, 0, n)
    return EndoMap(G=G, t=float(t), profile=canonical_profile(n, delta=delta),
                   alpha=alpha, order=order)


def family_constants(k: int) -> dict:
    """The scalar constants of the explicit family: tau's, alpha, derivative
    bounds, and cone expansion minima (computed, not hardcoded)."""
    if k < 2:
        raise PreconditionError(f"family parameter k must be >= 2, got k={k}")
    n = 2 * k + 1
    G = IntMatrix2(n, n, 0, n)
    prof = canonical_profile(n)
    ec = cones.expansion_constants(G, 2.0)
    return {
        "k": k,
        "tau1": n,
        "tau2": n,
        "degree": n * n,
        "alpha": 2.0,
        "a": prof.a,
        "b": prof.b,
        "e_v": ec.e_v,
        "e_h": ec.e_h,
    }
