"""Exact 2x2 integer matrix algebra.

Everything in this module is integer-exact (no floats):

  * Smith normal form  E = L * diag(tau1, tau2) * R  with L, R unimodular,
    tau1 | tau2 and tau1 * tau2 = |det E|,
  * coset representatives of Z^2 / E(Z^2)  (|det E| of them, zero class first),
  * the "normal position" conjugation  G = P^-1 * E * P  with P unimodular,
    chosen so that G^-1(Z^2) = (1/tau2)Z x (1/tau1)Z and (0,1) is not an
    eigenvector of G.

The normal position is what lets the rest of the code place preimage lattices
in vertical columns: G^-1 moves the integer lattice onto a grid whose first
coordinate is (1/tau2)-periodic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Tuple

MAX_ENTRY = 10**6  # degrees/tree widths explode long before integer overflow would


class SingularMatrixError(ValueError):
    """Raised when a matrix with det = 0 is used where an invertible one is required."""


class HomothetyError(ValueError):
    """Raised when a scalar multiple of the identity is passed to an operation
    that needs a non-eigenvector direction (every vector is an eigenvector)."""


@dataclass(frozen=True)
class IntMatrix2:
    """An immutable 2x2 integer matrix [[e11, e12], [e21, e22]]."""

    e11: int
    e12: int
    e21: int
    e22: int

    def __post_init__(self):
        for name in ("e11", "e12", "e21", "e22"):
            value = getattr(self, name)
            if not isinstance(value, int):
                raise TypeError(f"entry {name} must be int, got {type(value).__name__}")
            if abs(value) > MAX_ENTRY:
                raise ValueError(f"entry {name}={value} exceeds the supported bound {MAX_ENTRY}")

    # -- basic algebra -------------------------------------------------------

    @property
    def det(self) -> int:
        return self.e11 * self.e22 - self.e12 * self.e21

    @property
    def degree(self) -> int:
        """|det|: the number of preimages of the induced torus endomorphism."""
        return abs(self.det)

    @property
    def is_homothety(self) -> bool:
        return self.e12 == 0 and self.e21 == 0 and self.e11 == self.e22

    @property
    def is_unimodular(self) -> bool:
        return self.det in (1, -1)

    def adjugate(self) -> "IntMatrix2":
        return IntMatrix2(self.e22, -self.e12, -self.e21, self.e11)

    def unimodular_inverse(self) -> "IntMatrix2":
        """Exact integer inverse; only defined when det = +-1."""
        d = self.det
        if d not in (1, -1):
            raise SingularMatrixError(f"matrix with det={d} has no integer inverse")
        a = self.adjugate()
        return IntMatrix2(a.e11 * d, a.e12 * d, a.e21 * d, a.e22 * d)

    def __matmul__(self, other: "IntMatrix2") -> "IntMatrix2":
        return IntMatrix2(
            self.e11 * other.e11 + self.e12 * other.e21,
            self.e11 * other.e12 + self.e12 * other.e22,
            self.e21 * other.e11 + self.e22 * other.e21,
            self.e21 * other.e12 + self.e22 * other.e22,
        )

    def apply(self, v: Tuple[int, int]) -> Tuple[int, int]:
        return (self.e11 * v[0] + self.e12 * v[1], self.e21 * v[0] + self.e22 * v[1])

    def rows(self) -> List[List[int]]:
        return [[self.e11, self.e12], [self.e21, self.e22]]

    def flat(self) -> List[int]:
        """Row-major 4-integer list (the JSON wire format)."""
        return [self.e11, self.e12, self.e21, self.e22]

    @staticmethod
    def from_flat(entries) -> "IntMatrix2":
        a, b, c, d = (int(x) for x in entries)
        return IntMatrix2(a, b, c, d)

    @staticmethod
    def identity() -> "IntMatrix2":
        return IntMatrix2(1, 0, 0, 1)


_J = IntMatrix2(0, 1, 1, 0)  # coordinate swap


@dataclass(frozen=True)
class SmithDecomposition:
    """E = L * diag(tau1, tau2) * R with L, R unimodular, tau1 | tau2."""

    L: IntMatrix2
    R: IntMatrix2
    tau1: int
    tau2: int

    @property
    def D(self) -> IntMatrix2:
        return IntMatrix2(self.tau1, 0, 0, self.tau2)


@dataclass(frozen=True)
class NormalPosition:
    """G = P^-1 * E * P with P unimodular, G^-1(Z^2) = (1/tau2)Z x (1/tau1)Z
    and (0,1) not an eigenvector of G."""

    P: IntMatrix2
    G: IntMatrix2


def _swap_rows(m, u):
    m[0], m[1] = m[1], m[0]
    u[0], u[1] = u[1], u[0]


def _swap_cols(m, v):
    m[0][0], m[0][1] = m[0][1], m[0][0]
    m[1][0], m[1][1] = m[1][1], m[1][0]
    v[0][0], v[0][1] = v[0][1], v[0][0]
    v[1][0], v[1][1] = v[1][1], v[1][0]


def _add_row(m, u, dst, src, q):
    # row[dst] += q * row[src], mirrored on the left transform
    m[dst][0] += q * m[src][0]
    m[dst][1] += q * m[src][1]
    u[dst][0] += q * u[src][0]
    u[dst][1] += q * u[src][1]


def _add_col(m, v, dst, src, q):
    # col[dst] += q * col[src], mirrored on the right transform
    m[0][dst] += q * m[0][src]
    m[1][dst] += q * m[1][src]
    v[0][dst] += q * v[0][src]
    v[1][dst] += q * v[1][src]


def smith_normal_form(E: IntMatrix2) -> SmithDecomposition:
    """Smith normal form of a nonsingular 2x2 integer matrix.

    Classical row/column Euclid reduction: bring the minimum-magnitude entry
    to the (1,1) slot, clear its row and column by exact division steps, then
    fix up divisibility (tau1 | tau2) with one extra column addition if
    needed, and normalize signs so tau1, tau2 > 0.  All elementary operations
    are mirrored on accumulated unimodular factors U, V with U*E*V = M, so at
    the end L = U^-1 and R = V^-1 give E = L * D * R exactly.
    """
    if E.det == 0:
        raise SingularMatrixError(f"matrix {E.flat()} is singular")

    m = [[E.e11, E.e12], [E.e21, E.e22]]
    u = [[1, 0], [0, 1]]  # left accumulated transform
    v = [[1, 0], [0, 1]]  # right accumulated transform

    # Pivot: move the smallest nonzero |entry| to (0,0).
    entries = [(abs(m[i][j]), i, j) for i in range(2) for j in range(2) if m[i][j] != 0]
    _, pi, pj = min(entries)
    if pi == 1:
        _swap_rows(m, u)
    if pj == 1:
        _swap_cols(m, v)

    # Euclid in the first column and first row, then a divisibility fix-up
    # that may re-enter the reduction.  The fix-up has to sit outside the
    # inner loop: a matrix that is already diagonal (e.g. diag(-5,-6), or
    # anti-diagonal before the pivot swap) never enters it.
    while True:
        while m[1][0] != 0 or m[0][1] != 0:
            if m[1][0] != 0:
                q = m[1][0] // m[0][0]
                _add_row(m, u, 1, 0, -q)
                if m[1][0] != 0:  # remainder became the new, smaller pivot
                    _swap_rows(m, u)
                    continue
            if m[0][1] != 0:
                q = m[0][1] // m[0][0]
                _add_col(m, v, 1, 0, -q)
                if m[0][1] != 0:
                    _swap_cols(m, v)
                    continue
        # Divisibility fix-up: if the pivot does not divide the tail entry,
        # pull the tail column into column one and restart the reduction.
        # One pass suffices: after re-reduction the pivot is gcd(old pivot,
        # old tail) and the new tail is their product over the gcd squared
        # times the gcd, hence divisible by the pivot.
        if m[1][1] % m[0][0] != 0:
            _add_col(m, v, 0, 1, 1)
            continue
        break

    # Sign normalization: tau1, tau2 > 0 (negate a row = negate the same row of U).
    for i in range(2):
        if m[i][i] < 0:
            m[i][0], m[i][1] = -m[i][0], -m[i][1]
            u[i][0], u[i][1] = -u[i][0], -u[i][1]

    U = IntMatrix2(u[0][0], u[0][1], u[1][0], u[1][1])
    V = IntMatrix2(v[0][0], v[0][1], v[1][0], v[1][1])
    L = U.unimodular_inverse()
    R = V.unimodular_inverse()
    tau1, tau2 = m[0][0], m[1][1]

    # Exactness audit (cheap, integer-only; violations would be programming bugs).
    D = IntMatrix2(tau1, 0, 0, tau2)
    if (L @ D) @ R != E:
        raise AssertionError("smith_normal_form: L*D*R != E")
    if tau2 % tau1 != 0 or tau1 * tau2 != E.degree:
        raise AssertionError("smith_normal_form: invariant-factor structure violated")
    if tau1 != math.gcd(math.gcd(E.e11, E.e12), math.gcd(E.e21, E.e22)):
        raise AssertionError("smith_normal_form: tau1 is not the entry gcd")
    return SmithDecomposition(L=L, R=R, tau1=tau1, tau2=tau2)


def coset_representatives(E: IntMatrix2) -> List[Tuple[int, int]]:
    """Representatives w_1..w_d of Z^2 / E(Z^2), d = |det E|, with w_1 = (0,0).

    Generated as L*(i,j) for 0 <= i < tau1, 0 <= j < tau2 (these exhaust the
    quotient because E(Z^2) = L(tau1 Z x tau2 Z)), ordered with the zero class
    first and then lexicographically in (i, j).
    """
    snf = smith_normal_form(E)
    reps = []
    for i in range(snf.tau1):
        for j in range(snf.tau2):
            reps.append(snf.L.apply((i, j)))
    # (i,j) = (0,0) maps to (0,0), which the loop already puts first.
    assert reps[0] == (0, 0)
    return reps


def coset_index_map(E: IntMatrix2):
    """Return (snf, lookup) where lookup(z) gives the index i with
    z congruent to w_i mod E(Z^2), computed exactly via L^-1 z mod (tau1, tau2)."""
    snf = smith_normal_form(E)
    Linv = snf.L.unimodular_inverse()
    index = {}
    pos = 0
    for i in range(snf.tau1):
        for j in range(snf.tau2):
            index[(i, j)] = pos
            pos += 1

    def lookup(z: Tuple[int, int]) -> int:
        p, q = Linv.apply((int(z[0]), int(z[1])))
        return index[(p % snf.tau1, q % snf.tau2)]

    return snf, lookup


def in_sublattice(E: IntMatrix2, z: Tuple[int, int]) -> bool:
    """Exact membership test z in E(Z^2): det must divide both components of adj(E)*z."""
    a = E.adjugate().apply((int(z[0]), int(z[1])))
    d = E.det
    return a[0] % d == 0 and a[1] % d == 0


def lattice_predicate(G: IntMatrix2, tau1: int, tau2: int) -> bool:
    """True iff G^-1(Z^2) = (1/tau2)Z x (1/tau1)Z.

    Checked exactly on the generators (1,0), (0,1): the inclusion
    G^-1(Z^2) into the grid holds iff det | tau2*(adj G * z)_1 and
    det | tau1*(adj G * z)_2 for both generators; equality then follows
    because both lattices have covolume 1/(tau1*tau2).
    """
    if abs(G.det) != tau1 * tau2:
        return False
    adj = G.adjugate()
    d = G.det
    for z in ((1, 0), (0, 1)):
        a1, a2 = adj.apply(z)
        if (tau2 * a1) % d != 0 or (tau1 * a2) % d != 0:
            return False
    return True


def normalize_position(E: IntMatrix2) -> NormalPosition:
    """Conjugate E into normal position.

    Construction: with E = L*D*R, take P = R^-1 * J * S where J swaps the
    coordinates and S = [[1, k], [0, 1]] is a unimodular shear.  Then
    G = P^-1 E P is an integer matrix with G^-1(Z^2) = (1/tau2)Z x (1/tau1)Z,
    and k is the smallest-magnitude integer (searched in the order
    0, 1, -1, 2, -2, ...) making (0,1) a non-eigenvector of G; such k exists
    whenever E is not a homothety, because (k,1) is an eigenvector of the
    un-sheared conjugate G0 iff k is a root of a quadratic that only vanishes
    identically for homotheties.
    """
    if E.det == 0:
        raise SingularMatrixError(f"matrix {E.flat()} is singular")
    if E.is_homothety:
        raise HomothetyError(
            f"matrix {E.flat()} is a homothety; every direction is an eigenvector"
        )

    snf = smith_normal_form(E)
    B = snf.R.unimodular_inverse() @ _J
    G0 = (B.unimodular_inverse() @ E) @ B

    def eigen_poly(k: int) -> int:
        # (k,1) is an eigenvector of G0 iff this vanishes
        return G0.e21 * k * k + (G0.e22 - G0.e11) * k - G0.e12

    k = None
    for candidate in (0, 1, -1, 2, -2):
        if eigen_poly(candidate) != 0:
            k = candidate
            break
    if k is None:  # unreachable for non-homotheties: a quadratic has <= 2 roots
        raise AssertionError("no shear parameter in {0,+-1,+-2} avoids the eigendirection")

    S = IntMatrix2(1, k, 0, 1)
    P = B @ S
    G = (P.unimodular_inverse() @ E) @ P

    if not lattice_predicate(G, snf.tau1, snf.tau2):
        raise AssertionError("normalize_position: lattice predicate failed")
    if G.e12 == 0:  # G*(0,1) parallel to (0,1) iff the top-right entry vanishes
        raise AssertionError("normalize_position: (0,1) is still an eigenvector")
    return NormalPosition(P=P, G=G)
