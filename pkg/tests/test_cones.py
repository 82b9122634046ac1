"""Max-norm cone geometry: membership, invariance certificates, exact
minimal-expansion constants, and the piecewise-linear margin helpers."""

from fractions import Fraction

import numpy as np
import pytest

from torusnuh.cones import (
    HORIZONTAL,
    VERTICAL,
    Cone,
    ExpansionConstants,
    certify_alpha,
    contains,
    expansion_constants,
    min_expansion,
    search_alpha,
    sector_into_vertical_margin,
    vertical_invariance_margin,
)
from torusnuh.intmat import IntMatrix2


E5 = IntMatrix2(5, 5, 0, 5)


def test_cone_membership_boundary_is_horizontal():
    h = Cone(2.0, HORIZONTAL)
    v = Cone(2.0, VERTICAL)
    assert contains(h, (1.0, 2.0))       # |v2| = alpha*|v1| ties horizontal
    assert not contains(v, (1.0, 2.0))
    assert contains(v, (1.0, 2.0 + 1e-9))
    assert contains(h, (1.0, 0.0))
    assert contains(v, (0.0, 1.0))
    with pytest.raises(ValueError):
        contains(h, (0.0, 0.0))


def test_cone_parameter_validation():
    with pytest.raises(ValueError):
        Cone(1.0, VERTICAL)
    with pytest.raises(ValueError):
        Cone(2.0, "diagonal")
    with pytest.raises(ValueError):
        ExpansionConstants(e_v=0.1, e_h=0.2)  # needs e_h <= e_v


def test_certify_alpha_examples():
    """certify_alpha asks whether E^-1 carries the closed vertical cone into
    the horizontal cone.  The identity leaves the vertical cone where it is
    (fail); the coordinate swap exchanges the cones (pass); the shear family
    passes at alpha = 2."""
    assert not certify_alpha(IntMatrix2(1, 0, 0, 1), 2.0)
    assert certify_alpha(IntMatrix2(0, 1, 1, 0), 2.0)
    assert certify_alpha(E5, 2.0)
    # a vertical stretch keeps (0,1) vertical under the inverse: fail
    assert not certify_alpha(IntMatrix2(1, 0, 0, 3), 2.0)


def test_search_alpha_finds_two_for_shear_family():
    assert search_alpha(E5) == 2.0


def test_min_expansion_shear_family_exact():
    """Hand oracle for E = [[5,5],[0,5]], alpha = 2.

    E^-1 = (1/5)[[1,-1],[0,1]].  Vertical cone, v = (s,1), |s| <= 1/2:
    E^-1 v = ((s-1)/5, 1/5); max(|s-1|/5, 1/5) >= 1/5 with equality at s=1/2
    up to the kink structure -- minimum is 1/5.  Horizontal cone, v = (1,s),
    |s| <= 2: E^-1 v = ((1-s)/5, s/5); at s=1/2 both coords are 1/10, which
    is the minimax -- minimum is 1/10.
    """
    assert min_expansion(E5, Cone(2.0, VERTICAL)) == pytest.approx(Fraction(1, 5), abs=0)
    assert min_expansion(E5, Cone(2.0, HORIZONTAL)) == pytest.approx(Fraction(1, 10), abs=0)
    consts = expansion_constants(E5, 2.0)
    assert consts.e_v == 0.2
    assert consts.e_h == 0.1


def test_min_expansion_certified_by_sampling():
    """The exact kink-enumeration minimum lower-bounds a dense direction
    sample for several matrices and cone widths."""
    rng = np.random.default_rng(5)
    mats = [E5, IntMatrix2(7, 7, 0, 7), IntMatrix2(2, 1, 1, 1), IntMatrix2(3, -2, 1, 4)]
    for E in mats:
        Minv = np.linalg.inv(np.array(E.rows(), dtype=float))
        for alpha in (1.5, 2.0, 3.0):
            for cone in (Cone(alpha, VERTICAL), Cone(alpha, HORIZONTAL)):
                m = min_expansion(E, cone)
                if cone.orientation == VERTICAL:
                    s = rng.uniform(-1 / alpha, 1 / alpha, size=400)
                    V = np.stack([s, np.ones_like(s)], axis=1)
                else:
                    s = rng.uniform(-alpha, alpha, size=400)
                    V = np.stack([np.ones_like(s), s], axis=1)
                imgs = V @ Minv.T
                norms = np.max(np.abs(imgs), axis=1)
                assert np.min(norms) >= m - 1e-12


def test_min_expansion_homothety():
    """E = 3*Id expands E^-1 by exactly 1/3 in every direction."""
    E = IntMatrix2(3, 0, 0, 3)
    assert min_expansion(E, Cone(2.0, VERTICAL)) == pytest.approx(1 / 3, abs=1e-15)
    assert min_expansion(E, Cone(2.0, HORIZONTAL)) == pytest.approx(1 / 3, abs=1e-15)


def test_vertical_invariance_margin_signs():
    """A strong vertical squeeze has negative margin; the identity touches
    the cone boundary, so its margin is exactly zero."""
    squeeze = ((0.1, 0.0), (0.0, 1.0))  # (s,1) -> (0.1 s, 1): strictly inside
    assert vertical_invariance_margin(squeeze, 2.0) < 0
    identity = ((1.0, 0.0), (0.0, 1.0))
    assert vertical_invariance_margin(identity, 2.0) == pytest.approx(0.0, abs=1e-15)
    # rotation by 90 degrees sends (0,1) to (1,0): clearly escapes
    rot = ((0.0, 1.0), (-1.0, 0.0))
    assert vertical_invariance_margin(rot, 2.0) > 0


def test_vertical_invariance_margin_matches_grid():
    """The kink-enumeration maximum dominates a fine direction grid."""
    rng = np.random.default_rng(17)
    for _ in range(50):
        M = rng.normal(size=(2, 2))
        alpha = 2.0
        margin = vertical_invariance_margin(M, alpha)
        s = np.linspace(-1 / alpha, 1 / alpha, 2001)
        U = np.stack([s, np.ones_like(s)], axis=1) @ M.T
        grid = np.max(alpha * np.abs(U[:, 0]) - np.abs(U[:, 1]))
        assert margin >= grid - 1e-12
        # the PL objective has slope at most (alpha+1)*max|M|, so the grid
        # can undershoot the true peak by at most slope * spacing
        slack = (alpha + 1) * np.abs(M).max() * (s[1] - s[0])
        assert margin <= grid + slack


def test_sector_margin_matches_grid():
    rng = np.random.default_rng(23)
    for _ in range(50):
        M = rng.normal(size=(2, 2))
        alpha = 2.0
        s_lo, s_hi = sorted(rng.uniform(-alpha, alpha, size=2))
        if s_hi - s_lo < 1e-6:
            continue
        margin = sector_into_vertical_margin(M, alpha, s_lo, s_hi)
        s = np.linspace(s_lo, s_hi, 2001)
        U = np.stack([np.ones_like(s), s], axis=1) @ M.T
        grid = np.max(alpha * np.abs(U[:, 0]) - np.abs(U[:, 1]))
        assert margin >= grid - 1e-12
        slack = (alpha + 1) * np.abs(M).max() * (s[1] - s[0])
        assert margin <= grid + slack


def test_sector_margin_splits_cover_full_cone():
    """The full-cone margin is the max of the margins of any sector split."""
    rng = np.random.default_rng(29)
    alpha = 2.0
    for _ in range(40):
        M = rng.normal(size=(2, 2))
        full = sector_into_vertical_margin(M, alpha, -alpha, alpha)
        mid = rng.uniform(-alpha, alpha)
        left = sector_into_vertical_margin(M, alpha, -alpha, mid)
        right = sector_into_vertical_margin(M, alpha, mid, alpha)
        assert full == pytest.approx(max(left, right), abs=1e-12)
