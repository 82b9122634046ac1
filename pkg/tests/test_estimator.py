"""Preimage-tree averages: exact homothety oracles, the dual leaf/layer
routes, good-branch counting against the exact rational bound, grids, and
resource limits."""

import math
from fractions import Fraction

import numpy as np
import pytest

from torusnuh.endo import EndoMap, PreconditionError, canonical_profile, standard_family
from torusnuh.estimator import (
    BudgetError,
    CChiEstimate,
    RecursionConstants,
    TangentSample,
    c_det,
    direction_grid,
    estimate_c_chi,
    good_fraction_bound,
    midpoint_grid,
    pullback_tree,
)
from torusnuh.intmat import IntMatrix2


@pytest.fixture
def homothety2():
    """2*Id with no shear: every branch of every tree contracts by exactly 2."""
    return EndoMap.unchecked(IntMatrix2(2, 0, 0, 2), t=0.0,
                             profile=canonical_profile(5), alpha=2.0)


def test_tangent_sample_normalizes():
    s = TangentSample((1.3, -0.25), (3.0, 1.5))
    assert max(abs(s.v[0]), abs(s.v[1])) == pytest.approx(1.0)
    assert 0.0 <= s.x[0] < 1.0 and 0.0 <= s.x[1] < 1.0
    with pytest.raises(ValueError):
        TangentSample((0.0, 0.0), (0.0, 0.0))


def test_depth_zero_tree():
    f = standard_family(2, 1.5)
    stats = pullback_tree(f, TangentSample((0.1, 0.2), (0.0, 1.0)), 0)
    assert stats.I_n == 0.0
    assert stats.g == (1,)          # vertical root
    horizontal = pullback_tree(f, TangentSample((0.1, 0.2), (1.0, 0.0)), 0)
    assert horizontal.g == (0,)


def test_homothety_tree_exact(homothety2):
    """I_n = -n log 2 exactly: every pullback multiplies the norm by 1/2."""
    sample = TangentSample((0.37, 0.58), (0.6, 1.0))
    for n in range(4):
        stats = pullback_tree(homothety2, sample, n)
        assert stats.I_n == pytest.approx(-n * math.log(2), abs=1e-12)
        assert stats.layer_sum() == pytest.approx(stats.I_n, abs=1e-12)


def test_homothety_c_chi_estimate(homothety2):
    est = estimate_c_chi(homothety2, n=2, nx=3, ny=3, ndirs=4)
    assert est.value == pytest.approx(-math.log(2), abs=1e-12)


def test_layer_counts_partition(homothety2):
    f = standard_family(2, 1.5)
    stats = pullback_tree(f, TangentSample((0.594, 0.287), (0.3, 1.0)), 3)
    for i, (gi, bi, ai) in enumerate(zip(stats.g, stats.b, stats.a)):
        assert gi + bi == 25 ** i
        assert ai == pytest.approx(gi / 25 ** i, abs=0)


def test_leaf_and_layer_routes_agree():
    """I_n from leaf sums equals the sum of layer averages to 1e-9."""
    f = standard_family(2, 14.0)
    rng = np.random.default_rng(21)
    for _ in range(20):
        x = rng.random(2)
        ang = rng.uniform(0, 2 * math.pi)
        sample = TangentSample((x[0], x[1]), (math.cos(ang), math.sin(ang)))
        stats = pullback_tree(f, sample, 3)
        assert abs(stats.I_n - stats.layer_sum()) < 1e-9


def test_recursion_constants_and_bound_values():
    rc = RecursionConstants.for_tau2(5)
    assert rc.c == Fraction(2, 5)
    assert rc.e == Fraction(2, 5)
    assert good_fraction_bound(5, 0) == 0
    assert good_fraction_bound(5, 1) == Fraction(2, 5)
    assert good_fraction_bound(5, 2) == Fraction(14, 25)
    # n -> infinity limit is e/(1-c) = m/(1+m) = 2/3
    assert good_fraction_bound(5, 60) < Fraction(2, 3)
    assert Fraction(2, 3) - good_fraction_bound(5, 60) < Fraction(1, 10 ** 20)
    with pytest.raises(PreconditionError):
        good_fraction_bound(4, 1)
    with pytest.raises(ValueError):
        good_fraction_bound(5, -1)


def test_good_fraction_bound_brute_force():
    """Layer fractions a_i dominate the exact rational bound on full trees of
    depth <= 3, for random samples at a strength above the cone threshold."""
    f = standard_family(2, 50.0)
    rng = np.random.default_rng(33)
    bounds = [float(good_fraction_bound(5, i)) for i in range(4)]
    for _ in range(25):
        x = rng.random(2)
        ang = rng.uniform(0, 2 * math.pi)
        sample = TangentSample((x[0], x[1]), (math.cos(ang), math.sin(ang)))
        stats = pullback_tree(f, sample, 3)
        for i, ai in enumerate(stats.a):
            assert ai >= bounds[i] - 1e-12


def test_good_fraction_bound_brute_force_large_t():
    f = standard_family(2, 1042.0)
    rng = np.random.default_rng(34)
    bounds = [float(good_fraction_bound(5, i)) for i in range(3)]
    for _ in range(25):
        x = rng.random(2)
        sample = TangentSample((x[0], x[1]), (1.0, rng.uniform(-1, 1)))
        stats = pullback_tree(f, sample, 2)
        for i, ai in enumerate(stats.a):
            assert ai >= bounds[i] - 1e-12


def test_budget_errors():
    f = standard_family(2, 1.5)
    sample = TangentSample((0.1, 0.2), (0.0, 1.0))
    with pytest.raises(BudgetError) as exc:
        pullback_tree(f, sample, 6)  # 25^6 = 2.4e8 > default budget
    assert "244140625" in str(exc.value)
    with pytest.raises(BudgetError):
        pullback_tree(f, sample, 3, budget=100)
    with pytest.raises(BudgetError):
        estimate_c_chi(f, n=3, nx=8, ny=8, ndirs=8, budget=10 ** 5)


def test_c_det_values():
    assert c_det(standard_family(2, 1.0)) == pytest.approx(math.log(25), abs=0)
    assert c_det(standard_family(3, 9.7)) == pytest.approx(2 * math.log(7), abs=1e-15)
    # independent of the strength
    assert c_det(standard_family(2, 0.0)) == c_det(standard_family(2, 500.0))


def test_direction_grid_avoids_boundaries():
    V = direction_grid(8)
    assert V.shape == (8, 2)
    np.testing.assert_allclose(np.max(np.abs(V), axis=1), 1.0, atol=1e-12)
    # no direction on the axes or the alpha = 2 cone boundary
    assert np.all(np.abs(V[:, 0]) > 1e-9)
    assert np.all(np.abs(V[:, 1]) > 1e-9)
    assert np.all(np.abs(np.abs(V[:, 1]) - 2 * np.abs(V[:, 0])) > 1e-6)


def test_midpoint_grid_shape():
    P = midpoint_grid(4, 3)
    assert P.shape == (12, 2)
    assert np.all((P > 0) & (P < 1))


def test_estimate_monotone_under_grid_refinement():
    """Tripling every grid dimension produces a superset of sample pairs
    (odd multiples nest under x3), so the minimum can only decrease."""
    f = standard_family(2, 14.0)
    coarse = estimate_c_chi(f, n=1, nx=2, ny=2, ndirs=2)
    fine = estimate_c_chi(f, n=1, nx=6, ny=6, ndirs=6)
    assert fine.value <= coarse.value + 1e-12
    # and the coarse grid's points really are in the fine grid
    pc = {tuple(np.round(p, 12)) for p in midpoint_grid(2, 2)}
    pf = {tuple(np.round(p, 12)) for p in midpoint_grid(6, 6)}
    assert pc <= pf


def test_estimate_reports_argmin():
    f = standard_family(2, 14.0)
    est = estimate_c_chi(f, n=2, nx=3, ny=3, ndirs=4)
    assert isinstance(est, CChiEstimate)
    # replaying the argmin sample reproduces the reported minimum
    stats = pullback_tree(f, TangentSample(est.argmin_x, est.argmin_v), 2)
    assert stats.I_n / 2 == pytest.approx(est.value, abs=1e-12)
