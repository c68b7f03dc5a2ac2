"""Utility families: formulas, invariants, truncation, linearization."""

import numpy as np
import pytest

from rsrl.utility import (Entropic, ExponentialUtility, Linear,
                          LinearizedNearZero, PiecewiseLinear,
                          PolynomialMixed, ShiftedPolynomial, Truncated,
                          UtilityError, is_strictly_increasing,
                          linearize_near_zero, slope_bounds, truncate)


def test_linear_identity():
    u = Linear()
    assert u(3.7) == 3.7
    assert u.inverse(-2.5) == -2.5


def test_entropic_formula():
    u = Entropic(lam=1.0)
    assert u(0.0) == 1.0
    assert np.isclose(u(2.0), np.exp(2.0))
    assert np.isclose(u.inverse(np.e), 1.0)


def test_entropic_requires_positive_lambda():
    with pytest.raises(UtilityError):
        Entropic(lam=-1.0)
    with pytest.raises(UtilityError):
        Entropic(lam=0.0)


def test_exponential_utility_both_signs():
    ra = ExponentialUtility(rate=-1.0)    # 1 - e^{-x}
    rs = ExponentialUtility(rate=1.0)     # e^{x} - 1
    x = np.linspace(-3, 3, 7)
    np.testing.assert_allclose(ra(x), 1.0 - np.exp(-x), rtol=1e-14)
    np.testing.assert_allclose(rs(x), np.exp(x) - 1.0, rtol=1e-14)
    assert abs(ra.inverse(ra(0.37)) - 0.37) < 1e-14
    assert abs(rs.inverse(rs(-1.2)) - (-1.2)) < 1e-14


def test_polynomial_mixed_fig_value():
    u = PolynomialMixed(k_plus=0.5, l_plus=2.0, k_minus=1.0, l_minus=2.0)
    assert u(1.0) == 0.5
    assert u(-2.0) == -4.0
    assert u(0.0) == 0.0


def test_polynomial_mixed_parameter_validation():
    with pytest.raises(UtilityError):
        PolynomialMixed(0.0, 1.0, 1.0, 1.0)
    with pytest.raises(UtilityError):
        PolynomialMixed(1.0, 1.0, 1.0, -0.5)


def test_piecewise_linear_slopes():
    u = PiecewiseLinear(kappa=0.5)
    assert u(2.0) == 1.0     # (1 - kappa) x on gains
    assert u(-2.0) == -3.0   # (1 + kappa) x on losses
    with pytest.raises(UtilityError):
        PiecewiseLinear(kappa=1.0)


def test_non_finite_argument_rejected():
    with pytest.raises(UtilityError):
        Linear()(np.nan)
    with pytest.raises(UtilityError):
        Entropic(1.0)(np.inf)


def test_all_families_strictly_increasing():
    for u in (Linear(), Entropic(0.7), ExponentialUtility(-1.0),
              PiecewiseLinear(-0.3), PolynomialMixed(0.5, 2.0, 1.0, 2.0),
              ShiftedPolynomial(1.0, 0.5, 1.0, 0.5, 0.01)):
        assert is_strictly_increasing(u, interval=(-10, 10))


# -- slope bounds ------------------------------------------------------------

def test_slope_bounds_linear():
    sb = slope_bounds(Linear(), (-5.0, 5.0))
    assert sb.lower == pytest.approx(1.0)
    assert sb.upper == pytest.approx(1.0)
    assert sb.ok


def test_slope_bounds_piecewise():
    sb = slope_bounds(PiecewiseLinear(0.5), (-5.0, 5.0), grid_n=401)
    assert sb.lower == pytest.approx(0.5, rel=1e-9)
    assert sb.upper == pytest.approx(1.5, rel=1e-9)


def test_slope_bounds_sqrt_family():
    # Divided differences of x^0.5 on [0.01, 1] are bounded by the
    # derivative at the left endpoint, 0.5 * 0.01^{-0.5} = 5.
    u = PolynomialMixed(1.0, 0.5, 1.0, 0.5)
    sb = slope_bounds(u, (0.01, 1.0))
    assert 0.0 < sb.lower
    assert sb.upper <= 5.0 + 1e-9
    assert sb.ok


def test_slope_bounds_flags_non_increasing():
    class Decreasing:
        def __call__(self, x):
            return -np.asarray(x, dtype=float)

    sb = slope_bounds(Decreasing(), (-1.0, 1.0))
    assert not sb.ok


def test_slope_bounds_degenerate_slope_shrinks_with_grid():
    # x^2 has zero derivative at the origin; the grid estimate of the
    # lower slope collapses towards 0 as the grid refines.
    u = PolynomialMixed(1.0, 2.0, 1.0, 2.0)
    coarse = slope_bounds(u, (-1.0, 1.0), grid_n=101).lower
    fine = slope_bounds(u, (-1.0, 1.0), grid_n=1601).lower
    assert fine < coarse / 10.0


# -- truncation --------------------------------------------------------------

def test_truncate_knots_linear():
    t = truncate(Linear(), 0.0, reward_bound=3.0, discount=0.5)
    assert t.lower == pytest.approx(-12.0)
    assert t.upper == pytest.approx(12.0)


def test_truncate_continuity_and_branches():
    u = Entropic(1.0)
    t = truncate(u, 1.0, reward_bound=1.0, discount=0.5, slope=0.25)
    assert t(t.lower) == pytest.approx(u(t.lower), rel=1e-12)
    assert t(t.upper) == pytest.approx(u(t.upper), rel=1e-12)
    assert t(t.upper + 1.0) == pytest.approx(u(t.upper) + 0.25, rel=1e-12)
    assert t(t.lower - 2.0) == pytest.approx(u(t.lower) - 0.5, rel=1e-12)
    # inside the knots the inner utility is untouched
    assert t(0.3) == u(0.3)


def test_truncate_inverse_roundtrip():
    t = truncate(Entropic(0.5), 1.0, reward_bound=2.0, discount=0.3)
    for y in (-30.0, -1.0, 0.5, 2.0, 50.0):
        assert t(t.inverse(y)) == pytest.approx(y, rel=1e-9, abs=1e-9)


def test_truncated_requires_ordered_knots():
    with pytest.raises(UtilityError):
        Truncated(Linear(), lower=1.0, upper=-1.0, slope=0.1)
    with pytest.raises(UtilityError):
        Truncated(Linear(), lower=-1.0, upper=1.0, slope=0.0)


# -- linearization near zero -------------------------------------------------

def test_linearize_chord_value():
    # u(x) = x^0.5: chord on [0, 0.04) maps 0.02 to 0.02 * 0.2 / 0.04 = 0.1
    u = PolynomialMixed(1.0, 0.5, 1.0, 0.5)
    v = linearize_near_zero(u, phi=0.04)
    assert v(0.02) == pytest.approx(0.1)
    # outside the window the original utility applies
    assert v(0.5) == u(0.5)
    assert v(-0.5) == u(-0.5)


def test_linearize_removes_zero_derivative():
    u = PolynomialMixed(1.0, 2.0, 1.0, 2.0)
    v = linearize_near_zero(u, phi=0.1)
    assert v(0.05) == pytest.approx(0.05 * 0.1)
    sb = slope_bounds(v, (-1.0, 1.0), grid_n=801)
    assert sb.ok


def test_shift_scheme():
    u = PolynomialMixed(1.0, 0.5, 1.0, 0.5)
    v = linearize_near_zero(u, phi=0.01, scheme="shift")
    assert v(0.0) == 0.0
    assert v(1.0) == pytest.approx((1.0 + 0.01) ** 0.5 - 0.01 ** 0.5)
    with pytest.raises(UtilityError):
        linearize_near_zero(Entropic(1.0), phi=0.01, scheme="shift")
    with pytest.raises(UtilityError):
        linearize_near_zero(u, phi=0.01, scheme="nope")


def test_linearized_inverse_roundtrip():
    v = LinearizedNearZero(PolynomialMixed(0.5, 2.0, 1.5, 0.5), phi=1e-4)
    for y in (-2.0, -1e-5, 0.0, 3e-5, 1.7):
        assert v(v.inverse(y)) == pytest.approx(y, abs=1e-12)


def test_vectorized_eval_matches_scalar():
    u = PolynomialMixed(0.5, 2.0, 1.0, 0.7)
    xs = np.linspace(-2, 2, 41)
    np.testing.assert_allclose(u(xs), [u(float(x)) for x in xs], rtol=1e-15)
