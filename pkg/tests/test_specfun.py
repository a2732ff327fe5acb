import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from besselspdc.specfun import (
    ConvergenceError,
    DomainError,
    adaptive_gauss_legendre,
    bessel_i_scaled,
    bessel_j,
    gauss_legendre,
    integrate_radial,
    log_bessel_i_scaled,
    log_bessel_i_scaled_orders,
    sinc_normalized,
)

mpmath.mp.dps = 40


def j_series(n, x, terms=400):
    """Power series of J_n in high precision (valid for moderate x)."""
    x = mpmath.mpf(x)
    total = mpmath.mpf(0)
    for k in range(terms):
        total += (-1) ** k / (mpmath.factorial(k) * mpmath.factorial(k + n)) * (x / 2) ** (2 * k + n)
    return total


def close(got, want, rel, floor=1e-15):
    return abs(got - float(want)) <= rel * abs(float(want)) + floor


# bessel_j


def test_j_at_origin():
    assert bessel_j(0, 0.0) == 1.0
    assert bessel_j(1, 0.0) == 0.0
    assert bessel_j(-7, 0.0) == 0.0


def test_j0_first_zero():
    root = float(mpmath.findroot(lambda t: j_series(0, t), 2.4))
    assert abs(root - 2.404826) < 1e-6
    assert abs(bessel_j(0, 2.404826)) < 1e-6
    assert abs(bessel_j(0, root)) < 1e-15


@pytest.mark.parametrize("n", [0, 1, 2, 5, 10, 20, 30, 50])
def test_j_matches_series(n):
    xs = np.array([1e-3, 0.1, 0.5, 1.0, 2.5, 5.0, 9.9, 14.0, 21.0, 29.9])
    got = bessel_j(n, xs)
    for x, g in zip(xs, got):
        assert close(g, j_series(n, x), 1e-10), (n, x)


@pytest.mark.parametrize("n", [0, 1, 3, 17, 100, 200])
@pytest.mark.parametrize("x", [0.3, 40.0, 150.0, 730.0, 2500.0, 1.2e5])
def test_j_matches_mpmath(n, x):
    assert close(bessel_j(n, x), mpmath.besselj(n, x), 1e-10, 1e-14)


@given(st.integers(-60, 60), st.floats(-80, 80))
def test_j_reflection_symmetries(n, x):
    assert bessel_j(-n, x) == pytest.approx((-1) ** n * bessel_j(n, x), rel=1e-12, abs=1e-300)
    assert bessel_j(n, -x) == pytest.approx((-1) ** n * bessel_j(n, x), rel=1e-12, abs=1e-300)


@given(st.integers(1, 60), st.floats(0.1, 50))
def test_j_three_term_recurrence(n, x):
    lhs = bessel_j(n - 1, x) + bessel_j(n + 1, x)
    rhs = 2 * n / x * bessel_j(n, x)
    scale = abs(bessel_j(n - 1, x)) + abs(bessel_j(n + 1, x))
    assert abs(lhs - rhs) <= 1e-9 * scale + 1e-300


def test_j_vectorized_matches_scalar():
    xs = np.linspace(0, 60, 301)
    vec = bessel_j(4, xs)
    assert vec.shape == xs.shape
    for v, x in zip(vec[::37], xs[::37]):
        assert v == pytest.approx(bessel_j(4, float(x)), abs=1e-15)


@pytest.mark.parametrize("bad", [math.inf, -math.inf, math.nan])
def test_j_domain_error(bad):
    with pytest.raises(DomainError):
        bessel_j(0, bad)


def test_j_tiny_argument():
    assert bessel_j(1, 1e-300) == pytest.approx(5e-301, rel=1e-14)
    assert bessel_j(30, 1e-20) == 0.0 or bessel_j(30, 1e-20) < 1e-300


def test_j_order_cap():
    with pytest.raises(DomainError):
        bessel_j(201, 1.0)


# bessel_i_scaled


def test_i_scaled_examples():
    assert bessel_i_scaled(0, 0.0) == 1.0
    assert bessel_i_scaled(3, 0.0) == 0.0
    series = sum((0.25) ** k / math.factorial(k) ** 2 for k in range(40))
    assert abs(series - 1.266066) < 1e-6
    assert bessel_i_scaled(0, 1.0) == pytest.approx(series * math.exp(-1), abs=1e-15)
    assert abs(bessel_i_scaled(0, 1.0) - 0.465760) < 1e-6


@pytest.mark.parametrize("n", [0, 1, 2, 7, 30, 120, 200])
@pytest.mark.parametrize("x", [1e-8, 0.01, 1.0, 24.9, 25.1, 300.0, 5000.0, 1e6])
def test_i_scaled_matches_mpmath(n, x):
    want = mpmath.log(mpmath.besseli(n, x)) - x
    got = log_bessel_i_scaled(n, x)
    assert abs(got - float(want)) <= 1e-12 * max(1.0, abs(float(want)))


@given(st.integers(0, 200), st.floats(0.0, 1e4))
def test_i_scaled_symmetric_in_order(n, x):
    assert bessel_i_scaled(n, x) == bessel_i_scaled(-n, x)


@given(st.floats(1e-6, 1e4))
def test_i_scaled_nonincreasing_in_order(x):
    vals = log_bessel_i_scaled_orders(200, x)
    assert np.all(np.diff(vals) <= 0)


@given(st.integers(0, 200), st.floats(1e-6, 1e5))
def test_i_orders_match_single(n, x):
    table = log_bessel_i_scaled_orders(n, x)
    assert table[n] == pytest.approx(log_bessel_i_scaled(n, x), rel=1e-12, abs=1e-12)


def test_i_domain_error():
    with pytest.raises(DomainError):
        bessel_i_scaled(0, -1e-3)
    with pytest.raises(DomainError):
        bessel_i_scaled(0, math.inf)


def test_i_scaled_no_overflow():
    assert np.isfinite(log_bessel_i_scaled(10, 1e8))
    assert 0 < bessel_i_scaled(0, 1e5) < 1


# sinc


def test_sinc_examples():
    assert sinc_normalized(0.0) == 1.0
    assert abs(sinc_normalized(1.0)) < 1e-16
    assert abs(sinc_normalized(0.5) - 2 / math.pi) < 1e-9
    assert abs(2 / math.pi - 0.636620) < 1e-6


@given(st.floats(-1e3, 1e3))
def test_sinc_even(u):
    assert sinc_normalized(u) == sinc_normalized(-u)


# quadrature


@pytest.mark.parametrize("n", [2, 5, 16, 32, 64])
def test_gauss_legendre_rule_invariants(n):
    rule = gauss_legendre(n, -0.5, 2.0)
    nodes, weights = np.asarray(rule.nodes), np.asarray(rule.weights)
    assert np.all(weights > 0)
    assert np.all(np.diff(nodes) > 0)
    assert nodes[0] >= -0.5 and nodes[-1] <= 2.0
    for deg in range(2 * n):
        exact = (2.0 ** (deg + 1) - (-0.5) ** (deg + 1)) / (deg + 1)
        got = rule.integrate(lambda t: t**deg)
        assert abs(got - exact) <= 1e-12 * max(1.0, abs(exact))


def test_integrate_radial_examples():
    assert integrate_radial(lambda r: r**2, 1.0) == pytest.approx(1 / 3, rel=1e-14)
    assert abs(integrate_radial(lambda r: r * np.exp(-(r**2)), 10.0) - 0.5) < 1e-10


def test_integrate_radial_matches_bessel_closed_form():
    w0, w1, kr = 0.5, 0.23, 21.0
    c = 2 / w1**2 + 1 / w0**2
    got = integrate_radial(lambda r: r * bessel_j(0, kr * r) ** 2 * np.exp(-c * r**2), 5.0, tol=1e-13)
    # Weber's integral: exp(-kr^2/(2c)) I_0(kr^2/(2c)) / (2c)
    want = bessel_i_scaled(0, kr**2 / (2 * c)) / (2 * c)
    assert got == pytest.approx(want, rel=1e-11)


@given(
    st.lists(st.floats(-5, 5), min_size=1, max_size=12),
    st.floats(0.1, 10),
)
def test_error_estimate_bounds_true_error(coefs, b):
    poly = np.polynomial.Polynomial(coefs)
    exact = poly.integ()(b) - poly.integ()(0.0)
    value, err = adaptive_gauss_legendre(poly, 0.0, b, tol=1e-10)
    assert abs(value - exact) <= err + 1e-300 or abs(value - exact) == 0


def test_breakpoints_handle_jumps():
    value, _ = adaptive_gauss_legendre(lambda t: np.where(t < 1 / 3, 1.0, -1.0), 0.0, 1.0, 1e-12, breakpoints=[1 / 3])
    assert value == pytest.approx(1 / 3 - 2 / 3, abs=1e-14)


def test_nonconvergence_raises():
    with pytest.raises(ConvergenceError):
        adaptive_gauss_legendre(lambda t: np.sin(1 / (t + 1e-9)), 0.0, 1.0, 1e-14, max_panels=50)


def test_abs_tol_allows_vanishing_integral():
    value, _ = adaptive_gauss_legendre(lambda t: np.sin(t), -3.0, 3.0, 1e-12, abs_tol=1e-13)
    assert abs(value) < 1e-13
