
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq, minimize_scalar

from loggamma_lab import specfun as sf
from loggamma_lab.errors import DomainError
from loggamma_lab.scaling import (
    ModelShape,
    critical_theta,
    cubic_remainder_slope,
    descent_checks,
    eval_G,
    g_eval,
    g_inverse,
    growth_envelope_constant,
    h_theta,
    horizontal_shift_constant,
    lln_perturbed,
    scaling_constants,
    sigma_bounds,
    sigma_theta,
)

# frozen from mpmath Hurwitz zeta at 30 digits
G_THETA1_Z025 = 0.14780665211640876
GINV_THETA1_X2 = 0.5999436885934187


def _partial_S2(z, n=2_000_000):
    k = np.arange(n, dtype=float)
    return np.sum(1.0 / (k + z) ** 2) + 1.0 / (n + z) - 0.5 / (n + z) ** 2


def test_g_at_half_theta():
    for theta in (0.3, 1.0, 4.0):
        assert g_eval(theta / 2, theta) == pytest.approx(1.0, abs=1e-14)


def test_g_oracle_value():
    assert abs(g_eval(0.25, 1.0) - G_THETA1_Z025) < 1e-10
    direct = _partial_S2(0.75) / _partial_S2(0.25)
    assert abs(g_eval(0.25, 1.0) - direct) < 1e-10


def test_g_strictly_increasing():
    z = np.linspace(0.01, 0.99, 400)
    assert np.all(np.diff(g_eval(z, 1.0)) > 0)


def test_g_domain():
    with pytest.raises(DomainError):
        g_eval(1.2, 1.0)
    with pytest.raises(DomainError):
        g_inverse(-1.0, 1.0)


def test_g_inverse_basic():
    assert g_inverse(1.0, 2.0) == 1.0
    assert abs(g_inverse(2.0, 1.0) - GINV_THETA1_X2) < 1e-12
    z = brentq(lambda t: g_eval(t, 1.0) - 2.0, 1e-6, 1 - 1e-6, xtol=1e-15)
    assert abs(g_inverse(2.0, 1.0) - z) < 1e-12


@pytest.mark.parametrize("x", [0.3, 0.7, 2.0, 5.0])
def test_g_inverse_reflection(x):
    for theta in (0.5, 1.0, 3.0):
        assert abs(g_inverse(1 / x, theta) - (theta - g_inverse(x, theta))) < 1e-12


def test_g_roundtrip():
    for x in np.geomspace(0.1, 10, 50):
        assert abs(g_eval(g_inverse(x, 1.3), 1.3) - x) < 1e-10 * x


def test_g_inverse_extreme_ratios():
    for x in (1e-14, 1e-8, 1e8):
        z = g_inverse(x, 1.0)
        assert 0 < z < 1
        assert abs(g_eval(z, 1.0) / x - 1) < 1e-10


def test_symmetric_critical_point():
    for theta in (0.5, 1.0, 2.0):
        c = scaling_constants(ModelShape(17, 17, theta))
        assert c.z_c == theta / 2


def test_W_identity_independent_maximisation():
    shape = ModelShape(128, 64, 1.0)
    c = scaling_constants(shape)
    f = lambda x: -(64 * sf.digamma(x).real + 128 * sf.digamma(1 - x).real)
    res = minimize_scalar(f, bounds=(1e-3, 1 - 1e-3), method="bounded", options={"xatol": 1e-12})
    W_direct = -res.fun
    assert abs(shape.M * c.h - W_direct) <= 1e-9 * abs(W_direct)
    assert abs(shape.M * c.h - c.W) <= 1e-9 * abs(c.W)
    assert abs(res.x - c.z_c) < 1e-5


def test_sigma_within_bounds():
    lo, hi = sigma_bounds(0.25, 1.0)
    for a in np.linspace(0.25, 1.0, 16):
        s = sigma_theta(a, 1.0)
        assert lo <= s <= hi


def test_h_derivative_is_digamma():
    for x in (0.3, 0.8, 1.0, 2.5):
        h = 1e-5
        fd = (h_theta(x + h, 1.0) - h_theta(x - h, 1.0)) / (2 * h)
        assert abs(fd - sf.digamma(g_inverse(x, 1.0)).real) < 1e-6


def test_G_vanishes_at_critical_point():
    shape = ModelShape(64, 40, 1.5)
    c = scaling_constants(shape)
    assert abs(eval_G(c.z_c, shape, c)) <= 1e-10 * (shape.M + shape.N)


def _richardson(f, h):
    return (4 * f(h / 2) - f(h)) / 3


def test_G_derivatives_at_critical_point():
    shape = ModelShape(48, 30, 1.0)
    c = scaling_constants(shape)
    z = c.z_c
    G = lambda t: eval_G(t, shape, c).real
    d1 = _richardson(lambda h: (G(z + h) - G(z - h)) / (2 * h), 1e-3)
    d2 = _richardson(lambda h: (G(z + h) - 2 * G(z) + G(z - h)) / h**2, 1e-3)
    d3 = _richardson(lambda h: (G(z + 2 * h) - 2 * G(z + h) + 2 * G(z - h) - G(z - 2 * h)) / (2 * h**3), 1e-3)
    scale = 2 * c.sigma**3 * shape.M
    assert abs(d1) < 1e-4 * scale
    assert abs(d2) < 1e-4 * scale
    # the third derivative is -2 sigma^3 M: G behaves like -sigma^3 M (z - z_c)^3 / 3
    assert abs(d3 + scale) <= 1e-4 * scale


def test_cubic_remainder_exponent():
    assert abs(cubic_remainder_slope(ModelShape(128, 64, 1.0)) - 4.0) <= 0.2
    assert abs(cubic_remainder_slope(ModelShape(64, 32, 2.0)) - 4.0) <= 0.2


def test_descent_examples():
    rep = descent_checks(ModelShape(32, 32, 1.0), 100)
    assert rep.by_check["ray_monotone_2.3562"][0] == 0
    assert rep.by_check["vertical_monotone_+1"][0] == 0
    shape = ModelShape(32, 32, 1.0)
    c = scaling_constants(shape)
    assert eval_G(c.z_c + 0.5 + 0.8j, shape, c).real >= 0


@pytest.mark.parametrize("theta", [0.5, 1.0, 2.0])
@pytest.mark.parametrize("q", [0.3, 0.7, 1.0])
def test_descent_grid_zero_violations(theta, q):
    rep = descent_checks(ModelShape(64, round(64 * q), theta), 200)
    assert rep.violations == 0, rep.by_check


def test_descent_grid_size_validation():
    with pytest.raises(DomainError):
        descent_checks(ModelShape(4, 4, 1.0), 5)


def test_growth_envelope_fitted_constant_positive():
    shape = ModelShape(64, 40, 1.0)
    for phi in (np.pi / 4, 3 * np.pi / 4, 5 * np.pi / 4, 7 * np.pi / 4):
        assert growth_envelope_constant(shape, phi) > 0


def test_horizontal_shift_bounded():
    vals = [horizontal_shift_constant(ModelShape(m, m // 2, 1.0)) for m in (64, 256, 1024)]
    assert max(vals) < 50
    # the fitted constant does not grow with M
    assert vals[-1] <= 2 * vals[0]


def test_lln_supercritical_endpoint():
    tc = critical_theta(0.5, 1.0)
    val, x = lln_perturbed(0.5, tc + 0.1, 1.0)
    assert x == 0.0
    assert val == pytest.approx(-h_theta(0.5, 1.0), abs=1e-14)


def test_critical_theta_equation():
    p, theta = 0.5, 1.0
    tc = critical_theta(p, theta)
    h = 1e-5
    hp = (h_theta(p + h, theta) - h_theta(p - h, theta)) / (2 * h)
    assert abs(sf.digamma(tc).real - hp) < 1e-6


def test_lln_interior_maximiser_grid_oracle():
    p, theta = 0.5, 1.0
    a1 = critical_theta(p, theta) - 0.2
    val, x = lln_perturbed(p, a1, theta)
    psi = sf.digamma(a1).real
    grid = np.linspace(0, p * (1 - 1e-6), 1001)
    obj = -grid * psi - h_theta(p - grid, theta)
    k = int(np.argmax(obj))
    assert x > 0
    assert abs(x - grid[k]) < 2 * (grid[1] - grid[0])
    assert obj.max() - 1e-12 <= val < obj.max() + 1e-5
    # stationarity: g^{-1}(p - x) = alpha1
    assert abs(x - (p - g_eval(a1, theta))) < 1e-7


def test_lln_domain_errors():
    with pytest.raises(DomainError):
        lln_perturbed(0.5, -1.0, 1.0)
    with pytest.raises(DomainError):
        lln_perturbed(-0.5, 1.0, 1.0)


def test_model_shape_validation():
    with pytest.raises(DomainError):
        ModelShape(0, 3, 1.0)
    with pytest.raises(DomainError):
        ModelShape(3, 3, 0.0)
    s = ModelShape(8, 4, 1.0)
    assert s.p == 0.5 and s.alpha_ratio == 0.5


@settings(max_examples=60, deadline=None)
@given(st.floats(min_value=0.05, max_value=20), st.floats(min_value=0.2, max_value=5))
def test_property_g_inverse_roundtrip(x, theta):
    z = g_inverse(x, theta)
    assert 0 < z < theta
    assert abs(g_eval(z, theta) / x - 1) < 1e-10


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=1, max_value=300), st.integers(min_value=1, max_value=300),
       st.floats(min_value=0.2, max_value=4))
def test_property_W_identity(M, N, theta):
    c = scaling_constants(ModelShape(M, N, theta))
    assert 0 < c.z_c < theta
    assert abs(M * c.h - c.W) <= 1e-9 * max(1.0, abs(c.W))
    assert c.sigma > 0
