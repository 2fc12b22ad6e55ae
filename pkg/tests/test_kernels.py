import math

import numpy as np
import pytest
from scipy import integrate

from loggamma_lab import specfun as sf
from loggamma_lab.errors import DomainError, HypothesisError
from loggamma_lab.kernels import (
    FiniteKernelSpec,
    KernelQuad,
    LegacyKernelSpec,
    LimitKernelSpec,
    finite_kernel,
    finite_kernel_direct,
    finite_kernel_row,
    legacy_kernel,
    limit_kernel,
)
from loggamma_lab.polymer import BBPLayout, ModelSpec, build_bbp_spec
from loggamma_lab.scaling import ModelShape, scaling_constants

FIXED = KernelQuad(adaptive_detour=False)


def _outer_points(a, n, seed, t_max=3.0):
    rng = np.random.default_rng(seed)
    t = rng.uniform(0.05, t_max, n)
    s = rng.choice([-1, 1], n)
    return a + t * np.exp(1j * s * 3 * math.pi / 4)


@pytest.fixture(scope="module")
def ks39():
    return FiniteKernelSpec(ModelSpec.homogeneous(3, 9, 2.0), log_u=math.log(5.0))


def test_spec_defaults_and_guards():
    ks = FiniteKernelSpec(ModelSpec.homogeneous(1, 9, 2.0), 0.0)
    assert ks.a == pytest.approx(2 / 3) and ks.b == pytest.approx(4 / 3)
    assert ks.d == pytest.approx(min(1 / 8, (ks.b - ks.a) / 8))
    with pytest.raises(HypothesisError):
        FiniteKernelSpec(ModelSpec.homogeneous(1, 9, 2.0), 0.0, a=1.5, b=1.0)
    with pytest.raises(HypothesisError):
        FiniteKernelSpec(ModelSpec.homogeneous(1, 9, 2.0), 0.0, d=0.3)
    with pytest.raises(HypothesisError):
        FiniteKernelSpec(ModelSpec.homogeneous(1, 5, 2.0), 0.0)
    FiniteKernelSpec(ModelSpec.homogeneous(1, 5, 2.0), 0.0, require_n9=False)
    with pytest.raises(DomainError):
        FiniteKernelSpec(ModelSpec.homogeneous(1, 9, 2.0), 0.0, tau=-1.0)


def test_tau_zero_is_plain_kernel(ks39):
    v, vp = _outer_points(ks39.a, 2, 1)
    ks0 = FiniteKernelSpec(ks39.spec, ks39.log_u, 0.0)
    assert finite_kernel(v, vp, ks0) == finite_kernel(v, vp, ks39)


def test_detour_width_invariance(ks39):
    for v, vp in zip(_outer_points(ks39.a, 5, 2), _outer_points(ks39.a, 5, 3)):
        k1 = finite_kernel(v, vp, ks39, FIXED)
        k2 = finite_kernel(v, vp, ks39, FIXED, d=ks39.d / 2)
        assert abs(k1 - k2) <= 1e-8 * max(1.0, abs(k1))


def test_adaptive_detour_matches_fixed(ks39):
    for v, vp in zip(_outer_points(ks39.a, 5, 4, 20.0), _outer_points(ks39.a, 5, 5)):
        k1 = finite_kernel(v, vp, ks39, FIXED)
        k2 = finite_kernel(v, vp, ks39)
        assert abs(k1 - k2) <= 1e-8 * max(1.0, abs(k1))


def test_exponent_form_matches_direct_products(ks39):
    for v, vp in zip(_outer_points(ks39.a, 5, 6), _outer_points(ks39.a, 5, 7)):
        k1 = finite_kernel(v, vp, ks39)
        k2 = finite_kernel_direct(v, vp, ks39)
        assert abs(k1 - k2) <= 1e-9 * abs(k1)


def test_row_matches_pointwise(ks39):
    v = _outer_points(ks39.a, 1, 8)[0]
    vps = _outer_points(ks39.a, 4, 9)
    row = finite_kernel_row(v, vps, ks39)
    for j, vp in enumerate(vps):
        assert row[j] == pytest.approx(finite_kernel(v, vp, ks39), rel=1e-14)


def test_perturbed_parameters_use_individual_terms():
    shape = ModelShape(10, 9, 1.0)
    c = scaling_constants(shape)
    spec = build_bbp_spec(shape, BBPLayout(x=(-0.5,), y=(1.0,)), c)
    ks = FiniteKernelSpec.from_scaling(spec, 0.0, shape, c)
    assert ks.spec.a.max() < ks.a < ks.b < ks.spec.alpha.min()
    v, vp = _outer_points(ks.a, 2, 10, 0.5)
    assert abs(finite_kernel(v, vp, ks) - finite_kernel_direct(v, vp, ks)) <= 1e-9 * abs(finite_kernel(v, vp, ks))


def test_tau_continuity():
    shape = ModelShape(3, 9, 2.0)
    c = scaling_constants(shape)
    spec = ModelSpec.homogeneous(3, 9, 2.0)
    k0 = FiniteKernelSpec.from_scaling(spec, 0.0, shape, c)
    kt = FiniteKernelSpec.from_scaling(spec, 0.0, shape, c, tau=1e-3)
    for v, vp in zip(_outer_points(k0.a, 6, 11), _outer_points(k0.a, 6, 12)):
        a, b = finite_kernel(v, vp, k0), finite_kernel(v, vp, kt)
        assert abs(a - b) <= 1e-3
        assert abs(a - b) <= 1e-2 * abs(a)


def test_magnitude_envelope_shape():
    # |K| / M^{1/3} stays bounded and |K(v, v)| decays away from the vertex
    ratios = []
    for M in (16, 32, 64):
        shape = ModelShape(M, M, 1.0)
        c = scaling_constants(shape)
        ks = FiniteKernelSpec.from_scaling(ModelSpec.homogeneous(M, M, 1.0), 0.0, shape, c)
        t = np.array([0.05, 0.1, 0.2, 0.4, 0.8])
        mags = [abs(finite_kernel(ks.a + s * np.exp(0.75j * math.pi), ks.a + s * np.exp(0.75j * math.pi), ks)) for s in t]
        ratios.append(max(mags) / M ** (1 / 3))
        assert mags[-1] < 1e-6 * max(mags)
    assert max(ratios) < 10


def test_legacy_reflection_identity():
    s = 0.3 + 0.2j
    lhs = np.exp(sf.log_gamma(-s) + sf.log_gamma(1 + s))
    # Gamma(-s) Gamma(1+s) = -pi / sin(pi s) = pi / sin(pi (v - w)) with s = w - v
    assert abs(lhs + math.pi / np.sin(math.pi * s)) < 1e-13
    assert abs(lhs - sf.recip_sin_pi(-s)) < 1e-13


def test_legacy_range_guard():
    with pytest.raises(HypothesisError):
        LegacyKernelSpec(ModelSpec.homogeneous(2, 9, 1.0), 0.0, 1.0)
    with pytest.raises(HypothesisError):
        LegacyKernelSpec(ModelSpec.homogeneous(2, 9, 2.5), 0.0, 0.0)


def test_legacy_kernel_pointwise_matches_tau_kernel():
    spec = ModelSpec.homogeneous(2, 9, 2.5)
    ls = LegacyKernelSpec(spec, 0.3, 1.0)
    ks = FiniteKernelSpec(spec, 0.3, 1.0, a=1.2, b=1.9)
    for v, vp in zip(_outer_points(1.2, 3, 13, 1.5), _outer_points(1.2, 3, 14, 1.5)):
        k1 = legacy_kernel(v, vp, ls)
        k2 = finite_kernel(v, vp, ks)
        assert abs(k1 - k2) <= 1e-9 * max(1.0, abs(k1))


def test_limit_specs():
    with pytest.raises(DomainError):
        LimitKernelSpec((1.0,), (0.5,))
    with pytest.raises(DomainError):
        LimitKernelSpec((), (), form="other")
    ls = LimitKernelSpec((), (), form="dtilde")
    assert ls.mu == 0.0 and ls.rho == 1.0
    ls = LimitKernelSpec((-1.0,), (), form="dtilde")
    assert ls.mu == 0.0 and ls.rho == 1.0
    ls = LimitKernelSpec((), (2.0,), form="dtilde")
    assert ls.mu == 1.0 and ls.rho == 0.5
    ls = LimitKernelSpec((-1.0,), (1.0,), form="dtilde")
    assert ls.mu == 0.0 and ls.rho == 0.5
    with pytest.raises(DomainError):
        LimitKernelSpec((), (1.0,), form="dtilde", mu=0.0, rho=1.0)


def test_limit_kernel_ray_vs_dtilde():
    for x, y in [((), ()), ((-1.0,), (1.5,)), ((), (0.8, 2.0))]:
        rays = LimitKernelSpec(x, y, 0.7)
        dt = LimitKernelSpec(x, y, 0.7, form="dtilde")
        # v, v' to the left of both inner contours
        left = min(rays.a, dt.mu) - 0.3
        for v, vp in [(left + 1j, left - 0.5j), (left - 0.2 + 2j, left + 0.4j)]:
            k1 = limit_kernel(v, vp, rays)
            k2 = limit_kernel(v, vp, dt)
            assert abs(k1 - k2) <= 1e-8 * max(1.0, abs(k1))


def test_limit_kernel_adaptive_oracle():
    ls = LimitKernelSpec((), (), 0.5, a=-0.5, b=0.5)
    v = vp = ls.a + 1j
    e = np.exp(1j * math.pi / 4)

    def integrand(t, sign):
        w = ls.b + t * (e if sign > 0 else np.conj(e))
        dw = e if sign > 0 else np.conj(e)
        val = np.exp(-v**3 / 3 + w**3 / 3 - ls.r_param * w + ls.r_param * v) / ((v - w) * (w - vp)) * dw
        return val * sign / (2j * math.pi)

    total = 0j
    for sign in (1, -1):
        re = integrate.quad(lambda t: integrand(t, sign).real, 0, np.inf, epsabs=1e-14, epsrel=1e-13, limit=200)[0]
        im = integrate.quad(lambda t: integrand(t, sign).imag, 0, np.inf, epsabs=1e-14, epsrel=1e-13, limit=200)[0]
        total += re + 1j * im
    assert abs(limit_kernel(v, vp, ls) - total) < 1e-9
