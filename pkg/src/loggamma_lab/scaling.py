"""Critical point, law-of-large-numbers profile, fluctuation scale and the
steepest-descent function G for the homogeneous log-gamma polymer.

Conventions: ``M`` counts columns, ``N`` counts rows, all weights have shape
``theta``.  ``p = N/M``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from . import specfun as sf
from .errors import ConvergenceError, DomainError


@dataclass(frozen=True)
class ModelShape:
    M: int
    N: int
    theta: float

    def __post_init__(self):
        if int(self.M) != self.M or self.M < 1:
            raise DomainError(f"M must be a positive integer, got {self.M}")
        if int(self.N) != self.N or self.N < 1:
            raise DomainError(f"N must be a positive integer, got {self.N}")
        if not (self.theta > 0 and math.isfinite(self.theta)):
            raise DomainError(f"theta must be positive, got {self.theta}")
        object.__setattr__(self, "M", int(self.M))
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "theta", float(self.theta))

    @property
    def p(self) -> float:
        return self.N / self.M

    @property
    def alpha_ratio(self) -> float:
        return self.N / self.M


@dataclass(frozen=True)
class ScalingConstants:
    z_c: float
    sigma: float
    W: float
    C: float
    h: float
    shape: ModelShape = field(repr=False)

    def log_u(self, x):
        """log u(x) = W - M^{1/3} sigma x."""
        return self.W - self.shape.M ** (1.0 / 3.0) * self.sigma * np.asarray(x, dtype=float)


def _S(k, z):
    return np.real(sf.polygamma_sum(k, np.asarray(z, dtype=float)))


def _check_open_interval(z, theta):
    z = np.asarray(z, dtype=float)
    if np.any(z <= 0) or np.any(z >= theta):
        raise DomainError(f"argument must lie in (0, theta={theta})")
    return z


def g_eval(z, theta: float):
    """g(z) = S2(theta - z) / S2(z) on (0, theta); increasing from 0 to infinity."""
    z = _check_open_interval(z, theta)
    out = np.asarray(_S(2, theta - z) / _S(2, z))
    return float(out) if out.ndim == 0 else out


def _log_g_and_slope(z, theta):
    s2a, s2b = _S(2, theta - z), _S(2, z)
    s3a, s3b = _S(3, theta - z), _S(3, z)
    # d/dz log g = 2 S3(theta-z)/S2(theta-z) + 2 S3(z)/S2(z) > 0
    return math.log(s2a) - math.log(s2b), 2.0 * s3a / s2a + 2.0 * s3b / s2b


def g_inverse(x: float, theta: float) -> float:
    """Solve g(z) = x for z in (0, theta): bisection in log g with Newton steps."""
    if not (x > 0 and math.isfinite(x)):
        raise DomainError(f"g_inverse needs x > 0, got {x}")
    if not theta > 0:
        raise DomainError(f"theta must be positive, got {theta}")
    if x == 1.0:
        return 0.5 * theta
    target = math.log(x)
    lo, hi = 1e-6 * theta, theta - 1e-6 * theta
    # g(z) ~ z^2 S2(theta) near 0, so the default bracket only covers
    # x >~ 1e-12; widen geometrically for more extreme ratios
    for _ in range(60):
        if _log_g_and_slope(lo, theta)[0] <= target:
            break
        lo *= 1e-2
    for _ in range(60):
        if _log_g_and_slope(hi, theta)[0] >= target:
            break
        hi = theta - (theta - hi) * 1e-2
    z = 0.5 * (lo + hi)
    for _ in range(200):
        f, slope = _log_g_and_slope(z, theta)
        r = f - target
        if r > 0:
            hi = z
        else:
            lo = z
        if abs(r) < 1e-15 or hi - lo < 4e-16 * theta:
            return float(z)
        step = z - r / slope
        z = step if lo < step < hi else 0.5 * (lo + hi)
    raise ConvergenceError(f"g_inverse did not converge for x={x}, theta={theta}")


def h_theta(x, theta: float):
    """Law-of-large-numbers profile h_theta(x) = x Psi(g^{-1}(x)) + Psi(theta - g^{-1}(x))."""
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(xs <= 0):
        raise DomainError("h_theta needs x > 0")
    zz = np.array([g_inverse(t, theta) for t in xs])
    out = xs * np.real(sf.digamma(zz)) + np.real(sf.digamma(theta - zz))
    return float(out[0]) if np.ndim(x) == 0 else out


def sigma_theta(x, theta: float):
    """Fluctuation scale (x S3(g^{-1} x) + S3(theta - g^{-1} x))^{1/3}."""
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(xs <= 0):
        raise DomainError("sigma_theta needs x > 0")
    zz = np.array([g_inverse(t, theta) for t in xs])
    out = np.cbrt(xs * _S(3, zz) + _S(3, theta - zz))
    return float(out[0]) if np.ndim(x) == 0 else out


def sigma_bounds(delta: float, theta: float) -> tuple[float, float]:
    """Two-sided bounds on sigma valid for every ratio N/M in [delta, 1]."""
    a, b = g_inverse(delta, theta), 0.5 * theta
    lo = np.cbrt(delta * _S(3, b) + _S(3, theta - a))
    hi = np.cbrt(_S(3, a) + _S(3, theta - b))
    return float(lo), float(hi)


def scaling_constants(shape: ModelShape) -> ScalingConstants:
    M, N, theta = shape.M, shape.N, shape.theta
    zc = g_inverse(shape.p, theta)
    sigma = float(np.cbrt(shape.p * _S(3, zc) + _S(3, theta - zc)))
    W = N * sf.digamma(zc).real + M * sf.digamma(theta - zc).real
    C = N * sf.log_gamma(zc).real - M * sf.log_gamma(theta - zc).real - W * zc
    h = shape.p * sf.digamma(zc).real + sf.digamma(theta - zc).real
    return ScalingConstants(z_c=zc, sigma=sigma, W=W, C=C, h=h, shape=shape)


def eval_G(z, shape: ModelShape, constants: ScalingConstants | None = None, scaled: bool = False):
    """G(z) = N logGamma(z) - M logGamma(theta - z) - W z - C.

    The imaginary part is defined modulo 2*pi (integer multiples from the
    log-gamma branches), which is harmless inside exponentials.  With
    ``scaled=True`` returns G/M.
    """
    c = constants if constants is not None else scaling_constants(shape)
    zz = np.asarray(z, dtype=complex)
    out = (
        shape.N * sf.log_gamma(zz)
        - shape.M * sf.log_gamma(shape.theta - zz)
        - c.W * zz
        - c.C
    )
    if scaled:
        out = out / shape.M
    return out


@dataclass
class DescentReport:
    checked: int = 0
    violations: int = 0
    worst: float = 0.0
    by_check: dict = field(default_factory=dict)

    def record(self, name: str, excess: np.ndarray):
        bad = excess > 0
        n_bad = int(np.count_nonzero(bad))
        worst = float(excess[bad].max()) if n_bad else 0.0
        self.checked += int(excess.size)
        self.violations += n_bad
        self.worst = max(self.worst, worst)
        prev = self.by_check.get(name, (0, 0.0))
        self.by_check[name] = (prev[0] + n_bad, max(prev[1], worst))


def descent_checks(shape: ModelShape, grid_size: int = 200, radius: float = 8.0) -> DescentReport:
    """Count sign and monotonicity violations of Re G on the descent geometry.

    * rays z_c + r e^{i phi}: Re G is nondecreasing and >= 0 for
      phi in {pi/4, 7pi/4}; nonincreasing and <= 0 for {3pi/4, 5pi/4};
    * the vertical line z_c + i r: Re G nondecreasing in |r|;
    * the region Re(z - z_c) > 0, |Im(z - z_c)| >= Re(z - z_c): Re G >= 0.

    A violation is an excess beyond 1e-12 (M + N).
    """
    if grid_size < 10:
        raise DomainError("grid_size must be >= 10")
    c = scaling_constants(shape)
    tol = 1e-12 * (shape.M + shape.N)
    rep = DescentReport()
    r = radius * np.linspace(0.0, 1.0, grid_size) ** 1.5

    def reG(z):
        return np.real(eval_G(z, shape, c))

    for phi, sign in ((np.pi / 4, 1), (7 * np.pi / 4, 1), (3 * np.pi / 4, -1), (5 * np.pi / 4, -1)):
        g = reG(c.z_c + r * np.exp(1j * phi))
        rep.record(f"ray_sign_{phi:.4f}", -sign * g - tol)
        rep.record(f"ray_monotone_{phi:.4f}", -sign * np.diff(g) - tol)

    for s in (1.0, -1.0):
        g = reG(c.z_c + 1j * s * r)
        rep.record(f"vertical_monotone_{s:+.0f}", -np.diff(g) - tol)

    n = max(4, int(math.isqrt(grid_size * 4)))
    xs = radius * np.linspace(1.0 / n, 1.0, n)
    pts = []
    for x in xs:
        ys = np.linspace(x, radius + x, n)
        pts.append(x + 1j * ys)
        pts.append(x - 1j * ys)
    z = c.z_c + np.concatenate(pts)
    rep.record("region_nonnegative", -reG(z) - tol)
    return rep


def cubic_remainder_slope(shape: ModelShape, radii=None, n_angles: int = 16) -> float:
    """Log-log slope of max_phi |G/M + sigma^3 (z - z_c)^3 / 3| against r = |z - z_c|.

    Taking the maximum over a circle of angles isolates the leading quartic
    term.  For M = N that term vanishes by symmetry and the slope is 5.
    """
    c = scaling_constants(shape)
    radii = np.geomspace(1e-2, 1e-1, 8) if radii is None else np.asarray(radii, dtype=float)
    ang = np.exp(2j * np.pi * (np.arange(n_angles) + 0.5) / n_angles)
    dz = radii[:, None] * ang[None, :]
    rem = np.abs(eval_G(c.z_c + dz, shape, c, scaled=True) + c.sigma**3 * dz**3 / 3.0).max(axis=1)
    slope, _ = np.polyfit(np.log(radii), np.log(rem), 1)
    return float(slope)


def growth_envelope_constant(shape: ModelShape, phi: float, r_min: float = 0.5, r_max: float = 30.0,
                             n: int = 200) -> float:
    """Largest c with |Re G(z_c + r e^{i phi})| >= c (M+N) r log(1+r) on [r_min, r_max].

    The sign of Re G is not checked here (descent_checks does that).
    """
    c = scaling_constants(shape)
    r = np.linspace(r_min, r_max, n)
    g = np.abs(np.real(eval_G(c.z_c + r * np.exp(1j * phi), shape, c)))
    return float(np.min(g / ((shape.M + shape.N) * r * np.log1p(r))))


def horizontal_shift_constant(shape: ModelShape, A: float = 2.0, r_max: float = 10.0, n: int = 60) -> float:
    """max |Re[G(z(r) + x M^{-1/3}) - G(z(r))]| / (M^{2/3} (1 + r)) over a grid.

    z(r) runs over the four diagonal rays from z_c, x over [-A, A].
    """
    c = scaling_constants(shape)
    r = np.linspace(0.0, r_max, n)
    xs = np.linspace(-A, A, 9)
    m13 = shape.M ** (-1.0 / 3.0)
    worst = 0.0
    for phi in (np.pi / 4, 3 * np.pi / 4, 5 * np.pi / 4, 7 * np.pi / 4):
        z = c.z_c + r * np.exp(1j * phi)
        base = np.real(eval_G(z, shape, c))
        for x in xs:
            shifted = z + x * m13
            if np.any(np.abs(np.imag(shifted)) < 1e-9):
                # avoid landing on the real-axis poles
                shifted = shifted + 1e-6j
            d = np.abs(np.real(eval_G(shifted, shape, c)) - base)
            worst = max(worst, float(np.max(d / (shape.M ** (2.0 / 3.0) * (1 + r)))))
    return worst


def critical_theta(p: float, theta: float) -> float:
    """Critical column parameter theta_c = g^{-1}(p)."""
    return g_inverse(p, theta)


def lln_perturbed(p: float, alpha1: float, theta: float) -> tuple[float, float]:
    """max over x in [0, p) of -x Psi(alpha1) - h_theta(p - x), and the argmax.

    The objective is concave with derivative at 0 equal to
    Psi(theta_c) - Psi(alpha1), so the maximum sits at 0 iff alpha1 >= theta_c.
    """
    if not alpha1 > 0:
        raise DomainError(f"alpha1 must be positive, got {alpha1}")
    if not p > 0:
        raise DomainError(f"p must be positive, got {p}")
    if not theta > 0:
        raise DomainError(f"theta must be positive, got {theta}")
    psi1 = sf.digamma(alpha1).real

    def objective(x):
        return -x * psi1 - h_theta(p - x, theta)

    if alpha1 >= critical_theta(p, theta):
        return float(objective(0.0)), 0.0
    res = minimize_scalar(lambda x: -objective(x), bounds=(0.0, p * (1 - 1e-12)), method="bounded",
                          options={"xatol": 1e-11})
    x = float(res.x)
    return float(objective(x)), x
