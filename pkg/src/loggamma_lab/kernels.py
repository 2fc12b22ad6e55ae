"""Kernel evaluation: the finite-size kernel (optionally tau-deformed), the
legacy s-variable kernel, and the limiting BBP / Tracy-Widom kernel.

Every kernel is an inner contour integral.  Row routines return
K(v, v'_j) for one outer point v and many v'_j at once, which is what the
Nystrom assembly in ``fredholm`` needs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from . import specfun as sf
from .contour import (
    QuadratureGrid,
    Segment,
    build_detour_contour,
    build_legacy_inner,
    build_limit_contour,
    build_ray_contour,
    discretize,
    grid_from_breaks,
    legacy_centres,
)
from .errors import ConvergenceError, DomainError, HypothesisError, PoleError
from .polymer import ModelSpec
from .scaling import ModelShape, ScalingConstants

INNER_ANGLE = math.pi / 4
OUTER_ANGLE = 3 * math.pi / 4
MAX_ADAPTIVE_D = 1.0 / 3.0


@dataclass(frozen=True)
class KernelQuad:
    """Inner-integral quadrature settings."""

    panel_order: int = 16
    h_max: float = 0.5
    tail_tolerance: float = 1e-16
    adaptive_detour: bool = True
    max_radius: float = 1e4

    def __post_init__(self):
        if not 4 <= self.panel_order <= 64:
            raise DomainError("panel_order must lie in [4, 64]")
        if not (self.h_max > 0 and self.tail_tolerance > 0):
            raise DomainError("h_max and tail_tolerance must be positive")


DEFAULT_QUAD = KernelQuad()


def _grouped(values) -> tuple[np.ndarray, np.ndarray]:
    u, c = np.unique(np.asarray(values, dtype=float), return_counts=True)
    return u, c.astype(float)


@dataclass(frozen=True)
class FiniteKernelSpec:
    """Parameters of K_u (tau = 0) or its tau-deformation.

    ``a`` is the vertex of the outer contour C_{a,3pi/4}, ``b`` the vertex
    of the inner rays, ``d`` the detour half-width near the vertex.
    Unset contour parameters get defaults inside (max a-vector, min alpha).
    """

    spec: ModelSpec
    log_u: float
    tau: float = 0.0
    a: float | None = None
    b: float | None = None
    d: float | None = None
    require_n9: bool = True
    _a_groups: tuple = field(init=False, repr=False, compare=False)
    _alpha_groups: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        lo, hi = float(np.max(self.spec.a)), float(np.min(self.spec.alpha))
        if self.require_n9 and self.spec.N_total < 9:
            raise HypothesisError("the finite-size identity is established for N >= 9 (pass require_n9=False to probe)")
        if not math.isfinite(self.log_u):
            raise DomainError("log_u must be finite")
        if self.tau < 0:
            raise DomainError("tau must be nonnegative")
        gap = hi - lo
        a = lo + gap / 3 if self.a is None else float(self.a)
        b = lo + 2 * gap / 3 if self.b is None else float(self.b)
        if not hi > b > a > lo:
            raise HypothesisError(f"need min(alpha) > b > a > max(a): {hi} > {b} > {a} > {lo}")
        d = min(0.125, (b - a) / 8) if self.d is None else float(self.d)
        if not 0 < d < min(0.25, (b - a) / 4):
            raise HypothesisError(f"need 0 < d < min(1/4, (b-a)/4), got d = {d}")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "_a_groups", _grouped(self.spec.a))
        object.__setattr__(self, "_alpha_groups", _grouped(self.spec.alpha))

    @classmethod
    def from_scaling(cls, spec: ModelSpec, x: float, shape: ModelShape, constants: ScalingConstants,
                     tau: float = 0.0, **kw) -> "FiniteKernelSpec":
        """u = exp(W - M^{1/3} sigma x); contour vertices bracket z_c when possible."""
        log_u = constants.log_u(x)
        if "a" not in kw and "b" not in kw:
            lo, hi = float(np.max(spec.a)), float(np.min(spec.alpha))
            zc = constants.z_c if lo < constants.z_c < hi else 0.5 * (lo + hi)
            scale = shape.M ** (-1 / 3) / constants.sigma
            kw["a"] = zc - min(scale, (zc - lo) / 2)
            kw["b"] = zc + min(scale, (hi - zc) / 2)
        return cls(spec, log_u, tau, **kw)

    def phi(self, z):
        """sum_n log Gamma(z - a_n) - sum_m log Gamma(alpha_m - z)."""
        z = np.asarray(z, dtype=complex)
        out = np.zeros(z.shape, dtype=complex)
        for val, cnt in zip(*self._a_groups):
            out += cnt * sf.log_gamma(z - val)
        for val, cnt in zip(*self._alpha_groups):
            out -= cnt * sf.log_gamma(val - z)
        return out

    def detour_width(self, v: complex, adaptive: bool = True) -> float:
        if not adaptive:
            return self.d
        # wider detours are equivalent by Cauchy and decay faster along the outer contour
        grown = (self.b - self.a) / 6 + abs(complex(v).imag) / 3
        return max(self.d, min(MAX_ADAPTIVE_D, grown))


def active_breaks(contour, logmag, spacing: float, drop: float = 46.0, max_radius: float = 1e4) -> list:
    """Panels of width <= spacing on every piece, keeping only those where the
    integrand log-magnitude comes within ``drop`` of its peak.

    Rays are sampled outwards until the integrand has fallen ``drop`` below
    the peak seen so far.
    """
    samples = []
    for p in contour.pieces:
        if isinstance(p, Segment):
            n = max(1, math.ceil(p.length / spacing))
            t = np.linspace(0.0, p.length, n + 1)
            samples.append([t, logmag(p.point(t))])
        else:
            samples.append(None)
    peak = max((np.max(lm) for s in samples if s is not None for lm in [s[1]]), default=-np.inf)
    for k, p in enumerate(contour.pieces):
        if samples[k] is not None:
            continue
        t = np.arange(0.0, 16.0 + spacing / 2, spacing)
        lm = logmag(p.point(t))
        while True:
            peak = max(peak, np.max(lm))
            if lm[-1] < peak - drop and np.max(lm[-max(2, int(1 / spacing)):]) < peak - drop:
                break
            if t[-1] * 2 > max_radius:
                raise ConvergenceError("inner ray truncation did not converge")
            ext = np.arange(t[-1] + spacing, 2 * t[-1] + spacing / 2, spacing)
            t = np.concatenate([t, ext])
            lm = np.concatenate([lm, logmag(p.point(ext))])
        samples[k] = [t, lm]
    out = []
    for t, lm in samples:
        lm = np.where(np.isfinite(lm), lm, np.inf)
        keep = np.maximum(lm[:-1], lm[1:]) > peak - drop
        # keep one neighbour on each side of active panels
        keep = keep | np.r_[keep[1:], False] | np.r_[False, keep[:-1]]
        out.append(np.column_stack([t[:-1][keep], t[1:][keep]]))
    return out


def finite_inner_grid(v: complex, ks: FiniteKernelSpec, quad: KernelQuad = DEFAULT_QUAD,
                      d: float | None = None) -> tuple[QuadratureGrid, np.ndarray]:
    """Inner grid on D_v and the integrand values without the 1/(w - v') factor."""
    v = complex(v)
    d = ks.detour_width(v, quad.adaptive_detour) if d is None else d
    contour = build_detour_contour(v, complex(ks.b), INNER_ANGLE, d)
    phi_v = ks.phi(v)

    def exponent(w):
        e = phi_v - ks.phi(w) + (w - v) * ks.log_u
        if ks.tau:
            e = e + 0.5 * ks.tau * (w * w - v * v)
        return e

    def logmag(w):
        return exponent(w).real + np.log(np.abs(sf.recip_sin_pi(v - w)))

    drop = -math.log(quad.tail_tolerance) + 9.0
    breaks = active_breaks(contour, logmag, min(d, quad.h_max), drop, quad.max_radius)
    grid = grid_from_breaks(contour, breaks, quad.panel_order)
    w = grid.nodes
    with np.errstate(over="ignore", under="ignore"):
        f = np.exp(exponent(w)) * sf.recip_sin_pi(v - w) * grid.weights
    if not np.all(np.isfinite(f)):
        raise ConvergenceError("inner integrand overflow; move the contour vertices")
    return grid, f


@numba.njit(cache=True, nogil=True, fastmath=False)
def _cauchy_sum(f, w, vp):
    """out[j] = sum_k f[k] / (w[k] - vp[j]); also returns min |w[k] - vp[j]|."""
    fr, fi = f.real.copy(), f.imag.copy()
    wr, wi = w.real.copy(), w.imag.copy()
    out = np.zeros(vp.size, dtype=np.complex128)
    closest = np.inf
    for j in range(vp.size):
        pr, pi = vp[j].real, vp[j].imag
        sr = 0.0
        si = 0.0
        for k in range(w.size):
            dr = wr[k] - pr
            di = wi[k] - pi
            n2 = dr * dr + di * di
            closest = min(closest, n2)
            # f / d = f conj(d) / |d|^2
            sr += (fr[k] * dr + fi[k] * di) / n2
            si += (fi[k] * dr - fr[k] * di) / n2
        out[j] = complex(sr, si)
    return out, math.sqrt(closest)


def finite_kernel_row(v: complex, v_primes, ks: FiniteKernelSpec, quad: KernelQuad = DEFAULT_QUAD,
                      d: float | None = None) -> np.ndarray:
    """K(v, v'_j) for all j."""
    v_primes = np.atleast_1d(np.asarray(v_primes, dtype=complex))
    grid, f = finite_inner_grid(v, ks, quad, d)
    out, closest = _cauchy_sum(f, grid.nodes, v_primes)
    if closest < sf.POLE_TOL:
        raise PoleError("outer point lies on the inner contour")
    return out


def finite_kernel(v: complex, v_prime: complex, ks: FiniteKernelSpec, quad: KernelQuad = DEFAULT_QUAD,
                  d: float | None = None) -> complex:
    """(1/2 pi i) int_{D_v} pi/sin(pi(v-w)) prod Gamma ratios u^{w-v} e^{tau(w^2-v^2)/2} dw / (w - v')."""
    return complex(finite_kernel_row(v, [v_prime], ks, quad, d)[0])


def finite_kernel_direct(v: complex, v_prime: complex, ks: FiniteKernelSpec, quad: KernelQuad = DEFAULT_QUAD) -> complex:
    """Same integral with the Gamma products multiplied out (small M, N only).

    Shares the inner nodes with ``finite_kernel`` but evaluates the
    integrand independently.
    """
    from scipy.special import gamma

    v = complex(v)
    grid, _ = finite_inner_grid(v, ks, quad)
    w = grid.nodes
    prod = np.ones(w.shape, dtype=complex)
    for an in ks.spec.a:
        prod *= gamma(v - an) / gamma(w - an)
    for am in ks.spec.alpha:
        prod *= gamma(am - w) / gamma(am - v)
    u = math.exp(ks.log_u)
    with np.errstate(over="ignore", invalid="ignore"):
        vals = np.pi / np.sin(np.pi * (v - w)) * prod * u ** (w - v) * np.exp(0.5 * ks.tau * (w * w - v * v))
    vals = np.where(np.isfinite(vals), vals, 0.0)
    return complex(np.sum(grid.weights * vals / (w - v_prime)))


# legacy s-variable form ---------------------------------------------------


@dataclass(frozen=True)
class LegacyKernelSpec:
    spec: ModelSpec
    log_u: float
    tau: float
    phi: float = math.pi / 6
    d: float = 0.25

    def __post_init__(self):
        gap = float(np.min(self.spec.alpha) - np.max(self.spec.a))
        if not gap > 1:
            raise HypothesisError(f"legacy kernel needs min(alpha) - max(a) > 1, got {gap}")
        if not self.tau > 0:
            raise HypothesisError("legacy kernel needs tau > 0")

    @property
    def centres(self) -> tuple[float, float]:
        return legacy_centres(self.spec.a, self.spec.alpha)


def legacy_kernel_row(v: complex, v_primes, ls: LegacyKernelSpec, quad: KernelQuad = DEFAULT_QUAD) -> np.ndarray:
    """(1/2 pi i) int Gamma(-s)Gamma(1+s) prod Gamma ratios u^s e^{v tau s + tau s^2/2} ds / (v + s - v')."""
    v = complex(v)
    v_primes = np.atleast_1d(np.asarray(v_primes, dtype=complex))
    _, eta = ls.centres
    contour = build_legacy_inner(v, eta, ls.d)
    radius = math.sqrt(2 * 40 / ls.tau) + 4.0
    grid = discretize(contour, quad.panel_order, h_max=quad.h_max, radius=radius)
    s = grid.nodes
    expo = sf.log_gamma(-s) + sf.log_gamma(1 + s)
    for an in ls.spec.a:
        expo = expo + sf.log_gamma(v - an) - sf.log_gamma(s + v - an)
    for am in ls.spec.alpha:
        expo = expo + sf.log_gamma(am - v - s) - sf.log_gamma(am - v)
    expo = expo + s * ls.log_u + v * ls.tau * s + 0.5 * ls.tau * s * s
    with np.errstate(under="ignore"):
        f = np.exp(expo) * grid.weights
    return f @ (1.0 / (v + s[:, None] - v_primes[None, :]))


def legacy_kernel(v: complex, v_prime: complex, ls: LegacyKernelSpec, quad: KernelQuad = DEFAULT_QUAD) -> complex:
    return complex(legacy_kernel_row(v, [v_prime], ls, quad)[0])


# limit kernel --------------------------------------------------------------


@dataclass(frozen=True)
class LimitKernelSpec:
    """BBP kernel with parameter sets x (length r) and y (length c).

    form "rays": outer C_{a,3pi/4}, inner C_{b,pi/4}.
    form "dtilde": outer C_{mu,3pi/4}, inner D-tilde(mu, rho).
    """

    x_vec: tuple = ()
    y_vec: tuple = ()
    r_param: float = 0.0
    form: str = "rays"
    a: float | None = None
    b: float | None = None
    mu: float | None = None
    rho: float | None = None

    def __post_init__(self):
        x = tuple(float(t) for t in self.x_vec)
        y = tuple(float(t) for t in self.y_vec)
        object.__setattr__(self, "x_vec", x)
        object.__setattr__(self, "y_vec", y)
        if x and y and not min(y) > max(x):
            raise DomainError("need min(y) > max(x)")
        if self.form not in ("rays", "dtilde"):
            raise DomainError("form must be 'rays' or 'dtilde'")
        lo = max(x) if x else -math.inf
        hi = min(y) if y else math.inf
        if self.form == "rays":
            a, b = self.a, self.b
            if a is None or b is None:
                if x and y:
                    da, db = lo + (hi - lo) / 3, lo + 2 * (hi - lo) / 3
                elif x:
                    da, db = lo + 0.5, lo + 1.0
                elif y:
                    da, db = hi - 1.0, hi - 0.5
                else:
                    da, db = -0.5, 0.5
                a = da if a is None else a
                b = db if b is None else b
            if not hi > b > a > lo:
                raise DomainError(f"need min(y) > b > a > max(x): {hi} > {b} > {a} > {lo}")
            object.__setattr__(self, "a", float(a))
            object.__setattr__(self, "b", float(b))
        else:
            mu = self.mu
            if mu is None:
                if not x and not y:
                    mu = 0.0
                elif not y:
                    mu = lo + 1.0
                elif not x:
                    mu = hi - 1.0
                else:
                    mu = 0.5 * (lo + hi)
            rho = self.rho
            if rho is None:
                rho = 1.0 if not y else min(1.0, (hi - mu) / 2)
            if not rho > 0:
                raise DomainError("rho must be positive")
            if not (mu > lo and hi > mu + rho):
                raise DomainError("need max(x) < mu and min(y) > mu + rho")
            object.__setattr__(self, "mu", float(mu))
            object.__setattr__(self, "rho", float(rho))

    def outer_contour(self):
        vertex = self.a if self.form == "rays" else self.mu
        return build_ray_contour(vertex, OUTER_ANGLE)

    def inner_contour(self):
        if self.form == "rays":
            return build_ray_contour(self.b, INNER_ANGLE)
        return build_limit_contour(self.mu, self.rho)

    def log_v_factor(self, v):
        """log of prod (y_m - v)/prod (v - x_n) * exp(-v^3/3 + r v)."""
        v = np.asarray(v, dtype=complex)
        out = -v**3 / 3 + self.r_param * v
        for xn in self.x_vec:
            out = out - np.log(v - xn)
        for ym in self.y_vec:
            out = out + np.log(ym - v)
        return out

    def log_w_factor(self, w):
        w = np.asarray(w, dtype=complex)
        out = w**3 / 3 - self.r_param * w
        for xn in self.x_vec:
            out = out + np.log(w - xn)
        for ym in self.y_vec:
            out = out - np.log(ym - w)
        return out


def cubic_radius(ls: LimitKernelSpec, tail_tolerance: float) -> float:
    """Ray length after which |exp(+-z^3/3 -+ r z)| stays below tail_tolerance times its anchor value."""
    target = -math.log(tail_tolerance)
    shift = abs(ls.a if ls.form == "rays" else ls.mu) + (0 if ls.form == "rays" else 2 * ls.rho)
    t = 1.0
    while t**3 / (3 * math.sqrt(2)) - abs(ls.r_param) * t - 2 * shift * t * t < target:
        t *= 1.1
    return t


def limit_inner_grid(ls: LimitKernelSpec, quad: KernelQuad = DEFAULT_QUAD) -> QuadratureGrid:
    return discretize(ls.inner_contour(), quad.panel_order, h_max=quad.h_max,
                      radius=cubic_radius(ls, quad.tail_tolerance))


def limit_kernel_matrix(v, v_primes, ls: LimitKernelSpec, quad: KernelQuad = DEFAULT_QUAD,
                        inner: QuadratureGrid | None = None) -> np.ndarray:
    """K(v_i, v'_j) = sum_k F(v_i) G(w_k) omega_k / ((v_i - w_k)(w_k - v'_j))."""
    v = np.atleast_1d(np.asarray(v, dtype=complex))
    vp = np.atleast_1d(np.asarray(v_primes, dtype=complex))
    g = limit_inner_grid(ls, quad) if inner is None else inner
    w = g.nodes
    with np.errstate(under="ignore"):
        Fv = np.exp(ls.log_v_factor(v))
        Gw = np.exp(ls.log_w_factor(w)) * g.weights
    left = Fv[:, None] / (v[:, None] - w[None, :])
    right = Gw[:, None] / (w[:, None] - vp[None, :])
    return left @ right


def limit_kernel(v: complex, v_prime: complex, ls: LimitKernelSpec, quad: KernelQuad = DEFAULT_QUAD) -> complex:
    """(1/2 pi i) int prod (w-x)/(v-x) prod (y-v)/(y-w) e^{-v^3/3 + w^3/3 - r w + r v} dw / ((v-w)(w-v'))."""
    return complex(limit_kernel_matrix([v], [v_prime], ls, quad)[0, 0])
