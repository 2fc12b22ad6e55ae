"""Nystrom evaluation of Fredholm determinants and the distribution
functions built from them."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .contour import QuadratureGrid, build_legacy_outer, build_ray_contour, discretize
from .errors import ConvergenceError, DomainError, ImaginaryResidualError
from .kernels import (
    DEFAULT_QUAD,
    OUTER_ANGLE,
    FiniteKernelSpec,
    cubic_radius,
    KernelQuad,
    LegacyKernelSpec,
    LimitKernelSpec,
    finite_kernel_row,
    legacy_kernel_row,
    limit_inner_grid,
    limit_kernel_matrix,
)
from .polymer import BBPLayout, ModelSpec, build_bbp_spec
from .scaling import ModelShape, ScalingConstants

IMAG_TOL = 1e-6


@dataclass(frozen=True)
class DetResult:
    value: complex
    grid_sizes: tuple[int, int]
    est_error: float
    metadata: dict = field(default_factory=dict)


@dataclass(frozen=True)
class OuterQuad:
    """Outer-contour discretisation for the determinants."""

    panel_order: int = 16
    refine_order: int = 8
    h_max: float = 0.5
    tail_tolerance: float = 1e-14
    kernel_tolerance: float = 1e-12
    inner: KernelQuad = DEFAULT_QUAD

    def __post_init__(self):
        if not 4 <= self.panel_order <= 64 or not 0 <= self.refine_order <= 64 - self.panel_order:
            raise DomainError("panel orders must lie in [4, 64]")


DEFAULT_OUTER = OuterQuad()


def det_i_plus(A: np.ndarray) -> complex:
    """det(I + A) by partial-pivot LU."""
    n = A.shape[0]
    if n == 0:
        return 1.0 + 0j
    lu, piv = linalg.lu_factor(np.eye(n) + A, check_finite=True)
    diag = np.diag(lu)
    if np.any(diag == 0):
        raise ConvergenceError("singular LU factorisation in the Fredholm determinant")
    sign = -1.0 if np.count_nonzero(piv != np.arange(n)) % 2 else 1.0
    return complex(sign * np.prod(diag))


def nystrom_matrix(kernel, grid: QuadratureGrid) -> np.ndarray:
    """A_ij = K(v_i, v_j) w_j for a matrix-valued kernel(v, v')."""
    K = np.asarray(kernel(grid.nodes, grid.nodes), dtype=complex)
    if not np.all(np.isfinite(K)):
        raise ConvergenceError("kernel is not finite on the grid")
    return K * grid.weights[None, :]


def fredholm_det(kernel, grid: QuadratureGrid, fine_grid: QuadratureGrid | None = None,
                 metadata: dict | None = None) -> DetResult:
    """det(I + K) on the grid, with est_error from a refined grid.

    ``kernel(v, v')`` takes node arrays and returns the kernel matrix.  When
    ``fine_grid`` is omitted the grid is refined by raising its panel order.
    """
    if fine_grid is None:
        fine_grid = grid.refined()
    coarse = det_i_plus(nystrom_matrix(kernel, grid))
    fine = det_i_plus(nystrom_matrix(kernel, fine_grid))
    return DetResult(fine, (len(grid), len(fine_grid)), abs(fine - coarse), dict(metadata or {}))


def real_value(res: DetResult, tol: float = IMAG_TOL) -> float:
    if abs(res.value.imag) > tol:
        raise ImaginaryResidualError(f"determinant has imaginary part {res.value.imag:.3e}")
    return float(res.value.real)


# limit distributions --------------------------------------------------------


def _limit_det(ls: LimitKernelSpec, quad: OuterQuad) -> DetResult:
    inner_c = limit_inner_grid(ls, quad.inner)
    inner_f = limit_inner_grid(ls, KernelQuad(min(64, quad.inner.panel_order + quad.refine_order),
                                              quad.inner.h_max, quad.inner.tail_tolerance))
    outer = discretize(ls.outer_contour(), quad.panel_order, h_max=quad.h_max,
                       radius=cubic_radius(ls, quad.tail_tolerance))
    outer_f = outer.refined(quad.refine_order)
    coarse = det_i_plus(nystrom_matrix(lambda v, vp: limit_kernel_matrix(v, vp, ls, quad.inner, inner_c), outer))
    fine = det_i_plus(nystrom_matrix(lambda v, vp: limit_kernel_matrix(v, vp, ls, quad.inner, inner_f), outer_f))
    meta = {"kernel": "limit", "form": ls.form, "a": ls.a, "b": ls.b, "mu": ls.mu, "rho": ls.rho,
            "x": list(ls.x_vec), "y": list(ls.y_vec), "r": ls.r_param}
    return DetResult(fine, (len(outer), len(outer_f)), abs(fine - coarse), meta)


def f_bbp_result(x_vec, y_vec, r: float, quad: OuterQuad = DEFAULT_OUTER, **contour) -> DetResult:
    return _limit_det(LimitKernelSpec(tuple(x_vec), tuple(y_vec), float(r), **contour), quad)


def f_bbp(x_vec, y_vec, r: float, quad: OuterQuad = DEFAULT_OUTER, **contour) -> float:
    """BBP distribution with parameter sets x (r of them) and y (c of them)."""
    return real_value(f_bbp_result(x_vec, y_vec, r, quad, **contour))


def f_gue(r: float, quad: OuterQuad = DEFAULT_OUTER) -> float:
    """GUE Tracy-Widom distribution function."""
    return f_bbp((), (), r, quad)


# finite-size Laplace transform ---------------------------------------------


def envelope_radius(row, vertex: float, angle: float, threshold: float, start: float = 0.5,
                    growth: float = 1.5, cap: float = 1e5) -> float:
    """Distance along the rays vertex + t e^{+-i angle} where |K(v, v)| < threshold."""
    t, below = start, 0
    while True:
        mags = [abs(row(v, np.array([v]))[0]) for v in (vertex + t * np.exp(1j * angle), vertex + t * np.exp(-1j * angle))]
        below = below + 1 if max(mags) < threshold else 0
        if below == 2:
            return t
        t *= growth
        if t > cap:
            raise ConvergenceError("outer kernel envelope did not decay below threshold")


def finite_outer_grid(ks: FiniteKernelSpec, quad: OuterQuad = DEFAULT_OUTER) -> QuadratureGrid:
    """Graded grid on C_{a,3pi/4} truncated where the kernel falls below threshold."""
    lo = float(np.max(ks.spec.a))
    scale = min(quad.h_max, 0.5 * (ks.a - lo), 0.5 * (ks.b - ks.a) + 0.25 * ks.d)
    threshold = quad.kernel_tolerance * ks.spec.M_total ** (1 / 3)
    R = envelope_radius(lambda v, vp: finite_kernel_row(v, vp, ks, quad.inner), ks.a, OUTER_ANGLE, threshold,
                        start=max(scale, 0.25))
    return discretize(build_ray_contour(ks.a, OUTER_ANGLE), quad.panel_order, radius=R,
                      h_max=scale, h_min=scale / 4, geometric_after=max(1.0, 8 * scale))


def _finite_kernel_matrix(ks: FiniteKernelSpec, quad: KernelQuad):
    def kernel(v, vp):
        return np.vstack([finite_kernel_row(vi, vp, ks, quad) for vi in v])

    return kernel


def finite_laplace_ks(ks: FiniteKernelSpec, quad: OuterQuad = DEFAULT_OUTER) -> DetResult:
    grid = finite_outer_grid(ks, quad)
    fine = grid.refined(quad.refine_order)
    meta = {"kernel": "finite", "a": ks.a, "b": ks.b, "d": ks.d, "tau": ks.tau, "log_u": ks.log_u,
            "truncation_radius": grid.truncation_radius}
    return fredholm_det(_finite_kernel_matrix(ks, quad.inner), grid, fine, meta)


def finite_laplace(u: float, spec: ModelSpec, quad: OuterQuad = DEFAULT_OUTER, *, log_u: float | None = None,
                   tau: float = 0.0, allow_small_n: bool = False, **contour) -> DetResult:
    """det(I + K_u) = E[exp(-u Z)] (tau = 0); pass ``log_u`` for huge or tiny u."""
    if log_u is None:
        if not u > 0:
            raise DomainError("u must be positive")
        log_u = math.log(u)
    if allow_small_n and spec.N_total < 9:
        warnings.warn("finite-size identity evaluated with N < 9; it is only established for N >= 9", stacklevel=2)
    ks = FiniteKernelSpec(spec, log_u, tau, require_n9=not allow_small_n, **contour)
    return finite_laplace_ks(ks, quad)


@dataclass(frozen=True)
class FiniteCDF:
    value: float
    lower: float
    upper: float
    est_error: float


def finite_cdf(y: float, shape: ModelShape, constants: ScalingConstants, layout: BBPLayout | None = None,
               quad: OuterQuad = DEFAULT_OUTER, bracket: bool = True, **kw) -> FiniteCDF:
    """E[exp(-e^{sigma M^{1/3} (F - y)})] with a y -+ M^{-1/3} bracketing pair."""
    layout = layout or BBPLayout()
    spec = build_bbp_spec(shape, layout, constants)

    def one(yy):
        ks = FiniteKernelSpec.from_scaling(spec, yy, shape, constants, **kw)
        res = finite_laplace_ks(ks, quad)
        return real_value(res), res.est_error

    val, err = one(y)
    if not bracket:
        return FiniteCDF(val, val, val, err)
    off = shape.M ** (-1 / 3)
    lo, _ = one(y - off)
    hi, _ = one(y + off)
    return FiniteCDF(val, lo, hi, err)


# legacy formula ---------------------------------------------------------------


def legacy_laplace(u: float, spec: ModelSpec, tau: float, quad: OuterQuad = DEFAULT_OUTER, *,
                   log_u: float | None = None) -> DetResult:
    """Determinant of the s-variable kernel on the legacy contours."""
    if log_u is None:
        log_u = math.log(u)
    ls = LegacyKernelSpec(spec, log_u, tau)
    outer = build_legacy_outer(spec.a, spec.alpha, ls.phi)
    mu, _ = ls.centres
    threshold = quad.kernel_tolerance * spec.M_total ** (1 / 3)
    R = envelope_radius(lambda v, vp: legacy_kernel_row(v, vp, ls, quad.inner), mu, math.pi - ls.phi, threshold)
    grid = discretize(outer, quad.panel_order, radius=R, h_max=quad.h_max)
    fine = grid.refined(quad.refine_order)

    def kernel(v, vp):
        return np.vstack([legacy_kernel_row(vi, vp, ls, quad.inner) for vi in v])

    meta = {"kernel": "legacy", "tau": tau, "log_u": log_u}
    return fredholm_det(kernel, grid, fine, meta)
