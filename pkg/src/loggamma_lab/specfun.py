"""Complex special functions: log-gamma, digamma, polygamma sums, pi/sin(pi s).

Every function accepts a scalar or an array of complex (or real) arguments
and is vectorised over it.  Scalars in, Python ``complex`` out; arrays in,
``complex128`` arrays out.  Non-finite results never escape: poles raise
:class:`PoleError` and unrepresentable results raise
:class:`NumericOverflowError`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .errors import ConvergenceError, DomainError, NumericOverflowError, PoleError

POLE_TOL = 1e-8
EULER_GAMMA = 0.57721566490153286061
LOG_PI = math.log(math.pi)
HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)

# arguments are shifted by upward recurrence until |z| >= this before the
# asymptotic expansions are used
_ASYMPTOTIC_RADIUS = 12.0

# B_{2k} / (2k (2k-1)), k = 1..10
_STIRLING = (
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360360.0,
    1.0 / 156.0,
    -3617.0 / 122400.0,
    43867.0 / 244188.0,
    -174611.0 / 125400.0,
)

# B_{2k} / (2k), k = 1..7
_DIGAMMA_ASYM = (
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
)

# Bernoulli numbers B_2, B_4, ..., B_16
_BERNOULLI_EVEN = (
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
)


@dataclass(frozen=True)
class SeriesTruncation:
    """Controls the partial sums of the polygamma-type series."""

    max_terms: int = 1_000_000
    tail_tolerance: float = 1e-15

    def __post_init__(self):
        if self.max_terms < 1:
            raise DomainError(f"max_terms must be >= 1, got {self.max_terms}")
        if not self.tail_tolerance > 0:
            raise DomainError(f"tail_tolerance must be > 0, got {self.tail_tolerance}")


DEFAULT_TRUNCATION = SeriesTruncation()


def _prep(z):
    arr = np.asarray(z, dtype=complex)
    return np.atleast_1d(arr), arr.ndim == 0


def _finish(out, scalar, what):
    if not np.all(np.isfinite(out)):
        raise NumericOverflowError(f"{what}: result not representable in double precision")
    return complex(out[0]) if scalar else out


def _check_nonpositive_integers(z, what):
    nearest = np.round(z.real)
    bad = (nearest <= 0) & (np.abs(z - nearest) < POLE_TOL)
    if np.any(bad):
        raise PoleError(f"{what}: argument {complex(z[bad][0])} is at a pole (nonpositive integer)")


def log_sin_pi(z):
    """log(sin(pi z)) without overflow for large |Im z|.

    The real part is log|sin(pi z)|; the imaginary part is some continuous
    determination of the argument, correct modulo 2*pi.
    """
    z, scalar = _prep(z)
    upper = z.imag >= 0
    zz = np.where(upper, z, np.conj(z))
    # sin(pi z) = (i/2) e^{-i pi z} (1 - e^{2 i pi z}),  |e^{2 i pi z}| <= 1
    val = -1j * np.pi * zz + np.log1p(-np.exp(2j * np.pi * zz)) + (0.5j * np.pi - math.log(2.0))
    out = np.where(upper, val, np.conj(val))
    return complex(out[0]) if scalar else out


_STIRLING_ARR = np.array(_STIRLING[::-1])


@numba.njit(cache=True, nogil=True, error_model="numpy")
def _log_gamma_right_nb(z, coeffs, radius, half_log_2pi):
    out = np.empty_like(z)
    for i in range(z.size):
        zz = z[i]
        acc = 0j
        if abs(zz) < radius:
            for _ in range(int(math.ceil(radius - zz.real))):
                acc += np.log(zz)
                zz += 1.0
        inv = 1.0 / zz
        inv2 = inv * inv
        series = 0j
        for c in coeffs:
            series = series * inv2 + c
        out[i] = (zz - 0.5) * np.log(zz) - zz + half_log_2pi + series * inv - acc
    return out


def _log_gamma_right(z):
    """Principal log-gamma for Re z >= 1/2 (shift + Stirling)."""
    return _log_gamma_right_nb(np.ascontiguousarray(z, dtype=np.complex128), _STIRLING_ARR,
                               _ASYMPTOTIC_RADIUS, HALF_LOG_2PI)


def log_gamma(z):
    """Principal-branch log Gamma(z).

    Real on the positive axis.  Satisfies logGamma(z+1) = logGamma(z) + log z
    modulo 2*pi*i.  Left of Re z = 1/2 the reflection formula is used, so the
    imaginary part there is only defined modulo 2*pi.
    """
    z, scalar = _prep(z)
    _check_nonpositive_integers(z, "log_gamma")
    out = np.empty_like(z)
    left = z.real < 0.5
    if np.any(left):
        zl = z[left]
        out[left] = LOG_PI - log_sin_pi(zl) - _log_gamma_right(1.0 - zl)
    if not np.all(left):
        out[~left] = _log_gamma_right(z[~left])
    return _finish(out, scalar, "log_gamma")


def _pi_cot_pi(z):
    upper = z.imag >= 0
    zz = np.where(upper, z, np.conj(z))
    q = np.exp(2j * np.pi * zz)
    val = -1j * np.pi * (1.0 + q) / (1.0 - q)
    return np.where(upper, val, np.conj(val))


def _digamma_right(z):
    acc = np.zeros_like(z)
    zz = z.copy()
    need = np.abs(zz) < _ASYMPTOTIC_RADIUS
    shifts = np.where(need, np.ceil(_ASYMPTOTIC_RADIUS - zz.real), 0).astype(int)
    for k in range(int(shifts.max(initial=0))):
        m = shifts > k
        acc[m] += 1.0 / zz[m]
        zz[m] += 1.0
    inv2 = 1.0 / (zz * zz)
    series = np.zeros_like(zz)
    for c in reversed(_DIGAMMA_ASYM):
        series = series * inv2 + c
    series *= inv2
    return np.log(zz) - 0.5 / zz - series - acc


def digamma(z):
    """Digamma Psi(z) = Gamma'(z)/Gamma(z)."""
    z, scalar = _prep(z)
    _check_nonpositive_integers(z, "digamma")
    out = np.empty_like(z)
    left = z.real < 0.5
    if np.any(left):
        zl = z[left]
        out[left] = _digamma_right(1.0 - zl) - _pi_cot_pi(zl)
    if not np.all(left):
        out[~left] = _digamma_right(z[~left])
    return _finish(out, scalar, "digamma")


def _rising(k, m):
    out = 1.0
    for i in range(m):
        out *= k + i
    return out


def polygamma_sum(k, z, trunc: SeriesTruncation = DEFAULT_TRUNCATION):
    """Hurwitz-type sum S_k(z) = sum_{n>=0} (n+z)^{-k} for k in {2, 3}.

    Explicit terms up to a cut K, then the Euler-Maclaurin tail: the integral
    from K to infinity, the half-term at K and Bernoulli corrections.  K is
    the smallest cut for which the first omitted correction is below
    ``trunc.tail_tolerance``.
    """
    if k not in (2, 3):
        raise DomainError(f"polygamma_sum supports k in {{2, 3}}, got {k}")
    z, scalar = _prep(z)
    _check_nonpositive_integers(z, "polygamma_sum")
    n_corr = 6
    bound_coef = abs(_BERNOULLI_EVEN[n_corr]) / math.factorial(2 * n_corr + 2) * _rising(k, 2 * n_corr + 1)
    power = k + 2 * n_corr + 1
    # need bound_coef * (K + Re z)^-power <= tol
    k_needed = (bound_coef / trunc.tail_tolerance) ** (1.0 / power)
    shift = max(0.0, -float(np.min(z.real)))
    cut = int(math.ceil(max(k_needed, 4.0) + shift + 1.0))
    if cut > trunc.max_terms:
        raise ConvergenceError(
            f"polygamma_sum needs {cut} explicit terms, max_terms={trunc.max_terms}"
        )
    out = np.zeros_like(z)
    for n in range(cut):
        out += (n + z) ** (-k)
    t = cut + z
    out += t ** (1 - k) / (k - 1) + 0.5 * t ** (-k)
    # - sum_j B_{2j}/(2j)! f^{(2j-1)}(K),  f^{(m)} = (-1)^m (k)_m t^{-k-m}
    for j in range(1, n_corr + 1):
        m = 2 * j - 1
        coef = _BERNOULLI_EVEN[j - 1] / math.factorial(2 * j) * _rising(k, m)
        out += coef * t ** (-k - m)
    return _finish(out, scalar, "polygamma_sum")


def recip_sin_pi(s):
    """pi / sin(pi s), with the e^{-pi |Im s|} factor handled analytically."""
    s, scalar = _prep(s)
    nearest = np.round(s.real)
    if np.any(np.abs(s - nearest) < POLE_TOL):
        raise PoleError("recip_sin_pi: argument within pole tolerance of an integer")
    upper = s.imag >= 0
    ss = np.where(upper, s, np.conj(s))
    # Im s >= 0:  pi/sin(pi s) = -2 pi i e^{i pi s} / (1 - e^{2 i pi s})
    val = -2j * np.pi * np.exp(1j * np.pi * ss) / (1.0 - np.exp(2j * np.pi * ss))
    out = np.where(upper, val, np.conj(val))
    return _finish(out, scalar, "recip_sin_pi")


def distance_to_integers(s):
    s = np.asarray(s, dtype=complex)
    return np.abs(s - np.round(s.real))


def sine_bound_constant(s):
    """Smallest C with |pi/sin(pi s)| <= C / dist(s, Z) over the sample ``s``."""
    s = np.asarray(s, dtype=complex)
    return float(np.max(np.abs(recip_sin_pi(s)) * distance_to_integers(s)))
