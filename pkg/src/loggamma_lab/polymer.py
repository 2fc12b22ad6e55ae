"""Sampling the log-gamma polymer and its partition function.

Weights live in an array ``w[i, j]`` with ``i`` the column (0..M-1) and ``j``
the row (0..N-1); the weight at (i, j) is inverse-gamma with shape
``alpha[i] - a[j]``.  Z is the sum over up-right paths from (0, 0) to
(M-1, N-1) of the product of the weights along the path.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations

import numba
import numpy as np

from .errors import DomainError, HypothesisError
from .scaling import ModelShape, ScalingConstants

MAX_ENUMERATED_PATHS = 1_000_000
# target number of lattice cells drawn per RNG block
_BLOCK_CELLS = 2_000_000
_MAX_BLOCK = 4096


@dataclass(frozen=True)
class ModelSpec:
    a: np.ndarray
    alpha: np.ndarray
    theta: float = field(default=float("nan"))

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.a, dtype=float)).copy()
        alpha = np.atleast_1d(np.asarray(self.alpha, dtype=float)).copy()
        if a.ndim != 1 or alpha.ndim != 1 or a.size == 0 or alpha.size == 0:
            raise DomainError("a and alpha must be nonempty vectors")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(alpha))):
            raise DomainError("parameters must be finite")
        if not alpha.min() - a.max() > 0:
            raise DomainError(
                f"need min(alpha) - max(a) > 0, got {alpha.min() - a.max():.6g}"
            )
        a.flags.writeable = False
        alpha.flags.writeable = False
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "alpha", alpha)
        if math.isnan(self.theta):
            object.__setattr__(self, "theta", float(alpha[-1] - a[-1]))

    @classmethod
    def homogeneous(cls, M: int, N: int, theta: float) -> "ModelSpec":
        return cls(np.zeros(N), np.full(M, float(theta)), float(theta))

    @property
    def M_total(self) -> int:
        return self.alpha.size

    @property
    def N_total(self) -> int:
        return self.a.size

    def shapes(self) -> np.ndarray:
        """Matrix of gamma shapes theta_ij = alpha_i - a_j, indexed [column, row]."""
        return self.alpha[:, None] - self.a[None, :]

    @property
    def is_homogeneous(self) -> bool:
        return bool(np.all(self.a == self.a[0]) and np.all(self.alpha == self.alpha[0]))


@dataclass(frozen=True)
class BBPLayout:
    x: tuple = ()
    y: tuple = ()

    def __post_init__(self):
        x = tuple(float(t) for t in np.atleast_1d(np.asarray(self.x, dtype=float)))
        y = tuple(float(t) for t in np.atleast_1d(np.asarray(self.y, dtype=float)))
        if x and y and not min(y) > max(x):
            raise DomainError(f"need min(y) > max(x), got x={x}, y={y}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def r(self) -> int:
        return len(self.x)

    @property
    def c(self) -> int:
        return len(self.y)


@dataclass
class SampleBatch:
    seed: int
    n_samples: int
    log_Z: np.ndarray
    F: np.ndarray
    M: int
    h: float
    sigma: float

    def __post_init__(self):
        if not (self.log_Z.shape == self.F.shape == (self.n_samples,)):
            raise DomainError("log_Z and F must both have length n_samples")


def _stream(seed: int, index: int, sub: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(index), int(sub)))
    return np.random.Generator(np.random.PCG64(ss))


def resolve_threads(threads: int | None = None) -> int:
    if threads is None:
        env = os.environ.get("LOGGAMMA_THREADS")
        threads = int(env) if env else 1
    if threads < 1:
        raise DomainError(f"threads must be >= 1, got {threads}")
    return threads


def sample_inverse_gamma(theta, rng: np.random.Generator, size=None):
    """Inverse-gamma draws X = 1/G with G ~ Gamma(theta, 1)."""
    th = np.asarray(theta, dtype=float)
    if np.any(~(th > 0)):
        raise DomainError("inverse-gamma shape must be positive")
    return 1.0 / rng.standard_gamma(th, size=size)


def inverse_gamma_logpdf(x, theta: float):
    x = np.asarray(x, dtype=float)
    return -(theta + 1.0) * np.log(x) - 1.0 / x - math.lgamma(theta)


def _draw_gammas(spec: ModelSpec, rng: np.random.Generator, n: int) -> np.ndarray:
    """n gamma matrices of shape (M_total, N_total).

    The bulk is drawn with a scalar shape; rows and columns whose parameter
    differs from the most common value are then overwritten cell-wise.
    """
    a_vals, a_counts = np.unique(spec.a, return_counts=True)
    al_vals, al_counts = np.unique(spec.alpha, return_counts=True)
    a0, al0 = a_vals[np.argmax(a_counts)], al_vals[np.argmax(al_counts)]
    G = rng.standard_gamma(al0 - a0, size=(n, spec.M_total, spec.N_total))
    shapes = spec.shapes()
    rows = np.flatnonzero(spec.a != a0)
    cols = np.flatnonzero(spec.alpha != al0)
    for j in rows:
        G[:, :, j] = rng.standard_gamma(shapes[:, j], size=(n, spec.M_total))
    for i in cols:
        G[:, i, :] = rng.standard_gamma(shapes[i, :], size=(n, spec.N_total))
    return G


@numba.njit(cache=True, nogil=True, error_model="numpy")
def _logz_ratio(G):
    """log Z from gamma draws G (weights 1/G) via neighbour ratios.

    With U(i,j) = Z(i,j)/Z(i,j-1), V(i,j) = Z(i,j)/Z(i-1,j) and
    r = V(i,j-1)/U(i-1,j) one has V(i,j) = w(1+r) and U(i,j) = V(i,j)/r.
    P holds 1/U of the previous column, which keeps divisions off the
    loop-carried dependency chain; the inner loop runs along contiguous
    memory.  Returns nan if any ratio leaves the representable range.
    """
    M, N = G.shape
    P = np.empty(N)
    s = 0.0
    for j in range(N):
        P[j] = G[0, j]
        s -= math.log(G[0, j])
    for i in range(1, M):
        v = 1.0 / G[i, 0]
        for j in range(1, N):
            w = 1.0 / G[i, j]
            r = v * P[j]
            # v <- w (1 + r) written so the chain through v is a single fma
            v = w + v * (P[j] * w)
            P[j] = r / v
        if not (v > 0.0 and v < np.inf):
            return np.nan
        s += math.log(v)
    if not (s > -np.inf and s < np.inf):
        return np.nan
    return s


@numba.njit(cache=True, nogil=True, error_model="numpy")
def _logz_logspace(logw):
    """Reference recursion L(i,j) = log w(i,j) + logaddexp(L(i-1,j), L(i,j-1))."""
    M, N = logw.shape
    L = np.empty(M)
    L[0] = logw[0, 0]
    for i in range(1, M):
        L[i] = L[i - 1] + logw[i, 0]
    for j in range(1, N):
        L[0] += logw[0, j]
        for i in range(1, M):
            x, y = L[i], L[i - 1]
            if x < y:
                x, y = y, x
            L[i] = logw[i, j] + x + math.log1p(math.exp(y - x))
    return L[M - 1]


@numba.njit(cache=True, nogil=True, error_model="numpy")
def _batch_ratio(G, out):
    for k in range(G.shape[0]):
        out[k] = _logz_ratio(G[k])


def log_partition_weights(weights) -> float:
    """log Z for a given positive weight matrix (log-space recursion)."""
    w = np.asarray(weights, dtype=float)
    if w.ndim != 2 or np.any(~(w > 0)):
        raise DomainError("weights must be a 2-D array of positive numbers")
    return float(_logz_logspace(np.log(w)))


def log_partition_gammas(G) -> float:
    """log Z for weights 1/G using the fast ratio recursion, log-space fallback."""
    G = np.ascontiguousarray(G, dtype=float)
    val = _logz_ratio(G)
    if math.isnan(val):
        val = _logz_logspace(-np.log(G))
    return float(val)


def log_partition(spec: ModelSpec, rng: np.random.Generator) -> float:
    """Draw one weight matrix and return log Z via the log-space recursion."""
    G = _draw_gammas(spec, rng, 1)[0]
    return float(_logz_logspace(-np.log(G)))


def path_count(M: int, N: int) -> int:
    return math.comb(M + N - 2, M - 1)


def enumerate_paths(M: int, N: int, weights) -> float:
    """log Z by explicit summation over all up-right paths (oracle)."""
    w = np.asarray(weights, dtype=float)
    if w.shape != (M, N):
        raise DomainError(f"weights must have shape ({M}, {N}), got {w.shape}")
    count = path_count(M, N)
    if count > MAX_ENUMERATED_PATHS:
        raise DomainError(f"{count} paths exceed the enumeration cap {MAX_ENUMERATED_PATHS}")
    logw = np.log(w)
    steps = M + N - 2
    terms = np.empty(count)
    for k, rights in enumerate(combinations(range(steps), M - 1)):
        i = j = 0
        acc = logw[0, 0]
        rset = set(rights)
        for s in range(steps):
            if s in rset:
                i += 1
            else:
                j += 1
            acc += logw[i, j]
        terms[k] = acc
    top = terms.max()
    return float(top + math.log(np.sum(np.exp(terms - top))))


def build_bbp_spec(shape: ModelShape, layout: BBPLayout, constants: ScalingConstants) -> ModelSpec:
    """(M + c) x (N + r) spec with critically perturbed leading rows/columns."""
    scale = 1.0 / (constants.sigma * shape.M ** (1.0 / 3.0))
    a = np.concatenate([constants.z_c + np.asarray(layout.x) * scale, np.zeros(shape.N)])
    alpha = np.concatenate([constants.z_c + np.asarray(layout.y) * scale, np.full(shape.M, shape.theta)])
    if not (alpha.min() - a.max() > 0 and alpha.min() > 0):
        raise HypothesisError(
            f"BBP scaling infeasible at M={shape.M}: min(alpha) - max(a) = {alpha.min() - a.max():.4g}"
        )
    return ModelSpec(a, alpha, shape.theta)


def block_size(spec: ModelSpec) -> int:
    cells = spec.M_total * spec.N_total
    return int(min(_MAX_BLOCK, max(1, _BLOCK_CELLS // cells)))


def _block_logz(spec: ModelSpec, seed: int, index: int, n: int) -> np.ndarray:
    rng = _stream(seed, index)
    G = _draw_gammas(spec, rng, n)
    out = np.empty(n)
    _batch_ratio(G, out)
    bad = np.flatnonzero(np.isnan(out))
    if bad.size:
        shapes = spec.shapes()
        fix = _stream(seed, index, 1)
        for k in bad:
            logG = np.log(G[k])
            under = ~np.isfinite(logG)
            if np.any(under):
                # Gamma(s) = Gamma(s+1) U^{1/s}, drawn in log form
                s = shapes[under]
                logG[under] = np.log(fix.standard_gamma(s + 1.0)) + np.log(fix.random(s.size)) / s
            out[k] = _logz_logspace(-logG)
    return out


def sample_log_partition(spec: ModelSpec, n_samples: int, seed: int, threads: int | None = None) -> np.ndarray:
    """n_samples i.i.d. draws of log Z.

    Samples are split into fixed-size blocks; block k uses its own stream
    derived from (seed, k), so the output does not depend on ``threads``.
    """
    if n_samples < 1:
        raise DomainError("n_samples must be >= 1")
    threads = resolve_threads(threads)
    B = block_size(spec)
    sizes = [min(B, n_samples - s) for s in range(0, n_samples, B)]
    if threads == 1 or len(sizes) == 1:
        parts = [_block_logz(spec, seed, k, n) for k, n in enumerate(sizes)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda kn: _block_logz(spec, seed, kn[0], kn[1]), enumerate(sizes)))
    return np.concatenate(parts)


def rescale(log_Z, shape: ModelShape, constants: ScalingConstants) -> np.ndarray:
    """F = (log Z + M h) / (M^{1/3} sigma)."""
    return (np.asarray(log_Z) + shape.M * constants.h) / (shape.M ** (1.0 / 3.0) * constants.sigma)


def run_batch(spec: ModelSpec, shape: ModelShape, constants: ScalingConstants, n_samples: int, seed: int,
              threads: int | None = None) -> SampleBatch:
    log_Z = sample_log_partition(spec, n_samples, seed, threads)
    return SampleBatch(
        seed=int(seed),
        n_samples=int(n_samples),
        log_Z=log_Z,
        F=rescale(log_Z, shape, constants),
        M=shape.M,
        h=constants.h,
        sigma=constants.sigma,
    )


def laplace_from_logz(log_u: float, log_Z) -> tuple[float, float]:
    """Mean and standard error of exp(-u Z) from samples of log Z."""
    t = log_u + np.asarray(log_Z, dtype=float)
    # exp(-exp(t)) underflows to 0 cleanly for t > ~6.6; guard the inner exp
    vals = np.exp(-np.exp(np.minimum(t, 700.0)))
    n = vals.size
    se = float(vals.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return float(vals.mean()), se


def mc_laplace(u: float, spec: ModelSpec, n_samples: int, seed: int, *, log_u: float | None = None,
               threads: int | None = None) -> tuple[float, float]:
    """Monte Carlo estimate of E[exp(-u Z)] with its standard error.

    Pass ``log_u`` instead of ``u`` when u itself is not representable.
    """
    if log_u is None:
        if not u >= 0:
            raise DomainError(f"u must be >= 0, got {u}")
        if u == 0:
            return 1.0, 0.0
        log_u = math.log(u)
    return laplace_from_logz(log_u, sample_log_partition(spec, n_samples, seed, threads))
