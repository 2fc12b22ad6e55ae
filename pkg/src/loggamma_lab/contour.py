"""Piecewise-linear complex contours and their Gauss-Legendre discretisation.

A contour is an ordered tuple of pieces running from -i*infinity to
+i*infinity: optionally an incoming ray, any number of finite segments, and
optionally an outgoing ray.  Quadrature weights carry the dz/(2*pi*i)
measure, so ``sum(weights * f(nodes))`` approximates (1/2 pi i) int f dz.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConvergenceError, DomainError, GeometryError

MAX_TRUNCATION_RADIUS = 1e6
_TWO_PI_I = 2j * math.pi


@dataclass(frozen=True)
class Segment:
    start: complex
    end: complex

    @property
    def length(self) -> float:
        return abs(self.end - self.start)

    def point(self, t):
        """Point at arclength t from the start."""
        if self.length == 0:
            return np.full(np.shape(t), self.start, dtype=complex)
        return self.start + (self.end - self.start) * (np.asarray(t) / self.length)

    @property
    def tangent(self) -> complex:
        return (self.end - self.start) / self.length if self.length else 0j


@dataclass(frozen=True)
class Ray:
    """Points anchor + t*direction, t >= 0.

    ``incoming`` rays are traversed from t = infinity down to the anchor.
    """

    anchor: complex
    direction: complex
    incoming: bool

    def point(self, t):
        return self.anchor + self.direction * np.asarray(t)

    @property
    def tangent(self) -> complex:
        return -self.direction if self.incoming else self.direction


@dataclass(frozen=True)
class Contour:
    pieces: tuple
    label: str = ""

    def __post_init__(self):
        ends = []
        for p in self.pieces:
            if isinstance(p, Segment):
                ends.append((p.start, p.end))
            elif p.incoming:
                ends.append((None, p.anchor))
            else:
                ends.append((p.anchor, None))
        for (_, e), (s, _) in zip(ends[:-1], ends[1:]):
            if e is None or s is None or abs(e - s) > 1e-12 * max(1.0, abs(e)):
                raise GeometryError(f"contour pieces do not join: {e} vs {s}")

    def polyline(self, radius: float = 1e8) -> list[tuple[complex, complex]]:
        """Finite segments approximating the contour (rays cut at ``radius``)."""
        out = []
        for p in self.pieces:
            if isinstance(p, Segment):
                out.append((p.start, p.end))
            elif p.incoming:
                out.append((complex(p.point(radius)), p.anchor))
            else:
                out.append((p.anchor, complex(p.point(radius))))
        return out

    def crossings_right(self, z: complex) -> int:
        """Number of times the horizontal half-line from z to +infinity meets the contour."""
        count = 0
        y = z.imag
        for a, b in self.polyline():
            if (a.imag > y) != (b.imag > y):
                x = a.real + (y - a.imag) * (b.real - a.real) / (b.imag - a.imag)
                if x > z.real:
                    count += 1
        return count

    def is_left(self, z: complex) -> bool:
        """True if z lies to the left of the (upward oriented) contour."""
        return self.crossings_right(z) % 2 == 1

    def distance(self, z) -> np.ndarray:
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        best = np.full(z.shape, np.inf)
        for p in self.pieces:
            if isinstance(p, Segment):
                a, ab = p.start, p.end - p.start
                t = np.clip(((z - a) * np.conj(ab)).real / max(abs(ab) ** 2, 1e-300), 0, 1)
                best = np.minimum(best, np.abs(z - (a + t * ab)))
            else:
                t = np.maximum(((z - p.anchor) * np.conj(p.direction)).real, 0)
                best = np.minimum(best, np.abs(z - p.point(t)))
        return best

    def affine(self, shift: complex, scale: float) -> "Contour":
        """Image under z -> shift + scale * z (scale > 0)."""
        if not scale > 0:
            raise DomainError("scale must be positive")
        pieces = []
        for p in self.pieces:
            if isinstance(p, Segment):
                pieces.append(Segment(shift + scale * p.start, shift + scale * p.end))
            else:
                pieces.append(Ray(shift + scale * p.anchor, p.direction, p.incoming))
        return Contour(tuple(pieces), self.label)


@dataclass(frozen=True)
class QuadratureGrid:
    nodes: np.ndarray
    weights: np.ndarray
    truncation_radius: float
    panel_order: int
    piece: np.ndarray
    contour: Contour | None = None
    options: tuple = ()

    def refined(self, extra_order: int = 8) -> "QuadratureGrid":
        """Same contour and panels with a higher Gauss-Legendre order."""
        if self.contour is None:
            raise DomainError("grid was not built by discretize and cannot be refined")
        opts = dict(self.options)
        opts["radius"] = self.truncation_radius
        return discretize(self.contour, min(64, self.panel_order + extra_order), **opts)

    def __len__(self):
        return self.nodes.size

    def integrate(self, values) -> complex:
        return complex(np.sum(self.weights * values))


def _check_angle(phi):
    if not 0 < phi < math.pi:
        raise DomainError(f"angle must lie in (0, pi), got {phi}")


def build_ray_contour(a: complex, phi: float) -> Contour:
    """C_{a,phi}: rays a + y e^{-i phi} (incoming) and a + y e^{i phi} (outgoing)."""
    _check_angle(phi)
    a = complex(a)
    return Contour(
        (Ray(a, complex(np.exp(-1j * phi)), True), Ray(a, complex(np.exp(1j * phi)), False)),
        label=f"C({a:.4g},{phi:.4g})",
    )


def _ray_point_at_height(b: complex, phi: float, y: float) -> complex:
    """Point of C_{b,phi} with imaginary part y."""
    dy = y - b.imag
    return complex(b.real + abs(dy) / math.tan(phi), y)


def build_detour_contour(v: complex, b: complex, phi: float, d: float) -> Contour:
    """D_v(b, phi, d): C_{b,phi} with the band |Im z - Im v| <= d replaced by
    segments z_- -> v + 2d - id -> v + 2d + id -> z_+.

    Requires the apex v + 2d to lie strictly left of C_{b,phi} at its height,
    so that v stays left of the contour and the segments do not fold back.
    """
    _check_angle(phi)
    if not d > 0:
        raise GeometryError("d must be positive")
    v, b = complex(v), complex(b)
    lo, hi = v.imag - d, v.imag + d
    z_minus = _ray_point_at_height(b, phi, lo)
    z_plus = _ray_point_at_height(b, phi, hi)
    p1, p2 = v + 2 * d - 1j * d, v + 2 * d + 1j * d
    if not (p1.real < z_minus.real and p2.real < z_plus.real):
        raise GeometryError(
            f"detour apex {v + 2 * d:.4g} is not left of C_(b,phi) at height {v.imag:.4g}; decrease d or move b"
        )
    down, up = complex(np.exp(-1j * phi)), complex(np.exp(1j * phi))
    pieces = []
    if lo > b.imag:
        pieces += [Ray(b, down, True), Segment(b, z_minus)]
    elif hi < b.imag:
        pieces.append(Ray(z_minus, down, True))
    else:
        pieces.append(Ray(z_minus, down, True))
    pieces += [Segment(z_minus, p1), Segment(p1, p2), Segment(p2, z_plus)]
    if hi < b.imag:
        pieces += [Segment(z_plus, b), Ray(b, up, False)]
    else:
        pieces.append(Ray(z_plus, up, False))
    return Contour(tuple(pieces), label="D_v")


def build_limit_contour(mu: float, rho: float) -> Contour:
    """Vertical segment mu+rho-i*rho -> mu+rho+i*rho joined to the rays of C_{mu,pi/4}."""
    if not rho > 0:
        raise DomainError("rho must be positive")
    lo, hi = complex(mu + rho, -rho), complex(mu + rho, rho)
    return Contour(
        (
            Ray(lo, complex(np.exp(-0.25j * math.pi)), True),
            Segment(lo, hi),
            Ray(hi, complex(np.exp(0.25j * math.pi)), False),
        ),
        label="D_tilde",
    )


def legacy_centres(a_vec, alpha_vec) -> tuple[float, float]:
    """(mu, eta) = ((max a + min alpha)/2, max a/4 + 3 min alpha/4)."""
    amax, almin = float(np.max(a_vec)), float(np.min(alpha_vec))
    return 0.5 * (amax + almin), 0.25 * amax + 0.75 * almin


def build_legacy_outer(a_vec, alpha_vec, phi: float = math.pi / 6) -> Contour:
    """Rays mu + y e^{i(pi -+ phi)}, i.e. C_{mu, pi - phi}."""
    if not 0 <= phi < math.pi / 4 + 1e-15:
        raise DomainError("legacy angle must lie in [0, pi/4]")
    mu, _ = legacy_centres(a_vec, alpha_vec)
    return build_ray_contour(mu, math.pi - phi)


def build_legacy_inner(v: complex, eta: float, d: float = 0.25) -> Contour:
    """s-contour R - i inf -> R - id -> 1/2 - id -> 1/2 + id -> R + id -> R + i inf, R = eta - Re v."""
    R = eta - complex(v).real
    p0, p1, p2, p3 = complex(R, -d), complex(0.5, -d), complex(0.5, d), complex(R, d)
    return Contour(
        (Ray(p0, -1j, True), Segment(p0, p1), Segment(p1, p2), Segment(p2, p3), Ray(p3, 1j, False)),
        label="legacy_D_v",
    )


@lru_cache(maxsize=64)
def _gauss_legendre(order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    return x, w


def truncation_radius(tail_tolerance: float, decay_rate_hint: float) -> float:
    """Smallest R with exp(-k R log(1+R)) < tail_tolerance."""
    if not tail_tolerance > 0:
        raise DomainError("tail_tolerance must be positive")
    if not decay_rate_hint > 0:
        raise DomainError("decay_rate_hint must be positive")
    target = -math.log(tail_tolerance) / decay_rate_hint
    lo, hi = 0.0, 1.0
    while hi * math.log1p(hi) < target:
        hi *= 2
        if hi > MAX_TRUNCATION_RADIUS:
            raise ConvergenceError(
                f"tail tolerance {tail_tolerance} unreachable with decay hint {decay_rate_hint}"
            )
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if mid * math.log1p(mid) < target:
            lo = mid
        else:
            hi = mid
    return hi


def _breaks_from_end(length: float, h_min: float, h_max: float, geometric_after: float, ratio: float = 2.0):
    """Panel breakpoints on [0, length], smallest at 0.

    Sizes double from h_min up to h_max, stay at h_max, and beyond
    ``geometric_after`` grow in proportion to the distance from 0.
    """
    xs = [0.0]
    size = h_min
    while xs[-1] < length:
        x = xs[-1]
        if x >= geometric_after:
            size = max(size, (ratio - 1.0) * x)
        nxt = x + size
        if nxt >= length or length - nxt < 0.25 * size:
            xs.append(length)
            break
        xs.append(nxt)
        if x < geometric_after:
            size = min(h_max, size * ratio)
    return np.asarray(xs)


def _segment_breaks(length, h_min, h_max, geometric_after, grade_start=True, grade_end=True):
    if length == 0:
        return np.array([0.0])
    if grade_start and grade_end:
        half = _breaks_from_end(0.5 * length, h_min, h_max, geometric_after)
        return np.concatenate([half, length - half[::-1][1:]])
    if grade_start:
        return _breaks_from_end(length, h_min, h_max, geometric_after)
    if grade_end:
        return length - _breaks_from_end(length, h_min, h_max, geometric_after)[::-1]
    n = max(1, math.ceil(length / h_max))
    return np.linspace(0, length, n + 1)


def _panels_to_nodes(breaks, order):
    x, w = _gauss_legendre(order)
    a, b = breaks[:-1], breaks[1:]
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    t = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    wt = (half[:, None] * w[None, :]).ravel()
    return t, wt


def discretize(
    contour: Contour,
    panel_order: int = 16,
    tail_tolerance: float = 1e-10,
    decay_rate_hint: float = 1.0,
    *,
    h_max: float = 0.5,
    h_min: float | None = None,
    radius: float | None = None,
    geometric_after: float = math.inf,
) -> QuadratureGrid:
    """Composite Gauss-Legendre rule on every piece.

    Rays are cut at ``radius`` (distance from their anchor), or else at the
    radius where exp(-decay_rate_hint R log(1+R)) drops below
    ``tail_tolerance``.  Panels start at ``h_min`` at every join and double
    up to ``h_max``; past ``geometric_after`` (distance from the join) panel
    sizes grow geometrically, which suits slowly decaying tails.
    """
    if not 4 <= panel_order <= 64:
        raise DomainError("panel_order must lie in [4, 64]")
    if h_min is None:
        h_min = 0.25 * h_max
    if not 0 < h_min <= h_max:
        raise DomainError("need 0 < h_min <= h_max")
    R = truncation_radius(tail_tolerance, decay_rate_hint) if radius is None else float(radius)
    nodes, weights, piece_ids = [], [], []
    for k, p in enumerate(contour.pieces):
        if isinstance(p, Segment):
            if p.length == 0:
                continue
            br = _segment_breaks(p.length, h_min, h_max, geometric_after)
            t, wt = _panels_to_nodes(br, panel_order)
            z = p.point(t)
            wz = wt * p.tangent
        else:
            br = _breaks_from_end(R, h_min, h_max, geometric_after)
            t, wt = _panels_to_nodes(br, panel_order)
            if p.incoming:
                t, wt = t[::-1], wt[::-1]
            z = p.point(t)
            wz = wt * p.tangent
        nodes.append(z)
        weights.append(wz / _TWO_PI_I)
        piece_ids.append(np.full(z.size, k))
    if not nodes:
        return QuadratureGrid(np.zeros(0, complex), np.zeros(0, complex), R, panel_order, np.zeros(0, int), contour)
    options = (("h_max", h_max), ("h_min", h_min), ("geometric_after", geometric_after))
    return QuadratureGrid(
        np.concatenate(nodes).astype(complex),
        np.concatenate(weights).astype(complex),
        R,
        panel_order,
        np.concatenate(piece_ids),
        contour,
        options,
    )


def grid_from_breaks(contour: Contour, breaks: list, panel_order: int = 16) -> QuadratureGrid:
    """Gauss-Legendre grid from explicit panel breakpoints per piece.

    ``breaks[k]`` lists panel boundaries for piece k as arclength from the
    segment start or ray anchor; consecutive entries define one panel and
    entries may skip regions (gaps are treated as negligible).  A boundary
    pair (t, t) is ignored.
    """
    if len(breaks) != len(contour.pieces):
        raise DomainError("need one breakpoint list per piece")
    nodes, weights, piece_ids, radius = [], [], [], 0.0
    for k, (p, br) in enumerate(zip(contour.pieces, breaks)):
        br = np.asarray(br, dtype=float).reshape(-1, 2) if np.ndim(br) == 2 else None
        if br is None:
            raise DomainError("breaks must be (n, 2) arrays of panel ends")
        br = br[br[:, 1] > br[:, 0]]
        if br.size == 0:
            continue
        x, w = _gauss_legendre(panel_order)
        half = 0.5 * (br[:, 1] - br[:, 0])
        mid = 0.5 * (br[:, 1] + br[:, 0])
        t = (mid[:, None] + half[:, None] * x[None, :]).ravel()
        wt = (half[:, None] * w[None, :]).ravel()
        if isinstance(p, Ray):
            radius = max(radius, float(br[:, 1].max()))
            if p.incoming:
                t, wt = t[::-1], wt[::-1]
        nodes.append(p.point(t))
        weights.append(wt * p.tangent / _TWO_PI_I)
        piece_ids.append(np.full(t.size, k))
    if not nodes:
        return QuadratureGrid(np.zeros(0, complex), np.zeros(0, complex), radius, panel_order, np.zeros(0, int), contour)
    return QuadratureGrid(np.concatenate(nodes).astype(complex), np.concatenate(weights).astype(complex),
                          radius, panel_order, np.concatenate(piece_ids), contour)


def merge_grids(*grids: QuadratureGrid) -> QuadratureGrid:
    return QuadratureGrid(
        np.concatenate([g.nodes for g in grids]),
        np.concatenate([g.weights for g in grids]),
        max(g.truncation_radius for g in grids),
        grids[0].panel_order,
        np.concatenate([g.piece for g in grids]),
    )
