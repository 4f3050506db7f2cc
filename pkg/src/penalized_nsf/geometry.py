"""Prescribed moving domain: velocity field, flow map, level set and interface quadrature.

Sign convention: the level set is negative inside the fluid domain, zero on
its boundary and positive in the solid part of the box.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .fields import Grid, gradient

RIGID_KINDS = ("zero", "translation", "oscillation", "rotation")


def smoothstep3(s):
    """C^3 step from 0 (s <= 0) to 1 (s >= 1)."""
    s = np.clip(s, 0.0, 1.0)
    return s**4 * (35.0 - 84.0 * s + 70.0 * s**2 - 20.0 * s**3)


@dataclass(frozen=True)
class VelocityFieldSpec:
    """Analytic boundary velocity ``V(t, x)``.

    kind:
        ``zero``; ``translation`` (``V = velocity``); ``oscillation``
        (``V = amplitude * frequency * cos(frequency t) * direction``);
        ``rotation`` (rigid rotation with angular ``rate`` about ``origin``, 2D).
    The field is multiplied by a radial C^3 cutoff that equals one for
    ``|x - origin| <= inner_radius`` and vanishes for ``|x - origin| >= support_radius``.
    Without a support radius the field is not cut off.
    """

    kind: str = "zero"
    dim: int = 1
    velocity: tuple[float, ...] = ()
    amplitude: float = 0.0
    frequency: float = 0.0
    direction: tuple[float, ...] = ()
    rate: float = 0.0
    origin: tuple[float, ...] = ()
    inner_radius: Optional[float] = None
    support_radius: Optional[float] = None

    def __post_init__(self):
        if self.kind not in RIGID_KINDS:
            raise ValueError(f"unknown velocity kind {self.kind!r}")
        if self.kind == "rotation" and self.dim != 2:
            raise ValueError("rotation is only defined in 2D")
        if self.kind == "translation" and len(self.velocity) != self.dim:
            raise ValueError("translation needs a velocity vector of length dim")
        if self.kind == "oscillation" and len(self.direction) != self.dim:
            raise ValueError("oscillation needs a direction of length dim")
        if (self.inner_radius is None) != (self.support_radius is None):
            raise ValueError("inner_radius and support_radius go together")
        if self.support_radius is not None and not 0 < self.inner_radius < self.support_radius:
            raise ValueError("need 0 < inner_radius < support_radius")

    @property
    def origin_vec(self) -> np.ndarray:
        return np.asarray(self.origin if self.origin else (0.0,) * self.dim, dtype=float)

    def cutoff(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.support_radius is None:
            return np.ones(x.shape[1:])
        r = np.sqrt(np.sum((x - _bcast(self.origin_vec, x)) ** 2, axis=0))
        s = (self.support_radius - r) / (self.support_radius - self.inner_radius)
        return smoothstep3(s)

    def rigid(self, t: float, x: np.ndarray) -> np.ndarray:
        """Velocity without the cutoff."""
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        if self.kind == "translation":
            out += _bcast(np.asarray(self.velocity, dtype=float), x)
        elif self.kind == "oscillation":
            e = np.asarray(self.direction, dtype=float)
            out += _bcast(self.amplitude * self.frequency * np.cos(self.frequency * t) * e, x)
        elif self.kind == "rotation":
            c = _bcast(self.origin_vec, x)
            out[0] = -self.rate * (x[1] - c[1])
            out[1] = self.rate * (x[0] - c[0])
        return out

    def __call__(self, t: float, x: np.ndarray) -> np.ndarray:
        return self.rigid(t, x) * self.cutoff(x)

    def time_derivative(self, t: float, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        if self.kind == "oscillation":
            e = np.asarray(self.direction, dtype=float)
            out += _bcast(-self.amplitude * self.frequency**2 * np.sin(self.frequency * t) * e, x)
        return out * self.cutoff(x)

    def pull_back(self, t: float, x: np.ndarray) -> np.ndarray:
        """Inverse rigid map ``X(t, .)^{-1}``; valid where the cutoff equals one."""
        x = np.asarray(x, dtype=float)
        if self.kind == "zero":
            return x.copy()
        if self.kind == "translation":
            return x - _bcast(np.asarray(self.velocity, dtype=float) * t, x)
        if self.kind == "oscillation":
            d = self.amplitude * np.sin(self.frequency * t) * np.asarray(self.direction, dtype=float)
            return x - _bcast(d, x)
        c = _bcast(self.origin_vec, x)
        th = -self.rate * t
        y0, y1 = x[0] - c[0], x[1] - c[1]
        return np.stack([c[0] + np.cos(th) * y0 - np.sin(th) * y1, c[1] + np.sin(th) * y0 + np.cos(th) * y1])


def _bcast(v: np.ndarray, x: np.ndarray) -> np.ndarray:
    return np.asarray(v, dtype=float).reshape((-1,) + (1,) * (np.ndim(x) - 1))


def advance_flow_map(spec, points, t0: float, t1: float, dt: float, box: Optional[Grid] = None) -> np.ndarray:
    """Images ``X(t1)`` of ``points`` (``X(t0) = points``) by classical RK4.

    ``spec`` is any callable ``V(t, x)``; ``points`` carries the dimension on
    its leading axis.
    """
    if dt <= 0:
        raise ValueError(f"time step must be positive, got {dt}")
    if t1 < t0:
        raise ValueError("need t0 <= t1")
    x = np.array(points, dtype=float)
    if box is not None and not np.all(box.contains(x.reshape(box.dim, -1))):
        raise ValueError("points outside the reference box")
    t = float(t0)
    while t < t1 - 1e-14 * max(1.0, abs(t1)):
        k = min(dt, t1 - t)
        k1 = spec(t, x)
        k2 = spec(t + 0.5 * k, x + 0.5 * k * k1)
        k3 = spec(t + 0.5 * k, x + 0.5 * k * k2)
        k4 = spec(t + k, x + k * k3)
        x = x + (k / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t += k
    return x


# --------------------------------------------------------------------------
# reference shapes


@dataclass(frozen=True)
class Interval:
    a: float
    b: float
    dim: int = 1

    def distance(self, x: np.ndarray) -> np.ndarray:
        return np.maximum(self.a - x[0], x[0] - self.b)

    def volume(self) -> float:
        return self.b - self.a

    def radius(self, origin: np.ndarray) -> float:
        return max(abs(self.a - origin[0]), abs(self.b - origin[0]))

    def boundary_markers(self, m: int) -> np.ndarray:
        return np.array([[self.a, self.b]])


@dataclass(frozen=True)
class Disk:
    center: tuple[float, float]
    r: float
    dim: int = 2

    def distance(self, x: np.ndarray) -> np.ndarray:
        c = np.asarray(self.center).reshape((2,) + (1,) * (x.ndim - 1))
        return np.sqrt(np.sum((x - c) ** 2, axis=0)) - self.r

    def volume(self) -> float:
        return np.pi * self.r**2

    def radius(self, origin: np.ndarray) -> float:
        return float(np.hypot(*(np.asarray(self.center) - origin)) + self.r)

    def boundary_markers(self, m: int) -> np.ndarray:
        th = 2 * np.pi * np.arange(m) / m
        return np.stack([self.center[0] + self.r * np.cos(th), self.center[1] + self.r * np.sin(th)])


@dataclass(frozen=True)
class Ellipse:
    """Axis-aligned ellipse; exact distance via the monotone root of Eberly's function."""

    center: tuple[float, float]
    semi_axes: tuple[float, float]
    dim: int = 2

    def distance(self, x: np.ndarray) -> np.ndarray:
        a, b = self.semi_axes
        flip = a < b
        if flip:
            a, b = b, a
        y0 = np.abs(x[0] - self.center[0])
        y1 = np.abs(x[1] - self.center[1])
        if flip:
            y0, y1 = y1, y0
        inside = (y0 / a) ** 2 + (y1 / b) ** 2 < 1.0
        # closest point (a^2 y0/(t+a^2), b^2 y1/(t+b^2)); t is the root of a decreasing function
        lo = np.full_like(y0, -b * b)
        hi = np.maximum(0.0, np.hypot(a * y0, b * y1))
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            with np.errstate(divide="ignore"):
                g = (a * y0 / (mid + a * a)) ** 2 + (b * y1 / (mid + b * b)) ** 2 - 1.0
            lo = np.where(g > 0, mid, lo)
            hi = np.where(g > 0, hi, mid)
        t = 0.5 * (lo + hi)
        with np.errstate(divide="ignore", invalid="ignore"):
            px = a * a * y0 / (t + a * a)
            py = b * b * y1 / (t + b * b)
        # on the major axis inside the evolute the closest point leaves the axis
        axis = (y1 == 0) & (a > b) & (y0 < (a * a - b * b) / a)
        with np.errstate(divide="ignore", invalid="ignore"):
            qx = a * a * y0 / (a * a - b * b)
        px = np.where(axis, qx, px)
        py = np.where(axis, b * np.sqrt(np.clip(1 - (qx / a) ** 2, 0, None)), py)
        d = np.hypot(y0 - px, y1 - py)
        return np.where(inside, -d, d)

    def volume(self) -> float:
        return np.pi * self.semi_axes[0] * self.semi_axes[1]

    def radius(self, origin: np.ndarray) -> float:
        return float(np.hypot(*(np.asarray(self.center) - origin)) + max(self.semi_axes))

    def boundary_markers(self, m: int) -> np.ndarray:
        th = 2 * np.pi * np.arange(m) / m
        return np.stack(
            [self.center[0] + self.semi_axes[0] * np.cos(th), self.center[1] + self.semi_axes[1] * np.sin(th)]
        )


def _polygon_signed_distance(poly: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Signed distance to a closed polygon (vertices ``(2, m)``), negative inside."""
    pts = x.reshape(2, -1)
    a = poly
    b = np.roll(poly, -1, axis=1)
    best = np.full(pts.shape[1], np.inf)
    inside = np.zeros(pts.shape[1], dtype=bool)
    for k in range(poly.shape[1]):
        ab = b[:, k] - a[:, k]
        ap = pts - a[:, k : k + 1]
        s = np.clip((ap[0] * ab[0] + ap[1] * ab[1]) / (ab @ ab), 0.0, 1.0)
        d = np.hypot(ap[0] - s * ab[0], ap[1] - s * ab[1])
        best = np.minimum(best, d)
        crosses = (a[1, k] > pts[1]) != (b[1, k] > pts[1])
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = a[0, k] + (pts[1] - a[1, k]) * ab[0] / ab[1]
        inside ^= crosses & (pts[0] < xint)
    return np.where(inside, -best, best).reshape(x.shape[1:])


# --------------------------------------------------------------------------
# moving domain


@dataclass
class MovingDomain:
    """``Omega_t = X(t, Omega_0)`` inside the box of ``grid``.

    Rigid analytic motions are used when the initial shape sits inside the
    region where the velocity cutoff equals one; otherwise boundary markers
    are transported and the level set is rebuilt from them.
    """

    shape: object
    velocity: VelocityFieldSpec
    grid: Grid
    alpha: float
    min_volume: float = 0.0
    markers: int = 256
    analytic: bool = field(init=False)
    _marker_cache: dict = field(init=False, default_factory=dict, repr=False)

    def __post_init__(self):
        if self.shape.dim != self.grid.dim or self.velocity.dim != self.grid.dim:
            raise ValueError("shape, velocity and grid dimensions differ")
        v = self.velocity
        self.analytic = v.support_radius is None or self.shape.radius(v.origin_vec) < v.inner_radius
        if v.kind in ("translation", "oscillation") and v.support_radius is not None:
            # a translated shape must stay inside the unit-cutoff region
            self.analytic = self.analytic and self._translated_radius_ok()
        if v.kind == "zero":
            self.analytic = True

    def _translated_radius_ok(self) -> bool:
        v = self.velocity
        if v.kind == "translation":
            return False
        return self.shape.radius(v.origin_vec) + abs(v.amplitude) < v.inner_radius

    @property
    def dim(self) -> int:
        return self.grid.dim

    def signed_distance(self, t: float, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.analytic:
            return self.shape.distance(self.velocity.pull_back(t, x))
        return self._marker_distance(t, x)

    def _marker_distance(self, t: float, x: np.ndarray) -> np.ndarray:
        key = round(float(t), 14)
        if key not in self._marker_cache:
            m0 = self.shape.boundary_markers(self.markers)
            dt = min(1e-3, max(t, 1e-12) / 4)
            self._marker_cache[key] = advance_flow_map(self.velocity, m0, 0.0, float(t), dt) if t > 0 else m0
        m = self._marker_cache[key]
        if self.dim == 1:
            return np.maximum(m[0, 0] - x[0], x[0] - m[0, 1])
        return _polygon_signed_distance(m, x)

    def level_set(self, t: float) -> np.ndarray:
        return self.signed_distance(t, self.grid.centers())

    def volume(self, t: float) -> float:
        return float(np.count_nonzero(self.level_set(t) < 0)) * self.grid.cell_volume

    def normals(self, t: float, phi: Optional[np.ndarray] = None) -> np.ndarray:
        if phi is None:
            phi = self.level_set(t)
        g = gradient(phi, self.grid, bc="extrapolate")
        norm = np.sqrt(np.sum(g**2, axis=0))
        return g / np.where(norm > 0, norm, 1.0)


def signed_distance(domain: MovingDomain, t: float, x) -> np.ndarray:
    return domain.signed_distance(t, np.asarray(x, dtype=float))


# --------------------------------------------------------------------------
# interface quadrature and indicators


DELTA_CELLS = 4


def delta_halfwidth(h: float) -> float:
    return DELTA_CELLS * h


def smeared_delta(phi: np.ndarray, h: float) -> np.ndarray:
    """Cosine regularisation of the 1D Dirac delta with half-width ``DELTA_CELLS * h``.

    For an integer number of cells the samples on a uniform 1D grid sum to
    exactly one whatever the offset of the interface.
    """
    w = delta_halfwidth(h)
    out = (1.0 + np.cos(np.pi * phi / w)) / (2.0 * w)
    return np.where(np.abs(phi) < w, out, 0.0)


def interface_weight(domain: MovingDomain, t: float, phi: Optional[np.ndarray] = None) -> np.ndarray:
    """Per-cell surface measure density ``delta_h(phi) |grad phi|``."""
    grid = domain.grid
    if phi is None:
        phi = domain.level_set(t)
    band = np.abs(phi) < delta_halfwidth(grid.h)
    edge = np.zeros(grid.shape, dtype=bool)
    for k in range(grid.dim):
        sl = [slice(None)] * grid.dim
        sl[k] = 0
        edge[tuple(sl)] = True
        sl[k] = -1
        edge[tuple(sl)] = True
    if np.any(band & edge):
        raise ValueError(f"interface quadrature band touches the box boundary at t = {t}")
    gnorm = np.sqrt(np.sum(gradient(phi, grid, bc="extrapolate") ** 2, axis=0))
    return smeared_delta(phi, grid.h) * gnorm


def surface_integral(domain: MovingDomain, t: float, f, h: Optional[float] = None) -> float:
    """Smeared-delta approximation of the surface integral of ``f`` over ``Gamma_t``."""
    grid = domain.grid
    if h is not None and abs(h - grid.h) > 1e-12 * grid.h:
        raise ValueError("spacing does not match the domain grid")
    f = np.broadcast_to(np.asarray(f, dtype=float), grid.shape)
    return grid.integrate(f * interface_weight(domain, t))


@dataclass
class IndicatorField:
    """Exact jump ``chi`` (1 in the fluid, ``A`` outside) and its mollification."""

    exact: np.ndarray
    smooth: np.ndarray
    A: float
    alpha: float


def cosine_ramp(phi: np.ndarray, A: float, alpha: float) -> np.ndarray:
    s = np.clip(phi / alpha, 0.0, 1.0)
    return A + (1.0 - A) * 0.5 * (1.0 + np.cos(np.pi * s))


def build_indicator(domain: MovingDomain, t: float, A: float, alpha: Optional[float] = None,
                    phi: Optional[np.ndarray] = None) -> IndicatorField:
    """Coefficient field equal to 1 in ``Omega_t`` ramping to ``A`` over a band of width ``alpha``."""
    if not 0 < A <= 1:
        raise ValueError(f"contrast must satisfy 0 < A <= 1, got {A}")
    alpha = domain.alpha if alpha is None else alpha
    if alpha < domain.grid.h * (1 - 1e-12):
        raise ValueError(f"mollification width {alpha} is below the grid spacing {domain.grid.h}")
    if phi is None:
        phi = domain.level_set(t)
    exact = np.where(phi <= 0, 1.0, A)
    return IndicatorField(exact=exact, smooth=cosine_ramp(phi, A, alpha), A=A, alpha=alpha)


def solid_weight(phi: np.ndarray, h: float) -> np.ndarray:
    """Smeared Heaviside of the solid region, consistent with ``smeared_delta``.

    Zero for ``phi <= 0`` so the fluid side of the interface never counts as solid.
    """
    w = delta_halfwidth(h)
    s = np.clip(phi / w, 0.0, 1.0)
    ramp = 0.5 * (1.0 + s + np.sin(np.pi * s) / np.pi)
    return np.where(phi > 0, np.where(phi >= w, 1.0, ramp), 0.0)


def divergence_in_tube(velocity: Callable, domain: MovingDomain, t: float, width: Optional[float] = None) -> float:
    """Largest sampled ``|div V|`` on cells within ``width`` (default: the delta half-width) of ``Gamma_t``."""
    grid = domain.grid
    width = delta_halfwidth(grid.h) if width is None else width
    x = grid.centers()
    phi = domain.signed_distance(t, x)
    tube = np.abs(phi) <= width
    if not np.any(tube):
        return 0.0
    eps = 1e-5
    div = np.zeros(grid.shape)
    for k in range(grid.dim):
        e = np.zeros((grid.dim,) + (1,) * grid.dim)
        e[k] = eps
        div += (velocity(t, x + e)[k] - velocity(t, x - e)[k]) / (2 * eps)
    return float(np.max(np.abs(div[tube])))
