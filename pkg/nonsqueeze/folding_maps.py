"""
Symplectic folding of the cube K(R) = [-R, R]^4 into R^4.

Coordinates are ordered (x1, y1, x2, y2) and the symplectic form is
dx1^dy1 + dx2^dy2. The embedding is a stack of primitive maps, each with a
closed-form Jacobian:

    cube -> prism, taffy stretch on factor 1, taffy stretch on factor 2,
    slide along x1 (H = -rho(x1) x2), slide along y2 (H = -rho(y2) y1),
    translation by (-1/2, -1/2, 0, 0).

Point batches are numpy arrays of shape (N, 4); Jacobians have shape
(N, 4, 4).
"""
import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from .exceptions import DomainError, NumericError
from .numerics import adaptive_simpson, bisect_increasing

logger = logging.getLogger('nonsqueeze')

DOMAIN_TOL = 1e-12
TABLE_NODES = 1024


def _smooth_step(t):
    return t * t * (3.0 - 2.0 * t)


def _smooth_step_slope(t):
    return 6.0 * t * (1.0 - t)


def _smooth_step_area(t):
    # antiderivative of the smooth step, zero at t = 0
    return t ** 3 - 0.5 * t ** 4


def _quintic(t):
    return t ** 3 * (10.0 - 15.0 * t + 6.0 * t * t)


def _quintic_slope(t):
    return 30.0 * t * t * (1.0 - t) ** 2


def _quintic_curvature(t):
    return 60.0 * t * (1.0 - t) * (1.0 - 2.0 * t)


def as_batch(points, dim=4):
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 1:
        arr = arr[np.newaxis, :]
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise DomainError(f"Expected points of shape (N, {dim}), got {np.shape(points)}.")
    return arr


# --- Ramp g ---

@dataclass(frozen=True)
class RampProfile:
    """
    The ramp g on [0, 1/L], written as g(x) = G(Lx)/L for a template G on
    [0, 1] symmetric about 1/2. On [0, 1/2] the template is zero up to
    ``zero_width``, then a corner whose slope rises along the smooth step,
    then slope 1, then a corner whose slope falls back to 0, then the
    plateau ``height``. The defaults keep g = 0 on [0, 1/(16L)] and on
    [15/(16L), 1/L] with sup g = 0.23/L.
    """
    L: float
    zero_width: float = 1.0 / 16
    corner_width: float = 1.0 / 128
    height: float = 0.23

    def __post_init__(self):
        if not self.L >= 2:
            raise DomainError(f"Lipschitz budget L must be at least 2, got {self.L}.")
        if min(self.zero_width, self.corner_width, self.height) <= 0:
            raise DomainError("Ramp widths and height must be positive.")
        if self.corner_width > self.height or self.shoulder > 0.5:
            raise DomainError("Ramp corners do not fit inside half the cell gap.")

    @property
    def rise_end(self):
        return self.zero_width + self.corner_width

    @property
    def top_start(self):
        return self.zero_width + self.height

    @property
    def shoulder(self):
        return self.zero_width + self.height + self.corner_width

    @property
    def plateau_width(self):
        return 1.0 - 2.0 * self.shoulder

    @property
    def sup(self):
        return self.height / self.L

    def _split(self, u):
        u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
        w = np.minimum(u, 1.0 - u)
        d = self.corner_width
        t_rise = np.clip((w - self.zero_width) / d, 0.0, 1.0)
        t_top = np.clip((w - self.top_start) / d, 0.0, 1.0)
        pieces = [w <= self.zero_width, w <= self.rise_end, w <= self.top_start, w <= self.shoulder]
        return u, w, t_rise, t_top, pieces

    def template(self, u):
        _, w, t_rise, t_top, pieces = self._split(u)
        d, h = self.corner_width, self.height
        return np.select(pieces, [
            np.zeros_like(w),
            d * _smooth_step_area(t_rise),
            0.5 * d + (w - self.rise_end),
            h - 0.5 * d + d * (t_top - _smooth_step_area(t_top)),
        ], default=h)

    def template_slope(self, u):
        u, w, t_rise, t_top, pieces = self._split(u)
        half = np.select(pieces, [
            np.zeros_like(w),
            _smooth_step(t_rise),
            np.ones_like(w),
            1.0 - _smooth_step(t_top),
        ], default=0.0)
        return np.where(u <= 0.5, half, -half)

    def template_curvature(self, u):
        _, w, t_rise, t_top, pieces = self._split(u)
        d = self.corner_width
        return np.select(pieces, [
            np.zeros_like(w),
            _smooth_step_slope(t_rise) / d,
            np.zeros_like(w),
            -_smooth_step_slope(t_top) / d,
        ], default=0.0)

    def value(self, x):
        return self.template(self.L * np.asarray(x, dtype=float)) / self.L

    def slope(self, x):
        return self.template_slope(self.L * np.asarray(x, dtype=float))

    def curvature(self, x):
        return self.L * self.template_curvature(self.L * np.asarray(x, dtype=float))

    def to_dict(self):
        return {
            'L': self.L,
            'zero_width': self.zero_width,
            'corner_width': self.corner_width,
            'height': self.height,
        }


def build_g(L):
    return RampProfile(L=float(L))


# --- Solving for C ---

def _rise_integrand(ramp, kappa):
    z, d = ramp.zero_width, ramp.corner_width

    def integrand(w):
        t = (w - z) / d
        return 1.0 / (1.0 - kappa * d * (t ** 3 - 0.5 * t ** 4))
    return integrand


def _top_integrand(ramp, kappa):
    d, h, start = ramp.corner_width, ramp.height, ramp.top_start

    def integrand(w):
        t = (w - start) / d
        return 1.0 / (1.0 - kappa * (h - 0.5 * d + d * (t - t ** 3 + 0.5 * t ** 4)))
    return integrand


def _linear_integral(ramp, kappa, w):
    """Integral of 1/(1 - kappa G) over [rise_end, w] on the slope-1 piece."""
    w = np.asarray(w, dtype=float)
    if kappa == 0:
        return w - ramp.rise_end
    d = ramp.corner_width
    return (np.log1p(-kappa * 0.5 * d) - np.log1p(-kappa * (0.5 * d + w - ramp.rise_end))) / kappa


def template_integral(ramp, kappa, tol=1e-13):
    """Integral of 1/(1 - kappa G) over [0, 1]; equals L * I(kappa * L)."""
    rise, _ = adaptive_simpson(_rise_integrand(ramp, kappa), ramp.zero_width, ramp.rise_end, tol)
    top, _ = adaptive_simpson(_top_integrand(ramp, kappa), ramp.top_start, ramp.shoulder, tol)
    linear = float(_linear_integral(ramp, kappa, ramp.top_start))
    plateau = (1.0 - 2.0 * ramp.shoulder) / (1.0 - kappa * ramp.height)
    return 2.0 * (ramp.zero_width + rise + linear + top) + plateau


def stretch_integral(ramp, C, tol=1e-13):
    """I(C) = integral over [0, 1/L] of 1/(1 - C g(y)) dy."""
    return template_integral(ramp, C / ramp.L, tol) / ramp.L


def solve_C(ramp, L=None, rel_tol=1e-12, simpson_tol=1e-13, max_steps=200):
    """The unique C in (0, 1/sup g) with I(C) = 1 + 1/L."""
    L = ramp.L if L is None else float(L)
    if L != ramp.L:
        raise DomainError(f"Ramp was built for L={ramp.L}, not L={L}.")
    kappa = bisect_increasing(
        lambda k: template_integral(ramp, k, simpson_tol),
        target=L + 1.0,
        lo=0.0,
        hi=1.0 / ramp.height,
        rel_tol=rel_tol,
        max_steps=max_steps,
    )
    C = kappa * L
    logger.debug(f"solve_C: L={L} C={C!r} C/L={kappa!r}")
    return C


# --- Stretch f ---

class StretchProfile:
    """
    f(x) = integral_0^x dy / (1 - C g(y)) on [0, 1/L], kept in template form
    F(v) = L f(v / L). F is closed form on the flat, slope-1 and plateau
    pieces; on the two corners it is a cubic Hermite spline through cached
    Simpson values, using the exact derivative at every node. The symmetry
    F(1 - v) = F(1) - F(v) covers the falling half.
    """

    def __init__(self, ramp, C, quadrature_tol=1e-11, simpson_tol=1e-13, table_nodes=TABLE_NODES):
        self.ramp = ramp
        self.L = ramp.L
        self.C = float(C)
        self.kappa = self.C / self.L
        self.quadrature_tol = quadrature_tol
        if not 0 < self.kappa * ramp.height < 1:
            raise DomainError(f"C={C} is outside (0, 1/sup g) for L={self.L}.")

        self._rise = self._corner_table(
            _rise_integrand(ramp, self.kappa), ramp.zero_width, ramp.rise_end, simpson_tol, table_nodes)
        self._top = self._corner_table(
            _top_integrand(ramp, self.kappa), ramp.top_start, ramp.shoulder, simpson_tol, table_nodes)

        self._at_rise_end = ramp.zero_width + float(self._rise(ramp.rise_end))
        self._at_top_start = self._at_rise_end + float(_linear_integral(ramp, self.kappa, ramp.top_start))
        self._at_shoulder = self._at_top_start + float(self._top(ramp.shoulder))
        self._at_half = self._at_shoulder + (0.5 - ramp.shoulder) * self.sup_template_slope
        self.total = 2.0 * self._at_half

        endpoint_error = abs(self.total / self.L - (1.0 + 1.0 / self.L))
        if endpoint_error > quadrature_tol:
            raise NumericError(
                f"Stretch endpoint f(1/L) misses 1 + 1/L by {endpoint_error:.3e} (tolerance {quadrature_tol})."
            )

    @staticmethod
    def _corner_table(integrand, start, end, tol, nodes):
        grid = np.linspace(start, end, nodes + 1)
        pieces = [adaptive_simpson(integrand, a, b, tol)[0] for a, b in zip(grid[:-1], grid[1:])]
        values = np.concatenate([[0.0], np.cumsum(pieces)])
        slopes = np.array([integrand(w) for w in grid])
        return CubicHermiteSpline(grid, values, slopes)

    @property
    def sup_template_slope(self):
        return 1.0 / (1.0 - self.kappa * self.ramp.height)

    @property
    def sup_slope(self):
        """sup f' = 1 / (1 - C sup g)."""
        return self.sup_template_slope

    @property
    def slope_bound(self):
        """
        Strict upper bound for sup f'. The template slope is at least 1 and
        equals sup f' on the plateau, and it integrates to L + 1 over [0, 1].
        """
        plateau = self.ramp.plateau_width
        return (self.L + plateau) / plateau

    def _half_template(self, w):
        ramp = self.ramp
        out = np.empty_like(w)
        flat = w <= ramp.zero_width
        rise = ~flat & (w <= ramp.rise_end)
        linear = (w > ramp.rise_end) & (w <= ramp.top_start)
        top = (w > ramp.top_start) & (w <= ramp.shoulder)
        plateau = w > ramp.shoulder
        out[flat] = w[flat]
        out[rise] = ramp.zero_width + self._rise(w[rise])
        out[linear] = self._at_rise_end + _linear_integral(ramp, self.kappa, w[linear])
        out[top] = self._at_top_start + self._top(w[top])
        out[plateau] = self._at_shoulder + (w[plateau] - ramp.shoulder) * self.sup_template_slope
        return out

    def template(self, v):
        v = np.clip(np.asarray(v, dtype=float), 0.0, 1.0)
        flat = v.reshape(-1)
        out = np.empty_like(flat)
        left = flat <= 0.5
        out[left] = self._half_template(flat[left])
        out[~left] = self.total - self._half_template(1.0 - flat[~left])
        return out.reshape(v.shape)

    def template_slope(self, v):
        return 1.0 / (1.0 - self.kappa * self.ramp.template(v))

    def value(self, x):
        return self.template(self.L * np.asarray(x, dtype=float)) / self.L

    def slope(self, x):
        return self.template_slope(self.L * np.asarray(x, dtype=float))

    def curvature(self, x):
        """f'' = C g' f'^2."""
        x = np.asarray(x, dtype=float)
        return self.C * self.ramp.slope(x) * self.slope(x) ** 2

    def to_dict(self):
        return {
            'ramp': self.ramp.to_dict(),
            'L': self.L,
            'C': self.C,
            'sup_slope': self.sup_slope,
            'slope_bound': self.slope_bound,
            'endpoint': self.total / self.L,
            'quadrature_tol': self.quadrature_tol,
        }


@lru_cache(maxsize=32)
def build_stretch(L, rel_tol=1e-12, simpson_tol=1e-13, max_steps=200, quadrature_tol=1e-11):
    ramp = build_g(L)
    C = solve_C(ramp, rel_tol=rel_tol, simpson_tol=simpson_tol, max_steps=max_steps)
    profile = StretchProfile(ramp, C, quadrature_tol=quadrature_tol, simpson_tol=simpson_tol)
    logger.info(f"Stretch profile L={profile.L:g}: C={profile.C:.6f} (C/L={profile.kappa:.4f}), sup f'={profile.sup_slope:.4f}")
    return profile


# --- Slide profile rho ---

@dataclass(frozen=True)
class SlideProfile:
    """
    rho = 2k on [2k, 2k+1] and climbs by 2 along a quintic smooth step on
    [2k+1, 2k+2]; 0 below the origin and 2 * num_cells from 2 * num_cells on.
    """
    num_cells: int

    MAX_SLOPE = 3.75
    MAX_CURVATURE = 40.0 / math.sqrt(3.0)

    def _reduce(self, x):
        xc = np.clip(np.asarray(x, dtype=float), 0.0, 2.0 * self.num_cells)
        k = np.floor(xc / 2.0)
        t = np.clip(xc - 2.0 * k - 1.0, 0.0, 1.0)
        return k, t

    def rho(self, x):
        k, t = self._reduce(x)
        return 2.0 * k + 2.0 * _quintic(t)

    def rho_prime(self, x):
        _, t = self._reduce(x)
        return 2.0 * _quintic_slope(t)

    def rho_second(self, x):
        _, t = self._reduce(x)
        return 2.0 * _quintic_curvature(t)

    def to_dict(self):
        return {'num_cells': self.num_cells, 'max_slope': self.MAX_SLOPE, 'max_curvature': self.MAX_CURVATURE}


# --- Primitive maps ---

class PrimitiveMap(ABC):
    kind = 'primitive'

    @abstractmethod
    def value(self, points):
        ...

    @abstractmethod
    def jacobian(self, points):
        ...

    def evaluate(self, points):
        points = as_batch(points)
        return self.value(points), self.jacobian(points)

    def to_dict(self):
        return {'kind': self.kind}


def _identity_stack(n, dim=4):
    return np.broadcast_to(np.eye(dim), (n, dim, dim)).copy()


class LinearSymplectic(PrimitiveMap):
    kind = 'linear_symplectic'

    def __init__(self, matrix, offset=None, label='linear'):
        self.matrix = np.asarray(matrix, dtype=float)
        self.offset = np.zeros(4) if offset is None else np.asarray(offset, dtype=float)
        self.label = label

    def value(self, points):
        return as_batch(points) @ self.matrix.T + self.offset

    def jacobian(self, points):
        n = as_batch(points).shape[0]
        return np.broadcast_to(self.matrix, (n, 4, 4)).copy()

    def to_dict(self):
        return {'kind': self.kind, 'label': self.label,
                'matrix': self.matrix.tolist(), 'offset': self.offset.tolist()}


class Translation(PrimitiveMap):
    kind = 'translation'

    def __init__(self, offset):
        self.offset = np.asarray(offset, dtype=float)

    def value(self, points):
        return as_batch(points) + self.offset

    def jacobian(self, points):
        return _identity_stack(as_batch(points).shape[0])

    def to_dict(self):
        return {'kind': self.kind, 'offset': self.offset.tolist()}


def taffy_eval(profile, num_cells, x, y):
    """
    Taffy stretch on one factor, without domain checks. Cells [i, i+1-1/L)
    translate by i; the gap [i+1-1/L, i+1] is stretched by f onto
    [2i+1-1/L, 2i+2]. Beyond the last gap the map continues as the
    translation by num_cells.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    width = 1.0 / profile.L
    i = np.clip(np.floor(x), 0, num_cells - 1)
    frac = x - i
    gap = (frac >= 1.0 - width) & (frac <= 1.0)
    beyond = frac > 1.0
    u = np.clip(frac - (1.0 - width), 0.0, width)

    stretched = np.where(gap, profile.value(u), 0.0)
    slope = np.where(gap, profile.slope(u), 1.0)
    curvature = np.where(gap, profile.curvature(u), 0.0)

    X = np.where(gap, 2.0 * i + 1.0 - width + stretched, np.where(beyond, x + i + 1.0, x + i))
    Y = 0.5 + (y - 0.5) / slope
    jac = np.zeros(x.shape + (2, 2))
    jac[..., 0, 0] = slope
    jac[..., 1, 0] = -(y - 0.5) * curvature / slope ** 2
    jac[..., 1, 1] = 1.0 / slope
    return X, Y, jac


def taffy_map(profile, num_cells, points):
    """Taffy stretch of points in [0, M] x [0, 1]; returns (images, 2x2 Jacobians)."""
    pts = as_batch(points, dim=2)
    x, y = pts[:, 0], pts[:, 1]
    outside = (x < -DOMAIN_TOL) | (x > num_cells + DOMAIN_TOL) | (y < -DOMAIN_TOL) | (y > 1 + DOMAIN_TOL)
    if outside.any():
        raise DomainError(f"{int(outside.sum())} point(s) outside [0, {num_cells}] x [0, 1], e.g. {pts[outside][0].tolist()}.")
    X, Y, jac = taffy_eval(profile, num_cells, x, y)
    return np.column_stack([X, Y]), jac


class TaffyFactor(PrimitiveMap):
    kind = 'taffy'

    def __init__(self, factor, profile, num_cells):
        if factor not in (0, 1):
            raise DomainError(f"Symplectic factor must be 0 or 1, got {factor}.")
        self.factor = factor
        self.profile = profile
        self.num_cells = num_cells

    def _eval(self, points):
        pts = as_batch(points)
        k = 2 * self.factor
        return pts, k, taffy_eval(self.profile, self.num_cells, pts[:, k], pts[:, k + 1])

    def value(self, points):
        pts, k, (X, Y, _) = self._eval(points)
        out = pts.copy()
        out[:, k] = X
        out[:, k + 1] = Y
        return out

    def jacobian(self, points):
        pts, k, (_, _, block) = self._eval(points)
        jac = _identity_stack(pts.shape[0])
        jac[:, k:k + 2, k:k + 2] = block
        return jac

    def to_dict(self):
        return {'kind': self.kind, 'factor': self.factor, 'num_cells': self.num_cells,
                'profile': self.profile.to_dict()}


class Slide1(PrimitiveMap):
    """Time-one flow of H = -rho(x1) x2: (x1, y1 + rho'(x1) x2, x2, y2 + rho(x1))."""
    kind = 'slide_x1'

    def __init__(self, profile):
        self.profile = profile

    def value(self, points):
        pts = as_batch(points)
        x1, x2 = pts[:, 0], pts[:, 2]
        out = pts.copy()
        out[:, 1] += self.profile.rho_prime(x1) * x2
        out[:, 3] += self.profile.rho(x1)
        return out

    def jacobian(self, points):
        pts = as_batch(points)
        x1, x2 = pts[:, 0], pts[:, 2]
        slope = self.profile.rho_prime(x1)
        jac = _identity_stack(pts.shape[0])
        jac[:, 1, 0] = self.profile.rho_second(x1) * x2
        jac[:, 1, 2] = slope
        jac[:, 3, 0] = slope
        return jac

    def to_dict(self):
        return {'kind': self.kind, 'profile': self.profile.to_dict()}


class Slide2(PrimitiveMap):
    """Time-one flow of H = -rho(y2) y1: (x1 - rho(y2), y1, x2 - rho'(y2) y1, y2)."""
    kind = 'slide_y2'

    def __init__(self, profile):
        self.profile = profile

    def value(self, points):
        pts = as_batch(points)
        y1, y2 = pts[:, 1], pts[:, 3]
        out = pts.copy()
        out[:, 0] -= self.profile.rho(y2)
        out[:, 2] -= self.profile.rho_prime(y2) * y1
        return out

    def jacobian(self, points):
        pts = as_batch(points)
        y1, y2 = pts[:, 1], pts[:, 3]
        slope = self.profile.rho_prime(y2)
        jac = _identity_stack(pts.shape[0])
        jac[:, 0, 3] = -slope
        jac[:, 2, 1] = -slope
        jac[:, 2, 3] = -self.profile.rho_second(y2) * y1
        return jac

    def to_dict(self):
        return {'kind': self.kind, 'profile': self.profile.to_dict()}


def cube_to_prism(R):
    """(x, y) -> (2R(x + R), (y + R)/(2R)) on each factor."""
    if not R > 0:
        raise DomainError(f"Cube half-width R must be positive, got {R}.")
    s = 2.0 * R
    matrix = np.diag([s, 1.0 / s, s, 1.0 / s])
    offset = np.array([s * R, 0.5, s * R, 0.5])
    return LinearSymplectic(matrix, offset, label='cube_to_prism')


# --- The plan ---

def cell_count(R):
    return max(1, math.ceil(4.0 * R * R - 1e-9))


@dataclass(frozen=True)
class FoldingPlan:
    R: float
    L: float
    M: int
    stretch: StretchProfile
    slide: SlideProfile
    stack: tuple

    @property
    def prism_length(self):
        return 4.0 * self.R * self.R

    def value(self, points):
        out = as_batch(points)
        for primitive in self.stack:
            out = primitive.value(out)
        return out

    def jacobian(self, points):
        return self.evaluate(points)[1]

    def evaluate(self, points):
        current = as_batch(points)
        jac = _identity_stack(current.shape[0])
        for primitive in self.stack:
            step = primitive.jacobian(current)
            current = primitive.value(current)
            jac = step @ jac
        return current, jac

    def check_domain(self, points):
        pts = as_batch(points)
        outside = np.any(np.abs(pts) > self.R + DOMAIN_TOL, axis=1)
        if outside.any():
            raise DomainError(
                f"{int(outside.sum())} point(s) outside K(R) = [-{self.R}, {self.R}]^4, e.g. {pts[outside][0].tolist()}."
            )
        return pts

    def to_prism(self, points):
        return self.stack[0].value(points)

    def from_prism(self, prism_points):
        s = 2.0 * self.R
        pts = as_batch(prism_points)
        return np.column_stack([
            pts[:, 0] / s - self.R, pts[:, 1] * s - self.R,
            pts[:, 2] / s - self.R, pts[:, 3] * s - self.R,
        ])

    def _cell_of(self, x):
        i = np.clip(np.floor(x), 0, self.M - 1)
        in_cell = (x - i) < 1.0 - 1.0 / self.L
        return np.where(in_cell, i, -1).astype(int)

    def block_index(self, points):
        """(i, j) prism cells per point; -1 marks a wall coordinate."""
        prism = self.to_prism(points)
        return np.column_stack([self._cell_of(prism[:, 0]), self._cell_of(prism[:, 2])])

    def in_wall(self, points):
        return np.any(self.block_index(points) < 0, axis=1)

    def _uniform_prism(self, rng, n):
        pts = rng.random((n, 4))
        pts[:, 0] *= self.prism_length
        pts[:, 2] *= self.prism_length
        return pts

    def sample_blocks(self, rng, n):
        """Uniform points of K(R) whose prism image lies in some X_i x X_j."""
        kept, total = [], 0
        while total < n:
            prism = self._uniform_prism(rng, max(2 * (n - total), 64))
            ok = (self._cell_of(prism[:, 0]) >= 0) & (self._cell_of(prism[:, 2]) >= 0)
            kept.append(prism[ok])
            total += int(ok.sum())
        return self.from_prism(np.concatenate(kept)[:n])

    def sample_seams(self, rng, n):
        """Uniform points of K(R) whose first prism coordinate lies in a gap."""
        kept, total = [], 0
        width = 1.0 / self.L
        while total < n:
            m = max(2 * (n - total), 64)
            prism = self._uniform_prism(rng, m)
            gap = rng.integers(0, self.M, size=m)
            prism[:, 0] = gap + 1.0 - width + width * rng.random(m)
            ok = prism[:, 0] <= self.prism_length
            kept.append(prism[ok])
            total += int(ok.sum())
        return self.from_prism(np.concatenate(kept)[:n])

    def block_box(self, i, j):
        """Closed box containing the final image of X_i x X_j, as (lower, upper)."""
        w = 1.0 / self.L
        lower = np.array([-0.5, -0.5, 2.0 * j, 2.0 * i])
        upper = np.array([0.5 - w, 0.5, 2.0 * j + 1.0 - w, 2.0 * i + 1.0])
        return lower, upper

    def image_radius_bound(self):
        """Upper bound for sqrt(x1^2 + y1^2) over the image of K(R)."""
        reach = 2.0 * self.M
        return math.hypot(reach + 0.5, SlideProfile.MAX_SLOPE * reach + 0.5)

    def to_dict(self):
        return {
            'R': self.R,
            'L': self.L,
            'M': self.M,
            'wall_volume': wall_volume_closed_form(self.R, self.L),
            'image_radius_bound': self.image_radius_bound(),
            'stack': [primitive.to_dict() for primitive in self.stack],
        }


def compose_plan(R, L, **stretch_options):
    R, L = float(R), float(L)
    if not R > 0:
        raise DomainError(f"Cube half-width R must be positive, got {R}.")
    if not L >= 2:
        raise DomainError(f"Lipschitz budget L must be at least 2, got {L}.")
    M = cell_count(R)
    stretch = build_stretch(L, **stretch_options)
    slide = SlideProfile(num_cells=M)
    stack = (
        cube_to_prism(R),
        TaffyFactor(0, stretch, M),
        TaffyFactor(1, stretch, M),
        Slide1(slide),
        Slide2(slide),
        Translation([-0.5, -0.5, 0.0, 0.0]),
    )
    logger.info(f"Folding plan R={R:g} L={L:g}: {M} cells per factor, {len(stack)} primitive maps")
    return FoldingPlan(R=R, L=L, M=M, stretch=stretch, slide=slide, stack=stack)


def eval_plan(plan, p):
    pts = plan.check_domain(p)
    out = plan.value(pts)
    return out[0] if np.ndim(p) == 1 else out


def eval_with_jacobian(plan, p):
    pts = plan.check_domain(p)
    value, jac = plan.evaluate(pts)
    if np.ndim(p) == 1:
        return value[0], jac[0]
    return value, jac


def wall_volume_closed_form(R, L):
    """
    Prism volume of the complement of the blocks X_i x X_j inside
    [0, 4R^2]^2. Each factor loses a gap of width 1/L per full cell and
    whatever of the last gap fits before 4R^2, so for an integer 4R^2 = M
    this is M^2 (2/L - 1/L^2).
    """
    if not R > 0 or not L >= 2:
        raise DomainError(f"Need R > 0 and L >= 2, got R={R}, L={L}.")
    M = cell_count(R)
    length = 4.0 * R * R
    gaps = (M - 1) / L + max(0.0, length - (M - 1.0 / L))
    blocks = length - gaps
    return length * length - blocks * blocks
