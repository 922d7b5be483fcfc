"""
Model symplectomorphisms: the Oakley-Usher map from the unit codisk bundle
of RP^n into CP^n (n = 1, 2), toric action-angle coordinates on C^2, and
the Lagrangian disk used for Minkowski experiments.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.linalg import null_space

from .exceptions import DomainError

logger = logging.getLogger('nonsqueeze')

CONSTRAINT_TOL = 1e-12
SERIES_CUTOFF = 1e-4
PULLBACK_MAX_NORM = 0.9
TWO_PI = 2.0 * math.pi


# --- Cotangent and projective points ---

@dataclass(frozen=True)
class CotangentPoint:
    """[q, p] in the unit codisk bundle of RP^n; (q, p) and (-q, -p) are the same point."""
    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        p = np.asarray(self.p, dtype=float)
        if q.shape != p.shape or q.ndim != 1 or q.size not in (2, 3):
            raise DomainError(f"q and p must be matching vectors in R^2 or R^3, got {q.shape} and {p.shape}.")
        if abs(np.linalg.norm(q) - 1.0) > CONSTRAINT_TOL:
            raise DomainError(f"|q| = {np.linalg.norm(q)!r} is not 1.")
        if abs(q @ p) > CONSTRAINT_TOL:
            raise DomainError(f"<q, p> = {q @ p!r} is not 0.")
        if np.linalg.norm(p) > 1.0 + CONSTRAINT_TOL:
            raise DomainError(f"|p| = {np.linalg.norm(p)!r} exceeds 1.")
        object.__setattr__(self, 'q', q)
        object.__setattr__(self, 'p', p)

    @property
    def n(self):
        return self.q.size - 1

    @property
    def norm_p(self):
        return float(np.linalg.norm(self.p))

    def antipode(self):
        return CotangentPoint(-self.q, -self.p)

    @classmethod
    def random(cls, rng, n=2, max_norm=1.0):
        q = rng.standard_normal(n + 1)
        q /= np.linalg.norm(q)
        p = rng.standard_normal(n + 1)
        p -= (p @ q) * q
        p *= max_norm * rng.random() / np.linalg.norm(p)
        return cls(q, p)


@dataclass(frozen=True)
class ProjectivePoint:
    coords: np.ndarray

    def __post_init__(self):
        z = np.asarray(self.coords, dtype=complex)
        if z.ndim != 1 or not np.any(np.abs(z) > 0):
            raise DomainError(f"Projective coordinates must be a nonzero vector, got {self.coords!r}.")
        object.__setattr__(self, 'coords', z)

    def normalized(self):
        """Unit representative whose first coordinate of modulus > 1e-8 is positive real."""
        z = self.coords / np.linalg.norm(self.coords)
        lead = z[np.argmax(np.abs(z) > 1e-8)]
        return z * (abs(lead) / lead)

    def distance(self, other):
        """min |u - lambda v| over unit phases lambda, for unit representatives u, v."""
        u = self.coords / np.linalg.norm(self.coords)
        v = np.asarray(other.coords, dtype=complex)
        v = v / np.linalg.norm(v)
        overlap = np.vdot(v, u)
        phase = overlap / abs(overlap) if abs(overlap) > 0 else 1.0
        return float(np.linalg.norm(u - phase * v))

    def fermat_residual(self):
        u = self.coords / np.linalg.norm(self.coords)
        return abs(np.sum(u * u))

    def chart(self, k):
        if abs(self.coords[k]) == 0:
            raise DomainError(f"Coordinate {k} vanishes; chart {k} does not contain the point.")
        rest = np.delete(self.coords, k)
        return rest / self.coords[k]

    def best_chart(self):
        return int(np.argmax(np.abs(self.coords)))


def ou_f(x):
    """(1 - sqrt(1 - x^2)) / x^2 on (0, 1], with f(0) = 1/2."""
    x = np.asarray(x, dtype=float)
    if np.any((x < 0) | (x > 1)):
        raise DomainError(f"ou_f is defined on [0, 1], got {x[(x < 0) | (x > 1)].ravel()[0]!r}.")
    small = x < SERIES_CUTOFF
    x2 = x * x
    series = 0.5 + x2 / 8.0 + x2 * x2 / 16.0
    closed = 1.0 / (1.0 + np.sqrt(1.0 - np.where(small, 0.0, x2)))
    out = np.where(small, series, closed)
    return float(out) if out.ndim == 0 else out


def _ou_homogeneous(q, p):
    root = math.sqrt(ou_f(float(np.linalg.norm(p))))
    return root * p + 1j * q / root


def ou_map(cp):
    """[sqrt(f(|p|)) p + i q / sqrt(f(|p|))]."""
    if not isinstance(cp, CotangentPoint):
        raise DomainError(f"ou_map expects a CotangentPoint, got {type(cp).__name__}.")
    return ProjectivePoint(_ou_homogeneous(cp.q, cp.p))


def embed_circle_point(q, p):
    """D*RP^1 into D*RP^2 along the great circle in the (e1, e2) plane."""
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    if q.shape != (2,) or p.shape != (2,):
        raise DomainError("Circle points need q and p in R^2.")
    return CotangentPoint(np.append(q, 0.0), np.append(p, 0.0))


def ou_map_circle(q, p):
    return ou_map(CotangentPoint(q, p))


def include_projective(point):
    """CP^1 into CP^2 as the line z3 = 0."""
    return ProjectivePoint(np.append(point.coords, 0.0))


# --- Pullback check ---

def fubini_study_form(w, a, b):
    """
    Fubini-Study form at chart coordinate w on tangent vectors a, b, scaled
    so that a projective line has area 2*pi.
    """
    s = 1.0 + np.vdot(w, w).real
    h = (s * np.vdot(a, b) - np.vdot(a, w) * np.vdot(w, b)) / (s * s)
    return 2.0 * h.imag


def fubini_study_line_area():
    """Area of the line {w2 = 0} in the chart under fubini_study_form."""
    e = np.array([1.0, 0.0], dtype=complex)

    def density(r):
        w = r * e
        return TWO_PI * r * fubini_study_form(w, e, 1j * e)

    area, _ = integrate.quad(density, 0.0, np.inf, epsabs=1e-13, epsrel=1e-12)
    return area


def tangent_basis(cp):
    """Orthonormal basis (columns, in R^{2n+2}) of the tangent space at (q, p)."""
    q, p = cp.q, cp.p
    gradients = np.vstack([
        np.concatenate([2.0 * q, np.zeros_like(q)]),
        np.concatenate([p, q]),
    ])
    return null_space(gradients)


def retract(q, p):
    q = q / np.linalg.norm(q)
    return q, p - (p @ q) * q


def ou_pullback_residual(cp, h=1e-5):
    """
    Max entry of |Phi^* omega_FS - dp^dq| on a tangent basis at cp, with the
    pushforward taken by central differences in the chart of largest |z_k|.
    """
    if cp.norm_p > PULLBACK_MAX_NORM:
        raise DomainError(f"|p| = {cp.norm_p:.6f} is above {PULLBACK_MAX_NORM}; the chart check breaks down near the quadric.")
    if not h > 0:
        raise DomainError(f"Finite-difference step must be positive, got {h}.")
    dim = cp.q.size
    basis = tangent_basis(cp)
    k = ProjectivePoint(_ou_homogeneous(cp.q, cp.p)).best_chart()
    w0 = ProjectivePoint(_ou_homogeneous(cp.q, cp.p)).chart(k)

    pushed = []
    for column in basis.T:
        images = []
        for sign in (1.0, -1.0):
            moved = np.concatenate([cp.q, cp.p]) + sign * h * column
            q, p = retract(moved[:dim], moved[dim:])
            images.append(ProjectivePoint(_ou_homogeneous(q, p)).chart(k))
        pushed.append((images[0] - images[1]) / (2.0 * h))

    size = basis.shape[1]
    fs = np.empty((size, size))
    canonical = np.empty((size, size))
    for a in range(size):
        dq_a, dp_a = basis[:dim, a], basis[dim:, a]
        for b in range(size):
            dq_b, dp_b = basis[:dim, b], basis[dim:, b]
            fs[a, b] = fubini_study_form(w0, pushed[a], pushed[b])
            canonical[a, b] = dp_a @ dq_b - dp_b @ dq_a
    return float(np.max(np.abs(fs - canonical)))


# --- Toric coordinates ---

def _as_pairs(values, name):
    arr = np.asarray(values, dtype=float)
    if arr.shape[-1] != 2:
        raise DomainError(f"{name} must be pairs, got shape {arr.shape}.")
    return arr


def toric_coords(x, theta):
    """z_j = sqrt(x_j / pi) e^{i theta_j}, returned as (x1, y1, x2, y2)."""
    x = _as_pairs(x, 'actions')
    theta = _as_pairs(theta, 'angles')
    if np.any(x <= 0):
        raise DomainError("Toric actions must be positive.")
    r = np.sqrt(x / math.pi)
    out = np.empty(np.broadcast_shapes(x.shape, theta.shape)[:-1] + (4,))
    out[..., 0::2] = r * np.cos(theta)
    out[..., 1::2] = r * np.sin(theta)
    return out


def moment_map(z):
    z = np.asarray(z, dtype=float)
    return math.pi * np.stack([z[..., 0] ** 2 + z[..., 1] ** 2, z[..., 2] ** 2 + z[..., 3] ** 2], axis=-1)


def toric_jacobian(x, theta):
    """d(x1, y1, x2, y2)/d(x1, theta1, x2, theta2); pulls back Omega to Omega / (2 pi)."""
    x = _as_pairs(x, 'actions')
    theta = _as_pairs(theta, 'angles')
    if np.any(x <= 0):
        raise DomainError("Toric actions must be positive.")
    r = np.sqrt(x / math.pi)
    jac = np.zeros(np.broadcast_shapes(x.shape, theta.shape)[:-1] + (4, 4))
    for j in range(2):
        c, s = np.cos(theta[..., j]), np.sin(theta[..., j])
        rj = r[..., j]
        jac[..., 2 * j, 2 * j] = c / (TWO_PI * rj)
        jac[..., 2 * j + 1, 2 * j] = s / (TWO_PI * rj)
        jac[..., 2 * j, 2 * j + 1] = -rj * s
        jac[..., 2 * j + 1, 2 * j + 1] = rj * c
    return jac


@dataclass(frozen=True)
class ToricContainmentReport:
    n: int
    seed: int
    height: float
    max_action: float
    max_moment_error: float
    inside: bool

    def to_dict(self):
        return {
            'n': self.n,
            'seed': self.seed,
            'height': self.height,
            'max_action': self.max_action,
            'max_moment_error': self.max_moment_error,
            'inside': self.inside,
        }


def triangle_torus_containment(fit, n, seed):
    """
    Sample the interior of the fitted triangle with uniform angles and check
    that every toric image lies in the open cylinder {pi |z2|^2 < 1}.
    """
    height = float(fit.height)
    if n < 0:
        raise DomainError(f"Sample count must be non-negative, got {n}.")
    if n == 0:
        return ToricContainmentReport(n=0, seed=seed, height=height, max_action=0.0, max_moment_error=0.0, inside=True)

    rng = np.random.default_rng(seed)
    vertices = np.array([[float(x), float(y)] for x, y in fit.image.vertices])
    actions = rng.dirichlet(np.ones(3), size=n) @ vertices
    actions = actions[np.all(actions > 0, axis=1)]
    angles = TWO_PI * rng.random(actions.shape)
    z = toric_coords(actions, angles)
    moments = moment_map(z)
    max_action = float(moments[:, 1].max())
    report = ToricContainmentReport(
        n=n,
        seed=seed,
        height=height,
        max_action=max_action,
        max_moment_error=float(np.max(np.abs(moments - actions))),
        inside=bool(max_action < 1.0),
    )
    logger.info(f"Toric containment: {n} samples, max pi|z2|^2 = {max_action:.6f}, height = {height:.6f}")
    return report


# --- Lagrangian disk ---

def lagrangian_disk_distance(p, R=math.sqrt(2.0)):
    """Distance to the disk {y1 = y2 = 0, x1^2 + x2^2 <= R^2}."""
    p = np.asarray(p, dtype=float)
    radial = np.hypot(p[..., 0], p[..., 2])
    overshoot = np.maximum(radial - R, 0.0)
    return np.sqrt(overshoot ** 2 + p[..., 1] ** 2 + p[..., 3] ** 2)


@dataclass(frozen=True)
class LagrangianDisk:
    R: float = math.sqrt(2.0)

    def __post_init__(self):
        if not self.R > 0:
            raise DomainError(f"Disk radius must be positive, got {self.R}.")

    def distance(self, p):
        return lagrangian_disk_distance(p, self.R)

    def bounding_box(self, t):
        reach = self.R + t
        return np.array([[-reach, reach], [-t, t], [-reach, reach], [-t, t]])

    def exact_tube_volume(self, t):
        """Volume of the open t-neighbourhood: disk times normal disks plus the edge half-tube."""
        R = self.R
        return math.pi ** 2 * (R * R * t * t + 4.0 / 3.0 * R * t ** 3 + 0.5 * t ** 4)
