"""
Numerical certification: symplecticity scans, Lipschitz estimates, seeded
Monte-Carlo volumes, t-neighbourhood curves and Minkowski fits.

Every sampler draws from Philox streams keyed by (seed, shard), so a result
depends only on the seed and the sample count, never on how the shards were
spread over workers.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gamma

from .exceptions import DomainError
from .folding_maps import as_batch, compose_plan, wall_volume_closed_form

logger = logging.getLogger('nonsqueeze')

OMEGA = np.array([
    [0.0, 1.0, 0.0, 0.0],
    [-1.0, 0.0, 0.0, 0.0],
    [0.0, 0.0, 0.0, 1.0],
    [0.0, 0.0, -1.0, 0.0],
])
FD_STEP = 1e-7
POWER_TOL = 1e-8
POWER_MAX_ITER = 500
RELIABLE_REL_ERROR = 0.05
CHUNK = 2 ** 14

ANALYTIC = 'analytic'
FINITE_DIFFERENCE = 'finite-difference'
MODES = (ANALYTIC, FINITE_DIFFERENCE)


def stream(seed, shard=0):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(shard,))))


def unit_ball_volume(l):
    if l < 0:
        raise DomainError(f"Dimension must be non-negative, got {l}.")
    return float(math.pi ** (l / 2.0) / gamma(l / 2.0 + 1.0))


def box_sampler(box):
    box = np.asarray(box, dtype=float)
    lo, hi = box[:, 0], box[:, 1]

    def sample(rng, n):
        return lo + (hi - lo) * rng.random((n, box.shape[0]))
    return sample


def cube_sampler(R):
    return box_sampler([[-R, R]] * 4)


# --- Jacobians and symplecticity ---

def finite_difference_jacobian(transform, points, step_scale=FD_STEP):
    """Central differences with step step_scale * max(1, |x_k|) per coordinate."""
    pts = as_batch(points)
    n, dim = pts.shape
    jac = np.empty((n, dim, dim))
    for k in range(dim):
        h = step_scale * np.maximum(1.0, np.abs(pts[:, k]))
        forward = pts.copy()
        backward = pts.copy()
        forward[:, k] += h
        backward[:, k] -= h
        jac[:, :, k] = (transform.value(forward) - transform.value(backward)) / (2.0 * h)[:, np.newaxis]
    return jac


def jacobian(transform, points, mode=ANALYTIC):
    if mode == ANALYTIC:
        return transform.jacobian(points)
    if mode == FINITE_DIFFERENCE:
        return finite_difference_jacobian(transform, points)
    raise DomainError(f"Unknown Jacobian mode '{mode}'; expected one of {MODES}.")


def symplectic_defect(jac):
    """||J^T Omega J - Omega||_max for each Jacobian in the batch."""
    jac = np.asarray(jac, dtype=float)
    if jac.ndim == 2:
        jac = jac[np.newaxis]
    pulled = np.swapaxes(jac, -1, -2) @ OMEGA @ jac
    return np.max(np.abs(pulled - OMEGA), axis=(-1, -2))


def composed_defect(stack, points, mode=ANALYTIC):
    """
    Symplectic defect of J = J_k ... J_1 for a stack of primitive maps,
    accumulated as sum_i P_i^T (J_i^T Omega J_i - Omega) P_i with
    P_i = J_{i-1} ... J_1. Forming J first and then J^T Omega J loses
    about eps |J|^2 to rounding; the sum only carries each factor's own
    defect. Returns (defects, J).
    """
    current = as_batch(points)
    prefix = np.broadcast_to(np.eye(4), (current.shape[0], 4, 4)).copy()
    total = np.zeros_like(prefix)
    for primitive in stack:
        step = jacobian(primitive, current, mode)
        local = np.swapaxes(step, -1, -2) @ OMEGA @ step - OMEGA
        total += np.swapaxes(prefix, -1, -2) @ local @ prefix
        prefix = step @ prefix
        current = primitive.value(current)
    return np.max(np.abs(total), axis=(-1, -2)), prefix


def _defect_and_jacobian(transform, points, mode):
    # Finite differences of each factor would be amplified by the prefix, so
    # that mode differentiates the whole map.
    stack = getattr(transform, 'stack', None)
    if stack and mode == ANALYTIC:
        return composed_defect(stack, points, mode)
    jac = jacobian(transform, points, mode)
    return symplectic_defect(jac), jac


def relative_defect(jac):
    """Defect of J divided by max(1, ||J||_max^2)."""
    jac = np.asarray(jac, dtype=float)
    scale = np.maximum(1.0, np.max(np.abs(jac), axis=(-1, -2)) ** 2)
    return symplectic_defect(jac) / scale


def symplecticity_residual(transform, points, mode=ANALYTIC):
    residuals, _ = _defect_and_jacobian(transform, points, mode)
    return float(residuals[0]) if np.ndim(points) == 1 else residuals


@dataclass(frozen=True)
class ScanReport:
    max: float
    mean: float
    argmax: list
    n: int
    seed: int
    mode: str

    def to_dict(self):
        return {
            'max': self.max,
            'mean': self.mean,
            'argmax': self.argmax,
            'n': self.n,
            'seed': self.seed,
            'mode': self.mode,
        }


@dataclass(frozen=True)
class SymplecticityReport(ScanReport):
    """``max`` is the absolute defect; ``relative_max`` divides the directly formed one by |J|^2."""
    relative_max: float = 0.0
    jacobian_max: float = 0.0

    def to_dict(self):
        data = super().to_dict()
        data.update({'relative_max': self.relative_max, 'jacobian_max': self.jacobian_max})
        return data


@dataclass(frozen=True)
class LipschitzReport(ScanReport):
    secant_max: float = 0.0
    fallbacks: int = 0

    def to_dict(self):
        data = super().to_dict()
        data.update({'secant_max': self.secant_max, 'fallbacks': self.fallbacks})
        return data


def _chunks(n):
    for start in range(0, n, CHUNK):
        yield start, min(CHUNK, n - start)


def symplecticity_scan(transform, sampler, n, seed, mode=ANALYTIC):
    if n < 1:
        raise DomainError(f"Scan needs at least one sample, got {n}.")
    if mode not in MODES:
        raise DomainError(f"Unknown Jacobian mode '{mode}'; expected one of {MODES}.")
    worst, worst_point, total = -1.0, None, 0.0
    relative, largest = 0.0, 0.0
    for shard, (start, size) in enumerate(_chunks(n)):
        points = sampler(stream(seed, shard), size)
        residuals, jac = _defect_and_jacobian(transform, points, mode)
        k = int(np.argmax(residuals))
        if residuals[k] > worst:
            worst, worst_point = float(residuals[k]), points[k].tolist()
        total += float(residuals.sum())
        relative = max(relative, float(relative_defect(jac).max()))
        largest = max(largest, float(np.abs(jac).max()))
    report = SymplecticityReport(
        max=worst, mean=total / n, argmax=worst_point, n=n, seed=seed, mode=mode,
        relative_max=relative, jacobian_max=largest,
    )
    logger.info(
        f"Symplecticity scan ({mode}): n={n} max={report.max:.3e} mean={report.mean:.3e} "
        f"relative={report.relative_max:.3e} max|J|={report.jacobian_max:.3e}"
    )
    return report


def spectral_norms(jac, rel_tol=POWER_TOL, max_iter=POWER_MAX_ITER):
    """Largest singular value per matrix by power iteration on J^T J; stalled entries fall back to SVD."""
    jac = np.asarray(jac, dtype=float)
    gram = np.swapaxes(jac, -1, -2) @ jac
    n, dim = gram.shape[0], gram.shape[-1]
    v = np.full((n, dim), 1.0 / math.sqrt(dim))
    v[:, 0] += 0.5
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    eigen = np.zeros(n)
    converged = np.zeros(n, dtype=bool)
    for _ in range(max_iter):
        w = np.einsum('nij,nj->ni', gram, v)
        updated = np.linalg.norm(w, axis=1)
        safe = np.where(updated > 0, updated, 1.0)
        converged = np.abs(updated - eigen) <= rel_tol * np.maximum(updated, np.finfo(float).tiny)
        eigen = updated
        v = w / safe[:, np.newaxis]
        if converged.all():
            break
    norms = np.sqrt(eigen)
    stalled = ~converged
    if stalled.any():
        norms[stalled] = np.linalg.norm(jac[stalled], ord=2, axis=(-2, -1))
    return norms, int(stalled.sum())


def lipschitz_estimate(transform, sampler, n, seed, pair_scale=1e-3):
    """Max Jacobian spectral norm over n samples, plus the max secant ratio over n close pairs."""
    if n < 1:
        raise DomainError(f"Lipschitz estimate needs at least one sample, got {n}.")
    worst, worst_point, total, secant, fallbacks = -1.0, None, 0.0, 0.0, 0
    for shard, (start, size) in enumerate(_chunks(n)):
        rng = stream(seed, shard)
        points = sampler(rng, size)
        norms, stalled = spectral_norms(transform.jacobian(points))
        fallbacks += stalled
        k = int(np.argmax(norms))
        if norms[k] > worst:
            worst, worst_point = float(norms[k]), points[k].tolist()
        total += float(norms.sum())

        direction = rng.standard_normal(points.shape)
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        partners = points + pair_scale * direction
        gaps = np.linalg.norm(transform.value(partners) - transform.value(points), axis=1)
        secant = max(secant, float(np.max(gaps / pair_scale)))
    report = LipschitzReport(
        max=worst, mean=total / n, argmax=worst_point, n=n, seed=seed, mode=ANALYTIC,
        secant_max=secant, fallbacks=fallbacks,
    )
    logger.info(f"Lipschitz estimate: n={n} spectral max={report.max:.4f} secant max={report.secant_max:.4f} fallbacks={fallbacks}")
    return report


# --- Monte-Carlo volumes ---

@dataclass(frozen=True)
class VolumeEstimate:
    value: float
    std_error: float
    n_samples: int
    hits: int
    seed: int
    bounding_box: list

    @property
    def relative_error(self):
        return self.std_error / self.value if self.value > 0 else math.inf

    def to_dict(self):
        return {
            'value': self.value,
            'std_error': self.std_error,
            'n_samples': self.n_samples,
            'hits': self.hits,
            'seed': self.seed,
            'bounding_box': self.bounding_box,
        }


def _box_volume(box):
    box = np.asarray(box, dtype=float)
    if box.ndim != 2 or box.shape[1] != 2:
        raise DomainError(f"Bounding box must be a list of [lo, hi] intervals, got shape {box.shape}.")
    widths = box[:, 1] - box[:, 0]
    if np.any(widths <= 0):
        raise DomainError(f"Bounding box {box.tolist()} has no volume.")
    return float(np.prod(widths))


def mc_volume(indicator, box, n, seed, shard_size=2 ** 16, workers=1):
    """Volume of {indicator} inside box from n uniform samples, sharded by (seed, shard)."""
    if n < 1:
        raise DomainError(f"Monte-Carlo needs at least one sample, got {n}.")
    if shard_size < 1 or workers < 1:
        raise DomainError(f"shard_size and workers must be positive, got {shard_size} and {workers}.")
    n = int(n)
    volume = _box_volume(box)
    sample = box_sampler(box)
    shards = [(s, min(shard_size, n - s * shard_size)) for s in range(math.ceil(n / shard_size))]

    def count(shard):
        index, size = shard
        hits = int(np.count_nonzero(indicator(sample(stream(seed, index), size))))
        logger.debug(f"shard {index}: {hits}/{size} hits")
        return hits

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            hits = sum(pool.map(count, shards))
    else:
        hits = sum(count(shard) for shard in shards)

    fraction = hits / n
    return VolumeEstimate(
        value=volume * fraction,
        std_error=volume * math.sqrt(fraction * (1.0 - fraction) / n),
        n_samples=n,
        hits=hits,
        seed=seed,
        bounding_box=np.asarray(box, dtype=float).tolist(),
    )


def error_halving(indicator, box, n, seed, shard_size=2 ** 16, workers=1):
    """
    Estimates from n and 4n samples and the ratio of their standard errors,
    which is 1/2 up to the change in the hit fraction.
    """
    coarse = mc_volume(indicator, box, n, seed, shard_size, workers)
    if coarse.std_error == 0:
        raise DomainError("Indicator is constant on the sampled box; the Monte-Carlo error is zero.")
    fine = mc_volume(indicator, box, 4 * n, seed, shard_size, workers)
    ratio = fine.std_error / coarse.std_error
    logger.info(f"Monte-Carlo error {coarse.std_error:.3e} -> {fine.std_error:.3e} at 4x samples, ratio {ratio:.4f}")
    return coarse, fine, ratio


def _cube_box(plan):
    return [[-plan.R, plan.R]] * 4


def defect_volume(plan, r, n, seed, shard_size=2 ** 16, workers=1):
    """Measure of the points of K(R) whose image leaves the open cylinder x1^2 + y1^2 < r^2."""
    if not r > 0:
        raise DomainError(f"Cylinder radius must be positive, got {r}.")
    r2 = r * r

    def outside(points):
        image = plan.value(points)
        return image[:, 0] ** 2 + image[:, 1] ** 2 >= r2

    estimate = mc_volume(outside, _cube_box(plan), n, seed, shard_size, workers)
    logger.info(f"Defect R={plan.R:g} L={plan.L:g} r={r:g}: {estimate.value:.6e} +- {estimate.std_error:.1e}")
    return estimate


def wall_volume_mc(plan, n, seed, shard_size=2 ** 16, workers=1):
    return mc_volume(plan.in_wall, _cube_box(plan), n, seed, shard_size, workers)


def neighborhood_volume(distance_fn, t, box, n, seed, shard_size=2 ** 16, workers=1):
    """Volume of {p in box : distance_fn(p) < t}."""
    if t < 0:
        raise DomainError(f"Neighbourhood radius must be non-negative, got {t}.")
    if t == 0:
        return VolumeEstimate(value=0.0, std_error=0.0, n_samples=0, hits=0, seed=seed,
                              bounding_box=np.asarray(box, dtype=float).tolist())
    return mc_volume(lambda points: distance_fn(points) < t, box, n, seed, shard_size, workers)


# --- Minkowski curves ---

OK = 'ok'
NON_MONOTONE = 'non_monotone'
TOO_NOISY = 'too_noisy'


@dataclass(frozen=True)
class MinkowskiCurve:
    t_values: list
    volumes: list
    std_errors: list
    fitted_dimension: float
    content_at_2: float
    content_t: float
    content_trend: list
    flags: tuple = (OK,)

    @property
    def ok(self):
        return self.flags == (OK,)

    def to_dict(self):
        return {
            't_values': self.t_values,
            'volumes': self.volumes,
            'std_errors': self.std_errors,
            'fitted_dimension': self.fitted_dimension,
            'content_at_2': self.content_at_2,
            'content_t': self.content_t,
            'content_trend': self.content_trend,
            'flags': list(self.flags),
        }

    def rows(self):
        return [
            {'t': t, 'volume': v, 'std_error': s}
            for t, v, s in zip(self.t_values, self.volumes, self.std_errors)
        ]


def minkowski_fit(t_values, volumes, std_errors=None, ambient_dim=4):
    """
    Fit log Vol(N_t) against log t. The dimension is ambient_dim minus the
    slope; the 2-content is Vol / (alpha_{ambient-2} t^2) at the smallest t
    whose relative error is within 5%.
    """
    t = np.asarray(t_values, dtype=float)
    vol = np.asarray(volumes, dtype=float)
    err = np.zeros_like(vol) if std_errors is None else np.asarray(std_errors, dtype=float)
    if not t.shape == vol.shape == err.shape:
        raise DomainError("t_values, volumes and std_errors must have the same length.")
    if t.size < 4:
        raise DomainError(f"Minkowski fit needs at least 4 t-values, got {t.size}.")
    if np.any(t <= 0) or np.any(vol <= 0):
        raise DomainError("Minkowski fit needs positive t-values and volumes.")
    if t.max() / t.min() < 10.0:
        raise DomainError(f"t-values span {t.max() / t.min():.2f}x; a fit needs at least one decade.")

    order = np.argsort(-t)
    t, vol, err = t[order], vol[order], err[order]
    slope = np.polyfit(np.log(t), np.log(vol), 1)[0]
    contents = vol / (unit_ball_volume(ambient_dim - 2) * t * t)

    flags = []
    if np.any(vol[1:] > vol[:-1] + 3.0 * (err[1:] + err[:-1])):
        flags.append(NON_MONOTONE)
    reliable = np.flatnonzero(err <= RELIABLE_REL_ERROR * vol)
    if reliable.size:
        pick = reliable[-1]
        content, content_t = float(contents[pick]), float(t[pick])
    else:
        flags.append(TOO_NOISY)
        content, content_t = None, None

    return MinkowskiCurve(
        t_values=t.tolist(),
        volumes=vol.tolist(),
        std_errors=err.tolist(),
        fitted_dimension=float(ambient_dim - slope),
        content_at_2=content,
        content_t=content_t,
        content_trend=contents.tolist(),
        flags=tuple(flags) or (OK,),
    )


def _distance_and_box(target, box):
    if hasattr(target, 'distance') and hasattr(target, 'bounding_box'):
        return target.distance, target.bounding_box
    if callable(target) and box is not None:
        return target, box if callable(box) else (lambda t: box)
    raise DomainError("Need a set with distance/bounding_box, or a distance function and a box.")


def minkowski_curve(target, t_values, n, seed, box=None, shard_size=2 ** 16, workers=1):
    distance, box_for = _distance_and_box(target, box)
    estimates = [neighborhood_volume(distance, t, box_for(t), n, seed, shard_size, workers) for t in t_values]
    curve = minkowski_fit(
        t_values,
        [e.value for e in estimates],
        [e.std_error for e in estimates],
    )
    logger.info(f"Minkowski curve: dimension {curve.fitted_dimension:.4f}, content {curve.content_at_2}, flags {curve.flags}")
    return curve


@dataclass(frozen=True)
class TubeBoundReport:
    R: float
    r: float
    slack: float
    ratio_bound: float
    rows: list = field(default_factory=list)
    content_at_2: float = None
    content_bound: float = None
    content_passed: bool = None

    @property
    def passed(self):
        return all(row['passed'] for row in self.rows) and self.content_passed is not False

    def to_dict(self):
        return {
            'R': self.R,
            'r': self.r,
            'slack': self.slack,
            'ratio_bound': self.ratio_bound,
            'rows': self.rows,
            'content_at_2': self.content_at_2,
            'content_bound': self.content_bound,
            'content_passed': self.content_passed,
            'passed': self.passed,
        }


def tube_bound_check(target, R, r, t_values, n, seed, slack=0.15, box=None, shard_size=2 ** 16, workers=1):
    """
    Check Vol(N_t(E)) >= pi^2 (R^2 - r^2) t^2 (1 - slack) at each t, and the
    2-content against pi (R^2 - r^2). The slack only loosens the finite-t
    tube volumes.
    """
    if not R > r > 0:
        raise DomainError(f"Need R > r > 0, got R={R}, r={r}.")
    if not 0 <= slack < 1:
        raise DomainError(f"Slack must lie in [0, 1), got {slack}.")
    distance, box_for = _distance_and_box(target, box)
    gap = R * R - r * r
    ratio_bound = gap * (1.0 - slack)
    if not t_values:
        return TubeBoundReport(R=R, r=r, slack=slack, ratio_bound=ratio_bound)

    rows = []
    content, content_t = None, None
    for t in sorted(t_values, reverse=True):
        estimate = neighborhood_volume(distance, t, box_for(t), n, seed, shard_size, workers)
        ratio = estimate.value / (math.pi ** 2 * t * t)
        rows.append({
            't': t,
            'volume': estimate.value,
            'std_error': estimate.std_error,
            'ratio': ratio,
            'passed': ratio >= ratio_bound,
        })
        if estimate.relative_error <= RELIABLE_REL_ERROR:
            content, content_t = estimate.value / (math.pi * t * t), t

    content_bound = math.pi * gap
    report = TubeBoundReport(
        R=R, r=r, slack=slack, ratio_bound=ratio_bound, rows=rows,
        content_at_2=content,
        content_bound=content_bound,
        content_passed=None if content is None else content >= content_bound,
    )
    logger.info(f"Volume obstruction check R={R:g} r={r:g}: passed={report.passed}, content {content} at t={content_t}")
    return report


# --- Defect scaling ---

@dataclass(frozen=True)
class DefectScalingReport:
    rows: list
    constants: list
    cylinder_radius: float

    def to_dict(self):
        return {'rows': self.rows, 'constants': self.constants, 'cylinder_radius': self.cylinder_radius}


def _spread(values):
    values = [v for v in values if v > 0]
    return max(values) / min(values) if values else math.inf


def defect_scaling(R_values, L_values, n, seed, lipschitz_samples=2000, cylinder_radius=1.0,
                   shard_size=2 ** 16, workers=1, **stretch_options):
    """
    defect * L and Lip / L over an (R, L) grid, with the measured constant
    C(R) = max_L defect * L compared against R^7. Rescaling the embedding by
    a factor s sends K(R) into the cylinder of radius s and multiplies the
    defect by s^4; that rescaled defect is reported per row.
    """
    if not R_values or not L_values:
        raise DomainError("defect_scaling needs at least one R and one L.")
    if not cylinder_radius > 0:
        raise DomainError(f"Cylinder radius must be positive, got {cylinder_radius}.")
    rows, constants = [], []
    for R in R_values:
        per_R = []
        for L in L_values:
            plan = compose_plan(R, L, **stretch_options)
            defect = defect_volume(plan, 1.0, n, seed, shard_size, workers)
            lip = lipschitz_estimate(plan, plan.sample_seams, lipschitz_samples, seed)
            per_R.append({
                'R': float(R),
                'L': float(L),
                'defect': defect.value,
                'std_error': defect.std_error,
                'defect_times_L': defect.value * L,
                'wall_volume': wall_volume_closed_form(R, L),
                'lipschitz': lip.max,
                'lipschitz_over_L': lip.max / L,
                'rescaled_defect': cylinder_radius ** 4 * defect.value,
            })
        rows.extend(per_R)
        scaled = [row['defect_times_L'] for row in per_R]
        constant = max(scaled)
        constants.append({
            'R': float(R),
            'C': constant,
            'C_over_R7': constant / R ** 7,
            'defect_spread': _spread(scaled),
            'lipschitz_spread': _spread([row['lipschitz_over_L'] for row in per_R]),
        })
    return DefectScalingReport(rows=rows, constants=constants, cylinder_radius=cylinder_radius)
