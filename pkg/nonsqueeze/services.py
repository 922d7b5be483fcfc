import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from django.conf import settings
from django.utils import timezone
from scipy.spatial.transform import Rotation

from . import serializers as s
from .exceptions import DomainError
from .folding_maps import (
    TaffyFactor, compose_plan, cube_to_prism, stretch_integral, wall_volume_closed_form,
)
from .markov_affine import (
    build_triangle, canonical_form, enumerate_tree, find_fitting_triple, fit_in_strip, is_markov,
)
from .measure_verify import (
    OMEGA, cube_sampler, defect_scaling, defect_volume, error_halving, lipschitz_estimate, mc_volume,
    minkowski_curve, spectral_norms, stream, symplecticity_scan, tube_bound_check, unit_ball_volume,
    wall_volume_mc,
)
from .model_maps import (
    CotangentPoint, LagrangianDisk, ProjectivePoint, embed_circle_point, fubini_study_line_area,
    include_projective, moment_map, ou_f, ou_map, ou_map_circle, ou_pullback_residual,
    toric_jacobian, triangle_torus_containment,
)

logger = logging.getLogger('nonsqueeze')

# Separate Philox stream keys so auxiliary samples never reuse a scan's shards.
CONTAINMENT_STREAM = 1 << 20
PAIR_STREAM = 1 << 21
POINT_DUMP_ROWS = 1000
VERTEX_NAMES = {'a': 0, 'b': 1, 'c': 2}


@dataclass
class TaskOutcome:
    task: str
    name: str
    summary: str
    config: dict
    config_hash: str
    seed: int
    result: dict
    failures: list = field(default_factory=list)
    paths: list = field(default_factory=list)

    @property
    def passed(self):
        return not self.failures


class ReportWriter:
    """
    Writes report envelopes as sorted, indented JSON and tabular outputs as
    CSV. Apart from created_at, a report is a pure function of its config.
    """
    def __init__(self, output_dir=None):
        self.output_dir = Path(output_dir or settings.REPORT_OUTPUT_DIR)
        self.output_dir.mkdir(parents=True, exist_ok=True)

    def write_report(self, name, task, config, config_hash, seed, result):
        envelope = s.ReportSerializer({
            'schema': settings.REPORT_SCHEMA_VERSION,
            'task': task,
            'config': config,
            'config_hash': config_hash,
            'seed': seed,
            'created_at': timezone.now(),
            'result': result,
        }).data
        path = self.output_dir / f"{name}.json"
        path.write_text(json.dumps(envelope, sort_keys=True, indent=2) + '\n', encoding='utf-8')
        logger.debug(f"Wrote {path}")
        return path

    def write_csv(self, name, rows, columns):
        path = self.output_dir / f"{name}.csv"
        pd.DataFrame(rows, columns=columns).to_csv(path, index=False)
        logger.debug(f"Wrote {path}")
        return path


class TaskService:
    """
    One CLI task: fill defaults from settings, validate through the task's
    config serializer, run, gate and write the report.
    """
    task = None
    aliases = ()
    config_class = None
    # config field -> NONSQUEEZE_DEFAULTS key
    defaults_map = {}

    def __init__(self, options, writer, workers=1, name=None):
        self.options = options
        self.writer = writer
        self.workers = workers
        self.name = name or self.task.replace(' ', '_')
        self.defaults = settings.NONSQUEEZE_DEFAULTS
        self.failures = []
        self.paths = []
        self.config = None

    def process(self):
        serializer = self.config_class(data=self._with_defaults())
        serializer.is_valid(raise_exception=True)
        self.config = serializer.validated_data
        config, config_hash = serializer.config, serializer.config_hash

        result, summary = self.run()
        self.paths.insert(0, self.writer.write_report(
            self.name, self.task, config, config_hash, self.config['seed'], result
        ))
        logger.info(f"{self.task}: {summary}")
        return TaskOutcome(
            task=self.task,
            name=self.name,
            summary=summary,
            config=config,
            config_hash=config_hash,
            seed=self.config['seed'],
            result=result,
            failures=list(self.failures),
            paths=[str(p) for p in self.paths],
        )

    def run(self):
        raise NotImplementedError

    def _with_defaults(self):
        data = {key: self.defaults[source] for key, source in self.defaults_map.items()}
        data['seed'] = self.defaults['seed']
        data.update({key: value for key, value in self.options.items() if value is not None})
        return data

    def _gate(self, passed, message):
        if not passed:
            logger.warning(f"{self.name}: gate failed: {message}")
            self.failures.append(message)
        return bool(passed)

    def _csv(self, suffix, rows, columns):
        name = f"{self.name}_{suffix}" if suffix else self.name
        self.paths.append(self.writer.write_csv(name, rows, columns))

    @property
    def seed(self):
        return self.config['seed']

    @property
    def mc_options(self):
        return {'shard_size': self.defaults['shard_size'], 'workers': self.workers}


# --- Markov tasks ---

class MarkovTreeService(TaskService):
    task = 'markov tree'
    config_class = s.MarkovTreeConfig
    defaults_map = {'max_entry': 'markov_max_entry'}

    def run(self):
        triples = enumerate_tree(self.config['max_entry'])
        self._gate(all(is_markov(*t.entries) for t in triples), "enumerated triple fails the Markov equation")
        self._csv(None, [t.entries for t in triples], ['a', 'b', 'c'])
        result = {
            'max_entry': self.config['max_entry'],
            'count': len(triples),
            'triples': [s.MarkovTripleField().to_representation(t) for t in triples],
        }
        return result, f"{len(triples)} Markov triples with entries <= {self.config['max_entry']}"


class MarkovFitService(TaskService):
    task = 'markov fit'
    config_class = s.MarkovFitConfig
    defaults_map = {'iteration_cap': 'markov_iteration_cap'}

    def run(self):
        fit = find_fitting_triple(self.config['alpha'], self.config['iteration_cap'])
        alpha = s.rational_string(fit.alpha)
        if fit.fits:
            summary = f"alpha={alpha} fits via {fit.triple} at branch index {fit.branch_index}, height {s.rational_string(fit.height)}"
        else:
            summary = f"alpha={alpha} does not fit: height >= {s.rational_string(fit.certificate.height_lower_bound)}"
        return s.FitResultSerializer(fit).data, summary


class MarkovTriangleService(TaskService):
    task = 'markov triangle'
    config_class = s.MarkovTriangleConfig

    def run(self):
        triple, alpha = self.config['triple'], self.config['alpha']
        triangle = build_triangle(triple, alpha, VERTEX_NAMES[self.config['vertex']])
        canonical, _ = canonical_form(triangle.realization)
        fit = fit_in_strip(triangle.realization)
        result = dict(s.MarkovTriangleSerializer(triangle).data)
        result.update({
            'affine_perimeter': s.rational_string(triangle.realization.affine_perimeter()),
            'affine_heights': [s.rational_string(h) for h in triangle.realization.affine_heights()],
            'canonical_form': s.TriangleSerializer(canonical).data,
            'fit': s.HalfStripFitSerializer(fit).data if fit else None,
        })
        where = f"height {s.rational_string(fit.height)}" if fit else "no fit"
        return result, f"Markov triangle {triple} at alpha={s.rational_string(alpha)}: {where}"


# --- Folding tasks ---

class FoldService(TaskService):
    defaults_map = {
        'simpson_tol': 'simpson_tol',
        'bisection_rel_tol': 'bisection_rel_tol',
        'quadrature_tol': 'quadrature_tol',
    }

    @property
    def stretch_options(self):
        return {
            'rel_tol': self.config['bisection_rel_tol'],
            'simpson_tol': self.config['simpson_tol'],
            'max_steps': self.defaults['bisection_max_steps'],
            'quadrature_tol': self.config['quadrature_tol'],
        }

    def build_plan(self):
        return compose_plan(self.config['R'], self.config['L'], **self.stretch_options)


class FoldBuildService(FoldService):
    task = 'fold build'
    config_class = s.FoldConfig

    def run(self):
        plan = self.build_plan()
        stretch, L = plan.stretch, plan.L
        self._gate(0 < stretch.C < 4.5 * L, f"C = {stretch.C} is not in (0, 4.5 L)")
        self._gate(stretch.sup_slope < stretch.slope_bound, f"sup f' = {stretch.sup_slope} is not below {stretch.slope_bound}")
        self._gate(
            abs(stretch_integral(stretch.ramp, 0.0) - 1.0 / L) <= 1e-14,
            "I(0) differs from 1/L",
        )
        return s.FoldingPlanSerializer(plan).data, f"R={plan.R:g} L={L:g}: M={plan.M}, C={stretch.C:.6f}, sup f'={stretch.sup_slope:.4f}"


class FoldVerifyService(FoldService):
    task = 'fold verify'
    config_class = s.FoldVerifyConfig
    defaults_map = {
        **FoldService.defaults_map,
        'samples': 'symplectic_samples',
        'containment_tol': 'containment_tol',
    }

    def _with_defaults(self):
        data = super()._with_defaults()
        data.setdefault('mode', 'analytic')
        if data.get('tolerance') is None:
            key = 'symplectic_tol_analytic' if data['mode'] == 'analytic' else 'symplectic_tol_fd'
            data['tolerance'] = self.defaults[key]
        return data

    def run(self):
        plan = self.build_plan()
        n, mode = self.config['samples'], self.config['mode']
        scan = symplecticity_scan(plan, cube_sampler(plan.R), n, self.seed, mode)
        self._gate(scan.max <= self.config['tolerance'], f"symplecticity residual {scan.max:.3e} > {self.config['tolerance']}")

        blocks = plan.sample_blocks(stream(self.seed, CONTAINMENT_STREAM), n)
        images = plan.value(blocks)
        radius2 = float(np.max(images[:, 0] ** 2 + images[:, 1] ** 2))
        self._gate(radius2 <= 0.5 + self.config['containment_tol'], f"block image reaches x1^2+y1^2 = {radius2!r}")

        outside_box = self._outside_block_boxes(plan, blocks, images)
        self._gate(outside_box == 0, f"{outside_box} block images leave their target box")
        overlaps = self._overlapping_boxes(plan)
        self._gate(overlaps == 0, f"{overlaps} pairs of block boxes overlap")

        dump = blocks[:POINT_DUMP_ROWS]
        self._csv('points', np.hstack([dump, plan.value(dump)]), ['x1', 'y1', 'x2', 'y2', 'X1', 'Y1', 'X2', 'Y2'])
        result = {
            'symplecticity': s.SymplecticityReportSerializer(scan).data,
            'containment': {'n': n, 'max_radius_squared': radius2, 'bound': 0.5},
            'blocks': {'outside_box': outside_box, 'overlapping_pairs': overlaps, 'count': plan.M ** 2},
            'plan': {'R': plan.R, 'L': plan.L, 'M': plan.M},
        }
        return result, f"R={plan.R:g} L={plan.L:g} {mode}: residual max {scan.max:.3e}, block radius^2 max {radius2:.6f}"

    @staticmethod
    def _outside_block_boxes(plan, blocks, images, tol=1e-9):
        cells = plan.block_index(blocks)
        outside = 0
        for (i, j), image in zip(cells, images):
            lower, upper = plan.block_box(i, j)
            if np.any(image < lower - tol) or np.any(image > upper + tol):
                outside += 1
        return outside

    @staticmethod
    def _overlapping_boxes(plan):
        boxes = [plan.block_box(i, j) for i in range(plan.M) for j in range(plan.M)]
        lower = np.array([b[0] for b in boxes])
        upper = np.array([b[1] for b in boxes])
        # closed boxes meet iff their intervals meet in every coordinate
        meet = np.all(
            (lower[:, None, :] <= upper[None, :, :]) & (lower[None, :, :] <= upper[:, None, :]),
            axis=2,
        )
        return int((meet.sum() - len(boxes)) // 2)


class FoldDefectService(FoldService):
    task = 'fold defect'
    config_class = s.FoldDefectConfig
    defaults_map = {**FoldService.defaults_map, 'samples': 'defect_samples', 'r': 'cylinder_radius'}

    def run(self):
        plan = self.build_plan()
        r, n = self.config['r'], self.config['samples']
        defect = defect_volume(plan, r, n, self.seed, **self.mc_options)
        wall = wall_volume_closed_form(plan.R, plan.L)
        wall_mc = wall_volume_mc(plan, n, self.seed, **self.mc_options)
        if r * r >= 0.5 + self.defaults['containment_tol']:
            self._gate(
                defect.value <= wall + 3 * defect.std_error,
                f"defect {defect.value:.4e} exceeds wall volume {wall:.4e} + 3 sigma",
            )
        if r == 1:
            self._gate(defect.value >= 1e-3 / plan.L ** 2, f"defect {defect.value:.4e} below 1e-3 / L^2")
        result = {
            'defect': s.VolumeEstimateSerializer(defect).data,
            'wall_volume': wall,
            'wall_volume_mc': s.VolumeEstimateSerializer(wall_mc).data,
            'defect_times_L': defect.value * plan.L,
            'cube_volume': 16 * plan.R ** 4,
        }
        return result, f"R={plan.R:g} L={plan.L:g} r={r:g}: defect {defect.value:.4e} +- {defect.std_error:.1e} (walls {wall:.4e})"


class FoldLipschitzService(FoldService):
    task = 'fold lipschitz'
    config_class = s.FoldLipschitzConfig
    defaults_map = {**FoldService.defaults_map, 'samples': 'lipschitz_samples'}

    def run(self):
        plan = self.build_plan()
        n = self.config['samples']
        stretch = plan.stretch
        taffy = TaffyFactor(0, stretch, plan.M)
        seam = lipschitz_estimate(taffy, lambda rng, k: plan.to_prism(plan.sample_seams(rng, k)), n, self.seed)
        full = lipschitz_estimate(plan, plan.sample_seams, n, self.seed)
        # |[[f', 0], [c, 1/f']]|_2 <= f' + |c| + 1/f' with |c| <= C/2 on the seams
        taffy_bound = stretch.sup_slope + stretch.C / 2 + 1
        self._gate(seam.max <= taffy_bound, f"taffy seam norm {seam.max:.4f} exceeds {taffy_bound:.4f}")

        prism_norm = float(spectral_norms(cube_to_prism(plan.R).matrix[np.newaxis])[0][0])
        self._gate(abs(prism_norm - 2 * plan.R) <= 1e-12 * max(1.0, 2 * plan.R), f"cube_to_prism norm {prism_norm!r} != 2R")
        result = {
            'taffy_seam': s.LipschitzReportSerializer(seam).data,
            'taffy_bound': taffy_bound,
            'plan': s.LipschitzReportSerializer(full).data,
            'plan_over_L': full.max / plan.L,
            'cube_to_prism_norm': prism_norm,
        }
        return result, f"R={plan.R:g} L={plan.L:g}: Lip {full.max:.3f} (Lip/L {full.max / plan.L:.3f}), taffy seam {seam.max:.3f}"


class FoldScalingService(TaskService):
    task = 'fold scaling'
    config_class = s.FoldScalingConfig
    defaults_map = {'samples': 'defect_samples', 'lipschitz_samples': 'lipschitz_samples'}

    def run(self):
        report = defect_scaling(
            self.config['R_values'],
            self.config['L_values'],
            self.config['samples'],
            self.seed,
            lipschitz_samples=self.config['lipschitz_samples'],
            cylinder_radius=self.defaults['cylinder_radius'],
            rel_tol=self.defaults['bisection_rel_tol'],
            simpson_tol=self.defaults['simpson_tol'],
            max_steps=self.defaults['bisection_max_steps'],
            quadrature_tol=self.defaults['quadrature_tol'],
            **self.mc_options,
        )
        for row in report.rows:
            self._gate(row['defect'] <= row['wall_volume'] + 3 * row['std_error'],
                       f"R={row['R']:g} L={row['L']:g}: defect above wall volume + 3 sigma")
            self._gate(row['defect'] >= 1e-3 / row['L'] ** 2, f"R={row['R']:g} L={row['L']:g}: defect below 1e-3 / L^2")
        for constant in report.constants:
            if len(self.config['L_values']) > 1:
                self._gate(constant['defect_spread'] <= 2, f"R={constant['R']:g}: defect*L spread {constant['defect_spread']:.3f} > 2")
                self._gate(constant['lipschitz_spread'] <= 3, f"R={constant['R']:g}: Lip/L spread {constant['lipschitz_spread']:.3f} > 3")
        columns = list(report.rows[0].keys())
        self._csv(None, report.rows, columns)
        summary = ', '.join(f"C({c['R']:g}) = {c['C']:.4f}" for c in report.constants)
        return report.to_dict(), summary


# --- Model maps ---

def _random_unit_sphere_points(rng, n, dim=3, norm=1.0):
    q = rng.standard_normal((n, dim))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    p = rng.standard_normal((n, dim))
    p -= np.sum(p * q, axis=1, keepdims=True) * q
    p *= norm / np.linalg.norm(p, axis=1, keepdims=True)
    return q, p


class OuCheckService(TaskService):
    task = 'model ou-check'
    config_class = s.OuCheckConfig
    defaults_map = {'samples': 'ou_samples', 'h': 'ou_step'}

    def run(self):
        n, h = self.config['samples'], self.config['h']
        rng = stream(self.seed)

        grid = np.linspace(0.0, 1.0, 1001)
        values = ou_f(grid)
        tan_error = float(np.max(np.abs(grid * values - np.tan(0.5 * np.arcsin(grid)))))
        self._gate(tan_error <= 1e-12, f"x f(x) misses tan(arcsin(x)/2) by {tan_error:.3e}")
        self._gate(bool(np.all(np.diff(values) >= 0)), "ou_f is not monotone")

        points = [CotangentPoint.random(rng, 2, max_norm=0.9) for _ in range(n)]
        pullback = max(ou_pullback_residual(cp, h) for cp in points)
        self._gate(pullback <= 1e-6, f"pullback residual {pullback:.3e} > 1e-6")
        antipode = max(ou_pullback_residual(cp.antipode(), h) for cp in points[:10])
        zero_section = ou_pullback_residual(CotangentPoint(points[0].q, np.zeros(3)), h)
        self._gate(zero_section <= 1e-6, f"zero-section residual {zero_section:.3e} > 1e-6")

        identification = max(
            float(np.max(np.abs(ou_map(cp).normalized() - ou_map(cp.antipode()).normalized())))
            for cp in points
        )
        self._gate(identification <= 1e-12, f"(q,p) and (-q,-p) differ by {identification:.3e}")

        q, p = _random_unit_sphere_points(rng, n)
        fermat = max(ou_map(CotangentPoint(qk, pk)).fermat_residual() for qk, pk in zip(q, p))
        self._gate(fermat <= 1e-12, f"|p| = 1 image misses the quadric by {fermat:.3e}")

        ray_q, ray_p = q[0], p[0]
        ray = [ou_map(CotangentPoint(ray_q, t * ray_p)).fermat_residual() for t in np.linspace(0.0, 1.0, 21)]
        self._gate(all(a > b for a, b in zip(ray, ray[1:])), "quadric residual is not decreasing along a ray")

        equivariance = 0.0
        for g, cp in zip(Rotation.random(min(n, 100), rng).as_matrix(), points):
            rotated = ou_map(CotangentPoint(g @ cp.q, g @ cp.p))
            moved = ProjectivePoint(g @ ou_map(cp).coords)
            equivariance = max(equivariance, float(np.max(np.abs(rotated.normalized() - moved.normalized()))))
        self._gate(equivariance <= 1e-10, f"SO(3) equivariance error {equivariance:.3e}")

        q1, p1 = _random_unit_sphere_points(rng, n, dim=2, norm=1.0)
        p1 *= rng.random((n, 1))
        commutation = max(
            float(np.max(np.abs(
                ou_map(embed_circle_point(qk, pk)).normalized()
                - include_projective(ou_map_circle(qk, pk)).normalized()
            )))
            for qk, pk in zip(q1, p1)
        )
        self._gate(commutation <= 1e-12, f"circle restriction does not commute: {commutation:.3e}")

        area = fubini_study_line_area()
        self._gate(abs(area - 2 * math.pi) <= 1e-8, f"line area {area!r} differs from 2 pi")

        self._csv(None, [self._dump_row(cp) for cp in points[:POINT_DUMP_ROWS]], [
            'q1', 'q2', 'q3', 'p1', 'p2', 'p3', 'chart', 'w_re1', 'w_re2', 'w_im1', 'w_im2',
        ])
        result = {
            'n': n,
            'h': h,
            'tan_identity_error': tan_error,
            'pullback_residual_max': pullback,
            'antipode_residual_max': antipode,
            'zero_section_residual': zero_section,
            'identification_error': identification,
            'fermat_residual_max': fermat,
            'equivariance_error': equivariance,
            'circle_commutation_error': commutation,
            'line_area': area,
        }
        return result, f"pullback residual max {pullback:.3e} over {n} points, quadric residual {fermat:.1e}"

    @staticmethod
    def _dump_row(cp):
        image = ou_map(cp)
        k = image.best_chart()
        w = image.chart(k)
        return [*cp.q, *cp.p, k, w[0].real, w[1].real, w[0].imag, w[1].imag]


class ToricContainService(TaskService):
    task = 'model toric-contain'
    config_class = s.ToricContainConfig
    defaults_map = {'samples': 'toric_samples', 'iteration_cap': 'markov_iteration_cap'}
    # action rectangle whose preimage volume is checked against its area
    RECTANGLE = ((0.2, 0.7), (0.1, 0.5))
    RECTANGLE_AREA = 0.5 * 0.4

    def run(self):
        alpha, n = self.config['alpha'], self.config['samples']
        fit = find_fitting_triple(alpha, self.config['iteration_cap'])
        if not fit.fits:
            raise DomainError(f"alpha = {s.rational_string(alpha)} admits no Markov triangle in the half-strip.")
        report = triangle_torus_containment(fit.fit, n, self.seed)
        self._gate(report.inside, f"max pi|z2|^2 = {report.max_action!r} is not below 1")
        self._gate(report.max_action <= report.height + 1e-12, f"max pi|z2|^2 = {report.max_action!r} exceeds the height")
        self._gate(report.max_moment_error <= 1e-12, f"moment map round trip error {report.max_moment_error:.3e}")

        rng = stream(self.seed, PAIR_STREAM)
        checks = max(n, 1)
        actions = 2.0 * rng.random((checks, 2)) + 1e-3
        angles = 2 * math.pi * rng.random((checks, 2))
        jac = toric_jacobian(actions, angles)
        pulled = np.swapaxes(jac, -1, -2) @ OMEGA @ jac
        symplectic = float(np.max(np.abs(pulled - OMEGA / (2 * math.pi))))
        self._gate(symplectic <= 1e-10, f"toric coordinate residual {symplectic:.3e}")

        measure = self._rectangle_volume(checks)
        self._gate(
            abs(measure.value - self.RECTANGLE_AREA) <= 3 * measure.std_error,
            f"preimage of the action rectangle has volume {measure.value:.5f}, expected {self.RECTANGLE_AREA}",
        )
        result = {
            'triple': s.MarkovTripleField().to_representation(fit.triple),
            'fit': s.HalfStripFitSerializer(fit.fit).data,
            'containment': report.to_dict(),
            'toric_symplectic_residual': symplectic,
            'rectangle_volume': s.VolumeEstimateSerializer(measure).data,
            'rectangle_area': self.RECTANGLE_AREA,
        }
        return result, f"alpha={s.rational_string(alpha)} via {fit.triple}: max pi|z2|^2 {report.max_action:.6f} < height {report.height:.6f}"

    def _rectangle_volume(self, n):
        (a1, b1), (a2, b2) = self.RECTANGLE
        reach = [math.sqrt(b1 / math.pi), math.sqrt(b2 / math.pi)]
        box = [[-reach[0], reach[0]]] * 2 + [[-reach[1], reach[1]]] * 2

        def inside(points):
            x = moment_map(points)
            return (x[:, 0] >= a1) & (x[:, 0] <= b1) & (x[:, 1] >= a2) & (x[:, 1] <= b2)

        return mc_volume(inside, box, 10 * n, self.seed, **self.mc_options)


# --- Minkowski tasks ---

class MinkCurveService(TaskService):
    task = 'mink curve'
    config_class = s.MinkCurveConfig
    defaults_map = {'R': 'disk_radius', 't_values': 't_values', 'samples': 'neighborhood_samples'}

    def run(self):
        disk = LagrangianDisk(self.config['R'])
        curve = minkowski_curve(disk, self.config['t_values'], self.config['samples'], self.seed, **self.mc_options)
        area = math.pi * disk.R ** 2
        self._gate(abs(curve.fitted_dimension - 2) <= 0.15, f"fitted dimension {curve.fitted_dimension:.4f} is not 2 +- 0.15")
        self._gate(
            curve.content_at_2 is not None and abs(curve.content_at_2 - area) <= 0.05 * area,
            f"2-content {curve.content_at_2} is not within 5% of {area:.6f}",
        )
        self._gate(curve.ok, f"curve flags {list(curve.flags)}")
        self._csv(None, curve.rows(), ['t', 'volume', 'std_error'])
        result = dict(s.MinkowskiCurveSerializer(curve).data)
        result['exact_tube_volumes'] = [disk.exact_tube_volume(t) for t in curve.t_values]
        result['disk_area'] = area
        return result, f"disk R={disk.R:.6f}: dimension {curve.fitted_dimension:.4f}, content {curve.content_at_2}"


class TubeBoundService(TaskService):
    task = 'mink check-thm31'
    aliases = ('mink tube-bound',)
    config_class = s.TubeBoundConfig
    defaults_map = {
        'R': 'disk_radius',
        'r': 'cylinder_radius',
        't_values': 'tube_bound_t_values',
        'samples': 'neighborhood_samples',
        'slack': 'tube_bound_slack',
    }

    def run(self):
        R, r = self.config['R'], self.config['r']
        report = tube_bound_check(
            LagrangianDisk(R), R, r, self.config['t_values'], self.config['samples'], self.seed,
            slack=self.config['slack'], **self.mc_options,
        )
        for row in report.rows:
            self._gate(row['passed'], f"t={row['t']}: ratio {row['ratio']:.4f} below {report.ratio_bound:.4f}")
        self._gate(report.content_passed is not False, f"content {report.content_at_2} below {report.content_bound}")
        if report.rows:
            self._csv(None, report.rows, ['t', 'volume', 'std_error'])
        ratios = ', '.join(f"{row['ratio']:.3f}" for row in report.rows) or 'no t-values'
        return report.to_dict(), f"R={R:.6f} r={r:g}: ratios {ratios} against {report.ratio_bound:.3f}"


# --- Acceptance suite ---

class ReportAllService(TaskService):
    task = 'report all'
    config_class = s.RunConfigSerializer

    FIT_ALPHAS = ('1/2', '2', '5/2', '29/10', '299/100', '3', '4')
    TRIANGLES = (((1, 1, 1), '1/2'), ((5, 29, 433), '29/10'))
    PLAN_GRID = ((1.0, 8.0), (1.0, 32.0), (1.0, 128.0), (2.0, 8.0), (2.0, 32.0), (2.0, 128.0))
    TORIC_ALPHAS = ('2', '29/10')
    HALVING_SAMPLES = 100_000

    def suite(self):
        yield MarkovTreeService, {}, None
        for alpha in self.FIT_ALPHAS:
            yield MarkovFitService, {'alpha': alpha}, f"markov_fit_{alpha.replace('/', '_')}"
        for triple, alpha in self.TRIANGLES:
            slug = '_'.join(str(e) for e in triple)
            yield MarkovTriangleService, {'triple': triple, 'alpha': alpha}, f"markov_triangle_{slug}"
        for R, L in self.PLAN_GRID:
            tag = f"R{R:g}_L{L:g}"
            yield FoldBuildService, {'R': R, 'L': L}, f"fold_build_{tag}"
            yield FoldVerifyService, {'R': R, 'L': L, 'mode': 'analytic'}, f"fold_verify_{tag}_analytic"
            yield FoldVerifyService, {'R': R, 'L': L, 'mode': 'finite-difference'}, f"fold_verify_{tag}_fd"
        yield FoldDefectService, {'R': 1.0, 'L': 8.0}, None
        yield FoldLipschitzService, {'R': 1.0, 'L': 32.0}, None
        yield FoldScalingService, {'R_values': [1.0], 'L_values': [8.0, 32.0, 128.0]}, None
        yield OuCheckService, {}, None
        for alpha in self.TORIC_ALPHAS:
            yield ToricContainService, {'alpha': alpha}, f"model_toric-contain_{alpha.replace('/', '_')}"
        yield MinkCurveService, {}, None
        yield TubeBoundService, {}, None

    def run(self):
        outcomes = []
        for service_class, options, name in self.suite():
            options = {**options, 'seed': self.seed}
            outcome = service_class(options, self.writer, self.workers, name=name).process()
            outcomes.append(outcome)
            self.failures.extend(f"{outcome.name}: {message}" for message in outcome.failures)
        halving = self._error_halving()
        result = {
            'passed': not self.failures,
            'tasks': [
                {
                    'name': o.name,
                    'task': o.task,
                    'config_hash': o.config_hash,
                    'summary': o.summary,
                    'failures': o.failures,
                }
                for o in outcomes
            ],
            'error_halving': halving,
        }
        passed = sum(o.passed for o in outcomes)
        return result, f"{passed}/{len(outcomes)} tasks passed their gates"

    def _error_halving(self):
        """Unit 4-ball in [-1, 1]^4: quadrupling the samples must halve the error."""
        coarse, fine, ratio = error_halving(
            lambda points: np.einsum('ij,ij->i', points, points) < 1.0, [[-1.0, 1.0]] * 4,
            self.HALVING_SAMPLES, self.seed, **self.mc_options,
        )
        self._gate(abs(ratio - 0.5) <= 0.05, f"Monte-Carlo error ratio {ratio:.4f} at 4x samples, expected 0.5")
        return {
            'coarse': s.VolumeEstimateSerializer(coarse).data,
            'fine': s.VolumeEstimateSerializer(fine).data,
            'ratio': ratio,
            'exact': unit_ball_volume(4),
        }


SERVICES = {
    name: service
    for service in (
        MarkovTreeService, MarkovFitService, MarkovTriangleService,
        FoldBuildService, FoldVerifyService, FoldDefectService, FoldLipschitzService, FoldScalingService,
        OuCheckService, ToricContainService,
        MinkCurveService, TubeBoundService,
        ReportAllService,
    )
    for name in (service.task, *service.aliases)
}
