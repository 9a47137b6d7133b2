import argparse
import sys
import warnings
from contextlib import contextmanager
from enum import IntEnum
from pathlib import Path
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from poisson_saturation import __version__
from poisson_saturation._errors import (
    PoissonSaturationError,
    PrerequisiteError,
    RankDefectError,
    SceneError,
)
from poisson_saturation._fixtures import fixture_names, fixture_text
from poisson_saturation._linear import rank_svd
from poisson_saturation._model import (
    BundleFrame,
    ComplementMode,
    LocalModel,
    TubularMap,
    compare_models,
    fiber_samples,
    gotay_agreement,
    gotay_embedding,
    marle_invariants,
    model_radius,
    saturation_chart,
    saturation_distance,
    sigma_tau,
    summary_table,
    symplectic_rigidity,
)
from poisson_saturation._report import Report, StageReport, write_points
from poisson_saturation._scene import Scene
from poisson_saturation._sprayflow import cotangent_path_residual, dual_pair_check, flow, shrink_radius
from poisson_saturation._submanifold import (
    Classification,
    classify,
    point_data,
    pullback_dirac_routes,
    regularity_scan,
)
from poisson_saturation._transformers import FiberSampler, NormalFormVerifier, SaturationSampler, grid_frame

COMMANDS = {
    'analyze': ['analyze'],
    'saturate': ['analyze', 'saturate'],
    'model': ['analyze', 'model'],
    'verify': ['analyze', 'model', 'verify'],
    'all': ['analyze', 'saturate', 'model', 'verify'],
}

JACOBI_POINTS = 1000
DETAIL_SAMPLES = 3


class ExitCode(IntEnum):
    ok = 0
    verification_failed = 2
    prerequisite = 3
    numeric = 4


STATUS_CODES = {
    'pass': ExitCode.ok,
    'skipped': ExitCode.ok,
    'fail': ExitCode.verification_failed,
    'prerequisite': ExitCode.prerequisite,
    'error': ExitCode.numeric,
}


def _points(values: Sequence) -> List[List[float]]:
    return [[float(v) for v in np.ravel(p)] for p in values]


@contextmanager
def _recording(stage: StageReport) -> Iterator[None]:
    """Records warnings and maps exceptions onto the stage status."""
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter('always')
        try:
            yield
        except (PrerequisiteError, RankDefectError) as e:
            stage.status, stage.message = 'prerequisite', str(e)
            for rank, found in getattr(e, 'witnesses', {}).items():
                stage.witnesses[str(rank)] = _points(found)
        except (FloatingPointError, PoissonSaturationError, np.linalg.LinAlgError) as e:
            stage.status, stage.message = 'error', f'{type(e).__name__}: {e}'
    stage.warnings.extend(str(w.message) for w in caught)


class Pipeline:
    """Runs the stages of one command on a scene, sharing the local model between stages."""
    def __init__(self, scene: Scene, *, verbose: bool = False):
        self.scene = scene
        self.spec = scene.spec
        self.tol = scene.spec.tolerances
        self.verbose = verbose
        self.classification: Optional[Classification] = None
        self.frames: Dict[str, pd.DataFrame] = {}
        self._models: Dict[str, LocalModel] = {}

    @property
    def anchor(self) -> np.ndarray:
        return self.scene.chart.domain.mean(axis=1) if self.scene.chart.param_dim else np.zeros(0)

    def model(self, mode: Optional[ComplementMode] = None) -> LocalModel:
        mode = self.spec.complement.mode if mode is None else mode
        if mode.value not in self._models:
            custom = mode == self.spec.complement.mode
            frame = BundleFrame(
                self.scene.pi,
                self.scene.chart,
                mode,
                anchor=self.anchor,
                g_frame=self.scene.g_frame if custom else None,
                h_frame=self.scene.h_frame if custom else None,
                tol=self.tol.rank,
            )
            self._models[mode.value] = LocalModel(frame, steps=self.spec.flow.steps, tol=self.tol.rank)
        return self._models[mode.value]

    def stage_fn(self, name: str) -> Callable[[StageReport], None]:
        return {
            'analyze': self.analyze,
            'saturate': self.saturate,
            'model': self.local_model,
            'verify': self.verify,
        }[name]

    def analyze(self, stage: StageReport) -> None:
        """Jacobi certification, regularity scan, classification and the pullback Dirac structure."""
        scene, tol, seed = self.scene, self.tol, self.spec.scene.seed
        if scene.is_presymplectic:
            gotay = gotay_embedding(scene.dirac, scene.chart.param_dim, scene.grid, anchor=self.anchor, tol=tol.rank)
            stage.ranks['kernel'] = gotay.m
            return
        pi, X = scene.pi, scene.chart
        stage.check('jacobi', pi.certify(JACOBI_POINTS, seed=seed), tol.jacobi)
        scan = regularity_scan(pi, X, scene.grid, tol.rank, seed=seed)
        stage.ranks['perp'] = scan.rank if scan.is_regular else list(scan.rank)
        stage.ranks['perp_counts'] = {str(r): c for r, c in scan.counts.items()}
        stage.flags['regularity'] = scan.verdict
        if not scan.is_regular:
            stage.witnesses.update({str(r): _points(w) for r, w in scan.witnesses.items()})
            stage.status, stage.message = 'prerequisite', 'not regular'
            return
        self.classification = classify(pi, X, scene.grid, tol.rank, seed=seed)
        flags = self.classification.as_dict()
        for key in ('rank_perp', 'rank_intersection', 'rank_sum'):
            stage.ranks[key] = flags.pop(key)
        stage.flags.update(flags)
        table = summary_table(self.classification)
        stage.flags['determined_by'] = dict(zip(table['submanifold_type'][table['applies']],
                                                table['determined_by'][table['applies']]))
        defect, angle = 0, 0.0
        for u in scene.grid:
            defect = max(defect, abs(point_data(pi, X, u, tol.rank).exactness_defect))
            kernel = X.ambient_dim - X.param_dim - scan.rank
            generic, conormal = pullback_dirac_routes(pi, X, u, expected_kernel=kernel, tol=tol.rank)
            angle = max(angle, generic.angle(conormal) if X.param_dim else 0.0)
        stage.require('exact_sequence', defect == 0)
        stage.check('pullback_routes', angle, tol.dirac)

    def saturate(self, stage: StageReport) -> None:
        """Samples the local Poisson saturation and checks that it is a Poisson submanifold."""
        if self.scene.is_presymplectic:
            stage.status, stage.message = 'skipped', 'no ambient Poisson structure'
            return
        pi, X, tol, flow_spec = self.scene.pi, self.scene.chart, self.tol, self.spec.flow
        model, grid, seed = self.model(), self.scene.grid, self.spec.scene.seed
        fiber_points = self.spec.model.fiber_points

        def states(radius: float) -> list:
            return [model.state(u, s) for u, s in fiber_samples(model, grid, radius, fiber_points, seed)]

        radius, halvings = shrink_radius(pi, states, flow_spec.xi_radius, steps=flow_spec.steps,
                                         max_halvings=flow_spec.max_halvings, verbose=self.verbose)
        stage.flags['xi_radius'] = radius
        stage.flags['halvings'] = halvings
        stage.ranks['fiber'] = model.r
        stage.ranks['saturation'] = model.dim
        pipeline = FiberSampler(model, radius, fiber_points=fiber_points, seed=seed) >> SaturationSampler(
            model, verbose=self.verbose)
        frame = pipeline.transform(grid_frame(grid, model.k))
        self.frames['saturation'] = frame
        stage.require('immersion', bool(np.all(frame['rank'] == model.dim)))
        stage.check('poisson_leak', float(frame['residual'].max()), tol.saturation)
        zero = saturation_chart(model, [(u, np.zeros(model.r)) for u in grid])
        stage.check('splitting', zero.splitting_residual(), tol.dirac)

        path, orth, triple_ok, distance = 0.0, 0.0, True, 0.0
        rng = np.random.default_rng(seed)
        for u, s in list(zip(frame['u'], frame['s']))[-DETAIL_SAMPLES:]:
            res = flow(pi, model.state(u, s), 1.0, flow_spec.steps)
            path = max(path, cotangent_path_residual(pi, res))
            pair = dual_pair_check(pi, X, u, res.start.xi, flow_spec.steps, tol.dual_pair, rank_tol=tol.rank)
            orth = max(orth, pair.orthogonality)
            triple_ok = triple_ok and pair.triple_dim == pair.triple_expected and pair.s2_dim == pair.s2_expected
            xi = rng.normal(size=X.ambient_dim)
            distance = max(distance, saturation_distance(model, u, radius * xi / np.linalg.norm(xi)))
        stage.check('cotangent_path', path, tol.cotangent_path)
        stage.check('dual_pair_orthogonality', orth, tol.dual_pair)
        stage.require('dual_pair_ranks', triple_ok)
        stage.check('distance_to_saturation', distance, tol.distance)

    def local_model(self, stage: StageReport) -> None:
        """Complement, the forms σ, τ and η, and the specialized constructions."""
        if self.scene.is_presymplectic:
            self._gotay(stage)
            return
        pi, X, tol, grid = self.scene.pi, self.scene.chart, self.tol, self.scene.grid
        model = self.model()
        mode = model.frame.mode
        stage.flags['mode'] = mode.value
        checks: Dict[str, float] = {}
        sigma_ranks, sigma_max, tau_max, restriction = set(), 0.0, 0.0, 0.0
        for u in grid:
            for key, value in model.frame.choice(u).checks.items():
                checks[key] = min(checks.get(key, np.inf), value) if key == 'direct_sum' else max(
                    checks.get(key, 0.0), value)
            sigma, tau = sigma_tau(pi, X, u, model.frame)
            sigma_ranks.add(sigma.rank(tol.rank) if model.r else 0)
            sigma_max = max(sigma_max, float(np.max(np.abs(sigma.matrix), initial=0.0)))
            tau_max = max(tau_max, float(np.max(np.abs(tau.matrix), initial=0.0)))
            restriction = max(restriction, model.restriction_residual(u))
        stage.require('direct_sum', checks.pop('direct_sum', 1.0) > 1e-8)
        for key, value in checks.items():
            stage.check(f'complement_{key}', value, tol.dirac)
        stage.ranks['sigma'] = sorted(sigma_ranks)
        stage.residuals['sigma_max'] = sigma_max
        stage.residuals['tau_max'] = tau_max
        if mode == ComplementMode.coisotropic:
            stage.check('sigma_vanishes', sigma_max, tol.dirac)
        if mode == ComplementMode.default and self.classification is not None and self.classification.transversal:
            stage.check('tau_vanishes', tau_max, tol.dirac)
        stage.check('restriction', restriction, tol.restriction)

        u0 = grid[0]
        s0 = np.full(model.r, self.spec.model.xi_radius / (2 * np.sqrt(max(model.r, 1))))
        stage.check('closedness', model.closedness_residual(u0, s0), tol.restriction)
        stage.flags['model_radius'] = model_radius(model, u0, directions=4, seed=self.spec.scene.seed)
        tube = TubularMap(model)
        tubular = [rank_svd(tube.jacobian(u, np.zeros(model.r), np.zeros(tube.normal_dim)), tol.rank).rank
                    for u in grid]
        stage.ranks['tubular'] = sorted(set(tubular))
        stage.require('tubular_rank', all(r == X.ambient_dim for r in tubular))

        if mode != ComplementMode.default:
            marle = marle_invariants(model, grid)
            stage.ranks['quotient'] = sorted({m.quotient_rank for m in marle})
            stage.check('marle_cross_term', max(m.cross_term for m in marle), tol.dirac)
            n = self.spec.model.independence_samples
            if n:
                per_point = max(self.spec.model.fiber_points, -(-n // len(grid)) - 1)
                samples = fiber_samples(model, grid, self.spec.model.xi_radius, per_point, self.spec.scene.seed)[:n]
                stage.ranks['independence_samples'] = len(samples)
                report = compare_models(model, self.model(ComplementMode.default), samples, tol.independence,
                                        verbose=self.verbose)
                stage.check('independence', report.mismatch, tol.independence)
                stage.check('independence_inversion', report.inversion_residual, tol.independence)
        if self.spec.model.gauge == 'gotay':
            stage.check('gotay_agreement', max(gotay_agreement(model, u) for u in grid), tol.restriction)
        if self.classification is not None and self.classification.symplectic_ambient:
            rigidity = symplectic_rigidity(pi, X, u0, steps=self.spec.flow.steps, tol=tol.rank)
            stage.require('symplectic_rigidity', rigidity.passed)

    def _gotay(self, stage: StageReport) -> None:
        scene, tol = self.scene, self.tol
        gotay = gotay_embedding(scene.dirac, scene.chart.param_dim, scene.grid, anchor=self.anchor, tol=tol.rank)
        stage.ranks['kernel'] = gotay.m
        stage.ranks['total'] = gotay.dim
        s = np.full(gotay.m, 0.1)
        stage.check('jacobi', max(gotay.jacobi_residual(u, s) for u in scene.grid), tol.jacobi)
        stage.check('coisotropy', max(gotay.coisotropy_residual(u) for u in scene.grid), tol.jacobi)
        stage.check('pullback_angle', max(gotay.pullback_angle(u) for u in scene.grid), tol.dirac)

    def verify(self, stage: StageReport) -> None:
        """Normal form: the pushed-forward model bivector against ``π`` on P."""
        if self.scene.is_presymplectic:
            stage.status, stage.message = 'skipped', 'no ambient Poisson structure'
            return
        model, spec = self.model(), self.spec
        pipeline = FiberSampler(model, spec.model.xi_radius, fiber_points=spec.model.fiber_points,
                                seed=spec.scene.seed) >> NormalFormVerifier(model, verbose=self.verbose)
        frame = pipeline.transform(grid_frame(self.scene.grid, model.k))
        self.frames['normal_form'] = frame
        failures = int((~frame['extracted']).sum())
        stage.flags['extraction_failures'] = failures
        stage.require('extracted', failures == 0)
        stage.check('normal_form', float(np.nanmax(frame['residual'])) if failures < len(frame) else np.inf,
                    self.tol.normal_form)


def _exit_code(report: Report) -> ExitCode:
    return max((STATUS_CODES[s.status] for s in report.stages), default=ExitCode.ok)


def run(scene_path: str, command: str, *,
        steps: Optional[int] = None,
        tol: Optional[float] = None,
        out: Optional[str] = None,
        csv: bool = False,
        verbose: bool = False) -> Tuple[ExitCode, Report]:
    """Runs ``command`` on a scene file and writes the report (and point clouds with ``csv``) under ``out``.

    Returns:
        The exit code and the report. Parse failures are reported with exit code 4.
    """
    if command not in COMMANDS:
        raise ValueError(f'unknown command {command!r}')
    report = Report(scene=Path(scene_path).stem, command=command)
    try:
        scene = Scene.from_path(scene_path).with_overrides(steps=steps, tol=tol)
    except (OSError, SceneError) as e:
        stage = StageReport(name='scene', status='error', message=str(e))
        if isinstance(e, SceneError):
            stage.flags.update({'line': e.line, 'position': e.position})
        report.stages.append(stage)
        report.exit_code = int(ExitCode.numeric)
        _write(report, None, out, csv)
        return ExitCode.numeric, report

    report.scene = scene.name
    report.parameters = {
        'seed': scene.spec.scene.seed,
        'flow': scene.spec.flow.model_dump(mode='json'),
        'complement': {'mode': scene.spec.complement.mode.value},
        'model': scene.spec.model.model_dump(mode='json'),
        'tolerances': scene.spec.tolerances.model_dump(mode='json'),
    }
    pipeline = Pipeline(scene, verbose=verbose)
    for name in COMMANDS[command]:
        stage = StageReport(name=name)
        report.stages.append(stage)
        with _recording(stage):
            pipeline.stage_fn(name)(stage)
        if stage.status in ('prerequisite', 'error'):
            break
    code = _exit_code(report)
    report.exit_code = int(code)
    _write(report, pipeline, out, csv)
    return code, report


def _write(report: Report, pipeline: Optional[Pipeline], out: Optional[str], csv: bool) -> None:
    if out is None:
        sys.stdout.write(report.to_json())
    else:
        report.write(Path(out) / 'report.json')
    if not csv or pipeline is None:
        return
    directory = Path(out or '.')
    for name, frame in pipeline.frames.items():
        model = pipeline.model()
        write_points(frame, directory / f'{name}.csv', model.k, model.r, model.X.ambient_dim)


def _fixtures(args: argparse.Namespace) -> int:
    if args.action == 'list':
        sys.stdout.write(''.join(f'{name}\n' for name in fixture_names()))
        return ExitCode.ok
    if args.name is None:
        sys.stderr.write('fixtures emit needs a fixture name\n')
        return ExitCode.numeric
    try:
        text = fixture_text(args.name)
    except SceneError as e:
        sys.stderr.write(f'{e}\n')
        return ExitCode.numeric
    if args.out is None:
        sys.stdout.write(text)
    else:
        Path(args.out).write_text(text, encoding='utf-8')
    return ExitCode.ok


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='poisson-saturation',
                                     description='Local Poisson saturations and their normal forms.')
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    commands = parser.add_subparsers(dest='command', required=True)
    for name in COMMANDS:
        sub = commands.add_parser(name, help=f'run the {" → ".join(COMMANDS[name])} stages')
        sub.add_argument('scene', help='path of the scene file')
        sub.add_argument('--steps', type=int, default=None, help='RK4 steps (even, at least 16)')
        sub.add_argument('--tol', type=float, default=None, help='normal-form tolerance')
        sub.add_argument('--out', default=None, help='directory for report.json and CSV files')
        sub.add_argument('--csv', action='store_true', help='write the sampled point clouds as CSV')
        sub.add_argument('-v', '--verbose', action='store_true', help='show progress bars')
    fixtures = commands.add_parser('fixtures', help='list or emit the shipped scenes')
    fixtures.add_argument('action', choices=['list', 'emit'])
    fixtures.add_argument('name', nargs='?', default=None)
    fixtures.add_argument('--out', default=None, help='file to write the emitted scene to')
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Entry point of the ``poisson-saturation`` command."""
    args = _parser().parse_args(argv)
    if args.command == 'fixtures':
        return int(_fixtures(args))
    try:
        code, _ = run(args.scene, args.command, steps=args.steps, tol=args.tol, out=args.out, csv=args.csv,
                      verbose=args.verbose)
    except PoissonSaturationError as e:
        sys.stderr.write(f'{e}\n')
        return int(ExitCode.numeric)
    return int(code)


if __name__ == '__main__':
    raise SystemExit(main())
