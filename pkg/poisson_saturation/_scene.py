import configparser
import shlex
from functools import cached_property
from pathlib import Path
from typing import Annotated, Any, Callable, Dict, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, BeforeValidator, ConfigDict, Field, PositiveFloat, ValidationError, model_validator

from poisson_saturation._errors import ExpressionSyntaxError, SceneError
from poisson_saturation._expr import compile_array, parse
from poisson_saturation._field import BivectorField
from poisson_saturation._linear import DiracSpace, FormKind, dirac_graph
from poisson_saturation._model import ComplementMode
from poisson_saturation._submanifold import Chart

DEFAULTS: Dict[str, Dict[str, Any]] = {
    'scene': {'seed': 0, 'description': ''},
    'flow': {'steps': 1024, 'xi_radius': 0.2, 'quadrature': 'rk4-nodes', 'max_halvings': 8},
    'complement': {'mode': 'default'},
    'model': {'fiber_points': 4, 'xi_radius': 0.2, 'independence_samples': 50, 'gauge': 'canonical'},
    'tolerances': {
        'rank': 1e-8,
        'jacobi': 1e-10,
        'dirac': 1e-8,
        'saturation': 1e-8,
        'normal_form': 1e-4,
        'restriction': 1e-6,
        'independence': 1e-4,
        'dual_pair': 1e-8,
        'cotangent_path': 1e-8,
        'distance': 1e-4,
    },
}


def _split_box(value: Any) -> Any:
    """``"lo hi, lo hi"`` → ``[(lo, hi), (lo, hi)]``."""
    if not isinstance(value, str):
        return value
    pairs = []
    for part in value.split(','):
        bounds = part.split()
        if len(bounds) != 2:
            raise ValueError(f'domain interval {part.strip()!r} must be "lo hi"')
        pairs.append((float(bounds[0]), float(bounds[1])))
    return pairs


def _split_words(value: Any) -> Any:
    return shlex.split(value) if isinstance(value, str) else value


def _split_lines(value: Any) -> Any:
    if not isinstance(value, str):
        return value
    return [shlex.split(line) for line in value.splitlines() if line.strip()]


Box = Annotated[List[Tuple[float, float]], BeforeValidator(_split_box)]
Words = Annotated[List[str], BeforeValidator(_split_words)]
Lines = Annotated[List[List[str]], BeforeValidator(_split_lines)]


def _check_box(box: Box, dim: int, what: str) -> None:
    if len(box) != dim:
        raise ValueError(f'{what} domain has {len(box)} intervals, expected {dim}')
    for lo, hi in box:
        if not lo < hi:
            raise ValueError(f'{what} domain interval ({lo}, {hi}) is empty')


class _Section(BaseModel):
    model_config = ConfigDict(extra='forbid', frozen=True)


class SceneInfo(_Section):
    name: str
    seed: int = DEFAULTS['scene']['seed']
    description: str = DEFAULTS['scene']['description']


class PoissonSpec(_Section):
    """``[poisson]``: dimension, coordinate names, domain box and the upper-triangle entries ``i j "expr"``."""
    dim: int = Field(ge=1)
    variables: Optional[Words] = None
    domain: Box
    entries: Annotated[List[Tuple[int, int, str]], BeforeValidator(_split_lines)] = Field(default_factory=list)

    @model_validator(mode='after')
    def check_consistent(self) -> 'PoissonSpec':
        _check_box(self.domain, self.dim, 'ambient')
        if self.variables is not None and len(self.variables) != self.dim:
            raise ValueError(f'{len(self.variables)} variables declared for dimension {self.dim}')
        return self

    def build(self) -> BivectorField:
        return BivectorField.from_triples(self.dim, self.entries, domain=np.array(self.domain), names=self.variables)


class PresymplecticSpec(PoissonSpec):
    """``[presymplectic]``: a closed two-form, given by the same entry syntax, with a sampling grid."""
    grid: Annotated[List[int], BeforeValidator(_split_words)] = Field(default_factory=lambda: [3])


class SubmanifoldSpec(_Section):
    """``[submanifold]``: parameter names, the n component expressions, parameter box and grid."""
    params: Words = Field(default_factory=list)
    components: Annotated[List[str], BeforeValidator(_split_words), Field(min_length=1)]
    domain: Box = Field(default_factory=list)
    grid: Annotated[List[int], BeforeValidator(_split_words)] = Field(default_factory=lambda: [3])

    @model_validator(mode='after')
    def check_consistent(self) -> 'SubmanifoldSpec':
        _check_box(self.domain, len(self.params), 'parameter')
        if len(self.grid) not in (1, len(self.params)) or any(g < 1 for g in self.grid):
            raise ValueError(f'grid {self.grid} does not fit {len(self.params)} parameters')
        return self

    def build(self) -> Chart:
        return Chart.parse(self.components, len(self.params), domain=np.array(self.domain).reshape(-1, 2),
                           names=self.params)


class FlowSpec(_Section):
    steps: int = Field(DEFAULTS['flow']['steps'], ge=16, multiple_of=2)
    xi_radius: PositiveFloat = DEFAULTS['flow']['xi_radius']
    quadrature: Literal['rk4-nodes'] = DEFAULTS['flow']['quadrature']
    max_halvings: int = Field(DEFAULTS['flow']['max_halvings'], ge=0)


class ComplementSpec(_Section):
    """``[complement]``: the mode and optional frames of ``G`` and ``H``, one quoted vector per line."""
    mode: ComplementMode = ComplementMode(DEFAULTS['complement']['mode'])
    g_frame: Optional[Lines] = None
    h_frame: Optional[Lines] = None


class ModelSpec(_Section):
    fiber_points: int = Field(DEFAULTS['model']['fiber_points'], ge=0)
    xi_radius: PositiveFloat = DEFAULTS['model']['xi_radius']
    independence_samples: int = Field(DEFAULTS['model']['independence_samples'], ge=0)
    gauge: Literal['canonical', 'gotay'] = DEFAULTS['model']['gauge']


class Tolerances(_Section):
    rank: PositiveFloat = DEFAULTS['tolerances']['rank']
    jacobi: PositiveFloat = DEFAULTS['tolerances']['jacobi']
    dirac: PositiveFloat = DEFAULTS['tolerances']['dirac']
    saturation: PositiveFloat = DEFAULTS['tolerances']['saturation']
    normal_form: PositiveFloat = DEFAULTS['tolerances']['normal_form']
    restriction: PositiveFloat = DEFAULTS['tolerances']['restriction']
    independence: PositiveFloat = DEFAULTS['tolerances']['independence']
    dual_pair: PositiveFloat = DEFAULTS['tolerances']['dual_pair']
    cotangent_path: PositiveFloat = DEFAULTS['tolerances']['cotangent_path']
    distance: PositiveFloat = DEFAULTS['tolerances']['distance']


class SceneSpec(_Section):
    """A validated scene: exactly one of ``poisson`` and ``presymplectic``; a submanifold goes with ``poisson``."""
    scene: SceneInfo
    poisson: Optional[PoissonSpec] = None
    presymplectic: Optional[PresymplecticSpec] = None
    submanifold: Optional[SubmanifoldSpec] = None
    flow: FlowSpec = FlowSpec()
    complement: ComplementSpec = ComplementSpec()
    model: ModelSpec = ModelSpec()
    tolerances: Tolerances = Tolerances()

    @model_validator(mode='after')
    def check_consistent(self) -> 'SceneSpec':
        if (self.poisson is None) == (self.presymplectic is None):
            raise ValueError('a scene needs exactly one of [poisson] and [presymplectic]')
        if self.poisson is not None:
            if self.submanifold is None:
                raise ValueError('a [poisson] scene needs a [submanifold] section')
            if len(self.submanifold.components) != self.poisson.dim:
                raise ValueError(f'submanifold has {len(self.submanifold.components)} components, ambient '
                                 f'dimension is {self.poisson.dim}')
        elif self.submanifold is not None:
            raise ValueError('a [presymplectic] scene takes no [submanifold] section')
        ambient = self.poisson.dim if self.poisson is not None else self.presymplectic.dim
        for frame in (self.complement.g_frame, self.complement.h_frame):
            if frame is not None and any(len(v) != ambient for v in frame):
                raise ValueError(f'complement frame vectors need {ambient} components')
        return self


def _line_of(text: str, section: str, key: Optional[str] = None) -> Optional[int]:
    """1-based line of ``key`` in ``[section]`` (or of the section header)."""
    current = None
    for number, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if stripped.startswith('[') and stripped.endswith(']'):
            current = stripped[1:-1].strip()
            if key is None and current == section:
                return number
        elif current == section and key is not None and not line[:1].isspace():
            if stripped.split('=', 1)[0].strip().lower() == key:
                return number
    return None


def _read_sections(text: str) -> Dict[str, Dict[str, str]]:
    parser = configparser.ConfigParser(interpolation=None, empty_lines_in_values=False)
    try:
        parser.read_string(text)
    except configparser.MissingSectionHeaderError as e:
        raise SceneError('scene must start with a [section] header', e.lineno) from e
    except (configparser.DuplicateSectionError, configparser.DuplicateOptionError) as e:
        raise SceneError(e.message.split('\n')[0], e.lineno) from e
    except configparser.ParsingError as e:
        lineno = e.errors[0][0] if e.errors else None
        raise SceneError('malformed scene line', lineno) from e
    return {name: dict(parser[name]) for name in parser.sections()}


def parse_scene(text: str) -> SceneSpec:
    """Parses and validates scene text.

    Raises:
        SceneError: with the line of the offending section or key.
    """
    sections = _read_sections(text)
    try:
        return SceneSpec.model_validate(sections)
    except ValidationError as e:
        err = e.errors()[0]
        loc = [str(p) for p in err['loc']]
        section = loc[0] if loc else None
        key = loc[1] if len(loc) > 1 else None
        line = None
        if section is not None:
            line = _line_of(text, section, key) or _line_of(text, section)
        where = '.'.join(loc[:2]) or 'scene'
        raise SceneError(f'{where}: {err["msg"]}', line) from e


def _frame_fn(vectors: List[List[str]], arity: int, names: Optional[List[str]]) -> Callable[[np.ndarray], np.ndarray]:
    exprs = [[parse(c, arity, prefix='u', names=names) for c in v] for v in vectors]
    columns = compile_array(exprs, exprs[0][0].symbols if exprs and exprs[0] else ())
    return lambda u: columns(u).T


class Scene:
    """A parsed scene with its built objects: the Poisson field (or presymplectic form), chart and grid."""
    def __init__(self, spec: SceneSpec, text: Optional[str] = None):
        """Builds the scene objects.

        Args:
            spec: the validated scene.
            text: the scene text, for line numbers in errors.

        Raises:
            SceneError: on malformed expressions, with the line and character position, and on a presymplectic
                form that is not closed.
        """
        self.spec = spec
        self.text = text
        self.pi = self._build('poisson', lambda: spec.poisson.build()) if spec.poisson is not None else None
        self.form = None
        if spec.presymplectic is not None:
            self.form = self._build('presymplectic', lambda: spec.presymplectic.build())
            self._check_closed()
        self.chart = self._build('submanifold', lambda: self._chart())
        self.g_frame = self._build('complement', lambda: self._frame(spec.complement.g_frame), 'g_frame')
        self.h_frame = self._build('complement', lambda: self._frame(spec.complement.h_frame), 'h_frame')

    def _check_closed(self):
        tol = self.spec.tolerances.jacobi
        for x in self.form.sample_points(seed=self.spec.scene.seed):
            r = self.form.closedness_residual(x)
            if r > tol:
                line = None if self.text is None else _line_of(self.text, 'presymplectic', 'entries')
                raise SceneError(f'[presymplectic] the form is not closed: |dω| = {r:.3g} at '
                                 f'x = {tuple(round(float(v), 6) for v in x)}', line)

    @classmethod
    def from_text(cls, text: str) -> 'Scene':
        return cls(parse_scene(text), text)

    @classmethod
    def from_path(cls, path: Union[str, Path]) -> 'Scene':
        return cls.from_text(Path(path).read_text(encoding='utf-8'))

    def _build(self, section: str, fn: Callable[[], Any], key: Optional[str] = None) -> Any:
        try:
            return fn()
        except ExpressionSyntaxError as e:
            line = None
            if self.text is not None:
                line = _line_of(self.text, section, key) or _line_of(self.text, section)
            raise SceneError(f'[{section}] {e}', line, e.position) from e
        except ValueError as e:
            line = None if self.text is None else _line_of(self.text, section, key)
            raise SceneError(f'[{section}] {e}', line) from e

    def _chart(self) -> Chart:
        if self.spec.submanifold is not None:
            return self.spec.submanifold.build()
        p = self.spec.presymplectic
        names = p.variables or [f'x{i + 1}' for i in range(p.dim)]
        return Chart.parse(names, p.dim, domain=np.array(p.domain), names=names)

    def _frame(self, vectors: Optional[List[List[str]]]) -> Optional[Callable[[np.ndarray], np.ndarray]]:
        if vectors is None:
            return None
        return _frame_fn(vectors, self.chart.param_dim, list(self.chart.names) if self.chart.names else None)

    @property
    def name(self) -> str:
        return self.spec.scene.name

    @property
    def is_presymplectic(self) -> bool:
        return self.form is not None

    @cached_property
    def grid(self) -> np.ndarray:
        g = self.spec.submanifold.grid if self.spec.submanifold is not None else self.spec.presymplectic.grid
        return self.chart.grid(g[0] if len(g) == 1 else g)

    def dirac(self, u: np.ndarray) -> DiracSpace:
        """The presymplectic Dirac structure ``graph(ω(u))``."""
        return dirac_graph(self.form.at(u), FormKind.two_form)

    def with_overrides(self, *, steps: Optional[int] = None, tol: Optional[float] = None) -> 'Scene':
        """A copy with ``flow.steps`` and ``tolerances.normal_form`` replaced.

        Raises:
            SceneError: when the overrides are invalid.
        """
        data = self.spec.model_dump()
        if steps is not None:
            data['flow']['steps'] = steps
        if tol is not None:
            data['tolerances']['normal_form'] = tol
        try:
            spec = SceneSpec.model_validate(data)
        except ValidationError as e:
            raise SceneError(f'invalid override: {e.errors()[0]["msg"]}') from e
        return Scene(spec, self.text)

    def __repr__(self):
        return f'Scene({self.name!r})'


def load_scene(path: Union[str, Path]) -> Scene:
    return Scene.from_path(path)
