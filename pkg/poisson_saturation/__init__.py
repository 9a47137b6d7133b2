"""Local Poisson saturations of regular submanifolds and their normal forms.

This package computes, for a submanifold X of a Poisson manifold given in coordinates, the smallest Poisson
submanifold P containing X near X, and checks numerically that P is Poisson diffeomorphic to a local model built
from the pullback Dirac structure of X.

Typical usage example::

  from poisson_saturation import BivectorField, BundleFrame, Chart, LocalModel, verify_normal_form
  pi = BivectorField.from_triples(3, [(1, 2, '1')], domain=[[-3, 3]] * 3)
  X = Chart.parse(['u', '0', '0'], 1, domain=[[-1, 1]])
  model = LocalModel(BundleFrame(pi, X, 'coisotropic'))
  verify_normal_form(model, [([0.0], [0.1])]).passed
"""

__version__ = '0.1.0'

from poisson_saturation._errors import ( # noqa: I001
    PoissonSaturationError,
    ExpressionSyntaxError,
    UnknownIdentifierError,
    ExpressionEvalError,
    RankDefectError,
    NotPoissonError,
    ImmersionError,
    NotRegularError,
    PrerequisiteError,
    SceneError,
)
from poisson_saturation._expr import Expression, parse, evaluate, derive, to_text
from poisson_saturation._linear import (
    Subspace,
    SkewForm,
    DiracSpace,
    FormKind,
    rank_svd,
    principal_angles,
    annihilator,
    dirac_graph,
    dirac_gauge,
    dirac_pullback,
    dirac_to_bivector,
    lagrangian_complement,
)
from poisson_saturation._field import (
    BivectorField,
    JacobiError,
    sharp,
    jacobi_residual,
    jacobi_residual_numeric,
    hamiltonian_vf,
    leaf_dim,
    poisson_bracket,
    is_casimir,
)
from poisson_saturation._submanifold import (
    Chart,
    Classification,
    RegularityScan,
    point_data,
    regularity_scan,
    classify,
    pullback_dirac,
    make_transversal,
    transversality_rank,
    transport_complement,
    Thickening,
)
from poisson_saturation._sprayflow import (
    CotangentState,
    FlowResult,
    flow,
    spray_eval,
    exp_chi,
    omega_chi,
    zero_section_omega,
    cotangent_path_residual,
    hamiltonian_flow,
    shrink_radius,
    dual_pair_check,
)
from poisson_saturation._model import (
    ComplementMode,
    ComplementChoice,
    BundleFrame,
    LocalModel,
    SaturationChart,
    GotayModel,
    TubularMap,
    complement,
    sigma_tau,
    eta_canonical,
    local_model_bivector,
    fiber_samples,
    saturation_chart,
    saturation_distance,
    verify_saturation_poisson,
    verify_normal_form,
    model_radius,
    compare_models,
    symplectic_rigidity,
    presymplectic_dirac,
    gotay_embedding,
    gotay_from_model,
    gotay_agreement,
    fiber_flip_residual,
    marle_invariants,
    tubular_map,
    summary_table,
)
from poisson_saturation._transformers import FiberSampler, SaturationSampler, NormalFormVerifier
from poisson_saturation._scene import Scene, SceneSpec, load_scene, parse_scene
from poisson_saturation._report import Report, StageReport
from poisson_saturation._fixtures import fixture_names, fixture_text

__all__ = [
    'PoissonSaturationError', 'ExpressionSyntaxError', 'UnknownIdentifierError', 'ExpressionEvalError',
    'RankDefectError', 'NotPoissonError', 'ImmersionError', 'NotRegularError', 'PrerequisiteError', 'SceneError',
    'Expression', 'parse', 'evaluate', 'derive', 'to_text',
    'Subspace', 'SkewForm', 'DiracSpace', 'FormKind', 'rank_svd', 'principal_angles', 'annihilator', 'dirac_graph',
    'dirac_gauge', 'dirac_pullback', 'dirac_to_bivector', 'lagrangian_complement',
    'BivectorField', 'JacobiError', 'sharp', 'jacobi_residual', 'jacobi_residual_numeric', 'hamiltonian_vf',
    'leaf_dim', 'poisson_bracket', 'is_casimir',
    'Chart', 'Classification', 'RegularityScan', 'point_data', 'regularity_scan', 'classify', 'pullback_dirac',
    'make_transversal', 'transversality_rank', 'transport_complement', 'Thickening',
    'CotangentState', 'FlowResult', 'flow', 'spray_eval', 'exp_chi', 'omega_chi', 'zero_section_omega',
    'cotangent_path_residual', 'hamiltonian_flow', 'shrink_radius', 'dual_pair_check',
    'ComplementMode', 'ComplementChoice', 'BundleFrame', 'LocalModel', 'SaturationChart', 'GotayModel', 'TubularMap',
    'complement', 'sigma_tau', 'eta_canonical', 'local_model_bivector', 'fiber_samples', 'saturation_chart',
    'saturation_distance', 'verify_saturation_poisson', 'verify_normal_form', 'model_radius', 'compare_models',
    'symplectic_rigidity', 'presymplectic_dirac', 'gotay_embedding', 'gotay_from_model', 'gotay_agreement',
    'fiber_flip_residual', 'marle_invariants', 'tubular_map', 'summary_table',
    'FiberSampler', 'SaturationSampler', 'NormalFormVerifier',
    'Scene', 'SceneSpec', 'load_scene', 'parse_scene', 'Report', 'StageReport',
    'fixture_names', 'fixture_text',
]
