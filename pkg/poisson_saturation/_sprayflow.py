from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence, Tuple
from warnings import warn

import numpy as np
import pyterrier as pt
from scipy.integrate import simpson

from poisson_saturation._errors import NotRegularError
from poisson_saturation._expr import Expression, compile_array
from poisson_saturation._field import BivectorField
from poisson_saturation._linear import DEFAULT_RANK_TOL, SkewForm, Subspace, canonical_symplectic, rank_svd
from poisson_saturation._submanifold import Chart, generic_perp_rank, point_data

DEFAULT_STEPS = 1024
MIN_STEPS = 16


@dataclass(frozen=True, eq=False)
class CotangentState:
    """A covector ``ξ`` at a base point ``x``."""
    x: np.ndarray
    xi: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float).ravel()
        xi = np.asarray(self.xi, dtype=float).ravel()
        if x.shape != xi.shape:
            raise ValueError(f'base point has {x.size} coordinates, covector has {xi.size}')
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(xi))):
            raise ValueError('cotangent state has non-finite entries')
        object.__setattr__(self, 'x', x)
        object.__setattr__(self, 'xi', xi)

    @property
    def n(self) -> int:
        return self.x.size

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.x, self.xi])

    @classmethod
    def from_vector(cls, y: np.ndarray) -> 'CotangentState':
        n = y.size // 2
        return cls(y[:n], y[n:])


@dataclass(frozen=True, eq=False)
class FlowResult:
    """Time-``t_end`` flow of the spray from ``start``.

    ``jac`` is ``dφ^{t_end}`` in (x, ξ) coordinates; ``states`` and ``jacobians`` hold the RK4 nodes when kept.
    """
    start: CotangentState
    end: CotangentState
    jac: np.ndarray
    times: np.ndarray
    states: np.ndarray
    jacobians: Optional[np.ndarray]
    left_domain: bool
    exit_time: Optional[float]

    @property
    def condition(self) -> float:
        return float(np.linalg.cond(self.jac))

    @property
    def det_sign_preserved(self) -> bool:
        if self.jacobians is None:
            return bool(np.linalg.det(self.jac) > 0)
        return bool(np.all(np.linalg.det(self.jacobians) > 0))


def spray_eval(pi: BivectorField, s: CotangentState) -> Tuple[np.ndarray, np.ndarray]:
    """The flat Poisson spray ``χ(x, ξ) = (π^♯_x ξ, 0)``.

    Its base part is ``π^♯ξ``, and ``χ(x, tξ) = t·χ(x, ξ)`` in the base, so ``m_t^*χ = tχ``.
    """
    return pi.sharp(s.x, s.xi), np.zeros(s.n)


def spray_jacobian(pi: BivectorField, x: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """Exact linearization of the spray: ``[[∂_x(Πξ), Π], [0, 0]]``."""
    n = x.size
    top = np.hstack([np.einsum('lij,j->il', pi.derivative_tensor(x), xi), pi.matrix(x)])
    return np.vstack([top, np.zeros((n, 2 * n))])


def _augmented(pi: BivectorField, y: np.ndarray, phi: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    n = y.size // 2
    x, xi = y[:n], y[n:]
    p = pi.matrix(x)
    dy = np.concatenate([p @ xi, np.zeros(n)])
    a = np.einsum('lij,j->il', pi.derivative_tensor(x), xi)
    # only the top block row of the linearization is nonzero
    dphi = np.vstack([a @ phi[:n] + p @ phi[n:], np.zeros((n, 2 * n))])
    return dy, dphi


def _check_steps(steps: int) -> None:
    if steps < MIN_STEPS:
        raise ValueError(f'steps must be at least {MIN_STEPS}, got {steps}')
    if steps % 2:
        raise ValueError(f'steps must be even for Simpson quadrature, got {steps}')


def flow(pi: BivectorField, s: CotangentState, t_end: float = 1.0, steps: int = DEFAULT_STEPS, *,
         keep_nodes: bool = True) -> FlowResult:
    """Fixed-step RK4 flow of the spray with its variational equation.

    Integration continues when the base point leaves the domain box; the result is flagged instead.

    Args:
        pi: the Poisson structure.
        s: the initial state.
        t_end: final time.
        steps: number of RK4 steps (even, at least 16).
        keep_nodes: keep states and Jacobians at every node.
    """
    _check_steps(steps)
    if s.n != pi.dim:
        raise ValueError(f'state of dimension {s.n} for a field of dimension {pi.dim}')
    n = s.n
    h = t_end / steps
    y = s.vector.copy()
    phi = np.eye(2 * n)
    states = np.empty((steps + 1, 2 * n))
    jacobians = np.empty((steps + 1, 2 * n, 2 * n)) if keep_nodes else None
    states[0] = y
    if keep_nodes:
        jacobians[0] = phi
    exit_time = None if pi.in_domain(y[:n]) else 0.0
    for i in range(steps):
        k1, m1 = _augmented(pi, y, phi)
        k2, m2 = _augmented(pi, y + h / 2 * k1, phi + h / 2 * m1)
        k3, m3 = _augmented(pi, y + h / 2 * k2, phi + h / 2 * m2)
        k4, m4 = _augmented(pi, y + h * k3, phi + h * m3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        phi = phi + h / 6 * (m1 + 2 * m2 + 2 * m3 + m4)
        states[i + 1] = y
        if keep_nodes:
            jacobians[i + 1] = phi
        if exit_time is None and not pi.in_domain(y[:n]):
            exit_time = (i + 1) * h
    if not np.all(np.isfinite(y)):
        raise FloatingPointError(f'flow from x={tuple(s.x)} diverged')
    return FlowResult(
        start=s,
        end=CotangentState.from_vector(y),
        jac=phi,
        times=np.linspace(0.0, t_end, steps + 1),
        states=states,
        jacobians=jacobians,
        left_domain=exit_time is not None,
        exit_time=exit_time,
    )


def exp_chi(pi: BivectorField, s: CotangentState, steps: int = DEFAULT_STEPS) -> np.ndarray:
    """The contravariant exponential: base point of the time-1 spray flow."""
    return flow(pi, s, 1.0, steps, keep_nodes=False).end.x


def omega_chi(pi: BivectorField, s: CotangentState, steps: int = DEFAULT_STEPS, *,
              result: Optional[FlowResult] = None) -> SkewForm:
    """``Ω_χ = ∫₀¹ (φ^t)^* ω_can dt`` by composite Simpson over the RK4 nodes.

    ``ω_can((v₁,ξ₁),(v₂,ξ₂)) = ⟨v₁,ξ₂⟩ − ⟨v₂,ξ₁⟩``.
    """
    if result is None:
        result = flow(pi, s, 1.0, steps)
    if result.jacobians is None:
        raise ValueError('Ω_χ needs the Jacobians at the RK4 nodes')
    j = canonical_symplectic(result.start.n)
    integrand = np.einsum('tba,bc,tcd->tad', result.jacobians, j, result.jacobians)
    h = result.times[1] - result.times[0]
    return SkewForm.from_matrix(simpson(integrand, dx=h, axis=0))


def zero_section_omega(pi: BivectorField, x: Sequence[float]) -> SkewForm:
    """``⟨v₁,ξ₂⟩ − ⟨v₂,ξ₁⟩ + ⟨ξ₂, π^♯ξ₁⟩``, the value of ``Ω_χ`` on the zero section."""
    n = pi.dim
    m = canonical_symplectic(n)
    m[n:, n:] = pi.matrix(x).T
    return SkewForm.from_matrix(m)


def _node_derivative(values: np.ndarray, h: float) -> np.ndarray:
    # fourth-order differences; one-sided stencils at the two ends
    v = values
    d = np.empty_like(v)
    d[2:-2] = (-v[4:] + 8 * v[3:-1] - 8 * v[1:-3] + v[:-4]) / (12 * h)
    d[0] = (-25 * v[0] + 48 * v[1] - 36 * v[2] + 16 * v[3] - 3 * v[4]) / (12 * h)
    d[1] = (-3 * v[0] - 10 * v[1] + 18 * v[2] - 6 * v[3] + v[4]) / (12 * h)
    d[-2] = (3 * v[-1] + 10 * v[-2] - 18 * v[-3] + 6 * v[-4] - v[-5]) / (12 * h)
    d[-1] = (25 * v[-1] - 48 * v[-2] + 36 * v[-3] - 16 * v[-4] + 3 * v[-5]) / (12 * h)
    return d


def cotangent_path_residual(pi: BivectorField, result: FlowResult) -> float:
    """Largest ``|γ′(t) − π^♯_{γ(t)} ξ(t)|`` over the RK4 nodes, with ``γ = pr ∘ φ^t``."""
    n = result.start.n
    h = result.times[1] - result.times[0]
    base = result.states[:, :n]
    velocity = _node_derivative(base, h)
    expected = np.array([pi.sharp(y[:n], y[n:]) for y in result.states])
    return float(np.max(np.abs(velocity - expected)))


def hamiltonian_flow(pi: BivectorField, f: Expression, x: Sequence[float], t_end: float = 1.0,
                     steps: int = DEFAULT_STEPS) -> np.ndarray:
    """RK4 trajectory of ``X_f = π^♯(df)``; it stays in the leaf through ``x``."""
    _check_steps(steps)
    field = compile_array(pi.hamiltonian_vf(f), pi.symbols)
    h = t_end / steps
    y = np.asarray(x, dtype=float).copy()
    out = [y]
    for _ in range(steps):
        k1 = field(y)
        k2 = field(y + h / 2 * k1)
        k3 = field(y + h / 2 * k2)
        k4 = field(y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        out.append(y)
    return np.array(out)


def shrink_radius(pi: BivectorField, states: Callable[[float], Iterable[CotangentState]], radius: float, *,
                  steps: int = DEFAULT_STEPS, max_halvings: int = 8, verbose: bool = False) -> Tuple[float, int]:
    """Halves ``radius`` until no flow from ``states(radius)`` leaves the domain box.

    Args:
        pi: the Poisson structure.
        states: builds the test states for a given radius.
        radius: the initial radius R.
        steps: RK4 steps.
        max_halvings: give up after this many halvings.
        verbose: show a progress bar over the test states.

    Returns:
        The final radius and the number of halvings.

    Raises:
        FloatingPointError: when flows still leave the box after ``max_halvings`` halvings.
    """
    for halvings in range(max_halvings + 1):
        it = list(states(radius))
        if verbose:
            it = pt.tqdm(it, desc=f'radius {radius:g}', unit='flow')
        if not any(flow(pi, s, 1.0, steps, keep_nodes=False).left_domain for s in it):
            return radius, halvings
        warn(f'flows of radius {radius:g} leave the domain box; halving')
        radius /= 2
    raise FloatingPointError(f'flows leave the domain box even at radius {radius * 2:g}')


@dataclass(frozen=True)
class DualPairReport:
    """Rank data of the weak dual pair restricted over a point of X.

    ``S₁ = ker d(pr)``, ``S₂ = ker d(exp_χ)`` and ``K = ker Ω_χ|_X``, all inside ``T(Σ|_X)`` with
    ``dim Σ|_X = k + n``.
    """
    s1_dim: int
    s2_dim: int
    s2_expected: int
    k_dim: int
    triple_dim: int
    triple_expected: int
    orthogonality: float
    tol: float

    @property
    def passed(self) -> bool:
        return (self.orthogonality <= self.tol and self.triple_dim == self.triple_expected
                and self.s2_dim == self.s2_expected)

    def as_dict(self) -> dict:
        return {
            's1_dim': self.s1_dim,
            's2_dim': self.s2_dim,
            's2_expected': self.s2_expected,
            'k_dim': self.k_dim,
            'triple_dim': self.triple_dim,
            'triple_expected': self.triple_expected,
            'orthogonality': self.orthogonality,
            'passed': self.passed,
        }


def _null(m: np.ndarray, tol: float) -> Subspace:
    if m.size == 0 or not np.any(m):
        return Subspace.full(m.shape[1])
    return rank_svd(m, tol).null_space


def dual_pair_check(pi: BivectorField, X: Chart, u: Sequence[float], xi: Sequence[float],
                    steps: int = DEFAULT_STEPS, tol: float = 1e-8, *,
                    rank_tol: float = DEFAULT_RANK_TOL) -> DualPairReport:
    """Checks ``Ω_χ|_X(S₁, S₂) = 0`` and ``rk(S₁∩K∩S₂) = dim Σ|_X − dim X − dim P`` at ``(X(u), ξ)``.

    Raises:
        NotRegularError: when ``X`` is not regular at ``u``.
    """
    d = point_data(pi, X, u, rank_tol)
    generic = generic_perp_rank(pi, X, u, tol=rank_tol)
    if d.TXperp.dim != generic:
        raise NotRegularError(f'X is not regular at u={tuple(d.u)}', {d.TXperp.dim: [tuple(d.u)]})
    k, n, r = X.param_dim, X.ambient_dim, d.TXperp.dim
    result = flow(pi, CotangentState(d.x, xi), 1.0, steps)
    omega = omega_chi(pi, result.start, result=result).matrix
    embed = np.block([[d.jacobian, np.zeros((n, n))], [np.zeros((n, k)), np.eye(n)]])
    omega_x = embed.T @ omega @ embed
    s1 = Subspace(np.vstack([np.zeros((k, n)), np.eye(n)]))
    s2 = _null(result.jac[:n] @ embed, rank_tol)
    kernel = _null(omega_x, rank_tol)
    triple = s1.intersect(kernel, rank_tol).intersect(s2, rank_tol)
    orth = float(np.max(np.abs(s1.basis.T @ omega_x @ s2.basis))) if s2.dim else 0.0
    return DualPairReport(
        s1_dim=s1.dim,
        s2_dim=s2.dim,
        s2_expected=n - r,
        k_dim=kernel.dim,
        triple_dim=triple.dim,
        triple_expected=(k + n) - k - (k + r),
        orthogonality=orth,
        tol=tol,
    )
