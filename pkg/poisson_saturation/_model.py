from dataclasses import dataclass
from enum import Enum
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import pyterrier as pt
import scipy.linalg
from scipy.optimize import least_squares
from scipy.stats import qmc

from poisson_saturation._errors import NotPoissonError, NotRegularError, PrerequisiteError, RankDefectError
from poisson_saturation._field import BivectorField, jacobi_residual_numeric
from poisson_saturation._linear import (
    DEFAULT_RANK_TOL,
    DiracSpace,
    FormKind,
    SkewForm,
    Subspace,
    annihilator,
    canonical_symplectic,
    containment_residual,
    dirac_gauge,
    dirac_graph,
    dirac_pullback,
    dirac_to_bivector,
    lagrangian_complement,
    principal_angles,
    rank_svd,
)
from poisson_saturation._sprayflow import DEFAULT_STEPS, CotangentState, FlowResult, flow, omega_chi
from poisson_saturation._submanifold import (
    Chart,
    Classification,
    PointData,
    as_grid,
    generic_perp_rank,
    point_data,
    pullback_dirac,
    transport_complement,
    transversal_complement,
)

DEFAULT_COMPLEMENT_ARGS = {
    'rank_tol': DEFAULT_RANK_TOL,
    'fd_step': 1e-6,
}

FrameFn = Callable[[np.ndarray], np.ndarray]


def _key(a: Sequence[float]) -> Tuple[float, ...]:
    return tuple(float(v) for v in np.ravel(a))


def _phi_jacobian(X: Chart, frame: 'BundleFrame', u: Sequence[float], s: Sequence[float]) -> np.ndarray:
    """Jacobian of ``(u, s) ↦ (X(u), j_u(s))``."""
    u = np.asarray(u, dtype=float).reshape(X.param_dim)
    s = np.asarray(s, dtype=float).reshape(frame.rank)
    n = X.ambient_dim
    moving = np.einsum('lnr,r->nl', frame.j_derivative(u), s)
    return np.block([[X.jacobian(u), np.zeros((n, frame.rank))], [moving, frame.j(u)]])


def _leak(space: Subspace, vectors: np.ndarray) -> float:
    """Largest component of the columns of ``vectors`` orthogonal to ``space``."""
    if vectors.size == 0:
        return 0.0
    rest = vectors - space.basis @ (space.basis.T @ vectors)
    return float(np.max(np.linalg.norm(rest, axis=0)))


def _angle(a: Subspace, b: Subspace) -> float:
    if a.dim != b.dim:
        return float(np.pi / 2)
    if a.dim == 0:
        return 0.0
    return float(np.max(principal_angles(a, b)))


def _is_transversal(d: PointData, tol: float) -> bool:
    return (d.TX + d.TXperp).dim == d.x.size and d.TX.intersect(d.TXperp, tol).dim == 0


def _symplectic_span(d: PointData, c0: Subspace, g: Subspace, h: Subspace, tol: float) -> Tuple[Subspace, SkewForm]:
    """``S = π^♯((G+H)⁰)`` with ``ω(π^♯α, π^♯β) = π(α, β)``, as a form on the ambient space."""
    gamma = annihilator(g + h).basis
    s = Subspace.span(d.pi @ gamma, tol)
    if s.dim != 2 * c0.dim:
        raise RankDefectError(f'π^♯((G+H)⁰) has rank {s.dim}, expected {2 * c0.dim}', expected=2 * c0.dim,
                              found=s.dim)
    if s.dim == 0:
        return s, SkewForm.zero(d.x.size)
    beta = gamma @ np.linalg.pinv(s.basis.T @ d.pi @ gamma)  # π^♯ beta = s.basis
    coords = beta.T @ d.pi.T @ beta
    return s, SkewForm.from_matrix(s.basis @ coords @ s.basis.T)


def _w_gh(d: PointData, c0: Subspace, g: Subspace, h: Subspace, tol: float) -> Subspace:
    """``W_{G,H} = G ⊕ C ⊕ Y`` with ``C`` a Lagrangian complement of ``c0`` in ``π^♯((G+H)⁰)``."""
    s, omega = _symplectic_span(d, c0, g, h, tol)
    c = lagrangian_complement(omega, s, c0) if c0.dim else Subspace.zero(d.x.size)
    y = (c0 + h + g + c).orthogonal_complement()
    return g + c + y


def _require_complement(space: Subspace, sub: Subspace, comp: Subspace, name: str, tol: float) -> None:
    if sub.intersect(comp, tol).dim != 0 or not (sub + comp).equals(space, 1e-8):
        raise PrerequisiteError(f'{name} is not a complement ({comp.dim}-dimensional, needs {space.dim - sub.dim})')


class ComplementMode(Enum):
    """How the complement ``W`` of ``TX^{⊥π}`` in ``TM|_X`` is chosen."""

    default = 'default'
    coisotropic = 'coisotropic'
    pre_poisson = 'pre_poisson'

    def build(self,
        d: PointData,
        g: Optional[Subspace] = None,
        h: Optional[Subspace] = None,
        args: Optional[Dict[str, float]] = None,
    ) -> Tuple[Subspace, Optional[Subspace], Optional[Subspace]]:
        """Builds ``W`` at one point.

        Args:
            d: the point data of X.
            g: a complement of ``TX^{⊥π} ∩ TX`` in ``TX``; the Euclidean one when omitted.
            h: a complement of ``TX^{⊥π} ∩ TX`` in ``TX^{⊥π}`` (pre-Poisson mode); the Euclidean one when omitted.
            args: overrides of ``DEFAULT_COMPLEMENT_ARGS``.

        Returns:
            ``(W, G, H)``; ``G`` and ``H`` are ``None`` in default mode.

        Raises:
            PrerequisiteError: when the point does not satisfy the mode's hypotheses.
        """
        a = dict(DEFAULT_COMPLEMENT_ARGS)
        if args is not None:
            a.update(args)
        tol = a['rank_tol']
        if self == ComplementMode.default:
            if _is_transversal(d, tol):
                return d.TX, None, None
            return d.TXperp.orthogonal_complement(), None, None
        if self == ComplementMode.coisotropic:
            if containment_residual(d.TX, d.TXperp) > 1e-8:
                raise PrerequisiteError(f'X is not coisotropic at u={tuple(d.u)}')
            c0 = d.TXperp
            g = d.TX.complement_in(c0) if g is None else g
            _require_complement(d.TX, c0, g, 'G', tol)
            h = Subspace.zero(d.x.size)
            return _w_gh(d, c0, g, h, tol), g, h
        if self == ComplementMode.pre_poisson:
            c0 = d.TXperp.intersect(d.TX, tol)
            g = d.TX.complement_in(c0) if g is None else g
            h = d.TXperp.complement_in(c0) if h is None else h
            _require_complement(d.TX, c0, g, 'G', tol)
            _require_complement(d.TXperp, c0, h, 'H', tol)
            return _w_gh(d, c0, g, h, tol), g, h
        raise ValueError(f'complement mode {self} is not supported')

    def __repr__(self):
        return repr(self.value)


@dataclass(frozen=True, eq=False)
class ComplementChoice:
    """A complement ``W`` of ``TX^{⊥π}`` at one point, with the checks of its defining conditions.

    ``checks`` maps each condition to a residual: ``direct_sum`` (smallest singular value of ``[TX^{⊥π} W]``),
    ``annihilates`` (how far ``W⁰`` is from annihilating ``W``), ``invariance`` (the part of ``π^♯(W⁰)`` or
    ``π^♯((H+W)⁰)`` outside ``W``) and ``tx_intersection`` (largest principal angle between ``W ∩ TX`` and ``G``).
    """
    mode: ComplementMode
    u: np.ndarray
    W: Subspace
    annihilator: Subspace
    G: Optional[Subspace]
    H: Optional[Subspace]
    checks: Dict[str, float]

    @property
    def is_direct_sum(self) -> bool:
        return self.checks['direct_sum'] > 1e-8

    def passed(self, tol: float = 1e-10) -> bool:
        return self.is_direct_sum and all(v <= tol for k, v in self.checks.items() if k != 'direct_sum')


def _checks(d: PointData, mode: ComplementMode, w: Subspace, g: Optional[Subspace], h: Optional[Subspace],
            tol: float) -> Tuple[Subspace, Dict[str, float]]:
    n = d.x.size
    w0 = annihilator(w)
    stacked = np.hstack([d.TXperp.basis, w.basis])
    direct = 0.0
    if stacked.shape[1] == n:
        direct = float(scipy.linalg.svdvals(stacked)[-1])
    checks = {
        'direct_sum': direct,
        'annihilates': float(np.max(np.abs(w0.basis.T @ w.basis))) if w0.dim and w.dim else 0.0,
    }
    if mode == ComplementMode.coisotropic:
        checks['invariance'] = _leak(w, d.pi @ w0.basis)
    elif mode == ComplementMode.pre_poisson:
        checks['invariance'] = _leak(w, d.pi @ annihilator(h + w).basis)
    if g is not None:
        checks['tx_intersection'] = _angle(w.intersect(d.TX, tol), g)
    return w0, checks


def complement(pi: BivectorField, X: Chart, u: Sequence[float],
               mode: ComplementMode = ComplementMode.default,
               G: Optional[Subspace] = None, H: Optional[Subspace] = None,
               *, tol: float = DEFAULT_RANK_TOL) -> ComplementChoice:
    """Chooses a complement ``TM|_X = TX^{⊥π} ⊕ W`` at ``u``.

    The default mode takes ``W = TX`` where X is a Poisson transversal and the Euclidean orthogonal complement
    otherwise. The coisotropic mode returns ``W_G`` with ``π^♯(W_G⁰) ⊆ W_G`` and ``W_G ∩ TX = G``; the pre-Poisson
    mode returns ``W_{G,H}`` with ``π^♯((H+W)⁰) ⊆ W`` and ``W ∩ TX = G``.

    Raises:
        PrerequisiteError: when the mode's hypotheses fail at ``u``.
    """
    mode = ComplementMode(mode)
    d = point_data(pi, X, u, tol)
    w, g, h = mode.build(d, G, H, {'rank_tol': tol})
    w0, checks = _checks(d, mode, w, g, h, tol)
    return ComplementChoice(mode, d.u, w, w0, g, h, checks)


class BundleFrame:
    """Smooth fiber coordinates ``s ↦ j_u(s)`` on ``(TX^{⊥π})*`` along a chart.

    The frame ``B(u)`` of ``TX^{⊥π}`` is the projection of a reference frame taken at ``anchor``; ``j_u(s) = Z(u)s``
    is the covector in ``W⁰`` with ``⟨Z(u)s, B(u)e_i⟩ = s_i``. ``Z`` depends on ``W`` only through the subspace.
    """
    def __init__(self,
        pi: BivectorField,
        X: Chart,
        mode: ComplementMode = ComplementMode.default,
        *,
        anchor: Optional[Sequence[float]] = None,
        g_frame: Optional[FrameFn] = None,
        h_frame: Optional[FrameFn] = None,
        tol: float = DEFAULT_RANK_TOL,
        fd_step: float = DEFAULT_COMPLEMENT_ARGS['fd_step'],
    ):
        """Builds a bundle frame.

        Args:
            pi: the Poisson structure.
            X: the regular submanifold.
            mode: how to choose the complement ``W``.
            anchor: parameter of the reference frame; the centre of the chart domain when omitted.
            g_frame: optional map ``u ↦`` spanning vectors (n×m) of ``G``.
            h_frame: optional map ``u ↦`` spanning vectors of ``H``.
            tol: rank tolerance.
            fd_step: step of the central differences of ``Z``.

        Raises:
            NotRegularError: when X is not regular at the anchor.
        """
        self.pi = pi
        self.X = X
        self.mode = ComplementMode(mode)
        if anchor is None:
            anchor = X.domain.mean(axis=1) if X.domain is not None else np.zeros(X.param_dim)
        self.anchor = np.asarray(anchor, dtype=float).reshape(X.param_dim)
        self.g_frame = g_frame
        self.h_frame = h_frame
        self.tol = tol
        self.fd_step = fd_step
        d = point_data(pi, X, self.anchor, tol)
        generic = generic_perp_rank(pi, X, self.anchor, tol=tol)
        if d.TXperp.dim != generic:
            raise NotRegularError(f'X is not regular at the anchor u={tuple(self.anchor)}',
                                  {d.TXperp.dim: [tuple(self.anchor)]})
        self.rank = d.TXperp.dim
        self.b_ref = d.TXperp.basis
        self._choices = {}

    @property
    def param_dim(self) -> int:
        return self.X.param_dim

    @property
    def ambient_dim(self) -> int:
        return self.X.ambient_dim

    def choice(self, u: Sequence[float]) -> ComplementChoice:
        key = _key(u)
        if key not in self._choices:
            u = np.asarray(u, dtype=float).reshape(self.param_dim)
            g = None if self.g_frame is None else Subspace.span(self.g_frame(u), self.tol)
            h = None if self.h_frame is None else Subspace.span(self.h_frame(u), self.tol)
            self._choices[key] = complement(self.pi, self.X, u, self.mode, g, h, tol=self.tol)
        return self._choices[key]

    def basis(self, u: Sequence[float]) -> np.ndarray:
        """The frame ``B(u)`` of ``TX^{⊥π}`` (n×r)."""
        d = point_data(self.pi, self.X, u, self.tol)
        if d.TXperp.dim != self.rank:
            raise NotRegularError(f'π-orthogonal has rank {d.TXperp.dim} at u={tuple(d.u)}, {self.rank} at the '
                                  'anchor', {d.TXperp.dim: [tuple(d.u)]})
        return d.TXperp.projector() @ self.b_ref

    def j(self, u: Sequence[float]) -> np.ndarray:
        """The matrix ``Z(u)`` (n×r) of ``j_u``."""
        if self.rank == 0:
            return np.zeros((self.ambient_dim, 0))
        b = self.basis(u)
        n0 = self.choice(u).annihilator.basis
        return scipy.linalg.solve(n0.T @ b, n0.T, assume_a='gen').T

    def j_derivative(self, u: Sequence[float]) -> np.ndarray:
        """``∂_l Z(u)`` by central differences, shape ``(k, n, r)``."""
        u = np.asarray(u, dtype=float).reshape(self.param_dim)
        out = np.zeros((self.param_dim, self.ambient_dim, self.rank))
        if self.rank == 0:
            return out
        for l in range(self.param_dim):  # noqa: E741
            step = np.zeros(self.param_dim)
            step[l] = self.fd_step
            out[l] = (self.j(u + step) - self.j(u - step)) / (2 * self.fd_step)
        return out

    def __repr__(self):
        return f'BundleFrame({self.X!r}, mode={self.mode!r}, rank={self.rank})'


def sigma_tau(pi: BivectorField, X: Chart, u: Sequence[float], frame: BundleFrame) -> Tuple[SkewForm, SkewForm]:
    """``σ(ξ₁,ξ₂) = π(j ξ₁, j ξ₂)`` on the fiber and ``τ((v₁,ξ₁),(v₂,ξ₂)) = ⟨v₁, j ξ₂⟩ − ⟨v₂, j ξ₁⟩``.

    ``τ`` is returned as a form on the bundle chart coordinates ``(u, s)``.
    """
    u = np.asarray(u, dtype=float).reshape(X.param_dim)
    z = frame.j(u)
    a = X.jacobian(u)
    p = pi.matrix(X.point(u))
    k, r = X.param_dim, frame.rank
    sigma = SkewForm.from_matrix(z.T @ p.T @ z)
    tau = np.zeros((k + r, k + r))
    tau[:k, k:] = a.T @ z
    tau[k:, :k] = -z.T @ a
    return sigma, SkewForm.from_matrix(tau)


@dataclass(frozen=True, eq=False)
class ModelPoint:
    """Everything computed at one bundle-chart state ``(u, s)``.

    ``jac_phi`` is the Jacobian of ``(u, s) ↦ j_u(s) ∈ T*M|_X`` and ``jac_psi`` that of the saturation chart
    ``(u, s) ↦ exp_χ(j_u(s))``.
    """
    u: np.ndarray
    s: np.ndarray
    state: CotangentState
    flow: FlowResult
    jac_phi: np.ndarray
    jac_psi: np.ndarray
    eta: SkewForm

    @property
    def y(self) -> np.ndarray:
        return self.flow.end.x

    @property
    def left_domain(self) -> bool:
        return self.flow.left_domain


class LocalModel:
    """The local model ``π(W, η)`` on the bundle chart of ``(TX^{⊥π})*``, with ``η = −j*(Ω_χ|_X)``.

    Its bivector is extracted from ``(pr*(i*L_π))^η``; ``exp_χ ∘ j`` maps it to the saturation.
    """
    def __init__(self, frame: BundleFrame, *, steps: int = DEFAULT_STEPS, tol: float = DEFAULT_RANK_TOL):
        self.frame = frame
        self.pi = frame.pi
        self.X = frame.X
        self.steps = steps
        self.tol = tol
        self._points = {}
        self._dirac = {}

    @property
    def k(self) -> int:
        return self.X.param_dim

    @property
    def r(self) -> int:
        return self.frame.rank

    @property
    def dim(self) -> int:
        return self.k + self.r

    def split(self, p: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
        p = np.asarray(p, dtype=float).ravel()
        return p[:self.k], p[self.k:]

    def state(self, u: Sequence[float], s: Sequence[float]) -> CotangentState:
        return CotangentState(self.X.point(u), self.frame.j(u) @ np.asarray(s, dtype=float).reshape(self.r))

    def pulled_dirac(self, u: Sequence[float]) -> DiracSpace:
        key = _key(u)
        if key not in self._dirac:
            self._dirac[key] = pullback_dirac(self.pi, self.X, u, expected_perp=self.r, tol=self.tol)
        return self._dirac[key]

    def bundle_dirac(self, u: Sequence[float]) -> DiracSpace:
        """``pr*(i*L_π)`` at any point of the fiber over ``u``."""
        if self.k == 0:
            return dirac_graph(SkewForm.zero(self.r), FormKind.two_form)
        pr = np.hstack([np.eye(self.k), np.zeros((self.k, self.r))])
        return dirac_pullback(self.pulled_dirac(u), pr, tol_rel=self.tol)

    def phi_jacobian(self, u: Sequence[float], s: Sequence[float]) -> np.ndarray:
        return _phi_jacobian(self.X, self.frame, u, s)

    def chart_map(self, u: Sequence[float], s: Sequence[float]) -> Tuple[np.ndarray, np.ndarray, bool]:
        """``ψ(u, s) = exp_χ(j_u(s))``, its Jacobian and the domain-exit flag."""
        res = flow(self.pi, self.state(u, s), 1.0, self.steps, keep_nodes=False)
        return res.end.x, res.jac[:self.X.ambient_dim] @ self.phi_jacobian(u, s), res.left_domain

    def point(self, u: Sequence[float], s: Sequence[float]) -> ModelPoint:
        key = (_key(u), _key(s))
        if key not in self._points:
            u = np.asarray(u, dtype=float).reshape(self.k)
            s = np.asarray(s, dtype=float).reshape(self.r)
            state = self.state(u, s)
            res = flow(self.pi, state, 1.0, self.steps)
            jac_phi = self.phi_jacobian(u, s)
            omega = omega_chi(self.pi, state, result=res)
            self._points[key] = ModelPoint(
                u=u,
                s=s,
                state=state,
                flow=res,
                jac_phi=jac_phi,
                jac_psi=res.jac[:self.X.ambient_dim] @ jac_phi,
                eta=-omega.pullback(jac_phi),
            )
        return self._points[key]

    def eta(self, u: Sequence[float], s: Sequence[float]) -> SkewForm:
        return self.point(u, s).eta

    def zero_section_eta(self, u: Sequence[float]) -> SkewForm:
        """``−σ ⊕ −τ ⊕ 0`` in bundle chart coordinates."""
        sigma, tau = sigma_tau(self.pi, self.X, u, self.frame)
        m = -tau.matrix
        m[self.k:, self.k:] -= sigma.matrix
        return SkewForm.from_matrix(m)

    def restriction_residual(self, u: Sequence[float]) -> float:
        """``|η(u, 0) − (−σ ⊕ −τ)|``."""
        return float(np.max(np.abs(self.eta(u, np.zeros(self.r)).matrix - self.zero_section_eta(u).matrix),
                            initial=0.0))

    def closedness_residual(self, u: Sequence[float], s: Sequence[float], h: float = 1e-4) -> float:
        """Largest entry of ``dη`` at ``(u, s)`` by central differences."""
        p = np.concatenate([np.ravel(u), np.ravel(s)]).astype(float)
        m = p.size
        d = np.zeros((m, m, m))
        for a in range(m):
            step = np.zeros(m)
            step[a] = h
            d[a] = (self.eta(*self.split(p + step)).matrix - self.eta(*self.split(p - step)).matrix) / (2 * h)
        cyclic = d + np.transpose(d, (1, 2, 0)) + np.transpose(d, (2, 0, 1))
        return float(np.max(np.abs(cyclic), initial=0.0))

    def bivector(self, u: Sequence[float], s: Sequence[float]) -> SkewForm:
        """The model bivector at ``(u, s)``.

        Raises:
            NotPoissonError: where ``(pr*(i*L_π))^η`` is not the graph of a bivector.
        """
        return dirac_to_bivector(dirac_gauge(self.bundle_dirac(u), self.eta(u, s)), self.tol)

    def pushforward(self, u: Sequence[float], s: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
        """``(ψ(u, s), Dψ π(W,η) Dψᵀ)``."""
        pt_ = self.point(u, s)
        return pt_.y, self.bivector(u, s).pushforward(pt_.jac_psi).matrix

    def __repr__(self):
        return f'LocalModel({self.frame!r}, steps={self.steps})'


def eta_canonical(pi: BivectorField, X: Chart, frame: BundleFrame, u: Sequence[float], s: Sequence[float],
                  steps: int = DEFAULT_STEPS) -> SkewForm:
    """``η = −j*(Ω_χ|_X)`` at the bundle-chart state ``(u, s)``.

    ``Ω_χ`` is integrated along the spray of ``pi`` from ``(X(u), j_u(s))``; ``frame`` only supplies ``j``.

    Raises:
        ValueError: when ``frame`` does not live over a chart of the shape of ``X``.
    """
    if (frame.param_dim, frame.ambient_dim) != (X.param_dim, X.ambient_dim) or pi.dim != X.ambient_dim:
        raise ValueError(f'frame over a {frame.param_dim}-dim chart in R^{frame.ambient_dim} does not match X '
                         f'({X.param_dim} in R^{X.ambient_dim}) and π on R^{pi.dim}')
    u = np.asarray(u, dtype=float).reshape(X.param_dim)
    s = np.asarray(s, dtype=float).reshape(frame.rank)
    state = CotangentState(X.point(u), frame.j(u) @ s)
    return -omega_chi(pi, state, steps).pullback(_phi_jacobian(X, frame, u, s))


def local_model_bivector(model: LocalModel, u: Sequence[float], s: Sequence[float]) -> SkewForm:
    return model.bivector(u, s)


def fiber_samples(model: LocalModel, grid: np.ndarray, radius: float, fiber_points: int = 8,
                  seed: int = 0) -> List[Tuple[np.ndarray, np.ndarray]]:
    """Bundle-chart states: the zero section over ``grid`` plus ``fiber_points`` quasi-random covectors of norm at
    most ``radius`` over each grid point."""
    grid = as_grid(grid, model.k)
    out = []
    offsets = np.zeros((0, model.r))
    if model.r and fiber_points:
        halton = qmc.Halton(d=model.r, scramble=True, seed=seed).random(fiber_points)
        offsets = radius * (2 * halton - 1) / np.sqrt(model.r)
    for u in grid:
        out.append((u, np.zeros(model.r)))
        out.extend((u, s) for s in offsets)
    return out


@dataclass(frozen=True, eq=False)
class SaturationChart:
    """Samples of the chart ``(u, s) ↦ exp_χ(j_u(s))`` of the local Poisson saturation P."""
    model: LocalModel
    params: np.ndarray
    fibers: np.ndarray
    points: np.ndarray
    jacobians: np.ndarray
    ranks: np.ndarray
    left_domain: np.ndarray

    @property
    def expected_rank(self) -> int:
        return self.model.dim

    @property
    def immersive(self) -> bool:
        return bool(np.all(self.ranks == self.expected_rank))

    def tangent(self, i: int) -> Subspace:
        return Subspace.span(self.jacobians[i], self.model.tol)

    def splitting_residual(self) -> float:
        """Angle between ``TP`` and ``TX ⊕ π^♯(j(TX^{⊥π})*)`` over the zero-section samples."""
        worst = 0.0
        for i, (u, s) in enumerate(zip(self.params, self.fibers)):
            if np.any(s):
                continue
            z = self.model.frame.j(u)
            expected = Subspace.span(np.hstack([self.model.X.jacobian(u), self.model.pi.matrix(self.points[i]) @ z]))
            worst = max(worst, _angle(self.tangent(i), expected))
        return worst

    def __len__(self):
        return len(self.points)


def saturation_chart(model: LocalModel, samples: Iterable[Tuple[Sequence[float], Sequence[float]]], *,
                     verbose: bool = False) -> SaturationChart:
    """Samples the saturation chart at the given bundle-chart states."""
    samples = list(samples)
    if verbose:
        samples = pt.tqdm(samples, desc='saturation chart', unit='state')
    params, fibers, points, jacs, ranks, left = [], [], [], [], [], []
    for u, s in samples:
        y, jac, out = model.chart_map(u, s)
        params.append(np.ravel(u))
        fibers.append(np.ravel(s))
        points.append(y)
        jacs.append(jac)
        ranks.append(rank_svd(jac, model.tol).rank if jac.size else 0)
        left.append(out)
    return SaturationChart(
        model=model,
        params=np.array(params).reshape(-1, model.k),
        fibers=np.array(fibers).reshape(-1, model.r),
        points=np.array(points),
        jacobians=np.array(jacs).reshape(len(points), model.X.ambient_dim, model.dim),
        ranks=np.array(ranks, dtype=int),
        left_domain=np.array(left, dtype=bool),
    )


def _invert(model: LocalModel, y: np.ndarray, p0: np.ndarray) -> Tuple[np.ndarray, float]:
    """Solves ``ψ(p) = y`` near ``p0`` by Levenberg-Marquardt with the exact chart Jacobian."""
    cache = {}

    def evaluate(p: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        key = _key(p)
        if key not in cache:
            cache.clear()
            u, s = model.split(p)
            y_p, jac, _ = model.chart_map(u, s)
            cache[key] = (y_p, jac)
        return cache[key]

    res = least_squares(lambda p: evaluate(p)[0] - y, p0, jac=lambda p: evaluate(p)[1], method='lm',
                        xtol=1e-15, ftol=1e-15, gtol=1e-15)
    return res.x, float(np.max(np.abs(res.fun), initial=0.0))


def saturation_distance(model: LocalModel, u: Sequence[float], xi: Sequence[float]) -> float:
    """Distance from ``exp_χ(ξ)``, for any covector ``ξ`` at ``X(u)``, to the sampled chart image of P."""
    u = np.asarray(u, dtype=float).reshape(model.k)
    xi = np.asarray(xi, dtype=float)
    y = flow(model.pi, CotangentState(model.X.point(u), xi), 1.0, model.steps, keep_nodes=False).end.x
    if model.dim == 0:
        return float(np.linalg.norm(y - model.X.point(u)))
    s0 = model.frame.basis(u).T @ xi
    _, residual = _invert(model, y, np.concatenate([u, s0]))
    return residual


@dataclass(frozen=True)
class SaturationReport:
    """Residual of ``π^♯(TP⁰) ⊆ TP`` over the chart samples."""
    residual: float
    residuals: Tuple[float, ...]
    tol: float

    @property
    def passed(self) -> bool:
        return self.residual <= self.tol

    def as_dict(self) -> dict:
        return {'residual': self.residual, 'samples': len(self.residuals), 'tol': self.tol, 'passed': self.passed}


def saturation_leak(pi: BivectorField, y: np.ndarray, tangent: Subspace) -> float:
    """Largest part of ``π^♯(TP⁰)`` outside ``TP`` at ``y``."""
    return _leak(tangent, pi.matrix(y) @ annihilator(tangent).basis)


def verify_saturation_poisson(pi: BivectorField, chart: SaturationChart, tol: float = 1e-8) -> SaturationReport:
    """Checks that P is a Poisson submanifold: ``π^♯β`` is tangent to P for every ``β ∈ TP⁰``."""
    residuals = [saturation_leak(pi, y, chart.tangent(i)) for i, y in enumerate(chart.points)]
    return SaturationReport(max(residuals, default=0.0), tuple(residuals), tol)


@dataclass(frozen=True)
class NormalFormReport:
    """Mismatch between the pushed-forward model bivector and ``π`` compressed to ``TP``."""
    mismatch: float
    mismatches: Tuple[float, ...]
    failures: int
    tol: float

    @property
    def passed(self) -> bool:
        return self.failures == 0 and self.mismatch <= self.tol

    def as_dict(self) -> dict:
        return {
            'mismatch': self.mismatch,
            'samples': len(self.mismatches),
            'extraction_failures': self.failures,
            'tol': self.tol,
            'passed': self.passed,
        }


def normal_form_mismatch(model: LocalModel, u: Sequence[float], s: Sequence[float]) -> float:
    y, pushed = model.pushforward(u, s)
    q = Subspace.span(model.point(u, s).jac_psi, model.tol).basis
    return float(np.max(np.abs(q.T @ (pushed - model.pi.matrix(y)) @ q), initial=0.0))


def verify_normal_form(model: LocalModel, samples: Iterable[Tuple[Sequence[float], Sequence[float]]],
                       tol: float = 1e-4, *, verbose: bool = False) -> NormalFormReport:
    """Checks that ``exp_χ ∘ j`` is a Poisson map from the local model onto P at every sample."""
    samples = list(samples)
    if verbose:
        samples = pt.tqdm(samples, desc='normal form', unit='state')
    mismatches, failures = [], 0
    for u, s in samples:
        try:
            mismatches.append(normal_form_mismatch(model, u, s))
        except NotPoissonError:
            failures += 1
    return NormalFormReport(max(mismatches, default=0.0), tuple(mismatches), failures, tol)


def model_radius(model: LocalModel, u: Sequence[float], *,
                 radii: Sequence[float] = (0.025, 0.05, 0.1, 0.2, 0.4, 0.8, 1.6),
                 directions: int = 8, seed: int = 0) -> float:
    """The largest radius of ``radii`` up to which the model bivector is extracted along sampled fiber rays.

    This is an empirical lower estimate of the neighborhood on which the model is Poisson, not a sharp bound.
    """
    if model.r == 0:
        return float('inf')
    rng = np.random.default_rng(seed)
    rays = rng.normal(size=(directions, model.r))
    rays /= np.linalg.norm(rays, axis=1, keepdims=True)
    found = 0.0
    for radius in radii:
        try:
            for ray in rays:
                if model.point(u, radius * ray).left_domain:
                    return found
                model.bivector(u, radius * ray)
        except NotPoissonError:
            return found
        found = float(radius)
    return found


@dataclass(frozen=True)
class IndependenceReport:
    """Agreement on P of two local models built from different complements."""
    mismatch: float
    inversion_residual: float
    samples: int
    tol: float

    @property
    def passed(self) -> bool:
        return self.mismatch <= self.tol and self.inversion_residual <= self.tol

    def as_dict(self) -> dict:
        return {
            'mismatch': self.mismatch,
            'inversion_residual': self.inversion_residual,
            'samples': self.samples,
            'tol': self.tol,
            'passed': self.passed,
        }


def compare_models(model0: LocalModel, model1: LocalModel,
                   samples: Iterable[Tuple[Sequence[float], Sequence[float]]], tol: float = 1e-4, *,
                   verbose: bool = False) -> IndependenceReport:
    """Pushes both models to P and compares them at shared ambient points.

    Each sample of ``model0`` is mapped to ``y ∈ P``; ``y`` is located in the chart of ``model1`` by least squares.
    """
    samples = list(samples)
    if verbose:
        samples = pt.tqdm(samples, desc='model independence', unit='state')
    worst, worst_inv = 0.0, 0.0
    for u, s in samples:
        u = np.asarray(u, dtype=float).reshape(model0.k)
        y, pushed0 = model0.pushforward(u, s)
        s1 = model1.frame.basis(u).T @ model0.state(u, s).xi
        p1, inv = _invert(model1, y, np.concatenate([u, s1]))
        _, pushed1 = model1.pushforward(*model1.split(p1))
        q = Subspace.span(model0.point(u, s).jac_psi, model0.tol).basis
        worst = max(worst, float(np.max(np.abs(q.T @ (pushed0 - pushed1) @ q), initial=0.0)))
        worst_inv = max(worst_inv, inv)
    return IndependenceReport(worst, worst_inv, len(samples), tol)


@dataclass(frozen=True)
class RigidityReport:
    """In a symplectic ambient every submanifold is regular and its local model is an open symplectic piece."""
    symplectic: bool
    param_dim: int
    ambient_dim: int
    rank_perp: int
    model_rank: int

    @property
    def passed(self) -> bool:
        n = self.ambient_dim
        return self.symplectic and self.rank_perp == n - self.param_dim and self.model_rank == n

    def as_dict(self) -> dict:
        return {
            'symplectic': self.symplectic,
            'rank_perp': self.rank_perp,
            'expected_rank_perp': self.ambient_dim - self.param_dim,
            'model_rank': self.model_rank,
            'passed': self.passed,
        }


def symplectic_rigidity(pi: BivectorField, X: Chart, u: Sequence[float], *, steps: int = DEFAULT_STEPS,
                        tol: float = DEFAULT_RANK_TOL) -> RigidityReport:
    """Checks ``rk TX^{⊥π} = n − k`` and that the model bivector is nondegenerate on the zero section."""
    u = np.asarray(u, dtype=float).reshape(X.param_dim)
    d = point_data(pi, X, u, tol)
    symplectic = rank_svd(d.pi, tol).rank == X.ambient_dim
    model = LocalModel(BundleFrame(pi, X, anchor=u, tol=tol), steps=steps, tol=tol)
    try:
        model_rank = model.bivector(u, np.zeros(model.r)).rank(tol)
    except NotPoissonError:
        model_rank = -1
    return RigidityReport(symplectic, X.param_dim, X.ambient_dim, d.TXperp.dim, model_rank)


def presymplectic_dirac(form: BivectorField) -> Callable[[np.ndarray], DiracSpace]:
    """Reads an antisymmetric matrix field as a presymplectic form and returns ``u ↦ graph(ω(u))``."""
    def dirac(u: np.ndarray) -> DiracSpace:
        return dirac_graph(form.at(u), FormKind.two_form)
    return dirac


def _characteristic(L: DiracSpace, tol: float) -> Subspace:
    """``L ∩ TX``: tangent parts of the elements of ``L`` with zero cotangent part."""
    if L.n == 0:
        return Subspace.zero(0)
    if not np.any(np.abs(L.cotangent) > 0):
        return Subspace.span(L.tangent, tol)
    null = scipy.linalg.null_space(L.cotangent, rcond=tol)
    return Subspace.span(L.tangent @ null, tol)


class GotayModel:
    """The coisotropic embedding ``(pr*L)^{j*ω_can}`` of a Dirac structure ``L`` on R^k.

    The total space is the bundle chart ``(u, s)`` of ``(L ∩ TX)*``; ``j_u(s) = Z_X(u)s`` with ``Z_X`` dual to the
    kernel frame ``K`` and annihilating ``G``.
    """
    def __init__(self,
        dirac: Callable[[np.ndarray], DiracSpace],
        param_dim: int,
        *,
        anchor: Optional[Sequence[float]] = None,
        kernel_frame: Optional[FrameFn] = None,
        g_frame: Optional[FrameFn] = None,
        tol: float = DEFAULT_RANK_TOL,
        fd_step: float = DEFAULT_COMPLEMENT_ARGS['fd_step'],
    ):
        """Builds the model.

        Args:
            dirac: map from parameters to the Dirac space ``L(u)`` on R^k.
            param_dim: k.
            anchor: parameter of the reference kernel frame.
            kernel_frame: optional map ``u ↦ K(u)`` (k×m) spanning ``L ∩ TX``; projected from the anchor otherwise.
            g_frame: optional map ``u ↦`` spanning vectors of the complement ``G``; Euclidean otherwise.
            tol: rank tolerance.
            fd_step: step of the central differences of ``Z_X``.

        Raises:
            RankDefectError: when ``kernel_frame`` does not span ``L ∩ TX`` at the anchor.
        """
        self.dirac = dirac
        self.k = param_dim
        self.anchor = np.zeros(param_dim) if anchor is None else np.asarray(anchor, dtype=float).reshape(param_dim)
        self.kernel_frame = kernel_frame
        self.g_frame = g_frame
        self.tol = tol
        self.fd_step = fd_step
        char = _characteristic(dirac(self.anchor), tol)
        self.m = char.dim
        self.k_ref = char.basis
        if kernel_frame is not None and not Subspace.span(kernel_frame(self.anchor), tol).equals(char):
            raise RankDefectError('kernel frame does not span L ∩ TX at the anchor', expected=self.m)

    @property
    def dim(self) -> int:
        return self.k + self.m

    def kernel(self, u: Sequence[float]) -> np.ndarray:
        """The frame ``K(u)`` of ``L ∩ TX``.

        Raises:
            RankDefectError: when ``L ∩ TX`` changes rank.
        """
        u = np.asarray(u, dtype=float).reshape(self.k)
        if self.kernel_frame is not None:
            return np.asarray(self.kernel_frame(u), dtype=float).reshape(self.k, self.m)
        char = _characteristic(self.dirac(u), self.tol)
        if char.dim != self.m:
            raise RankDefectError(f'L ∩ TX has rank {char.dim} at u={tuple(u)}, {self.m} at the anchor',
                                  expected=self.m, found=char.dim)
        return char.projector() @ self.k_ref

    def dual(self, u: Sequence[float]) -> np.ndarray:
        """``Z_X(u)`` (k×m): dual to ``K(u)`` and vanishing on ``G``."""
        u = np.asarray(u, dtype=float).reshape(self.k)
        if self.m == 0:
            return np.zeros((self.k, 0))
        kernel = self.kernel(u)
        if self.g_frame is None:
            g = Subspace.span(kernel, self.tol).orthogonal_complement()
        else:
            g = Subspace.span(self.g_frame(u), self.tol)
        n0 = annihilator(g).basis
        return scipy.linalg.solve(n0.T @ kernel, n0.T).T

    def pulled_canonical(self, u: Sequence[float], s: Sequence[float]) -> SkewForm:
        """``j*ω_can`` at ``(u, s)``."""
        u = np.asarray(u, dtype=float).reshape(self.k)
        s = np.asarray(s, dtype=float).reshape(self.m)
        moving = np.zeros((self.k, self.k))
        if self.m:
            for l in range(self.k):  # noqa: E741
                step = np.zeros(self.k)
                step[l] = self.fd_step
                moving[:, l] = (self.dual(u + step) - self.dual(u - step)) @ s / (2 * self.fd_step)
        dj = np.block([[np.eye(self.k), np.zeros((self.k, self.m))], [moving, self.dual(u)]])
        return SkewForm.from_matrix(dj.T @ canonical_symplectic(self.k) @ dj)

    def bivector(self, u: Sequence[float], s: Sequence[float]) -> SkewForm:
        """The Poisson bivector of ``(pr*L)^{j*ω_can}`` at ``(u, s)``.

        Raises:
            NotPoissonError: away from the neighborhood of the zero section where the model is Poisson.
        """
        pr = np.hstack([np.eye(self.k), np.zeros((self.k, self.m))])
        base = dirac_pullback(self.dirac(np.asarray(u, dtype=float).reshape(self.k)), pr, tol_rel=self.tol)
        return dirac_to_bivector(dirac_gauge(base, self.pulled_canonical(u, s)), self.tol)

    def matrix(self, p: Sequence[float]) -> np.ndarray:
        p = np.asarray(p, dtype=float).ravel()
        return self.bivector(p[:self.k], p[self.k:]).matrix

    def jacobi_residual(self, u: Sequence[float], s: Sequence[float], h: float = 1e-3) -> float:
        return jacobi_residual_numeric(self.matrix, np.concatenate([np.ravel(u), np.ravel(s)]), h)

    def coisotropy_residual(self, u: Sequence[float]) -> float:
        """``π^♯(TX⁰) ⊆ TX`` on the zero section: the fiber block of the bivector vanishes."""
        b = self.bivector(u, np.zeros(self.m)).matrix
        return float(np.max(np.abs(b[self.k:, self.k:]), initial=0.0))

    def pullback_angle(self, u: Sequence[float]) -> float:
        """Angle between ``L`` and the pullback of the model to the zero section."""
        u = np.asarray(u, dtype=float).reshape(self.k)
        graph = dirac_graph(self.bivector(u, np.zeros(self.m)))
        inclusion = np.vstack([np.eye(self.k), np.zeros((self.m, self.k))])
        return dirac_pullback(graph, inclusion, tol_rel=self.tol).angle(self.dirac(u))

    def __repr__(self):
        return f'GotayModel(param_dim={self.k}, fiber_dim={self.m})'


def gotay_embedding(dirac: Callable[[np.ndarray], DiracSpace], param_dim: int, grid: Optional[np.ndarray] = None,
                    **kwargs) -> GotayModel:
    """Builds the coisotropic embedding model after checking that ``L ∩ TX`` has constant rank on ``grid``.

    Raises:
        RankDefectError: when the rank of ``L ∩ TX`` varies over the grid.
    """
    model = GotayModel(dirac, param_dim, **kwargs)
    if grid is not None:
        for u in as_grid(grid, param_dim):
            model.kernel(u)
    return model


def gotay_from_model(model: LocalModel) -> GotayModel:
    """The coisotropic embedding of ``i*L_π`` sharing the frames of a coisotropic-mode local model."""
    frame = model.frame
    if frame.mode != ComplementMode.coisotropic:
        raise PrerequisiteError('the coisotropic embedding needs a coisotropic-mode complement')
    X = model.X

    def kernel_frame(u: np.ndarray) -> np.ndarray:
        return scipy.linalg.lstsq(X.jacobian(u), frame.basis(u))[0]

    def g_frame(u: np.ndarray) -> np.ndarray:
        g = frame.choice(u).G
        return scipy.linalg.lstsq(X.jacobian(u), g.basis)[0] if g.dim else np.zeros((X.param_dim, 0))

    return GotayModel(model.pulled_dirac, X.param_dim, anchor=frame.anchor, kernel_frame=kernel_frame,
                      g_frame=g_frame, tol=model.tol, fd_step=frame.fd_step)


def fiber_flip(k: int, m: int) -> np.ndarray:
    """The fiberwise multiplication by −1 on the bundle chart ``(u, s)``."""
    return np.diag(np.concatenate([np.ones(k), -np.ones(m)]))


def gotay_agreement(model: LocalModel, u: Sequence[float]) -> float:
    """Difference on the zero section between the local model and the flipped coisotropic embedding model."""
    gotay = gotay_from_model(model)
    flip = fiber_flip(model.k, model.r)
    flipped = gotay.bivector(u, np.zeros(model.r)).pushforward(flip).matrix
    return float(np.max(np.abs(flipped - model.bivector(u, np.zeros(model.r)).matrix), initial=0.0))


def fiber_flip_residual(L0: DiracSpace, B: np.ndarray) -> float:
    """Angle between ``m₋₁*((pr*L0)^η)`` and ``(pr*L0)^{−η}`` for ``η = [[0, B], [−Bᵀ, 0]]``."""
    B = np.asarray(B, dtype=float)
    k, m = B.shape
    if L0.n != k:
        raise ValueError(f'B has {k} rows, L0 has dimension {L0.n}')
    base = dirac_pullback(L0, np.hstack([np.eye(k), np.zeros((k, m))]))
    eta = SkewForm.from_matrix(np.block([[np.zeros((k, k)), B], [-B.T, np.zeros((m, m))]]))
    flipped = dirac_pullback(dirac_gauge(base, eta), fiber_flip(k, m))
    return flipped.angle(dirac_gauge(base, -eta))


@dataclass(frozen=True, eq=False)
class MarleInvariants:
    """The data determining the local saturation of a regular pre-Poisson submanifold at one point.

    ``quotient_form`` is ``π`` on ``(TX^{⊥π})*/(TX^{⊥π} ∩ TX)*``, computed in the ``W_{G,H}`` frame where the cross
    terms ``π(j₁ξ₁, j₂ξ₂)`` vanish; ``cross_term`` is their largest value.
    """
    u: np.ndarray
    pulled_dirac: DiracSpace
    quotient_form: SkewForm
    cross_term: float

    @property
    def quotient_rank(self) -> int:
        return self.quotient_form.rank() if self.quotient_form.ambient_dim else 0


def marle_invariants(model: LocalModel, grid: np.ndarray) -> List[MarleInvariants]:
    """Pullback Dirac structure and quotient form at each grid point of a pre-Poisson (or coisotropic) model.

    Raises:
        PrerequisiteError: when the model was not built with a coisotropic or pre-Poisson complement.
    """
    frame = model.frame
    if frame.mode == ComplementMode.default:
        raise PrerequisiteError('the quotient form needs a coisotropic or pre-Poisson complement')
    out = []
    for u in as_grid(grid, model.k):
        choice = frame.choice(u)
        p = model.pi.matrix(model.X.point(u))
        w0 = choice.annihilator
        hw0 = annihilator(choice.H + choice.W)
        cross = float(np.max(np.abs(w0.basis.T @ p @ hw0.basis), initial=0.0)) if hw0.dim else 0.0
        quotient = w0.complement_in(hw0)
        form = SkewForm.from_matrix(quotient.basis.T @ p.T @ quotient.basis)
        out.append(MarleInvariants(np.asarray(u, dtype=float), model.pulled_dirac(u), form, cross))
    return out


class TubularMap:
    """``(u, s, c) ↦ exp_χ(j_u(s)) + C(u)c``, with ``C`` a frame of a complement of ``TX + Im π^♯``."""
    def __init__(self, model: LocalModel):
        self.model = model
        self.c_ref = transversal_complement(model.pi, model.X, model.frame.anchor, model.tol).basis

    @property
    def normal_dim(self) -> int:
        return self.c_ref.shape[1]

    def normal_frame(self, u: Sequence[float]) -> np.ndarray:
        return transport_complement(self.model.pi, self.model.X, self.model.frame.anchor, u, self.c_ref,
                                    tol=self.model.tol)

    def __call__(self, u: Sequence[float], s: Sequence[float], c: Sequence[float]) -> np.ndarray:
        y, _, _ = self.model.chart_map(u, s)
        return y + self.normal_frame(u) @ np.asarray(c, dtype=float).reshape(self.normal_dim)

    def jacobian(self, u: Sequence[float], s: Sequence[float], c: Sequence[float], h: float = 1e-6) -> np.ndarray:
        """The n×n Jacobian in ``(u, s, c)``."""
        u = np.asarray(u, dtype=float).reshape(self.model.k)
        c = np.asarray(c, dtype=float).reshape(self.normal_dim)
        _, jac, _ = self.model.chart_map(u, s)
        jac = jac.copy()
        if np.any(c):
            for l in range(self.model.k):  # noqa: E741
                step = np.zeros(self.model.k)
                step[l] = h
                jac[:, l] += (self.normal_frame(u + step) - self.normal_frame(u - step)) @ c / (2 * h)
        return np.hstack([jac, self.normal_frame(u)])


def tubular_map(model: LocalModel, u: Sequence[float], s: Sequence[float], c: Sequence[float]) -> np.ndarray:
    return TubularMap(model)(u, s, c)


SUMMARY_ROWS = [
    ('symplectic ambient', 'symplectic_ambient', 'pi restricted to TM|_X'),
    ('Poisson transversal', 'transversal', 'i*L_pi and pi on (TX^perp)*'),
    ('regular coisotropic', 'coisotropic', 'i*L_pi'),
    ('regular pre-Poisson', 'pre_poisson', 'i*L_pi and pi on (TX^perp)*/(TX^perp cap TX)*'),
    ('regular', 'regular', 'i*L_pi, sigma and tau'),
]


def summary_table(classification: Classification) -> pd.DataFrame:
    """For each class of regular submanifold, whether X belongs to it and what determines its local saturation."""
    flags = classification.as_dict()
    rows = []
    for name, flag, data in SUMMARY_ROWS:
        applies = bool(flags[flag]) and (flag == 'symplectic_ambient' or classification.regular)
        rows.append({'submanifold_type': name, 'applies': applies, 'determined_by': data})
    return pd.DataFrame(rows, columns=['submanifold_type', 'applies', 'determined_by'])
