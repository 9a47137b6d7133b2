from collections import Counter
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg
import sympy

from poisson_saturation._errors import ImmersionError, NotRegularError, RankDefectError
from poisson_saturation._expr import Expression, compile_array, parse
from poisson_saturation._field import BivectorField
from poisson_saturation._linear import (
    DEFAULT_RANK_TOL,
    DiracSpace,
    SkewForm,
    Subspace,
    annihilator,
    containment_residual,
    dirac_graph,
    dirac_pullback,
    rank_svd,
)

MAX_WITNESSES = 10
TRANSPORT_STEPS = 64


def as_grid(grid: np.ndarray, k: int) -> np.ndarray:
    """Parameter points as an (m, k) array; charts of a point (k = 0) have a single empty parameter."""
    g = np.asarray(grid, dtype=float)
    if k == 0:
        return np.zeros((len(g) if g.ndim == 2 and len(g) else 1, 0))
    return g.reshape(-1, k)


class Chart:
    """A parametrized submanifold ``u ↦ X(u)`` of R^n, with parameters ``u1..uk``."""
    def __init__(self,
        components: Sequence[Expression],
        *,
        domain: Optional[np.ndarray] = None,
        names: Optional[Sequence[str]] = None,
    ):
        """Builds a chart.

        Args:
            components: the n ambient coordinates as Expressions in the k parameters.
            domain: optional ``k×2`` array of parameter bounds.
            names: optional scene-declared parameter names.
        """
        assert len(components) >= 1, "a chart needs at least one component"
        arities = {e.arity for e in components}
        if len(arities) != 1:
            raise ValueError(f'components have different arities {sorted(arities)}')
        self.components = list(components)
        self.param_dim = arities.pop()
        self.ambient_dim = len(self.components)
        self.symbols = self.components[0].symbols
        self.domain = None if domain is None else np.asarray(domain, dtype=float).reshape(self.param_dim, 2)
        self.names = tuple(names) if names is not None else None

    @classmethod
    def parse(cls,
        texts: Sequence[str],
        param_dim: int,
        *,
        domain: Optional[np.ndarray] = None,
        names: Optional[Sequence[str]] = None,
    ) -> 'Chart':
        """Builds a chart from component texts over parameters ``u1..uk`` (or the given names)."""
        return cls([parse(t, param_dim, prefix='u', names=names) for t in texts], domain=domain, names=names)

    @cached_property
    def _point_fn(self) -> Callable[[np.ndarray], np.ndarray]:
        return compile_array(self.components, self.symbols)

    @cached_property
    def _jacobian_fn(self) -> Callable[[np.ndarray], np.ndarray]:
        rows = [[sympy.diff(c.node, s) for s in self.symbols] for c in self.components]
        return compile_array(rows, self.symbols)

    def point(self, u: Sequence[float]) -> np.ndarray:
        return self._point_fn(np.asarray(u, dtype=float).reshape(self.param_dim))

    def jacobian(self, u: Sequence[float]) -> np.ndarray:
        """The n×k matrix ``∂X/∂u``."""
        return self._jacobian_fn(np.asarray(u, dtype=float).reshape(self.param_dim)).reshape(
            self.ambient_dim, self.param_dim)

    def grid(self, points: Union[int, Sequence[int]]) -> np.ndarray:
        """A tensor grid over the domain box in C order, shape ``(m, k)``."""
        if self.param_dim == 0:
            return np.zeros((1, 0))
        if self.domain is None:
            raise ValueError('a grid needs a domain box')
        if isinstance(points, int):
            points = [points] * self.param_dim
        axes = [np.linspace(lo, hi, p) for (lo, hi), p in zip(self.domain, points)]
        return np.stack(np.meshgrid(*axes, indexing='ij'), axis=-1).reshape(-1, self.param_dim)

    def random_points(self, count: int, seed: int = 0) -> np.ndarray:
        if self.param_dim == 0 or self.domain is None:
            return np.zeros((0, self.param_dim))
        rng = np.random.default_rng(seed)
        return rng.uniform(self.domain[:, 0], self.domain[:, 1], size=(count, self.param_dim))

    def __repr__(self):
        return f"Chart(({', '.join(str(c) for c in self.components)}), param_dim={self.param_dim})"


@dataclass(frozen=True, eq=False)
class PointData:
    """Pointwise data of a submanifold: tangent space, conormal space and π-orthogonal.

    ``kernel_dim`` is ``dim(L_π ∩ Ker i*) = dim(ker π^♯ ∩ TX⁰)``, computed independently of ``TXperp`` so that the
    exactness count ``kernel_dim + dim TXperp = n − k`` is a genuine check.
    """
    u: np.ndarray
    x: np.ndarray
    jacobian: np.ndarray
    pi: np.ndarray
    TX: Subspace
    TX0: Subspace
    TXperp: Subspace
    kernel_dim: int
    pulled_dirac: Optional[DiracSpace] = None
    rank_defect: bool = False

    @property
    def exactness_defect(self) -> int:
        n, k = self.x.size, self.TX.dim
        return self.kernel_dim + self.TXperp.dim - (n - k)


def point_data(pi: BivectorField, X: Chart, u: Sequence[float], tol: float = DEFAULT_RANK_TOL) -> PointData:
    """Tangent frame, annihilator and π-orthogonal of ``X`` at parameter ``u``.

    Raises:
        ImmersionError: when the chart Jacobian has rank below ``k`` at ``u``.
    """
    u = np.asarray(u, dtype=float).reshape(X.param_dim)
    x = X.point(u)
    jac = X.jacobian(u)
    k, n = X.param_dim, X.ambient_dim
    if k > 0:
        r = rank_svd(jac, tol).rank
        if r < k:
            raise ImmersionError(f'chart Jacobian has rank {r} < {k} at u={tuple(u)}', expected=k, found=r)
    tx = Subspace.span(jac, tol)
    tx0 = annihilator(tx)
    p = pi.matrix(x)
    perp = Subspace.span(p @ tx0.basis, tol)
    conditions = np.vstack([p, jac.T])
    kernel = n - (rank_svd(conditions, tol).rank if np.any(conditions) else 0)
    return PointData(u, x, jac, p, tx, tx0, perp, kernel)


def generic_perp_rank(pi: BivectorField, X: Chart, u: Sequence[float], *,
                      radius: float = 1e-3, samples: int = 8, seed: int = 0,
                      tol: float = DEFAULT_RANK_TOL) -> int:
    """Rank of the π-orthogonal at parameters near ``u``; its maximum is the generic rank."""
    u = np.asarray(u, dtype=float).reshape(X.param_dim)
    if X.param_dim == 0:
        return point_data(pi, X, u, tol).TXperp.dim
    rng = np.random.default_rng(seed)
    nearby = u + rng.uniform(-radius, radius, size=(samples, X.param_dim))
    return max(point_data(pi, X, v, tol).TXperp.dim for v in nearby)


@dataclass(frozen=True, eq=False)
class RegularityScan:
    """Outcome of a sampled regularity test.

    ``rank`` is the common rank of the π-orthogonal when the scan is regular, else ``(min, max)``. Regularity is
    only certified on the sampled set.
    """
    is_regular: bool
    rank: Union[int, Tuple[int, int]]
    witnesses: Dict[int, List[Tuple[float, ...]]]
    counts: Dict[int, int]
    points: np.ndarray
    ranks: np.ndarray

    @property
    def verdict(self) -> str:
        return 'regular on the sampled set' if self.is_regular else 'not regular'

    def raise_if_irregular(self) -> None:
        if not self.is_regular:
            raise NotRegularError(f'π-orthogonal rank varies over {sorted(self.counts)}', self.witnesses)


def scan_points(X: Chart, grid: np.ndarray, *, refine: int = 10, seed: int = 0) -> np.ndarray:
    """The grid followed by ``refine`` times as many seeded random parameters."""
    grid = as_grid(grid, X.param_dim)
    if refine <= 0 or X.param_dim == 0:
        return grid
    return np.vstack([grid, X.random_points(refine * len(grid), seed)])


def regularity_scan(pi: BivectorField, X: Chart, grid: np.ndarray, tol: float = DEFAULT_RANK_TOL, *,
                    refine: int = 10, seed: int = 0) -> RegularityScan:
    """Checks that ``dim TX^{⊥π}`` is constant on the grid plus a random refinement.

    Args:
        pi: the Poisson structure.
        X: the submanifold chart.
        grid: ``(m, k)`` parameter points; must be nonempty.
        tol: rank tolerance.
        refine: number of random points per grid point added to the scan.
        seed: seed of the refinement.
    """
    grid = as_grid(grid, X.param_dim)
    if len(grid) == 0:
        raise ValueError('regularity scan needs a nonempty grid')
    points = scan_points(X, grid, refine=refine, seed=seed)
    ranks = np.array([point_data(pi, X, u, tol).TXperp.dim for u in points], dtype=int)
    counts = dict(sorted(Counter(ranks.tolist()).items()))
    witnesses = {}
    for u, r in zip(points, ranks):
        found = witnesses.setdefault(int(r), [])
        if len(found) < MAX_WITNESSES:
            found.append(tuple(float(v) for v in u))
    regular = len(counts) == 1
    rank = int(ranks[0]) if regular else (int(ranks.min()), int(ranks.max()))
    return RegularityScan(regular, rank, witnesses, counts, points, ranks)


@dataclass(frozen=True)
class Classification:
    """Flags and rank ranges of a submanifold over a sample.

    Each rank is reported as ``(min, max)`` over the sampled points.
    """
    regular: bool
    transversal: bool
    poisson_submanifold: bool
    coisotropic: bool
    pre_poisson: bool
    poisson_dirac: bool
    symplectic_ambient: bool
    rank_perp: Tuple[int, int]
    rank_intersection: Tuple[int, int]
    rank_sum: Tuple[int, int]
    param_dim: int = 0
    ambient_dim: int = 0

    def as_dict(self) -> Dict[str, object]:
        return {
            'regular': self.regular,
            'transversal': self.transversal,
            'poisson_submanifold': self.poisson_submanifold,
            'coisotropic': self.coisotropic,
            'pre_poisson': self.pre_poisson,
            'poisson_dirac': self.poisson_dirac,
            'symplectic_ambient': self.symplectic_ambient,
            'rank_perp': list(self.rank_perp),
            'rank_intersection': list(self.rank_intersection),
            'rank_sum': list(self.rank_sum),
        }


def classify(pi: BivectorField, X: Chart, grid: np.ndarray, tol: float = DEFAULT_RANK_TOL, *,
             refine: int = 10, seed: int = 0) -> Classification:
    """Classifies ``X`` as transversal, coisotropic, pre-Poisson, Poisson-Dirac or Poisson submanifold.

    Every flag is decided on the points of :func:`scan_points`, so the regularity verdict agrees with
    :func:`regularity_scan` for the same ``refine`` and ``seed``.
    """
    grid = as_grid(grid, X.param_dim)
    if len(grid) == 0:
        raise ValueError('classification needs a nonempty grid')
    n = X.ambient_dim
    perp, cap, total, transversal, submanifold, coiso, sympl = [], [], [], [], [], [], []
    for u in scan_points(X, grid, refine=refine, seed=seed):
        d = point_data(pi, X, u, tol)
        inter = d.TX.intersect(d.TXperp, tol)
        plus = d.TX + d.TXperp
        image = Subspace.span(d.pi, tol)
        perp.append(d.TXperp.dim)
        cap.append(inter.dim)
        total.append(plus.dim)
        transversal.append(plus.dim == n and inter.dim == 0)
        submanifold.append(containment_residual(d.TX, image) <= tol)
        coiso.append(containment_residual(d.TX, d.TXperp) <= tol)
        sympl.append(image.dim == n)
    regular = len(set(perp)) == 1
    return Classification(
        regular=regular,
        transversal=all(transversal),
        poisson_submanifold=all(submanifold),
        coisotropic=all(coiso),
        pre_poisson=len(set(total)) == 1,
        poisson_dirac=regular and max(cap) == 0,
        symplectic_ambient=all(sympl),
        rank_perp=(min(perp), max(perp)),
        rank_intersection=(min(cap), max(cap)),
        rank_sum=(min(total), max(total)),
        param_dim=X.param_dim,
        ambient_dim=n,
    )


def pullback_dirac_routes(pi: BivectorField, X: Chart, u: Sequence[float], *,
                          expected_kernel: Optional[int] = None,
                          tol: float = DEFAULT_RANK_TOL) -> Tuple[DiracSpace, DiracSpace]:
    """``i*L_π`` by the generic backward image and by ``{π^♯α + i*α : α ∈ (TX^{⊥π})⁰}``."""
    d = point_data(pi, X, u, tol)
    generic = dirac_pullback(dirac_graph(SkewForm.from_matrix(d.pi)), d.jacobian,
                             expected_kernel=expected_kernel, tol_rel=tol)
    gammas = annihilator(d.TXperp).basis
    if X.param_dim == 0:
        return generic, DiracSpace(np.zeros((0, 0)))
    tangent = scipy.linalg.lstsq(d.jacobian, d.pi @ gammas)[0]
    conormal = DiracSpace.from_vectors(np.vstack([tangent, d.jacobian.T @ gammas]), tol)
    return generic, conormal


def pullback_dirac(pi: BivectorField, X: Chart, u: Sequence[float], *,
                   expected_perp: Optional[int] = None,
                   tol: float = DEFAULT_RANK_TOL,
                   route_tol: float = 1e-8) -> DiracSpace:
    """The pullback Dirac structure ``i*L_π`` at ``u``, in parameter coordinates.

    Args:
        pi: the Poisson structure.
        X: the chart.
        u: the parameter.
        expected_perp: generic rank of the π-orthogonal near ``u``; estimated from nearby parameters when omitted.
        tol: rank tolerance.
        route_tol: allowed principal angle between the two computation routes.

    Raises:
        RankDefectError: at non-regular points, or when the two routes disagree.
    """
    d = point_data(pi, X, u, tol)
    if expected_perp is None:
        expected_perp = generic_perp_rank(pi, X, u, tol=tol)
    if d.TXperp.dim != expected_perp:
        raise RankDefectError(f'π-orthogonal has rank {d.TXperp.dim} at u={tuple(d.u)}, {expected_perp} nearby',
                              expected=expected_perp, found=d.TXperp.dim)
    expected_kernel = X.ambient_dim - X.param_dim - expected_perp
    generic, conormal = pullback_dirac_routes(pi, X, u, expected_kernel=expected_kernel, tol=tol)
    angle = generic.angle(conormal)
    if angle > route_tol:
        raise RankDefectError(f'pullback routes disagree by angle {angle:.3g} at u={tuple(d.u)}')
    return generic


def image_of_sharp(pi: BivectorField, x: Sequence[float], tol: float = DEFAULT_RANK_TOL) -> Subspace:
    return Subspace.span(pi.matrix(x), tol)


def transversal_complement(pi: BivectorField, X: Chart, u: Sequence[float],
                           tol: float = DEFAULT_RANK_TOL) -> Subspace:
    """The Euclidean complement ``E`` of ``TX + Im π^♯ = TX ⊕ π^♯(TX^{⊥π})*``."""
    u = np.asarray(u, dtype=float).reshape(X.param_dim)
    return Subspace.span(np.hstack([X.jacobian(u), pi.matrix(X.point(u))]), tol).orthogonal_complement()


def transport_complement(pi: BivectorField, X: Chart, u0: Sequence[float], u: Sequence[float], frame0: np.ndarray,
                         *, steps: int = TRANSPORT_STEPS, tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Carries the frame ``frame0`` of the complement at ``u0`` to ``u`` along the segment between them.

    Each step projects the frame onto the complement at the next node and keeps the polar factor, so the frame stays
    orthonormal and varies smoothly with ``u`` while ``dim(TX + Im π^♯)`` is constant along the segment.

    Raises:
        RankDefectError: when the complement changes dimension along the segment.
    """
    u0 = np.asarray(u0, dtype=float).reshape(X.param_dim)
    u = np.asarray(u, dtype=float).reshape(X.param_dim)
    frame = np.asarray(frame0, dtype=float)
    m = frame.shape[1]
    if m == 0 or np.array_equal(u, u0):
        return frame
    for t in np.linspace(0.0, 1.0, steps + 1)[1:]:
        v = u0 + t * (u - u0)
        comp = transversal_complement(pi, X, v, tol)
        if comp.dim != m:
            raise RankDefectError(f'complement of TX + Im π^♯ has dimension {comp.dim} != {m} at u={tuple(v)}',
                                  expected=m, found=comp.dim)
        frame, _ = scipy.linalg.polar(comp.projector() @ frame)
    return frame


class Thickening(Chart):
    """The affine thickening ``τ(u, e) = X(u) + E(u)·e`` of a chart along a complement of ``TX + Im π^♯``.

    ``E(u)`` is the complement frame at ``u0`` transported to ``u`` (see :func:`transport_complement`), so the chart
    is evaluated numerically. Its Jacobian in ``u`` uses central differences of ``E`` away from ``e = 0``.
    """
    def __init__(self, pi: BivectorField, base: Chart, u0: np.ndarray, frame0: np.ndarray, *,
                 radius: float, tol: float = DEFAULT_RANK_TOL, h: float = 1e-6):
        self.pi = pi
        self.base = base
        self.u0 = u0
        self.frame0 = frame0
        self.tol = tol
        self.h = h
        self.normal_dim = frame0.shape[1]
        self.param_dim = base.param_dim + self.normal_dim
        self.ambient_dim = base.ambient_dim
        self.components = base.components
        self.symbols = base.symbols
        self.domain = None
        if base.domain is not None:
            self.domain = np.vstack([base.domain, np.tile([-radius, radius], (self.normal_dim, 1))])
        self.names = None if base.names is None else base.names + tuple(f'e{j + 1}' for j in range(self.normal_dim))

    def _split(self, u: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
        u = np.asarray(u, dtype=float).reshape(self.param_dim)
        return u[:self.base.param_dim], u[self.base.param_dim:]

    def frame(self, v: Sequence[float]) -> np.ndarray:
        """``E`` at base parameter ``v``."""
        return transport_complement(self.pi, self.base, self.u0, v, self.frame0, tol=self.tol)

    def point(self, u: Sequence[float]) -> np.ndarray:
        v, e = self._split(u)
        return self.base.point(v) + self.frame(v) @ e

    def jacobian(self, u: Sequence[float]) -> np.ndarray:
        v, e = self._split(u)
        jac = self.base.jacobian(v).copy()
        if np.any(e):
            for l in range(self.base.param_dim):  # noqa: E741
                step = np.zeros(self.base.param_dim)
                step[l] = self.h
                jac[:, l] += (self.frame(v + step) - self.frame(v - step)) @ e / (2 * self.h)
        return np.hstack([jac, self.frame(v)])

    def __repr__(self):
        return f'Thickening({self.base!r}, normal_dim={self.normal_dim})'


def make_transversal(pi: BivectorField, X: Chart, u0: Sequence[float], *,
                     radius: float = 0.1, tol: float = DEFAULT_RANK_TOL) -> Chart:
    """The affine thickening ``τ(u, e) = X(u) + E(u)·e``, with ``E(u)`` a complement of ``TX + Im π^♯`` at ``X(u)``.

    Returns ``X`` itself when it is already transversal.

    Raises:
        NotRegularError: when ``X`` is not regular near ``u0``.
    """
    u0 = np.asarray(u0, dtype=float).reshape(X.param_dim)
    generic = generic_perp_rank(pi, X, u0, tol=tol)
    d = point_data(pi, X, u0, tol)
    if d.TXperp.dim != generic:
        raise NotRegularError(f'X is not regular near u={tuple(u0)}', {d.TXperp.dim: [tuple(u0)]})
    frame0 = transversal_complement(pi, X, u0, tol).basis
    if frame0.shape[1] == 0:
        return X
    return Thickening(pi, X, u0, frame0, radius=radius, tol=tol)


def transversality_rank(pi: BivectorField, tau: Chart, u: Sequence[float], tol: float = DEFAULT_RANK_TOL) -> int:
    """``rank(Tτ + Im π^♯)`` at parameter ``u``."""
    x = tau.point(u)
    return (Subspace.span(tau.jacobian(u), tol) + image_of_sharp(pi, x, tol)).dim
