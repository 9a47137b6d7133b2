from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple, Optional, Union

import numpy as np
import scipy.linalg

from poisson_saturation._errors import NotPoissonError, RankDefectError

DEFAULT_RANK_TOL = 1e-8
RANK_ATOL = 1e-12
ISOTROPY_TOL = 1e-10


class RankResult(NamedTuple):
    rank: int
    column_space: 'Subspace'
    null_space: 'Subspace'


def rank_svd(m: np.ndarray, tol_rel: float = DEFAULT_RANK_TOL, *, atol: float = RANK_ATOL) -> RankResult:
    """Numerical rank of ``m`` from its singular values.

    A singular value counts when it exceeds ``tol_rel`` times the largest one (and the absolute floor ``atol``,
    so that a vanishing matrix has rank 0).

    Args:
        m: the matrix.
        tol_rel: relative tolerance; must be positive.
        atol: absolute floor.

    Returns:
        The rank, an orthonormal basis of the column space and one of the null space.

    Raises:
        ValueError: when ``m`` is empty or ``tol_rel`` is not positive.
    """
    m = np.atleast_2d(np.asarray(m, dtype=float))
    if m.size == 0:
        raise ValueError(f'rank of an empty {m.shape[0]}x{m.shape[1]} matrix')
    if tol_rel <= 0:
        raise ValueError(f'tol_rel must be positive, got {tol_rel}')
    u, s, vh = scipy.linalg.svd(m)
    rank = int(np.sum(s > max(tol_rel * s[0], atol)))
    return RankResult(rank, Subspace(u[:, :rank]), Subspace(vh[rank:].T))


@dataclass(frozen=True, eq=False)
class Subspace:
    """A linear subspace of R^n, stored as an orthonormal n×k basis."""
    basis: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.basis, dtype=float)
        if b.ndim != 2:
            raise ValueError(f'basis must be a matrix, got shape {b.shape}')
        if b.shape[1] > 0 and np.max(np.abs(b.T @ b - np.eye(b.shape[1]))) > 1e-10:
            raise ValueError('basis is not orthonormal')
        b.setflags(write=False)
        object.__setattr__(self, 'basis', b)

    @property
    def ambient_dim(self) -> int:
        return self.basis.shape[0]

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    @classmethod
    def zero(cls, n: int) -> 'Subspace':
        return cls(np.zeros((n, 0)))

    @classmethod
    def full(cls, n: int) -> 'Subspace':
        return cls(np.eye(n))

    @classmethod
    def span(cls, vectors: np.ndarray, tol_rel: float = DEFAULT_RANK_TOL) -> 'Subspace':
        """The span of the columns of ``vectors`` (a 1-d array is one vector)."""
        v = np.asarray(vectors, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.shape[1] == 0 or v.shape[0] == 0 or not np.any(v):
            return cls.zero(v.shape[0])
        return rank_svd(v, tol_rel).column_space

    def projector(self) -> np.ndarray:
        return self.basis @ self.basis.T

    def __add__(self, other: 'Subspace') -> 'Subspace':
        return Subspace.span(np.hstack([self.basis, other.basis]))

    def intersect(self, other: 'Subspace', tol: float = DEFAULT_RANK_TOL) -> 'Subspace':
        if self.dim == 0 or other.dim == 0:
            return Subspace.zero(self.ambient_dim)
        null = scipy.linalg.null_space(np.hstack([self.basis, -other.basis]), rcond=tol)
        return Subspace.span(self.basis @ null[:self.dim])

    def orthogonal_complement(self) -> 'Subspace':
        """The Euclidean orthogonal complement in R^n."""
        if self.dim == 0:
            return Subspace.full(self.ambient_dim)
        return Subspace(scipy.linalg.null_space(self.basis.T))

    def complement_in(self, sub: 'Subspace') -> 'Subspace':
        """The Euclidean orthogonal complement of ``sub`` inside this space."""
        if sub.dim == 0:
            return self
        if self.dim == 0:
            return self
        coords = scipy.linalg.null_space(sub.basis.T @ self.basis, rcond=DEFAULT_RANK_TOL)
        return Subspace.span(self.basis @ coords)

    def contains(self, other: 'Subspace', tol: float = 1e-8) -> bool:
        return containment_residual(self, other) <= tol

    def equals(self, other: 'Subspace', tol: float = 1e-8) -> bool:
        """Equality by principal angles."""
        if self.dim != other.dim:
            return False
        return self.dim == 0 or float(np.max(principal_angles(self, other))) <= tol


def containment_residual(space: Subspace, other: Subspace) -> float:
    """Largest component of a unit vector of ``other`` orthogonal to ``space``."""
    if other.dim == 0:
        return 0.0
    rest = other.basis - space.basis @ (space.basis.T @ other.basis)
    return float(np.max(np.linalg.norm(rest, axis=0)))


def principal_angles(a: Union[Subspace, np.ndarray], b: Union[Subspace, np.ndarray]) -> np.ndarray:
    a = a.basis if isinstance(a, Subspace) else np.asarray(a, dtype=float)
    b = b.basis if isinstance(b, Subspace) else np.asarray(b, dtype=float)
    if a.shape[1] == 0 or b.shape[1] == 0:
        return np.zeros(0)
    return scipy.linalg.subspace_angles(a, b)


def annihilator(s: Subspace) -> Subspace:
    """Covectors vanishing on ``s``, in the coordinate dual basis."""
    return s.orthogonal_complement()


@dataclass(frozen=True, eq=False)
class SkewForm:
    """An antisymmetric bilinear form (or bivector) on R^n.

    Only the strict lower triangle is stored; :attr:`matrix` is rebuilt from it, so antisymmetry is exact.
    """
    lower: np.ndarray

    def __post_init__(self):
        low = np.tril(np.asarray(self.lower, dtype=float), -1)
        low.setflags(write=False)
        object.__setattr__(self, 'lower', low)

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> 'SkewForm':
        m = np.atleast_2d(np.asarray(m, dtype=float))
        return cls((m - m.T) / 2)

    @classmethod
    def zero(cls, n: int) -> 'SkewForm':
        return cls(np.zeros((n, n)))

    @property
    def matrix(self) -> np.ndarray:
        return self.lower - self.lower.T

    @property
    def ambient_dim(self) -> int:
        return self.lower.shape[0]

    def __call__(self, a: np.ndarray, b: np.ndarray) -> float:
        return float(np.asarray(a) @ self.matrix @ np.asarray(b))

    def __neg__(self) -> 'SkewForm':
        return SkewForm(-self.lower)

    def __add__(self, other: 'SkewForm') -> 'SkewForm':
        return SkewForm(self.lower + other.lower)

    def __sub__(self, other: 'SkewForm') -> 'SkewForm':
        return SkewForm(self.lower - other.lower)

    def pullback(self, a: np.ndarray) -> 'SkewForm':
        """The form ``(v, w) ↦ self(Av, Aw)``."""
        a = np.asarray(a, dtype=float)
        return SkewForm.from_matrix(a.T @ self.matrix @ a)

    def pushforward(self, a: np.ndarray) -> 'SkewForm':
        """The bivector ``A Π Aᵀ``."""
        a = np.asarray(a, dtype=float)
        return SkewForm.from_matrix(a @ self.matrix @ a.T)

    def restrict(self, s: Subspace) -> 'SkewForm':
        return self.pullback(s.basis)

    def rank(self, tol_rel: float = DEFAULT_RANK_TOL) -> int:
        if self.ambient_dim == 0:
            return 0
        return rank_svd(self.matrix, tol_rel).rank


def canonical_symplectic(n: int) -> np.ndarray:
    """Matrix of ``ω_can((v₁,ξ₁),(v₂,ξ₂)) = ⟨v₁,ξ₂⟩ − ⟨v₂,ξ₁⟩`` in (x, ξ) coordinates."""
    eye = np.eye(n)
    zero = np.zeros((n, n))
    return np.block([[zero, eye], [-eye, zero]])


def pairing_matrix(n: int) -> np.ndarray:
    eye = np.eye(n)
    zero = np.zeros((n, n))
    return np.block([[zero, eye], [eye, zero]])


@dataclass(frozen=True, eq=False)
class DiracSpace:
    """A maximal isotropic subspace of V ⊕ V* for ``⟨(u,α),(v,β)⟩ = α(v) + β(u)``.

    The basis is 2n×n and orthonormal, tangent rows first.
    """
    basis: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.basis, dtype=float)
        if b.ndim != 2 or b.shape[0] != 2 * b.shape[1]:
            raise ValueError(f'a Dirac basis must be 2n x n, got shape {b.shape}')
        b.setflags(write=False)
        object.__setattr__(self, 'basis', b)
        residual = self.isotropy_residual()
        if residual > ISOTROPY_TOL:
            raise ValueError(f'subspace is not isotropic (residual {residual:.3g})')

    @classmethod
    def from_vectors(cls, vectors: np.ndarray, tol_rel: float = DEFAULT_RANK_TOL) -> 'DiracSpace':
        """Orthonormalizes spanning vectors; raises :class:`RankDefectError` unless they span n dimensions."""
        v = np.asarray(vectors, dtype=float)
        n = v.shape[0] // 2
        if n == 0:
            return cls(np.zeros((0, 0)))
        space = Subspace.span(v, tol_rel)
        if space.dim != n:
            raise RankDefectError(f'vectors span {space.dim} dimensions, a Dirac space needs {n}',
                                  expected=n, found=space.dim)
        return cls(space.basis)

    @property
    def n(self) -> int:
        return self.basis.shape[1]

    @property
    def tangent(self) -> np.ndarray:
        return self.basis[:self.n]

    @property
    def cotangent(self) -> np.ndarray:
        return self.basis[self.n:]

    def isotropy_residual(self) -> float:
        if self.n == 0:
            return 0.0
        return float(np.max(np.abs(self.basis.T @ pairing_matrix(self.n) @ self.basis)))

    def angle(self, other: 'DiracSpace') -> float:
        """Largest principal angle to ``other``."""
        if self.n != other.n:
            raise ValueError(f'dimension mismatch: {self.n} != {other.n}')
        if self.n == 0:
            return 0.0
        return float(np.max(principal_angles(self.basis, other.basis)))

    def equals(self, other: 'DiracSpace', tol: float = 1e-8) -> bool:
        return self.angle(other) <= tol

    def tangent_intersection_dim(self, tol_rel: float = DEFAULT_RANK_TOL) -> int:
        """dim(L ∩ (V ⊕ 0))."""
        if self.n == 0:
            return 0
        return self.n - rank_svd(self.cotangent, tol_rel).rank


class FormKind(Enum):
    """How a :class:`SkewForm` is read when taking its graph."""

    bivector = 'bivector'
    two_form = 'two_form'

    def __repr__(self):
        return repr(self.value)


def dirac_graph(form: SkewForm, kind: Union[FormKind, str] = FormKind.bivector) -> DiracSpace:
    """Graph of a bivector ``{(Πα, α)}`` or of a two-form ``{(v, ι_v ω)}``.

    ``ι_v ω`` has components ``ωᵀ v``.
    """
    kind = FormKind(kind)
    n = form.ambient_dim
    if kind == FormKind.bivector:
        vectors = np.vstack([form.matrix, np.eye(n)])
    elif kind == FormKind.two_form:
        vectors = np.vstack([np.eye(n), form.matrix.T])
    else:
        raise ValueError(f'form kind {kind} is not supported')
    return DiracSpace.from_vectors(vectors)


def dirac_gauge(L: DiracSpace, eta: SkewForm) -> DiracSpace:
    """Gauge transform ``L^η = {(v, α + ι_v η)}``."""
    if eta.ambient_dim != L.n:
        raise ValueError(f'form of dimension {eta.ambient_dim} on a Dirac space of dimension {L.n}')
    return DiracSpace.from_vectors(np.vstack([L.tangent, L.cotangent + eta.matrix.T @ L.tangent]))


def kernel_rank(L: DiracSpace, A: np.ndarray, tol_rel: float = DEFAULT_RANK_TOL) -> int:
    """dim(L ∩ (0 ⊕ ker Aᵀ)); its local constancy is what makes a pullback smooth."""
    A = np.asarray(A, dtype=float)
    stacked = np.vstack([L.tangent, A.T @ L.cotangent])
    if L.n == 0:
        return 0
    if stacked.shape[0] == 0 or not np.any(stacked):
        return L.n
    return L.n - rank_svd(stacked, tol_rel).rank


def dirac_pullback(L: DiracSpace, A: np.ndarray, *,
                   expected_kernel: Optional[int] = None,
                   tol_rel: float = DEFAULT_RANK_TOL) -> DiracSpace:
    """Backward image ``{(u, Aᵀβ) : (Au, β) ∈ L}`` along the linear map ``A: R^k → R^n``.

    The same formula serves for inclusions (A injective) and submersions (A surjective).

    Args:
        L: a Dirac space on R^n.
        A: an n×k matrix.
        expected_kernel: the generic value of ``dim(L ∩ (0 ⊕ ker Aᵀ))`` nearby; a different value at this point
            means the pullback is not smooth here.
        tol_rel: rank tolerance.

    Raises:
        RankDefectError: when the kernel rank differs from ``expected_kernel``.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != L.n:
        raise ValueError(f'map of shape {A.shape} does not land in dimension {L.n}')
    k = A.shape[1]
    if expected_kernel is not None:
        found = kernel_rank(L, A, tol_rel)
        if found != expected_kernel:
            raise RankDefectError(f'L ∩ Ker has dimension {found}, expected {expected_kernel}',
                                  expected=expected_kernel, found=found)
    if k == 0:
        return DiracSpace(np.zeros((0, 0)))
    null = scipy.linalg.null_space(np.hstack([A, -L.tangent]), rcond=tol_rel)
    u, c = null[:k], null[k:]
    return DiracSpace.from_vectors(np.vstack([u, A.T @ L.cotangent @ c]), tol_rel)


def dirac_to_bivector(L: DiracSpace, tol_rel: float = DEFAULT_RANK_TOL) -> SkewForm:
    """The bivector whose graph is ``L``.

    Raises:
        NotPoissonError: when ``L ∩ (V ⊕ 0) ≠ 0``; ``defect`` is the dimension of the intersection.
    """
    if L.n == 0:
        return SkewForm.zero(0)
    defect = L.tangent_intersection_dim(tol_rel)
    if defect > 0:
        raise NotPoissonError(defect)
    return SkewForm.from_matrix(scipy.linalg.solve(L.cotangent.T, L.tangent.T).T)


def lagrangian_complement(omega: SkewForm, space: Subspace, lagrangian: Subspace,
                          tol: float = ISOTROPY_TOL) -> Subspace:
    """A Lagrangian complement of ``lagrangian`` inside the symplectic vector space ``(space, omega)``.

    ``omega`` is a form on the ambient R^N; only its restriction to ``space`` is used. Starting from the Euclidean
    complement ``C`` of the Lagrangian ``L0``, each ``c`` is corrected by the unique ``a(c) ∈ L0`` with
    ``ω(a(c), c') = ω(c, c') / 2``; the corrected space is isotropic and still transverse to ``L0``.

    Raises:
        RankDefectError: when ``omega`` is degenerate on ``space``.
        ValueError: when ``lagrangian`` is not a Lagrangian subspace of ``space``.
    """
    if space.dim == 0:
        return Subspace.zero(space.ambient_dim)
    w = omega.restrict(space).matrix
    r = rank_svd(w).rank
    if r != space.dim:
        raise RankDefectError(f'form has rank {r} on a space of dimension {space.dim}', expected=space.dim, found=r)
    if 2 * lagrangian.dim != space.dim or containment_residual(space, lagrangian) > 1e-8:
        raise ValueError(f'a {lagrangian.dim}-dimensional subspace cannot be Lagrangian in dimension {space.dim}')
    coords = space.basis.T @ lagrangian.basis
    if np.max(np.abs(coords.T @ w @ coords)) > max(tol, 1e-8):
        raise ValueError('subspace is not isotropic')
    comp = scipy.linalg.null_space(coords.T)
    pairing = coords.T @ w @ comp
    gram = comp.T @ w @ comp
    correction = scipy.linalg.solve(pairing.T, gram / 2)
    return Subspace.span(space.basis @ (comp + coords @ correction))
