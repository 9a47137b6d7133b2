from functools import cached_property
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import sympy
from scipy.stats import qmc

from poisson_saturation._errors import PoissonSaturationError
from poisson_saturation._expr import Expression, compile_array, parse
from poisson_saturation._linear import DEFAULT_RANK_TOL, SkewForm, rank_svd

VectorField = List[Expression]

DEFAULT_JACOBI_POINTS = 1000


class JacobiError(PoissonSaturationError):
    """A bivector field fails the Jacobi identity at a sample point."""
    def __init__(self, residual: float, point: Sequence[float]):
        super().__init__(f'Jacobi residual {residual:.3g} at {tuple(float(p) for p in point)}')
        self.residual = residual
        self.point = tuple(float(p) for p in point)


def _jacobi_tensor(p: np.ndarray, d: np.ndarray) -> np.ndarray:
    # J^{ijk} = Σ_l Π^{lk} ∂_lΠ^{ij} + Π^{li} ∂_lΠ^{jk} + Π^{lj} ∂_lΠ^{ki}, with d[l, i, j] = ∂_lΠ^{ij}
    return (np.einsum('lk,lij->ijk', p, d)
            + np.einsum('li,ljk->ijk', p, d)
            + np.einsum('lj,lki->ijk', p, d))


class BivectorField:
    """A bivector ``Π = Σ_{i<j} Π^{ij} ∂_i ∧ ∂_j`` on a coordinate chart of R^n.

    Only the upper triangle is stored; the lower triangle is its negative. ``π^♯`` uses the convention
    ``(π^♯ α)^i = Σ_j Π^{ij} α_j``.
    """
    def __init__(self,
        dim: int,
        entries: Dict[Tuple[int, int], Expression],
        *,
        domain: Optional[np.ndarray] = None,
        names: Optional[Sequence[str]] = None,
    ):
        """Builds a bivector field.

        Args:
            dim: the dimension n of the chart.
            entries: map from 0-based pairs ``(i, j)`` with ``i < j`` to the Expression ``Π^{ij}``; missing pairs are
                zero.
            domain: optional ``n×2`` array of ``(lo, hi)`` bounds of the domain box.
            names: optional scene-declared coordinate names (for printing only).
        """
        assert dim >= 1, "dimension must be positive"
        self.dim = dim
        zero = Expression.constant(0, dim)
        self.entries = {}
        for (i, j), e in entries.items():
            if not (0 <= i < j < dim):
                raise ValueError(f'entry ({i}, {j}) is not in the upper triangle of a {dim}x{dim} matrix')
            if e.arity != dim:
                raise ValueError(f'entry ({i}, {j}) has arity {e.arity}, expected {dim}')
            if not e.is_zero:
                self.entries[i, j] = e
        self.symbols = zero.symbols
        self.domain = None if domain is None else np.asarray(domain, dtype=float).reshape(dim, 2)
        self.names = tuple(names) if names is not None else None

    @classmethod
    def from_triples(cls,
        dim: int,
        triples: Iterable[Tuple[int, int, str]],
        *,
        domain: Optional[np.ndarray] = None,
        names: Optional[Sequence[str]] = None,
    ) -> 'BivectorField':
        """Builds a field from 1-based ``(i, j, text)`` triples; ``(3, 1, "y")`` means ``Π^{31} = y``."""
        entries = {}
        for i, j, text in triples:
            if i == j or not (1 <= i <= dim and 1 <= j <= dim):
                raise ValueError(f'invalid entry indices ({i}, {j}) for dimension {dim}')
            e = parse(text, dim, names=names)
            key = (min(i, j) - 1, max(i, j) - 1)
            if key in entries:
                raise ValueError(f'entry ({i}, {j}) given twice')
            entries[key] = e if i < j else e.wrap(-e.node)
        return cls(dim, entries, domain=domain, names=names)

    @classmethod
    def zero(cls, dim: int, *, domain: Optional[np.ndarray] = None) -> 'BivectorField':
        return cls(dim, {}, domain=domain)

    def entry(self, i: int, j: int) -> Expression:
        """The Expression ``Π^{ij}`` (0-based), for any ordered pair."""
        if i == j:
            return Expression.constant(0, self.dim)
        if i < j:
            return self.entries.get((i, j), Expression.constant(0, self.dim))
        e = self.entry(j, i)
        return e.wrap(-e.node)

    def _nodes(self) -> List[List[sympy.Expr]]:
        return [[self.entry(i, j).node for j in range(self.dim)] for i in range(self.dim)]

    @cached_property
    def _matrix_fn(self) -> Callable[[np.ndarray], np.ndarray]:
        return compile_array(self._nodes(), self.symbols)

    @cached_property
    def _derivative_fn(self) -> Callable[[np.ndarray], np.ndarray]:
        nodes = self._nodes()
        tensor = [[[sympy.diff(nodes[i][j], s) for j in range(self.dim)] for i in range(self.dim)]
                  for s in self.symbols]
        return compile_array(tensor, self.symbols)

    @property
    def is_constant(self) -> bool:
        return all(not e.node.free_symbols for e in self.entries.values())

    def matrix(self, x: Sequence[float]) -> np.ndarray:
        """The n×n matrix ``Π^{ij}(x)``."""
        return self._matrix_fn(x)

    def at(self, x: Sequence[float]) -> SkewForm:
        return SkewForm.from_matrix(self.matrix(x))

    def derivative_tensor(self, x: Sequence[float]) -> np.ndarray:
        """``d[l, i, j] = ∂_l Π^{ij}(x)``, from exact derivatives."""
        return self._derivative_fn(x)

    def in_domain(self, x: Sequence[float]) -> bool:
        if self.domain is None:
            return True
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.domain[:, 0]) and np.all(x <= self.domain[:, 1]))

    def sharp(self, x: Sequence[float], alpha: Sequence[float]) -> np.ndarray:
        return self.matrix(x) @ np.asarray(alpha, dtype=float)

    def jacobi_residual(self, x: Sequence[float]) -> float:
        """Largest entry of the Jacobiator ``J^{ijk}`` at ``x``."""
        return float(np.max(np.abs(_jacobi_tensor(self.matrix(x), self.derivative_tensor(x)))))

    def closedness_residual(self, x: Sequence[float]) -> float:
        """Largest entry of ``dω`` at ``x``, reading the entries as a two-form ``ω_{ij}``."""
        d = self.derivative_tensor(x)
        return float(np.max(np.abs(d + np.transpose(d, (1, 2, 0)) + np.transpose(d, (2, 0, 1))), initial=0.0))

    def leaf_dim(self, x: Sequence[float], tol: float = DEFAULT_RANK_TOL) -> int:
        return rank_svd(self.matrix(x), tol).rank

    def hamiltonian_vf(self, f: Expression) -> VectorField:
        """``X_f = π^♯(df)``, with exact Expression components."""
        if f.arity != self.dim:
            raise ValueError(f'function has arity {f.arity}, field has dimension {self.dim}')
        grad = [sympy.diff(f.node, s) for s in self.symbols]
        return [f.wrap(sympy.Add(*[self.entry(i, j).node * grad[j] for j in range(self.dim)]))
                for i in range(self.dim)]

    def poisson_bracket(self, f: Expression, g: Expression) -> Expression:
        """``{f, g} = ⟨dg, π^♯ df⟩ = X_f(g)``."""
        xf = self.hamiltonian_vf(f)
        return f.wrap(sympy.Add(*[xf[i].node * sympy.diff(g.node, s) for i, s in enumerate(self.symbols)]))

    def sample_points(self, n_points: int = DEFAULT_JACOBI_POINTS, seed: int = 0) -> np.ndarray:
        """Quasi-random (scrambled Halton) points of the domain box."""
        if self.domain is None:
            raise ValueError('sampling requires a domain box')
        sampler = qmc.Halton(d=self.dim, scramble=True, seed=seed)
        return qmc.scale(sampler.random(n_points), self.domain[:, 0], self.domain[:, 1])

    def certify(self,
        n_points: int = DEFAULT_JACOBI_POINTS,
        *,
        seed: int = 0,
        tol: Optional[float] = None,
    ) -> float:
        """Maximum Jacobi residual over quasi-random points of the domain box.

        Args:
            n_points: number of sample points.
            seed: sampler seed.
            tol: when given, raise :class:`JacobiError` at the first point whose residual exceeds it.

        Returns:
            The largest residual found.
        """
        worst = 0.0
        for x in self.sample_points(n_points, seed):
            r = self.jacobi_residual(x)
            if tol is not None and r > tol:
                raise JacobiError(r, x)
            worst = max(worst, r)
        return worst

    def with_entry(self, i: int, j: int, e: Expression) -> 'BivectorField':
        """A copy with ``Π^{ij}`` (0-based, ``i < j``) replaced."""
        entries = dict(self.entries)
        entries[i, j] = e
        return BivectorField(self.dim, entries, domain=self.domain, names=self.names)

    def __repr__(self):
        terms = ', '.join(f'{i + 1} {j + 1} {e}' for (i, j), e in sorted(self.entries.items()))
        return f'BivectorField({self.dim}, [{terms}])'


def sharp(field: BivectorField, x: Sequence[float], alpha: Sequence[float]) -> np.ndarray:
    return field.sharp(x, alpha)


def jacobi_residual(field: BivectorField, x: Sequence[float]) -> float:
    return field.jacobi_residual(x)


def hamiltonian_vf(field: BivectorField, f: Expression) -> VectorField:
    return field.hamiltonian_vf(f)


def leaf_dim(field: BivectorField, x: Sequence[float], tol: float = DEFAULT_RANK_TOL) -> int:
    return field.leaf_dim(x, tol)


def poisson_bracket(field: BivectorField, f: Expression, g: Expression) -> Expression:
    return field.poisson_bracket(f, g)


def is_casimir(field: BivectorField, f: Expression, points: Iterable[Sequence[float]], tol: float = 1e-12) -> bool:
    """Whether ``X_f`` vanishes at every point."""
    xf = compile_array(field.hamiltonian_vf(f), field.symbols)
    return all(np.max(np.abs(xf(p))) <= tol for p in points)


def jacobi_residual_numeric(matrix_fn: Callable[[np.ndarray], np.ndarray], x: Sequence[float],
                            h: float = 1e-3) -> float:
    """Jacobi residual of a numerically given bivector field, derivatives by central differences."""
    x = np.asarray(x, dtype=float)
    p = np.asarray(matrix_fn(x), dtype=float)
    n = x.size
    d = np.empty((n, n, n))
    for l in range(n):  # noqa: E741
        step = np.zeros(n)
        step[l] = h
        d[l] = (np.asarray(matrix_fn(x + step)) - np.asarray(matrix_fn(x - step))) / (2 * h)
    return float(np.max(np.abs(_jacobi_tensor(p, d))))
