import unittest

import numpy as np
import numpy.testing as npt

from poisson_saturation import (
    DiracSpace,
    FormKind,
    NotPoissonError,
    RankDefectError,
    SkewForm,
    Subspace,
    annihilator,
    dirac_gauge,
    dirac_graph,
    dirac_pullback,
    dirac_to_bivector,
    lagrangian_complement,
    principal_angles,
    rank_svd,
)
from poisson_saturation._linear import canonical_symplectic, kernel_rank, pairing_matrix


def random_skew(rng, n):
    a = rng.normal(size=(n, n))
    return a - a.T


class TestRank(unittest.TestCase):
    def test_tolerance(self):
        result = rank_svd(np.diag([1.0, 1e-10, 0.0]))
        self.assertEqual(1, result.rank)
        self.assertEqual(1, result.column_space.dim)
        self.assertEqual(2, result.null_space.dim)
        self.assertEqual(2, rank_svd(np.diag([1.0, 1e-10, 0.0]), 1e-11).rank)

    def test_zero(self):
        self.assertEqual(0, rank_svd(np.zeros((3, 2))).rank)

    def test_invalid(self):
        with self.assertRaises(ValueError):
            rank_svd(np.zeros((0, 3)))
        with self.assertRaises(ValueError):
            rank_svd(np.eye(2), 0.0)


class TestSubspace(unittest.TestCase):
    def test_span(self):
        s = Subspace.span(np.array([[1.0, 2.0], [0.0, 0.0], [1.0, 2.0]]))
        self.assertEqual(1, s.dim)
        npt.assert_allclose(s.basis.T @ s.basis, np.eye(1), atol=1e-12)
        self.assertEqual(0, Subspace.span(np.zeros(3)).dim)

    def test_not_orthonormal(self):
        with self.assertRaises(ValueError):
            Subspace(np.array([[1.0], [1.0]]))

    def test_annihilator(self):
        rng = np.random.default_rng(0)
        for k in range(5):
            with self.subTest(k=k):
                s = Subspace.span(rng.normal(size=(5, k))) if k else Subspace.zero(5)
                ann = annihilator(s)
                self.assertEqual(5 - k, ann.dim)
                if k and ann.dim:
                    self.assertLessEqual(np.max(np.abs(ann.basis.T @ s.basis)), 1e-12)
                self.assertTrue(annihilator(ann).equals(s, 1e-10))

    def test_intersect_and_sum(self):
        a = Subspace.span(np.eye(4)[:, [0, 1]])
        b = Subspace.span(np.eye(4)[:, [1, 2]])
        self.assertTrue(a.intersect(b).equals(Subspace.span(np.eye(4)[:, 1])))
        self.assertEqual(3, (a + b).dim)
        self.assertTrue(a.contains(Subspace.span(np.eye(4)[:, 0])))
        self.assertFalse(a.contains(b))

    def test_complement_in(self):
        full = Subspace.full(3)
        line = Subspace.span(np.array([1.0, 1.0, 0.0]))
        rest = full.complement_in(line)
        self.assertEqual(2, rest.dim)
        self.assertTrue((rest + line).equals(full))
        self.assertEqual(0, rest.intersect(line).dim)
        self.assertLessEqual(np.max(np.abs(rest.basis.T @ line.basis)), 1e-12)
        self.assertLessEqual(np.max(principal_angles(rest, line.orthogonal_complement())), 1e-10)


class TestSkewForm(unittest.TestCase):
    def test_exact_antisymmetry(self):
        m = np.arange(9.0).reshape(3, 3)
        f = SkewForm.from_matrix(m)
        npt.assert_array_equal(f.matrix, -f.matrix.T)
        self.assertEqual(f(np.eye(3)[0], np.eye(3)[1]), -f(np.eye(3)[1], np.eye(3)[0]))

    def test_pullback(self):
        f = SkewForm.from_matrix(canonical_symplectic(2))
        plane = Subspace.span(np.eye(4)[:, [0, 2]])
        self.assertEqual(2, f.restrict(plane).rank())
        lagrangian = Subspace.span(np.eye(4)[:, [0, 1]])
        self.assertEqual(0, f.restrict(lagrangian).rank())


class TestDirac(unittest.TestCase):
    def test_symplectic_plane(self):
        L = dirac_graph(SkewForm.from_matrix(canonical_symplectic(1)))
        self.assertEqual(1, L.n)
        self.assertLessEqual(L.isotropy_residual(), 1e-14)
        # (Π dy, dy) = (e1, dy) lies in the graph
        self.assertLessEqual(np.linalg.norm(L.basis @ (L.basis.T @ [1.0, 0.0, 0.0, 1.0]) - [1.0, 0.0, 0.0, 1.0]),
                             1e-12)

    def test_not_isotropic(self):
        with self.assertRaises(ValueError):
            DiracSpace(np.array([[1.0], [1.0]]) / np.sqrt(2))
        with self.assertRaises(RankDefectError):
            DiracSpace.from_vectors(np.array([[1.0], [0.0], [0.0], [0.0]]))

    def test_graph_round_trip(self):
        rng = np.random.default_rng(0)
        for n in (1, 2, 3, 5):
            with self.subTest(n=n):
                p = random_skew(rng, n)
                L = dirac_graph(SkewForm.from_matrix(p))
                self.assertLessEqual(np.max(np.abs(L.basis.T @ pairing_matrix(n) @ L.basis)), 1e-10)
                npt.assert_allclose(dirac_to_bivector(L).matrix, p, atol=1e-12)

    def test_two_form_graph(self):
        rng = np.random.default_rng(1)
        w = random_skew(rng, 4)
        pi = dirac_to_bivector(dirac_graph(SkewForm.from_matrix(w), FormKind.two_form))
        npt.assert_allclose(pi.matrix, np.linalg.inv(w.T), atol=1e-10)

    def test_degenerate_two_form(self):
        L = dirac_graph(SkewForm.zero(2), 'two_form')
        self.assertEqual(2, L.tangent_intersection_dim())
        with self.assertRaises(NotPoissonError) as ctx:
            dirac_to_bivector(L)
        self.assertEqual(2, ctx.exception.defect)

    def test_gauge(self):
        rng = np.random.default_rng(2)
        p = random_skew(rng, 4) + 3 * canonical_symplectic(2)
        eta = 0.1 * random_skew(rng, 4)
        gauged = dirac_gauge(dirac_graph(SkewForm.from_matrix(p)), SkewForm.from_matrix(eta))
        expected = np.linalg.inv(np.linalg.inv(p) - eta)
        npt.assert_allclose(dirac_to_bivector(gauged).matrix, expected, atol=1e-9)

    def test_gauge_zero(self):
        L = dirac_graph(SkewForm.from_matrix(canonical_symplectic(2)))
        self.assertLessEqual(dirac_gauge(L, SkewForm.zero(4)).angle(L), 1e-12)
        with self.assertRaises(ValueError):
            dirac_gauge(L, SkewForm.zero(3))

    def test_gauge_group_action(self):
        rng = np.random.default_rng(7)
        spaces = [
            dirac_graph(SkewForm.from_matrix(random_skew(rng, 4))),
            dirac_graph(SkewForm.zero(4)),
            dirac_graph(SkewForm.from_matrix(random_skew(rng, 3)), FormKind.two_form),
        ]
        for L in spaces:
            eta = SkewForm.from_matrix(random_skew(rng, L.n))
            eta2 = SkewForm.from_matrix(random_skew(rng, L.n))
            with self.subTest(n=L.n):
                twice = dirac_gauge(dirac_gauge(L, eta), eta2)
                once = dirac_gauge(L, SkewForm.from_matrix(eta.matrix + eta2.matrix))
                self.assertLessEqual(twice.angle(once), 1e-10)
                self.assertLessEqual(dirac_gauge(dirac_gauge(L, eta), -eta).angle(L), 1e-10)
                self.assertLessEqual(dirac_gauge(L, eta).isotropy_residual(), 1e-10)

    def test_pullback_identity(self):
        rng = np.random.default_rng(3)
        L = dirac_graph(SkewForm.from_matrix(random_skew(rng, 3)))
        self.assertLessEqual(dirac_pullback(L, np.eye(3)).angle(L), 1e-10)

    def test_pullback_to_line(self):
        # the symplectic plane pulls back to a line as the zero two-form
        L = dirac_graph(SkewForm.from_matrix(canonical_symplectic(1)))
        A = np.array([[1.0], [0.0]])
        self.assertEqual(0, kernel_rank(L, A))
        pulled = dirac_pullback(L, A, expected_kernel=0)
        self.assertTrue(pulled.equals(dirac_graph(SkewForm.zero(1), FormKind.two_form)))
        with self.assertRaises(RankDefectError):
            dirac_pullback(L, A, expected_kernel=1)

    def test_pullback_of_zero_bivector(self):
        L = dirac_graph(SkewForm.zero(3))
        A = np.eye(3)[:, :1]
        self.assertEqual(2, kernel_rank(L, A))
        pulled = dirac_pullback(L, A)
        self.assertTrue(pulled.equals(dirac_graph(SkewForm.zero(1))))


class TestLagrangianComplement(unittest.TestCase):
    def test_complement(self):
        omega = SkewForm.from_matrix(canonical_symplectic(2))
        space = Subspace.full(4)
        lagrangian = Subspace.span(np.array([[1.0, 0.0], [0.0, 1.0], [0.5, 0.0], [0.0, 0.0]]))
        v = lagrangian_complement(omega, space, lagrangian)
        self.assertEqual(2, v.dim)
        self.assertEqual(0, v.intersect(lagrangian).dim)
        self.assertTrue((v + lagrangian).equals(space))
        self.assertLessEqual(np.max(np.abs(omega.restrict(v).matrix)), 1e-10)

    def test_not_lagrangian(self):
        omega = SkewForm.from_matrix(canonical_symplectic(2))
        with self.assertRaises(ValueError):
            lagrangian_complement(omega, Subspace.full(4), Subspace.span(np.eye(4)[:, [0, 2]]))

    def test_degenerate(self):
        with self.assertRaises(RankDefectError):
            lagrangian_complement(SkewForm.zero(2), Subspace.full(2), Subspace.span(np.eye(2)[:, 0]))
