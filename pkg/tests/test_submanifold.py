import unittest

import numpy as np

from poisson_saturation import (
    BivectorField,
    Chart,
    FormKind,
    ImmersionError,
    NotRegularError,
    RankDefectError,
    SkewForm,
    Scene,
    Thickening,
    classify,
    dirac_graph,
    fixture_text,
    make_transversal,
    point_data,
    pullback_dirac,
    regularity_scan,
    transversality_rank,
)
from poisson_saturation._submanifold import pullback_dirac_routes


def scene(name):
    return Scene.from_text(fixture_text(name))


class TestChart(unittest.TestCase):
    def test_grid(self):
        X = Chart.parse(['u', 'v', '0'], 2, domain=[[-1, 1], [0, 2]])
        grid = X.grid(3)
        self.assertEqual((9, 2), grid.shape)
        np.testing.assert_array_equal([-1.0, 0.0], grid[0])
        np.testing.assert_array_equal([-1.0, 1.0], grid[1])
        self.assertEqual((6, 2), X.grid([3, 2]).shape)

    def test_jacobian(self):
        X = Chart.parse(['cos(u)', 'sin(u)', 'u*v'], 2)
        np.testing.assert_allclose(X.jacobian([0.0, 2.0]), [[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]], atol=1e-15)

    def test_mixed_arity(self):
        with self.assertRaises(ValueError):
            Chart([*Chart.parse(['u'], 1).components, *Chart.parse(['u'], 2).components])

    def test_immersion(self):
        pi = scene('coiso-line').pi
        X = Chart.parse(['u^2', '0', '0'], 1)
        with self.assertRaises(ImmersionError):
            point_data(pi, X, [0.0])


class TestRegularity(unittest.TestCase):
    def test_so3_plane(self):
        s = scene('so3-plane')
        scan = regularity_scan(s.pi, s.chart, s.grid)
        self.assertFalse(scan.is_regular)
        self.assertEqual((0, 1), scan.rank)
        self.assertEqual('not regular', scan.verdict)
        self.assertIn((0.0, 0.0), scan.witnesses[0])
        self.assertEqual(1, scan.counts[0])
        with self.assertRaises(NotRegularError) as ctx:
            scan.raise_if_irregular()
        self.assertIn(0, ctx.exception.witnesses)

    def test_witnesses_on_singular_locus(self):
        for name in ('logsympl-axis', 'cubic-graph'):
            with self.subTest(name=name):
                s = scene(name)
                scan = regularity_scan(s.pi, s.chart, s.grid)
                self.assertFalse(scan.is_regular)
                for u in scan.witnesses[0]:
                    self.assertAlmostEqual(0.0, u[0], delta=1e-12)

    def test_regular(self):
        expected = {
            'figure-eight': 1,
            'coiso-line': 1,
            'transversal-ray': 2,
            'sympl-plane': 2,
            'zero-structure': 0,
            'so3-sphere': 0,
            'isotropic-line': 3,
        }
        for name, rank in expected.items():
            with self.subTest(name=name):
                s = scene(name)
                scan = regularity_scan(s.pi, s.chart, s.grid)
                self.assertTrue(scan.is_regular)
                self.assertEqual(rank, scan.rank)
                self.assertEqual('regular on the sampled set', scan.verdict)

    def test_exact_sequence(self):
        for name in ('figure-eight', 'coiso-line', 'transversal-ray', 'sympl-plane', 'isotropic-line', 'so3-plane'):
            s = scene(name)
            for u in s.grid:
                with self.subTest(name=name, u=tuple(u)):
                    self.assertEqual(0, point_data(s.pi, s.chart, u).exactness_defect)


class TestClassify(unittest.TestCase):
    def test_flags(self):
        cases = {
            'coiso-line': dict(coisotropic=True, transversal=False, poisson_submanifold=False, pre_poisson=True),
            'figure-eight': dict(coisotropic=True, transversal=False, poisson_submanifold=False),
            'transversal-ray': dict(transversal=True, coisotropic=False, poisson_dirac=True),
            'sympl-plane': dict(transversal=True, symplectic_ambient=True, poisson_dirac=True),
            'so3-sphere': dict(poisson_submanifold=True, coisotropic=True, transversal=False),
            'isotropic-line': dict(coisotropic=False, pre_poisson=True, symplectic_ambient=True, poisson_dirac=False),
        }
        for name, flags in cases.items():
            s = scene(name)
            c = classify(s.pi, s.chart, s.grid)
            self.assertTrue(c.regular)
            for flag, value in flags.items():
                with self.subTest(name=name, flag=flag):
                    self.assertEqual(value, getattr(c, flag))

    def test_ranks(self):
        s = scene('isotropic-line')
        c = classify(s.pi, s.chart, s.grid)
        self.assertEqual((3, 3), c.rank_perp)
        self.assertEqual((1, 1), c.rank_intersection)
        self.assertEqual((3, 3), c.rank_sum)
        self.assertEqual([3, 3], c.as_dict()['rank_perp'])

    def test_irregular(self):
        s = scene('so3-plane')
        c = classify(s.pi, s.chart, s.grid)
        self.assertFalse(c.regular)
        self.assertFalse(c.poisson_dirac)
        self.assertEqual((0, 1), c.rank_perp)

    def test_empty_grid(self):
        s = scene('coiso-line')
        with self.assertRaises(ValueError):
            classify(s.pi, s.chart, np.zeros((0, 1)))

    def test_refinement_catches_rank_change_between_grid_points(self):
        # π is below the rank floor at both grid points and nonzero for u > -0.5
        pi = BivectorField.from_triples(3, [(1, 2, 'exp(-20*(x - 0.5)^2)')], domain=[[-1, 1]] * 3)
        X = Chart.parse(['u', '0', '0'], 1, domain=[[-1, 1]])
        grid = np.array([[-1.0], [-0.9]])
        self.assertTrue(classify(pi, X, grid, refine=0).regular)
        c = classify(pi, X, grid, seed=3)
        scan = regularity_scan(pi, X, grid, seed=3)
        self.assertFalse(c.regular)
        self.assertFalse(c.poisson_dirac)
        self.assertEqual((0, 1), c.rank_perp)
        self.assertEqual(scan.is_regular, c.regular)


class TestPullback(unittest.TestCase):
    def test_coisotropic_line(self):
        s = scene('coiso-line')
        L = pullback_dirac(s.pi, s.chart, [0.3])
        self.assertTrue(L.equals(dirac_graph(SkewForm.zero(1), FormKind.two_form)))

    def test_transversal(self):
        s = scene('transversal-ray')
        L = pullback_dirac(s.pi, s.chart, [0.1])
        self.assertTrue(L.equals(dirac_graph(SkewForm.zero(1))))

    def test_routes_agree(self):
        for name in ('figure-eight', 'coiso-line', 'transversal-ray', 'sympl-plane', 'isotropic-line'):
            s = scene(name)
            for u in s.grid:
                with self.subTest(name=name, u=tuple(u)):
                    generic, conormal = pullback_dirac_routes(s.pi, s.chart, u)
                    self.assertLessEqual(generic.angle(conormal), 1e-8)

    def test_irregular_point(self):
        s = scene('so3-plane')
        with self.assertRaises(RankDefectError):
            pullback_dirac(s.pi, s.chart, [0.0, 0.0])
        self.assertEqual(2, pullback_dirac(s.pi, s.chart, [0.5, 0.5]).n)


class TestTransversal(unittest.TestCase):
    def test_thickening(self):
        s = scene('coiso-line')
        tau = make_transversal(s.pi, s.chart, [0.0], radius=0.1)
        self.assertEqual(2, tau.param_dim)
        self.assertEqual(3, tau.ambient_dim)
        for u in tau.grid(3):
            self.assertEqual(3, transversality_rank(s.pi, tau, u))
        self.assertEqual(2, transversality_rank(s.pi, s.chart, [0.0]))

    def test_already_transversal(self):
        s = scene('transversal-ray')
        self.assertIs(s.chart, make_transversal(s.pi, s.chart, [0.0]))

    def test_figure_eight_stays_transversal(self):
        s = scene('figure-eight')
        tau = make_transversal(s.pi, s.chart, [0.0, 3.0], radius=0.1)
        self.assertIsInstance(tau, Thickening)
        self.assertEqual(3, tau.param_dim)
        # the curve's tangent is parallel to the complement chosen at t = 0 here
        t = np.arccos((np.sqrt(129) - 1) / 16)
        samples = [*tau.grid(3), [t, 3.0, 0.0], [t, 1.0, 0.05], [-t, 5.0, -0.05]]
        for u in samples:
            with self.subTest(u=tuple(u)):
                self.assertEqual(4, transversality_rank(s.pi, tau, u))

    def test_frame_spans_complement(self):
        s = scene('figure-eight')
        tau = make_transversal(s.pi, s.chart, [0.0, 3.0])
        for v in [[0.0, 3.0], [np.arccos((np.sqrt(129) - 1) / 16), 3.0], [-2.5, 0.5], [3.0, 6.0]]:
            with self.subTest(v=tuple(v)):
                frame = tau.frame(v)
                np.testing.assert_allclose(np.eye(1), frame.T @ frame, atol=1e-12)
                np.testing.assert_allclose(0.0, frame.T @ s.chart.jacobian(v), atol=1e-10)
                np.testing.assert_allclose(0.0, frame.T @ s.pi.matrix(s.chart.point(v)), atol=1e-10)
                np.testing.assert_allclose(s.chart.point(v), tau.point([*v, 0.0]), atol=1e-12)

    def test_frame_is_continuous(self):
        s = scene('figure-eight')
        tau = make_transversal(s.pi, s.chart, [0.0, 3.0])
        frames = [tau.frame([t, 3.0]) for t in np.linspace(-3, 3, 301)]
        for a, b in zip(frames, frames[1:]):
            self.assertGreater(float((a.T @ b)[0, 0]), 0.9)

    def test_irregular(self):
        s = scene('so3-plane')
        with self.assertRaises(NotRegularError):
            make_transversal(s.pi, s.chart, [0.0, 0.0])
