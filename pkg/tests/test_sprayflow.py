import unittest

import numpy as np
import numpy.testing as npt
import scipy.linalg

from poisson_saturation import (
    BivectorField,
    CotangentState,
    NotRegularError,
    Scene,
    cotangent_path_residual,
    dual_pair_check,
    exp_chi,
    fixture_text,
    flow,
    hamiltonian_flow,
    omega_chi,
    parse,
    shrink_radius,
    spray_eval,
    zero_section_omega,
)
from poisson_saturation._linear import canonical_symplectic


def scene(name):
    return Scene.from_text(fixture_text(name))


class TestCotangentState(unittest.TestCase):
    def test_shapes(self):
        s = CotangentState([1.0, 2.0], [0.5, 0.0])
        npt.assert_array_equal([1.0, 2.0, 0.5, 0.0], s.vector)
        self.assertEqual(2, CotangentState.from_vector(s.vector).n)
        with self.assertRaises(ValueError):
            CotangentState([1.0, 2.0], [0.5])
        with self.assertRaises(ValueError):
            CotangentState([np.nan], [0.0])


class TestFlow(unittest.TestCase):
    def test_spray_axioms(self):
        rng = np.random.default_rng(0)
        for name in ('so3-plane', 'logsympl-axis', 'cubic-graph', 'figure-eight', 'sympl-plane', 'zero-structure'):
            pi = scene(name).pi
            lo, hi = pi.domain[:, 0], pi.domain[:, 1]
            for _ in range(200):
                x = rng.uniform(lo, hi)
                xi = rng.normal(size=pi.dim)
                t = rng.uniform(-2, 2)
                base, fiber = spray_eval(pi, CotangentState(x, xi))
                with self.subTest(name=name):
                    npt.assert_array_equal(base, pi.sharp(x, xi))
                    npt.assert_array_equal(fiber, np.zeros(pi.dim))
                    scaled, _ = spray_eval(pi, CotangentState(x, t * xi))
                    npt.assert_allclose(scaled, t * base, rtol=1e-13, atol=1e-13)

    def test_steps(self):
        pi = scene('coiso-line').pi
        s = CotangentState(np.zeros(3), np.zeros(3))
        with self.assertRaises(ValueError):
            flow(pi, s, steps=14)
        with self.assertRaises(ValueError):
            flow(pi, s, steps=17)
        with self.assertRaises(ValueError):
            flow(pi, CotangentState(np.zeros(2), np.zeros(2)), steps=16)

    def test_constant_structure(self):
        pi = scene('coiso-line').pi
        p = pi.matrix(np.zeros(3))
        x, xi = np.array([0.1, -0.2, 0.3]), np.array([0.2, 0.1, -0.4])
        res = flow(pi, CotangentState(x, xi), steps=16)
        npt.assert_allclose(res.end.x, x + p @ xi, atol=1e-14)
        npt.assert_allclose(res.end.xi, xi, atol=0)
        npt.assert_allclose(res.jac, np.block([[np.eye(3), p], [np.zeros((3, 3)), np.eye(3)]]), atol=1e-14)
        self.assertFalse(res.left_domain)
        self.assertTrue(res.det_sign_preserved)

    def test_self_convergence(self):
        pi = scene('so3-plane').pi
        s = CotangentState([1.0, 0.0, 0.0], [0.0, 0.0, 1.0])
        self.assertLessEqual(np.max(np.abs(exp_chi(pi, s, 1024) - exp_chi(pi, s, 4096))), 1e-9)

    def test_zero_section_differential(self):
        # d(exp_χ) at ξ = 0 is (v, ξ) ↦ v + π^♯ξ
        for name in ('so3-plane', 'figure-eight', 'isotropic-line', 'logsympl-axis'):
            pi = scene(name).pi
            x = np.random.default_rng(0).uniform(-0.5, 0.5, size=pi.dim)
            res = flow(pi, CotangentState(x, np.zeros(pi.dim)), steps=64)
            h = 1e-6
            fd = np.empty((pi.dim, 2 * pi.dim))
            for a in range(2 * pi.dim):
                step = np.zeros(2 * pi.dim)
                step[a] = h
                plus = exp_chi(pi, CotangentState.from_vector(res.start.vector + step), 64)
                minus = exp_chi(pi, CotangentState.from_vector(res.start.vector - step), 64)
                fd[:, a] = (plus - minus) / (2 * h)
            with self.subTest(name=name):
                npt.assert_allclose(res.jac[:pi.dim], np.hstack([np.eye(pi.dim), pi.matrix(x)]), atol=1e-12)
                npt.assert_allclose(fd, res.jac[:pi.dim], atol=1e-5)

    def test_domain_exit(self):
        pi = scene('coiso-line').pi
        res = flow(pi, CotangentState([2.9, 0.0, 0.0], [0.0, 0.5, 0.0]), steps=16)
        self.assertTrue(res.left_domain)
        self.assertAlmostEqual(0.25, res.exit_time)
        npt.assert_allclose(res.end.x, [3.4, 0.0, 0.0], atol=1e-14)


class TestOmegaChi(unittest.TestCase):
    def test_constant_closed_form(self):
        pi = scene('sympl-plane').pi
        p = pi.matrix(np.zeros(4))
        expected = np.block([[np.zeros((4, 4)), np.eye(4)], [-np.eye(4), -p]])
        for xi in ([0.0, 0.0, 0.0, 0.0], [0.1, -0.2, 0.3, 0.05]):
            omega = omega_chi(pi, CotangentState(np.zeros(4), xi), steps=64)
            npt.assert_allclose(omega.matrix, expected, atol=1e-10)

    def test_zero_section(self):
        rng = np.random.default_rng(0)
        for name in ('so3-plane', 'sympl-plane'):
            pi = scene(name).pi
            for x in rng.uniform(-1, 1, size=(50, pi.dim)):
                with self.subTest(name=name, x=tuple(x)):
                    omega = omega_chi(pi, CotangentState(x, np.zeros(pi.dim)), steps=1024)
                    npt.assert_allclose(omega.matrix, zero_section_omega(pi, x).matrix, atol=1e-6)

    def test_needs_nodes(self):
        pi = scene('coiso-line').pi
        res = flow(pi, CotangentState(np.zeros(3), np.zeros(3)), steps=16, keep_nodes=False)
        with self.assertRaises(ValueError):
            omega_chi(pi, res.start, result=res)

    def test_convergence(self):
        # fourth order: doubling the steps divides the error by about 16
        pi = scene('so3-plane').pi
        s = CotangentState([1.0, 0.5, -0.5], [0.3, -0.2, 0.4])
        reference = omega_chi(pi, s, steps=2048).matrix
        errors = [np.max(np.abs(omega_chi(pi, s, steps=n).matrix - reference)) for n in (16, 32, 64)]
        for coarse, fine in zip(errors, errors[1:]):
            self.assertGreaterEqual(coarse / fine, 12)
            self.assertLessEqual(coarse / fine, 20)
        self.assertLessEqual(np.max(np.abs(omega_chi(pi, s, steps=1024).matrix - reference)), 1e-8)

    def test_endpoint_convergence(self):
        states = {
            'so3-plane': CotangentState([0.5, 0.5, -0.5], [0.3, -0.2, 0.4]),
            'logsympl-axis': CotangentState([0.5, 0.5], [1.0, -1.0]),
        }
        for name, s in states.items():
            pi = scene(name).pi
            reference = exp_chi(pi, s, 2048)
            errors = [np.max(np.abs(exp_chi(pi, s, n) - reference)) for n in (16, 32, 64)]
            for coarse, fine in zip(errors, errors[1:]):
                with self.subTest(name=name):
                    self.assertGreaterEqual(coarse / fine, 12)
                    self.assertLessEqual(coarse / fine, 20)

    def test_nondegenerate_near_zero_section(self):
        rng = np.random.default_rng(0)
        for name in ('so3-plane', 'logsympl-axis', 'coiso-line', 'sympl-plane', 'figure-eight', 'zero-structure'):
            pi = scene(name).pi
            floor = 0.1 * scipy.linalg.svdvals(canonical_symplectic(pi.dim)).min()
            lo, hi = pi.domain[:, 0], pi.domain[:, 1]
            for _ in range(10):
                x = lo + (hi - lo) * rng.uniform(0.25, 0.75, size=pi.dim)
                direction = rng.normal(size=pi.dim)
                xi = 0.1 * rng.uniform() * direction / np.linalg.norm(direction)
                omega = omega_chi(pi, CotangentState(x, xi), steps=64).matrix
                with self.subTest(name=name, x=tuple(x)):
                    npt.assert_array_equal(omega, -omega.T)
                    self.assertGreater(scipy.linalg.svdvals(omega).min(), floor)


class TestCotangentPaths(unittest.TestCase):
    def test_residual(self):
        rng = np.random.default_rng(0)
        for name in ('so3-plane', 'figure-eight', 'coiso-line'):
            pi = scene(name).pi
            for _ in range(100):
                x = rng.uniform(-0.5, 0.5, size=pi.dim)
                xi = rng.uniform(-0.2, 0.2, size=pi.dim)
                with self.subTest(name=name):
                    res = flow(pi, CotangentState(x, xi), steps=1024)
                    self.assertLessEqual(cotangent_path_residual(pi, res), 1e-8)

    def test_hamiltonian_flow_stays_on_leaf(self):
        pi = scene('so3-plane').pi
        path = hamiltonian_flow(pi, parse('x + 2*z', 3), [0.3, 0.4, 1.2], steps=256)
        radii = np.sum(path ** 2, axis=1)
        self.assertLessEqual(np.max(np.abs(radii - radii[0])), 1e-9)
        self.assertGreater(np.linalg.norm(path[-1] - path[0]), 0.1)


class TestShrinkRadius(unittest.TestCase):
    def test_halving(self):
        pi = scene('coiso-line').pi

        def states(radius):
            return [CotangentState([2.85, 0.0, 0.0], [0.0, radius, 0.0])]

        with self.assertWarns(UserWarning):
            radius, halvings = shrink_radius(pi, states, 0.8, steps=16)
        self.assertEqual(3, halvings)
        self.assertAlmostEqual(0.1, radius)

    def test_inside(self):
        pi = scene('coiso-line').pi
        self.assertEqual((0.2, 0), shrink_radius(pi, lambda r: [CotangentState(np.zeros(3), [r, r, r])], 0.2,
                                                 steps=16))

    def test_give_up(self):
        pi = scene('coiso-line').pi
        with self.assertWarns(UserWarning), self.assertRaises(FloatingPointError):
            shrink_radius(pi, lambda r: [CotangentState([2.85, 0.0, 0.0], [0.0, r, 0.0])], 0.8, steps=16,
                          max_halvings=1)


class TestDualPair(unittest.TestCase):
    def test_coisotropic_line(self):
        s = scene('coiso-line')
        report = dual_pair_check(s.pi, s.chart, [0.2], [0.1, 0.05, -0.1], steps=64)
        self.assertLessEqual(report.orthogonality, 1e-8)
        self.assertEqual(3, report.s1_dim)
        self.assertEqual(2, report.s2_dim)
        self.assertEqual(2, report.k_dim)
        self.assertEqual(1, report.triple_dim)
        self.assertEqual(report.triple_expected, report.triple_dim)
        self.assertTrue(report.passed)
        self.assertTrue(report.as_dict()['passed'])

    def test_symplectic_plane(self):
        s = scene('sympl-plane')
        report = dual_pair_check(s.pi, s.chart, [0.1, -0.3], [0.05, 0.0, -0.1, 0.1], steps=64)
        self.assertLessEqual(report.orthogonality, 1e-8)
        self.assertEqual(0, report.triple_dim)
        self.assertTrue(report.passed)

    def test_irregular(self):
        s = scene('so3-plane')
        with self.assertRaises(NotRegularError):
            dual_pair_check(s.pi, s.chart, [0.0, 0.0], [0.0, 0.0, 0.1], steps=16)


class TestZeroField(unittest.TestCase):
    def test_zero_structure_does_not_move(self):
        pi = BivectorField.zero(3, domain=[[-1, 1]] * 3)
        res = flow(pi, CotangentState([0.5, 0.0, 0.0], [1.0, 2.0, 3.0]), steps=16)
        npt.assert_array_equal([0.5, 0.0, 0.0], res.end.x)
