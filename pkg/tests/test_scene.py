import unittest

import numpy as np

from poisson_saturation import ComplementMode, Scene, SceneError, fixture_names, fixture_text, parse_scene

BASE = '''\
[scene]
name = small
[poisson]
dim = 2
variables = x y
domain = -1 1, -1 1
entries =
    1 2 "x"
[submanifold]
params = u
components = "u" "0"
domain = -1 1
'''


class TestParseScene(unittest.TestCase):
    def test_defaults(self):
        spec = parse_scene(BASE)
        self.assertEqual('small', spec.scene.name)
        self.assertEqual(1024, spec.flow.steps)
        self.assertEqual(ComplementMode.default, spec.complement.mode)
        self.assertEqual(1e-4, spec.tolerances.normal_form)
        self.assertEqual('canonical', spec.model.gauge)
        self.assertEqual([(1, 2, 'x')], spec.poisson.entries)
        self.assertEqual([(-1.0, 1.0), (-1.0, 1.0)], spec.poisson.domain)

    def test_all_fixtures(self):
        for name in fixture_names():
            with self.subTest(name=name):
                self.assertEqual(name, parse_scene(fixture_text(name)).scene.name)

    def test_unknown_fixture(self):
        with self.assertRaises(SceneError):
            fixture_text('no-such-scene')

    def test_missing_header(self):
        with self.assertRaises(SceneError) as ctx:
            parse_scene('name = x\n')
        self.assertEqual(1, ctx.exception.line)

    def test_missing_submanifold(self):
        with self.assertRaises(SceneError):
            parse_scene(BASE.split('[submanifold]')[0])

    def test_missing_structure(self):
        with self.assertRaises(SceneError):
            parse_scene('[scene]\nname = empty\n')

    def test_extra_key(self):
        with self.assertRaises(SceneError) as ctx:
            parse_scene(BASE.replace('dim = 2\n', 'dim = 2\nbogus = 1\n'))
        self.assertEqual(5, ctx.exception.line)

    def test_bad_domain(self):
        with self.assertRaises(SceneError) as ctx:
            parse_scene(BASE.replace('domain = -1 1, -1 1', 'domain = -1 1, -1'))
        self.assertEqual(6, ctx.exception.line)
        with self.assertRaises(SceneError):
            parse_scene(BASE.replace('domain = -1 1, -1 1', 'domain = -1 1, 1 -1'))

    def test_component_count(self):
        with self.assertRaises(SceneError):
            parse_scene(BASE.replace('components = "u" "0"', 'components = "u"'))

    def test_odd_steps(self):
        with self.assertRaises(SceneError) as ctx:
            parse_scene(BASE + '[flow]\nsteps = 17\n')
        self.assertEqual(14, ctx.exception.line)
        with self.assertRaises(SceneError):
            parse_scene(BASE + '[flow]\nsteps = 8\n')

    def test_invalid_gauge(self):
        with self.assertRaises(SceneError) as ctx:
            parse_scene(BASE + '[model]\ngauge = flat\n')
        self.assertEqual(14, ctx.exception.line)

    def test_invalid_mode(self):
        with self.assertRaises(SceneError):
            parse_scene(BASE + '[complement]\nmode = lagrangian\n')

    def test_presymplectic_with_submanifold(self):
        text = fixture_text('gotay-presymplectic') + '[submanifold]\nparams = u\ncomponents = "u" "0" "0"\ndomain = -1 1\n'
        with self.assertRaises(SceneError):
            parse_scene(text)


class TestScene(unittest.TestCase):
    def test_build(self):
        scene = Scene.from_text(BASE)
        self.assertEqual('small', scene.name)
        self.assertEqual(2, scene.pi.dim)
        self.assertEqual((3, 1), scene.grid.shape)
        self.assertIsNone(scene.g_frame)
        self.assertFalse(scene.is_presymplectic)

    def test_malformed_expression(self):
        with self.assertRaises(SceneError) as ctx:
            Scene.from_text(BASE.replace('"x"', '"x + * y"'))
        self.assertEqual(3, ctx.exception.line)
        self.assertEqual(4, ctx.exception.position)

    def test_unknown_identifier(self):
        with self.assertRaises(SceneError) as ctx:
            Scene.from_text(BASE.replace('"u" "0"', '"u" "w"'))
        self.assertEqual(9, ctx.exception.line)

    def test_invalid_entry(self):
        with self.assertRaises(SceneError):
            Scene.from_text(BASE.replace('1 2 "x"', '2 2 "x"'))

    def test_frames(self):
        text = fixture_text('figure-eight') + 'g_frame =\n    "2*cos(2*t)" "cos(t)" "1" "0.3"\n'
        scene = Scene.from_text(text)
        g = scene.g_frame(np.array([0.0, 1.0]))
        self.assertEqual((4, 1), g.shape)
        np.testing.assert_allclose([2.0, 1.0, 1.0, 0.3], g[:, 0])

    def test_frame_length(self):
        text = fixture_text('figure-eight') + 'g_frame =\n    "1" "0"\n'
        with self.assertRaises(SceneError):
            Scene.from_text(text)

    def test_presymplectic(self):
        scene = Scene.from_text(fixture_text('gotay-presymplectic'))
        self.assertTrue(scene.is_presymplectic)
        self.assertIsNone(scene.pi)
        self.assertEqual((27, 3), scene.grid.shape)
        self.assertEqual(3, scene.dirac(np.zeros(3)).n)

    def test_presymplectic_not_closed(self):
        text = fixture_text('gotay-presymplectic')
        with self.assertRaises(SceneError) as ctx:
            Scene.from_text(text.replace('1 2 "1"', '1 2 "z"'))
        self.assertEqual(12, ctx.exception.line)
        self.assertIn('not closed', str(ctx.exception))
        # x dx ^ dy is closed
        self.assertTrue(Scene.from_text(text.replace('1 2 "1"', '1 2 "x"')).is_presymplectic)

    def test_overrides(self):
        scene = Scene.from_text(fixture_text('coiso-line'))
        other = scene.with_overrides(steps=64, tol=1e-3)
        self.assertEqual(64, other.spec.flow.steps)
        self.assertEqual(1e-3, other.spec.tolerances.normal_form)
        self.assertEqual(1024, scene.spec.flow.steps)
        self.assertEqual(ComplementMode.coisotropic, other.spec.complement.mode)
        with self.assertRaises(SceneError):
            scene.with_overrides(steps=15)
