import json
import unittest

import numpy as np
import pandas as pd

from poisson_saturation import Report, StageReport
from poisson_saturation._report import points_frame


class TestStageReport(unittest.TestCase):
    def test_check(self):
        stage = StageReport(name='verify')
        self.assertTrue(stage.check('normal_form', 1e-6, 1e-4))
        self.assertEqual('pass', stage.status)
        self.assertFalse(stage.check('restriction', 1e-3, 1e-4))
        self.assertEqual('fail', stage.status)
        self.assertEqual(1e-3, stage.residuals['restriction'])

    def test_nan_fails(self):
        stage = StageReport(name='verify')
        self.assertFalse(stage.check('normal_form', float('nan'), 1.0))
        self.assertEqual('fail', stage.status)

    def test_require(self):
        stage = StageReport(name='saturate')
        self.assertTrue(stage.require('immersion', True))
        self.assertEqual('pass', stage.status)
        stage.require('immersion', False)
        self.assertEqual('fail', stage.status)
        self.assertFalse(stage.flags['immersion'])

    def test_prerequisite_is_kept(self):
        stage = StageReport(name='analyze', status='prerequisite')
        stage.check('jacobi', 1.0, 1e-10)
        self.assertEqual('prerequisite', stage.status)


class TestReport(unittest.TestCase):
    def test_json(self):
        report = Report(scene='coiso-line', command='verify')
        stage = StageReport(name='verify')
        stage.check('normal_form', np.inf, 1e-4)
        report.stages.append(stage)
        data = json.loads(report.to_json())
        self.assertEqual(1, data['schema'])
        self.assertNotIn('schema_version', data)
        self.assertEqual(['schema', 'convention', 'scene', 'command', 'parameters', 'stages', 'exit_code'],
                         list(data))
        self.assertIsNone(data['stages'][0]['residuals']['normal_form'])
        self.assertEqual('fail', data['stages'][0]['status'])
        self.assertIs(stage, report.stage('verify'))
        self.assertIsNone(report.stage('model'))


class TestPointsFrame(unittest.TestCase):
    def test_columns(self):
        frame = pd.DataFrame({
            'u': [np.array([0.5]), np.array([1.0])],
            's': [np.array([0.1, 0.2]), np.zeros(2)],
            'x': [np.arange(3.0), np.ones(3)],
            'residual': [1e-12, 0.0],
        })
        res = points_frame(frame, 1, 2, 3)
        self.assertEqual(['u1', 'xi1', 'xi2', 'x1', 'x2', 'x3', 'residual'], list(res.columns))
        self.assertEqual(0.2, res['xi2'][0])
        self.assertEqual(2.0, res['x3'][0])

    def test_zero_fiber(self):
        frame = pd.DataFrame({'u': [np.array([0.5])], 's': [np.zeros(0)], 'x': [np.zeros(2)], 'residual': [0.0]})
        self.assertEqual(['u1', 'x1', 'x2', 'residual'], list(points_frame(frame, 1, 0, 2).columns))
