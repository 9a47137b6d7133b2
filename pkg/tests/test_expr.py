import math
import unittest

import numpy as np

from poisson_saturation import (
    ExpressionEvalError,
    ExpressionSyntaxError,
    UnknownIdentifierError,
    derive,
    evaluate,
    parse,
    to_text,
)

FIXTURE_EXPRESSIONS = [
    ('x*y - z^2', 3),
    ('sin(2*x)*cos(y)', 2),
    ('exp(-x^2)/(1 + y^2)', 2),
    ('x^(-2) + sqrt(y + 3)', 2),
    ('log(2 + x*x) - pi*z', 3),
    ('(x - 1)^3*theta', 4),
]


def central_difference(e, i, p, h=1e-5):
    step = np.zeros(len(p))
    step[i] = h
    return (e.eval(p + step) - e.eval(p - step)) / (2 * h)


class TestParse(unittest.TestCase):
    def test_named_variable(self):
        e = parse('sin(2*t)', 1, names=['t'])
        self.assertEqual(1, e.arity)
        self.assertAlmostEqual(math.sin(0.6), e.eval([0.3]), delta=1e-12)

    def test_aliases(self):
        e = parse('exp(x)*cos(y)', 2)
        self.assertAlmostEqual(math.e, evaluate(e, (1.0, 0.0)), delta=1e-12)
        self.assertAlmostEqual(math.e, parse('exp(x1)*cos(x2)', 2).eval((1.0, 0.0)), delta=1e-12)
        self.assertAlmostEqual(2.0, parse('u + v', 2, prefix='u').eval((1.5, 0.5)))

    def test_precedence(self):
        self.assertAlmostEqual(7.0, parse('1 + 2*3', 1).eval([0.0]))
        self.assertAlmostEqual(-4.0, parse('-2^2', 1).eval([0.0]))
        self.assertAlmostEqual(0.5, parse('1/2', 1).eval([0.0]))
        self.assertAlmostEqual(0.25, parse('x^(-2)', 1).eval([2.0]))
        self.assertAlmostEqual(math.pi + math.e, parse('pi + e', 1).eval([0.0]), delta=1e-15)

    def test_constant_arity(self):
        e = parse('1', 3)
        self.assertEqual(3, e.arity)
        self.assertEqual(1.0, e.eval([5.0, 6.0, 7.0]))
        with self.assertRaises(ValueError):
            e.eval([1.0])

    def test_syntax_errors(self):
        with self.assertRaises(ExpressionSyntaxError) as ctx:
            parse('x + * y', 2)
        self.assertEqual(4, ctx.exception.position)
        with self.assertRaises(ExpressionSyntaxError) as ctx:
            parse('sin(x', 1)
        self.assertEqual(5, ctx.exception.position)
        with self.assertRaises(ExpressionSyntaxError) as ctx:
            parse('x ^ 1.5', 1)
        self.assertEqual(4, ctx.exception.position)
        with self.assertRaises(ExpressionSyntaxError) as ctx:
            parse('x $ 2', 1)
        self.assertEqual(2, ctx.exception.position)

    def test_unknown_identifiers(self):
        with self.assertRaises(UnknownIdentifierError) as ctx:
            parse('2*tan(x)', 1)
        self.assertEqual(2, ctx.exception.position)
        with self.assertRaises(UnknownIdentifierError):
            parse('x3', 2)
        # unknown identifiers are still syntax errors
        with self.assertRaises(ExpressionSyntaxError):
            parse('w', 3)

    def test_non_finite(self):
        with self.assertRaises(ExpressionEvalError):
            parse('1/x', 1).eval([0.0])
        with self.assertRaises(ExpressionEvalError) as ctx:
            parse('log(x)', 1).eval([-1.0])
        self.assertEqual((-1.0,), ctx.exception.point)


class TestDerive(unittest.TestCase):
    def test_single(self):
        e = parse('sin(2*t)', 1, names=['t'])
        d = derive(e, 0)
        self.assertAlmostEqual(2 * math.cos(0.8), d.eval([0.4]), delta=1e-12)
        self.assertAlmostEqual(central_difference(e, 0, np.array([0.4])), d.eval([0.4]), delta=1e-8)

    def test_out_of_range(self):
        with self.assertRaises(ValueError):
            parse('x', 1).derive(1)

    def test_against_finite_differences(self):
        rng = np.random.default_rng(0)
        for text, arity in FIXTURE_EXPRESSIONS:
            e = parse(text, arity)
            grads = e.gradient()
            for p in rng.uniform(0.5, 1.5, size=(200, arity)):
                for i, g in enumerate(grads):
                    with self.subTest(text=text, i=i):
                        value = g.eval(p)
                        self.assertLessEqual(abs(value - central_difference(e, i, p)), 1e-6 * (1 + abs(value)))

    def test_zero(self):
        self.assertTrue(parse('y', 2).derive(0).is_zero)
        self.assertFalse(parse('y', 2).derive(1).is_zero)


class TestPrint(unittest.TestCase):
    def test_reparse(self):
        rng = np.random.default_rng(1)
        for text, arity in FIXTURE_EXPRESSIONS:
            e = parse(text, arity)
            again = parse(to_text(e), arity)
            for p in rng.uniform(0.5, 1.5, size=(20, arity)):
                with self.subTest(text=text):
                    self.assertAlmostEqual(e.eval(p), again.eval(p), delta=1e-15 * (1 + abs(e.eval(p))))

    def test_caret(self):
        self.assertNotIn('**', to_text(parse('x^3', 1)))
