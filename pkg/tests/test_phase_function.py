import math
import pickle
import unittest

import numpy as np

from pykc.phase_function import PhaseFunction, parse_expression, parse_expression_list
from pykc.scaling import GrowthClassError


class TestParseExpression(unittest.TestCase):
    def test_arithmetic(self):
        h = parse_expression('(+ 1 (* 2 v0) (^ v1 2))')
        self.assertAlmostEqual(1 + 2 * 0.5 + 9, float(h.evaluate(0.0, np.zeros(3), np.array([0.5, 3.0, 0.0]))))

    def test_name_defaults_to_text(self):
        self.assertEqual('(* 2 v0)', parse_expression(' (* 2 v0) ').name)

    def test_gauss_and_norm2(self):
        h = parse_expression('(* (norm2) (gauss 0.5))')
        v = np.array([1.0, 1.0, 0.0])
        self.assertAlmostEqual(2 * math.exp(-1.0), float(h.evaluate(0.0, np.zeros(3), v)))

    def test_indicator(self):
        h = parse_expression('(ind (- v0 1))')
        values = h.evaluate(0.0, np.zeros((2, 3)), np.array([[2.0, 0, 0], [0.5, 0, 0]]))
        np.testing.assert_allclose([1.0, 0.0], values)

    def test_vectorized_shape(self):
        h = parse_expression('(cos (* 2 pi x0))')
        values = h.evaluate(0.0, np.zeros((4, 5, 3)), np.zeros((4, 5, 3)))
        self.assertEqual((4, 5), values.shape)
        np.testing.assert_allclose(np.ones((4, 5)), values)

    def test_constant_broadcasts(self):
        np.testing.assert_allclose(np.full(7, 2.5), PhaseFunction.constant(2.5).evaluate(0.0, np.zeros((7, 3)),
                                                                                        np.zeros((7, 3))))

    def test_list(self):
        names = [h.name for h in parse_expression_list('v0; (norm2) ;')]
        self.assertEqual(['v0', '(norm2)'], names)

    def test_errors(self):
        for text in ('', '(+ 1 2', ')', '(foo 1)', '(/ 1)', 'v3', 'y0', '(+ 1 2) 3'):
            with self.subTest(text=text):
                with self.assertRaises(ValueError):
                    parse_expression(text)

    def test_two_dimensional_coordinates(self):
        with self.assertRaises(ValueError):
            parse_expression('v2', d=2)
        self.assertEqual(2, parse_expression('v1', d=2).d)


class TestPhaseFunction(unittest.TestCase):
    def test_homogeneity(self):
        self.assertTrue(parse_expression('(* v0 t)').is_homogeneous)
        self.assertFalse(parse_expression('(sin x1)').is_homogeneous)
        self.assertTrue(parse_expression('(* v0 t)').is_time_dependent)

    def test_transport_derivative(self):
        h = parse_expression('(+ (* t v1) (sin (* 2 pi x0)))')
        x, v = np.array([0.1, 0.2, 0.3]), np.array([0.7, -0.4, 1.1])
        forward = h.transport_derivative(1).evaluate(0.5, x, v)
        backward = h.transport_derivative(-1).evaluate(0.5, x, v)
        gradient = 2 * math.pi * math.cos(2 * math.pi * 0.1) * 0.7
        self.assertAlmostEqual(-0.4 + gradient, float(forward))
        self.assertAlmostEqual(-0.4 - gradient, float(backward))

    def test_transport_derivative_of_static_homogeneous_observable_vanishes(self):
        self.assertTrue(parse_expression('(norm2)').transport_derivative(-1).is_zero)

    def test_algebra_tracks_bounds(self):
        g = parse_expression('(cos x0)', bound=1.0)
        h = parse_expression('(sin v0)', bound=1.0)
        self.assertEqual(2.0, (g + h).bound)
        self.assertEqual(1.0, (g * h).bound)
        self.assertEqual(3.0, (g * 3).bound)
        self.assertIsNone((g + parse_expression('v0')).bound)

    def test_rejects_mixed_dimensions(self):
        with self.assertRaises(ValueError):
            parse_expression('v0', d=2) + parse_expression('v0', d=3)

    def test_verify_bound(self):
        observed = parse_expression('(cos (* 2 pi x0))', bound=1.0).verify_bound(n=1024)
        self.assertLessEqual(observed, 1.0)
        with self.assertRaises(GrowthClassError):
            parse_expression('v0', bound=1.0).verify_bound(n=1024)

    def test_verify_bound_with_growth(self):
        parse_expression('(norm2)', bound=1.0, growth=0.5).verify_bound(n=1024)

    def test_verify_bound_requires_a_declared_bound(self):
        with self.assertRaises(GrowthClassError):
            parse_expression('v0').verify_bound(n=16)

    def test_exp_and_at_time(self):
        h = parse_expression('(* t v0)', bound=2.0)
        self.assertAlmostEqual(math.exp(1.5), float(h.exp().evaluate(1.0, np.zeros(3), np.array([1.5, 0, 0]))))
        self.assertFalse(h.at_time(2.0).is_time_dependent)

    def test_pickles_after_evaluation(self):
        h = parse_expression('(* 2 v0)')
        h.evaluate(0.0, np.zeros(3), np.ones(3))
        copy = pickle.loads(pickle.dumps(h))
        self.assertAlmostEqual(2.0, float(copy.evaluate(0.0, np.zeros(3), np.ones(3))))

    def test_to_json(self):
        self.assertEqual({'kind': 'PhaseFunction', 'expression': '2*v0', 'bound': 4.0, 'growth': 0.0},
                         parse_expression('(* 2 v0)', bound=4.0).to_json())
