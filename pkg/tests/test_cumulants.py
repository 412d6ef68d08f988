import math
import unittest
from fractions import Fraction

import numpy as np

from pykc.cumulants import (CorrelationFamily, CumulantFamily, SetPartition, ToyModel, correlations_from_cumulants,
                            cumulants_from_correlations, enumerate_partitions, exclusion_cumulant, partition_count,
                            verify_cgf_identity)
from pykc.phase_function import parse_expression
from pykc.scaling import EnumerationError


class TestPartitions(unittest.TestCase):
    def test_restricted_growth_order(self):
        self.assertEqual([SetPartition([[1, 2, 3]]),
                          SetPartition([[1, 2], [3]]),
                          SetPartition([[1, 3], [2]]),
                          SetPartition([[1], [2, 3]]),
                          SetPartition([[1], [2], [3]])], enumerate_partitions(3))

    def test_bell_numbers(self):
        self.assertEqual(15, len(enumerate_partitions(4)))
        self.assertEqual(52, len(set(enumerate_partitions(5))))
        self.assertEqual(4213597, partition_count(12))

    def test_order_limits(self):
        for n in (0, 13):
            with self.subTest(n=n):
                with self.assertRaises(ValueError):
                    enumerate_partitions(n)


class TestMoebiusInversion(unittest.TestCase):
    def test_factorized_correlations_have_no_cumulants(self):
        g = cumulants_from_correlations(CorrelationFamily(5, {n: 1 for n in range(1, 6)}, exchangeable=True))
        self.assertEqual({1: 1, 2: 0, 3: 0, 4: 0, 5: 0}, g.values)

    def test_exact_fractions(self):
        G = CorrelationFamily(3, {1: Fraction(1, 2), 2: Fraction(1, 3), 3: Fraction(1, 4)}, exchangeable=True)
        g = cumulants_from_correlations(G)
        self.assertEqual(Fraction(1, 12), g[2])
        # G3 - 3 G2 G1 + 2 G1^3
        self.assertEqual(Fraction(1, 4) - 3 * Fraction(1, 3) * Fraction(1, 2) + 2 * Fraction(1, 8), g[3])

    def test_inverse_in_general_mode(self):
        rng = np.random.default_rng(0)
        values = {}
        for mask in range(1, 16):
            values[frozenset(i + 1 for i in range(4) if mask >> i & 1)] = float(rng.random())
        G = CorrelationFamily(4, values)
        back = correlations_from_cumulants(cumulants_from_correlations(G))
        for subset, value in values.items():
            self.assertAlmostEqual(value, back.value(subset), places=12)

    def test_exchangeable_mode_matches_general_mode(self):
        G = CorrelationFamily(6, {n: 1.0 + 0.1 * n ** 2 for n in range(1, 7)}, exchangeable=True)
        exchangeable = cumulants_from_correlations(G)
        general = cumulants_from_correlations(G.to_general())
        self.assertAlmostEqual(exchangeable[6], general[6], places=9)
        self.assertAlmostEqual(exchangeable[4], general.value({2, 3, 5, 6}), places=9)

    def test_missing_lower_order_value(self):
        with self.assertRaises(ValueError):
            cumulants_from_correlations(CorrelationFamily(2, {frozenset({1}): 1.0, frozenset({1, 2}): 1.0}))

    def test_to_json(self):
        g = CumulantFamily(2, {1: Fraction(1, 2), 2: 0}, exchangeable=True)
        self.assertEqual({'kind': 'CumulantFamily', 'order': 2, 'exchangeable': True,
                          'values': {'1': '1/2', '2': '0'}}, g.to_json())


class TestExclusionCumulant(unittest.TestCase):
    def test_pairs(self):
        self.assertEqual(0.0, exclusion_cumulant([np.array([0.1, 0.1, 0.1]), np.array([0.6, 0.6, 0.6])], 0.1))
        self.assertEqual(-1.0, exclusion_cumulant([np.array([0.1, 0.1, 0.1]), np.array([0.15, 0.1, 0.1])], 0.1))

    def test_overlap_across_the_boundary(self):
        self.assertEqual(-1.0, exclusion_cumulant([np.array([0.01, 0.5, 0.5]), np.array([0.98, 0.5, 0.5])], 0.1))

    def test_disconnected_overlap_graph(self):
        positions = [np.array([0.1, 0.1, 0.1]), np.array([0.15, 0.1, 0.1]), np.array([0.6, 0.6, 0.6])]
        self.assertEqual(0.0, exclusion_cumulant(positions, 0.1))

    def test_chain(self):
        positions = [np.array([0.1, 0.5, 0.5]), np.array([0.18, 0.5, 0.5]), np.array([0.26, 0.5, 0.5])]
        self.assertEqual(1.0, exclusion_cumulant(positions, 0.1))

    def test_size_limits(self):
        with self.assertRaises(ValueError):
            exclusion_cumulant([np.zeros(3)], 0.1)


class TestToyModel(unittest.TestCase):
    def setUp(self):
        self.atoms = [(np.array([0.2, 0.2, 0.2]), np.array([1.0, 0.0, 0.0]), 1),
                      (np.array([0.7, 0.7, 0.7]), np.array([-0.5, 0.5, 0.0]), 0)]
        self.H = parse_expression('(+ (* 0.3 v0) (* 0.2 tag))')

    def test_poisson_process_has_first_order_cumulant_only(self):
        model = ToyModel.poisson_clusters(self.atoms[:1], [(0.4, [1])])
        self.assertAlmostEqual(0.4, model.cumulant((0,)), places=12)
        self.assertAlmostEqual(0.0, model.cumulant((0, 0)), places=12)
        self.assertLess(verify_cgf_identity(model, self.H), 1e-10)

    def test_cluster_process(self):
        model = ToyModel.poisson_clusters(self.atoms, [(0.3, [1, 0]), (0.2, [1, 1])])
        self.assertEqual(2, model.expansion_order)
        direct = 0.3 * math.expm1(0.5) + 0.2 * math.expm1(0.5 - 0.15)
        values = [0.5, -0.15]
        self.assertAlmostEqual(direct, model.log_laplace(values), places=10)
        self.assertLess(verify_cgf_identity(model, self.H), 1e-9)

    def test_truncated_expansion_differs(self):
        model = ToyModel.poisson_clusters(self.atoms, [(0.3, [2, 0])])
        self.assertGreater(verify_cgf_identity(model, self.H, order=1), 1e-3)
        self.assertLess(verify_cgf_identity(model, self.H), 1e-9)

    def test_single_atom(self):
        model = ToyModel(self.atoms[:1], [(0.5, [0]), (0.5, [1])])
        self.assertIsNone(model.expansion_order)
        self.assertAlmostEqual(math.log(0.5 + 0.5 * math.exp(0.5)), model.log_laplace([0.5]), places=14)
        self.assertLess(verify_cgf_identity(model, self.H), 1e-12)
        self.assertGreater(verify_cgf_identity(model, self.H, order=1), 1e-3)

    def test_correlated_atoms(self):
        model = ToyModel(self.atoms, [(0.3, [0, 0]), (0.3, [1, 1]), (0.4, [1, 0])])
        self.assertLess(verify_cgf_identity(model, self.H), 1e-10)
        self.assertLess(verify_cgf_identity(model, parse_expression('0.3')), 1e-10)

    def test_zero_observable(self):
        model = ToyModel(self.atoms, [(0.3, [0, 0]), (0.3, [1, 1]), (0.4, [1, 0])])
        self.assertAlmostEqual(0.0, verify_cgf_identity(model, parse_expression('0')), places=15)

    def test_orders_match_partition_cumulants(self):
        model = ToyModel(self.atoms, [(0.3, [0, 0]), (0.3, [1, 1]), (0.4, [1, 0])])
        w = np.array([0.4, -0.2])
        terms = model.cumulant_orders(w, 2)
        self.assertAlmostEqual(model.cumulant((0,)) * w[0] + model.cumulant((1,)) * w[1], terms[0], places=14)
        second = 0.5 * (model.cumulant((0, 0)) * w[0] ** 2 + 2 * model.cumulant((0, 1)) * w[0] * w[1]
                        + model.cumulant((1, 1)) * w[1] ** 2)
        self.assertAlmostEqual(second, terms[1], places=14)

    def test_divergent_expansion(self):
        model = ToyModel(self.atoms[:1], [(0.5, [0]), (0.5, [1])])
        with self.assertRaises(EnumerationError):
            verify_cgf_identity(model, parse_expression('2'))

    def test_enumeration_limits(self):
        with self.assertRaises(EnumerationError):
            ToyModel([self.atoms[0]] * 7, [(1.0, [0] * 7)])
        with self.assertRaises(EnumerationError):
            verify_cgf_identity(object(), self.H)
        with self.assertRaises(ValueError):
            ToyModel(self.atoms, [(1.0, [0, 0])], expansion_order=0)
