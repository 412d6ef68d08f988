import math
import unittest

import numpy as np
from scipy.linalg import expm

from pykc.kinetic import (Deterministic, DirectQuadrature, DysonHistory, Dyson, Endpoint, ExpEndpoint, Jump,
                          PathBatch, PathWeight, VelocityField, VelocityGrid, apply_collision, biased_collision_rhs,
                          biased_generator, build_kernel, estimate_f1_dyson, gain_row_integral, loss_rate,
                          loss_rate_quadrature, sample_dyson_histories, solve_rb_deterministic, solve_rb_jump_mc,
                          uniformized_exp)
from pykc.kinetic.deterministic import check_stability
from pykc.kinetic.dyson import mean_loss_rate
from pykc.kinetic.kernel import eigen_relation_error, gain_kernel, kernel_bound, mean_speed
from pykc.kinetic.paths import block_seeds
from pykc.phase_function import PhaseFunction, parse_expression
from pykc.scaling import StabilityError, UnsupportedBackendError


class TestVelocityGrid(unittest.TestCase):
    def test_maxwellian_mass(self):
        grid = VelocityGrid(6.0, 41, d=2)
        self.assertAlmostEqual(1 - grid.tail_mass(1.0), float(grid.integrate(grid.maxwellian(1.0))), places=8)

    def test_for_beta_radius(self):
        grid = VelocityGrid.for_beta(4.0, 8)
        self.assertAlmostEqual(math.sqrt(-2 * math.log(1e-10) / 4), grid.v_max)
        self.assertEqual(8 ** 3, grid.n)
        self.assertEqual((512, 3), grid.points.shape)

    def test_invalid_arguments(self):
        with self.assertRaises(ValueError):
            VelocityGrid(0.0, 8)
        with self.assertRaises(ValueError):
            VelocityGrid(1.0, 1)

    def test_equality(self):
        self.assertEqual(VelocityGrid(4.0, 8), VelocityGrid(4.0, 8))
        self.assertNotEqual(VelocityGrid(4.0, 8), VelocityGrid(4.0, 10))


class TestVelocityField(unittest.TestCase):
    def setUp(self):
        self.grid = VelocityGrid(6.0, 13)

    def test_forms(self):
        field = VelocityField.from_phase_function(parse_expression('(+ 1 v0)'), self.grid)
        density = field.to_form('density')
        np.testing.assert_allclose(field.values * self.grid.maxwellian(1.0), density.values)
        np.testing.assert_allclose(field.values, density.to_form('symmetric').to_form('function').values)
        with self.assertRaises(ValueError):
            field.to_form('measure')

    def test_mass_and_pairing(self):
        field = VelocityField.from_phase_function(parse_expression('(+ 1 v0)'), self.grid)
        self.assertAlmostEqual(1.0, field.mass(), places=6)
        self.assertAlmostEqual(1.0, field.pair_with(parse_expression('(^ v0 2)')), places=6)

    def test_fourier_modes(self):
        field = VelocityField.from_phase_function(parse_expression('(cos (* 2 pi x0))'), self.grid)
        self.assertFalse(field.is_homogeneous)
        np.testing.assert_allclose(np.ones(self.grid.n), field.spatial_values([0.0, 0.0, 0.0])[0], atol=1e-12)
        np.testing.assert_allclose(-np.ones(self.grid.n), field.spatial_values([0.5, 0.0, 0.0])[0], atol=1e-12)
        self.assertAlmostEqual(0.0, field.mass())
        self.assertAlmostEqual(0.5, field.pair_with(parse_expression('(cos (* 2 pi x0))')), places=6)


class TestLossRate(unittest.TestCase):
    def test_at_rest(self):
        self.assertAlmostEqual(2 * math.sqrt(2 * math.pi), float(loss_rate(np.zeros(3))))
        self.assertAlmostEqual(math.pi * mean_speed(1.0, 3), float(loss_rate(np.zeros(3))))

    def test_closed_form_against_quadrature(self):
        for speed in (0.0, 0.5, 2.0):
            v = np.array([speed, 0.0, 0.0])
            self.assertAlmostEqual(loss_rate_quadrature(speed), float(loss_rate(v)), places=7)

    def test_closed_form_against_quadrature_in_the_plane(self):
        for speed in (0.3, 1.5):
            v = np.array([speed, 0.0])
            self.assertAlmostEqual(loss_rate_quadrature(speed, d=2), float(loss_rate(v, d=2)), places=3)

    def test_increasing_in_speed(self):
        speeds = np.linspace(0, 5, 11)
        rates = loss_rate(np.stack([speeds, np.zeros(11), np.zeros(11)], axis=1))
        self.assertTrue(np.all(np.diff(rates) > 0))

    def test_temperature_scaling(self):
        v = np.array([1.0, 0.0, 0.0])
        self.assertAlmostEqual(float(loss_rate(v, beta=1.0)) / 2, float(loss_rate(v / 2, beta=4.0)))

    def test_unsupported_dimension(self):
        with self.assertRaises(ValueError):
            loss_rate(np.zeros(4), d=4)


class TestKernel(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.grid = VelocityGrid(4.0, 8)
        cls.kernel = build_kernel(cls.grid)

    def test_gain_kernel_symmetry(self):
        v, eta = np.array([0.3, -1.0, 0.2]), np.array([1.1, 0.4, -0.7])
        self.assertAlmostEqual(float(gain_kernel(v, eta)), float(gain_kernel(eta, v)))
        self.assertEqual(0.0, float(gain_kernel(v, v)))

    def test_matrix_symmetric_and_nonnegative(self):
        np.testing.assert_allclose(self.kernel.matrix, self.kernel.matrix.T, rtol=1e-12, atol=0)
        self.assertTrue(np.all(self.kernel.matrix >= 0))

    def test_generator_rows_sum_to_zero(self):
        generator = self.kernel.generator()
        np.testing.assert_allclose(np.zeros(self.grid.n), np.sum(generator, axis=1), atol=1e-9)
        off_diagonal = generator - np.diag(np.diag(generator))
        self.assertTrue(np.all(off_diagonal >= 0))

    def test_generator_conserves_mass(self):
        weights = self.grid.weights * self.grid.maxwellian(1.0)
        phi = self.grid.points[:, 0] + self.grid.norms2
        self.assertAlmostEqual(0.0, float(weights @ (self.kernel.generator() @ phi)), places=8)

    def test_d2_unsupported(self):
        with self.assertRaises(UnsupportedBackendError):
            build_kernel(VelocityGrid(4.0, 8, d=2))

    def test_eigen_relation(self):
        grid = VelocityGrid(5.0, 20)
        kernel = build_kernel(grid)
        self.assertLess(eigen_relation_error(kernel, grid.norms2 <= 1.5 ** 2), 1e-3)

    def test_row_integral_bound(self):
        speeds = np.linspace(1.0, 12.0, 45)
        v = speeds[:, None] * np.array([[0.6, 0.0, 0.8]])
        self.assertLess(float(np.max(gain_row_integral(v) / kernel_bound(v))), 0.2)
        outer = self.grid.norms2 >= 1
        rows = self.kernel.apply(np.ones(self.grid.n))[outer]
        self.assertTrue(np.all(rows <= kernel_bound(self.grid.points[outer])))


class TestCollision(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.grid = VelocityGrid(4.0, 8)
        cls.kernel = build_kernel(cls.grid)

    def test_uniformized_exp_matches_expm(self):
        rng = np.random.default_rng(3)
        generator = rng.random((5, 5))
        np.fill_diagonal(generator, 0.0)
        np.fill_diagonal(generator, -np.sum(generator, axis=1) - 0.2)
        values = rng.random(5)
        for t in (0.0, 0.3, 40.0):
            np.testing.assert_allclose(expm(t * generator) @ values, uniformized_exp(generator, values, t),
                                       rtol=1e-9, atol=1e-14)

    def test_uniformized_exp_keeps_positivity(self):
        generator = np.array([[-3.0, 3.0], [1.0, -1.0]])
        result = uniformized_exp(generator, np.array([0.0, 1.0]), 2.0)
        self.assertTrue(np.all(result >= 0))
        with self.assertRaises(ValueError):
            uniformized_exp(generator, np.ones(2), -1.0)

    def test_constant_is_a_fixed_point(self):
        ones = VelocityField(self.grid, np.ones(self.grid.n))
        np.testing.assert_allclose(np.zeros(self.grid.n), apply_collision(ones, self.kernel).values, atol=1e-9)
        density = apply_collision(ones.to_form('density'), self.kernel, form='density')
        np.testing.assert_allclose(np.zeros(self.grid.n), density.values, atol=1e-9)

    def test_form_mismatch(self):
        with self.assertRaises(ValueError):
            apply_collision(VelocityField(self.grid, np.ones(self.grid.n)), self.kernel, form='density')

    def test_unbiased_operator_is_the_generator(self):
        np.testing.assert_allclose(self.kernel.generator(), biased_generator(self.kernel, np.zeros(self.grid.n)),
                                   atol=1e-12)

    def test_constant_bias(self):
        field = VelocityField(self.grid, self.grid.points[:, 1])
        rhs = biased_collision_rhs(field, PhaseFunction.constant(0.7), self.kernel)
        np.testing.assert_allclose(apply_collision(field, self.kernel).values, rhs.values, atol=1e-9)

    def test_biased_generator_is_metzler(self):
        matrix = biased_generator(self.kernel, 0.2 * self.grid.points[:, 0])
        off_diagonal = matrix - np.diag(np.diag(matrix))
        self.assertTrue(np.all(off_diagonal >= 0))


class TestDirectQuadrature(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.grid = VelocityGrid(4.0, 10)
        cls.kernel = build_kernel(cls.grid)
        cls.quadrature = DirectQuadrature()
        cls.inner = cls.grid.norms2 <= 1.0
        cls.a = np.round(0.01 + 0.04 * np.random.default_rng(5).random(3), 6)
        cls.p = parse_expression('(+ (* {:.6f} v0) (+ (* {:.6f} v1) (* {:.6f} v2)))'.format(*cls.a))

    def test_constant_is_a_fixed_point(self):
        for v in self.grid.points[self.inner]:
            self.assertAlmostEqual(0.0, self.quadrature.collision(lambda w: np.ones(len(w)), v), places=10)

    def test_loss_matches_closed_form(self):
        v = self.grid.points[self.inner]
        np.testing.assert_allclose(loss_rate(v), [self.quadrature.loss(w) for w in v], rtol=2e-2)

    def test_biased_rhs_matches_kernel(self):
        field = VelocityField(self.grid, 1 + 0.5 * self.grid.points[:, 0])
        rhs = biased_collision_rhs(field, self.p, self.kernel).values[self.inner]
        expected = np.array([self.quadrature.biased(lambda w: 1 + 0.5 * w[:, 0], lambda w: w @ self.a, v)
                             for v in self.grid.points[self.inner]])
        np.testing.assert_allclose(expected, rhs, atol=0.1 * np.max(np.abs(expected)))

    def test_biased_exponential_is_minus_collision(self):
        exponential = np.exp(self.grid.points @ self.a)
        field = VelocityField(self.grid, exponential)
        np.testing.assert_allclose(-apply_collision(field, self.kernel).values,
                                   biased_collision_rhs(field, self.p, self.kernel).values, atol=1e-9)
        for v in self.grid.points[self.inner]:
            self.assertAlmostEqual(-self.quadrature.collision(lambda w: np.exp(w @ self.a), v),
                                   self.quadrature.biased(lambda w: np.exp(w @ self.a), lambda w: w @ self.a, v),
                                   places=9)

    def test_interpolated_field(self):
        quadrature = DirectQuadrature(partner_nodes=6, sphere_nodes=4)
        field = VelocityField(self.grid, self.grid.points[:, 0])
        values = apply_collision(field, self.kernel, quadrature=quadrature).values[self.inner]
        expected = [quadrature.collision(lambda w: w[:, 0], v) for v in self.grid.points[self.inner]]
        np.testing.assert_allclose(expected, values, atol=1e-3)
        self.assertEqual('DirectQuadrature', quadrature.to_json()['kind'])


class TestDeterministicSolver(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.grid = VelocityGrid(4.0, 8)
        cls.kernel = build_kernel(cls.grid)

    def test_stability_limit(self):
        with self.assertRaises(StabilityError):
            check_stability(self.kernel, 1.0)
        check_stability(self.kernel, 0.1 / float(np.max(self.kernel.loss)))

    def test_constant_stays_constant(self):
        trajectory = solve_rb_deterministic(parse_expression('1'), 0.05, self.grid, 0.002, kernel=self.kernel)
        np.testing.assert_allclose(np.ones(self.grid.n), trajectory.at(0.05).values, rtol=1e-10)

    def test_mass_conservation_and_maximum_principle(self):
        phi0 = parse_expression('(+ 1 v0)')
        trajectory = solve_rb_deterministic(phi0, [0.05, 0.1], self.grid, 0.002, kernel=self.kernel)
        self.assertEqual([0.05, 0.1], trajectory.times)
        initial = VelocityField.from_phase_function(phi0, self.grid)
        for _, field in trajectory:
            self.assertAlmostEqual(initial.mass(), field.mass(), places=9)
            self.assertLessEqual(np.max(field.values), np.max(initial.values) + 1e-9)
            self.assertGreaterEqual(np.min(field.values), np.min(initial.values) - 1e-9)

    def test_relaxation(self):
        phi0 = parse_expression('v0')
        trajectory = solve_rb_deterministic(phi0, [0.05, 0.1], self.grid, 0.002, kernel=self.kernel)
        momentum = [trajectory.pair_with(parse_expression('v0'), t) for t in trajectory.times]
        self.assertGreater(momentum[0], momentum[1])
        self.assertGreater(momentum[1], 0.0)

    def test_unknown_snapshot(self):
        trajectory = solve_rb_deterministic(parse_expression('1'), 0.05, self.grid, 0.002, kernel=self.kernel)
        with self.assertRaises(ValueError):
            trajectory.at(0.01)

    def test_exponential_endpoint_is_stationary(self):
        backend = Deterministic(self.grid, 0.002, kernel=self.kernel)
        h = parse_expression('(* 0.1 v0)')
        expected = float(self.grid.integrate(self.grid.maxwellian(1.0) * np.exp(0.1 * self.grid.points[:, 0])))
        estimate = backend.estimate(ExpEndpoint(h), parse_expression('1'), 0.1)
        self.assertAlmostEqual(expected, estimate.value, places=8)
        self.assertEqual(0.0, estimate.stderr)

    def test_endpoint_matches_solver(self):
        backend = Deterministic(self.grid, 0.002, kernel=self.kernel)
        phi0, h = parse_expression('v0'), parse_expression('v0')
        trajectory = solve_rb_deterministic(phi0, 0.1, self.grid, 0.002, kernel=self.kernel)
        self.assertAlmostEqual(trajectory.pair_with(h, 0.1), backend.estimate(h, phi0, 0.1).value)


class TestPathBatch(unittest.TestCase):
    def setUp(self):
        self.batch = PathBatch([[0.1, 0.1, 0.1]], [[0.0, 0.5, 1.0]], [[[0.2, 0.0, 0.0], [0.0, 0.4, 0.0]]])

    def test_endpoint(self):
        x, v = self.batch.endpoint()
        np.testing.assert_allclose([[0.2, 0.3, 0.1]], x)
        np.testing.assert_allclose([[0.0, 0.4, 0.0]], v)
        self.assertEqual(1.0, self.batch.t)
        self.assertEqual([1], self.batch.jump_counts.tolist())

    def test_integrate(self):
        np.testing.assert_allclose([0.1], self.batch.integrate(parse_expression('v0')))
        np.testing.assert_allclose([0.175], self.batch.integrate(parse_expression('x0')),
                                   rtol=1e-12)

    def test_from_jumps(self):
        batch = PathBatch.from_jumps(np.array([[0.1, 0.1, 0.1]]), [np.array([0.5])],
                                     [np.array([[0.2, 0.0, 0.0], [0.0, 0.4, 0.0]])], 1.0)
        np.testing.assert_allclose(self.batch.breaks, batch.breaks)
        np.testing.assert_allclose(self.batch.velocities, batch.velocities)

    def test_decreasing_breaks(self):
        with self.assertRaises(ValueError):
            PathBatch([[0.0, 0.0, 0.0]], [[0.0, 0.6, 0.5]], [[[1.0, 0, 0], [0, 1.0, 0]]])

    def test_functionals(self):
        self.assertAlmostEqual(0.4, float(Endpoint(parse_expression('v1')).evaluate(self.batch)[0]))
        self.assertAlmostEqual(math.exp(0.4), float(ExpEndpoint(parse_expression('v1')).evaluate(self.batch)[0]))
        weight = PathWeight(parse_expression('v1'))
        self.assertTrue(weight.theta.is_zero)
        self.assertAlmostEqual(math.exp(0.4), float(weight.evaluate(self.batch)[0]))

    def test_block_seeds(self):
        blocks = block_seeds(np.random.default_rng(1), 250, 100)
        self.assertEqual([100, 100, 50], [size for size, _ in blocks])
        again = block_seeds(np.random.default_rng(1), 250, 100)
        self.assertEqual(blocks[2][1].generate_state(2).tolist(), again[2][1].generate_state(2).tolist())


class TestJumpProcess(unittest.TestCase):
    def test_constant_observable_and_jump_rate(self):
        t = 0.2
        mass, jumps = solve_rb_jump_mc(parse_expression('1'), [parse_expression('1')], t, 2000,
                                       np.random.default_rng(5), block_size=500)
        self.assertAlmostEqual(1.0, mass.value)
        self.assertEqual('jumps', jumps.name)
        self.assertTrue(jumps.within(t * mean_loss_rate(1.0), sigmas=4.0))

    def test_backend_reproducible(self):
        phi0 = parse_expression('(+ 1 v0)')
        backend = Jump(300, block_size=100)
        first = backend.estimate(parse_expression('v0'), phi0, 0.1, np.random.default_rng(9))
        second = backend.estimate(parse_expression('v0'), phi0, 0.1, np.random.default_rng(9))
        self.assertEqual(first.value, second.value)
        self.assertEqual(300, first.n)

    def test_path_weight_of_constant(self):
        estimate = Jump(200).estimate(PathWeight(PhaseFunction.constant(0.0)), parse_expression('1'), 0.1,
                                      np.random.default_rng(2))
        self.assertAlmostEqual(1.0, estimate.value)


class TestDyson(unittest.TestCase):
    def test_zero_order_warns_about_truncation(self):
        with self.assertLogs('pykc.kinetic.dyson', 'WARNING'):
            estimate = estimate_f1_dyson(parse_expression('1'), parse_expression('1'), 0.1, 0, 100,
                                         np.random.default_rng(0))
        self.assertAlmostEqual(1.0, estimate.value)
        self.assertEqual([0], list(estimate.extra['per_order']))

    def test_mass_is_unbiased(self):
        estimate = Dyson(4000, k_max=6).estimate(parse_expression('1'), parse_expression('1'), 0.1,
                                                 np.random.default_rng(4))
        self.assertTrue(estimate.within(1.0, sigmas=5.0))
        self.assertEqual('dyson', estimate.extra['backend'])

    def test_invalid_arguments(self):
        rng = np.random.default_rng(0)
        h = parse_expression('1')
        with self.assertRaises(ValueError):
            estimate_f1_dyson(h, h, 2.0, 4, 100, rng)
        with self.assertRaises(ValueError):
            estimate_f1_dyson(h, h, 0.5, 13, 100, rng)
        with self.assertRaises(ValueError):
            estimate_f1_dyson(h, h, 0.5, 4, 1, rng)

    def test_histories(self):
        histories = sample_dyson_histories(20, 0.1, 4, np.random.default_rng(8))
        self.assertEqual(20, len(histories))
        for history in histories:
            self.assertLessEqual(history.k, 4)
            self.assertTrue(np.all(history.times > 0) and np.all(history.times < 0.1))
            self.assertTrue(np.all(np.diff(history.times) < 0))
            self.assertEqual('DysonHistory', history.to_json()['kind'])

    def test_history_validation(self):
        with self.assertRaises(ValueError):
            DysonHistory([0.1, 0.2], [1, -1], np.zeros((2, 3)), np.zeros((2, 3)), 1.0)
        with self.assertRaises(ValueError):
            DysonHistory([0.2, 0.1], [1, -1], np.zeros((2, 3)), np.zeros((2, 3)), math.inf)


class TestSolverTriangle(unittest.TestCase):
    def test_backends_agree_on_momentum(self):
        grid = VelocityGrid(4.0, 8)
        phi0, h, t = parse_expression('(+ 1 (* 0.5 v0))'), parse_expression('v0'), 0.1
        estimates = [Deterministic(grid, 0.002, kernel=build_kernel(grid)).estimate(h, phi0, t),
                     Jump(20000).estimate(h, phi0, t, np.random.default_rng(21)),
                     Dyson(20000, k_max=8).estimate(h, phi0, t, np.random.default_rng(22))]
        self.assertGreater(estimates[0].value, 0.2)
        self.assertLess(estimates[0].value, 0.45)
        for i, first in enumerate(estimates):
            for second in estimates[i + 1:]:
                tolerance = 5 * math.hypot(first.stderr, second.stderr) + 0.01
                self.assertLess(abs(first.value - second.value), tolerance)


if __name__ == '__main__':
    unittest.main()
