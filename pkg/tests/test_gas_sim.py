import csv
import os
import tempfile
import unittest

import numpy as np

from pykc.gas_sim import (BACKGROUND, TAGGED, CollisionEvent, CollisionLog, SystemState, collision_graph,
                          cycle_census, evolve, evolve_with_snapshots, predict_collision, sample_initial_state,
                          tagged_collision_fraction, write_log_csv, write_state_csv)
from pykc.phase_function import PhaseFunction, parse_expression
from pykc.scaling import RunawayDynamicsError, SamplingError, ScalingConfig


def head_on_state() -> SystemState:
    cfg = ScalingConfig.from_mu(100, 0)
    return SystemState(cfg, [[0.3, 0.5, 0.5], [0.7, 0.5, 0.5]], [[1.0, 0, 0], [-1.0, 0, 0]], [TAGGED, BACKGROUND])


class TestDynamics(unittest.TestCase):
    def test_head_on_collision(self):
        state = head_on_state()
        final, log = evolve(state, 0.5)
        self.assertEqual(1, len(log))
        event = log.events[0]
        self.assertAlmostEqual(0.15, event.time)
        self.assertEqual((0, 1), event.pair)
        np.testing.assert_allclose([-1.0, 0, 0], final.velocities[0])
        np.testing.assert_allclose([1.0, 0, 0], final.velocities[1])
        np.testing.assert_allclose([0.1, 0.5, 0.5], final.positions[0], atol=1e-12)
        np.testing.assert_allclose([0.9, 0.5, 0.5], final.positions[1], atol=1e-12)
        self.assertAlmostEqual(0.5, final.time)
        # the input state is left untouched
        np.testing.assert_allclose([1.0, 0, 0], state.velocities[0])

    def test_recollision_through_the_torus(self):
        _, log = evolve(head_on_state(), 0.6)
        self.assertEqual(2, len(log))
        self.assertAlmostEqual(0.55, log.events[1].time)

    def test_predict_collision(self):
        state = head_on_state()
        p, q = state.particle(0), state.particle(1)
        t, omega = predict_collision(p, q, 1.0, state.cfg.epsilon)
        self.assertAlmostEqual(0.15, t)
        np.testing.assert_allclose([-1.0, 0, 0], omega, atol=1e-12)
        self.assertIsNone(predict_collision(p, q, 0.1, state.cfg.epsilon))

    def test_parallel_motion_never_collides(self):
        cfg = ScalingConfig.from_mu(100, 0)
        state = SystemState(cfg, [[0.3, 0.5, 0.5], [0.7, 0.5, 0.5]], [[0.0, 1.0, 0], [0.0, 1.0, 0]], [0, 0])
        _, log = evolve(state, 2.0)
        self.assertEqual(0, len(log))

    def test_event_budget(self):
        with self.assertRaises(RunawayDynamicsError):
            evolve(head_on_state(), 0.5, max_events=0)

    def test_final_time_must_advance(self):
        with self.assertRaises(ValueError):
            evolve(head_on_state(), 0.0)

    def test_conservation_and_admissibility(self):
        cfg = ScalingConfig.from_mu(20, 5, d=2)
        state = sample_initial_state(cfg, PhaseFunction.constant(1, 2), np.random.default_rng(11), seed=11)
        final, log = evolve(state, 0.5)
        self.assertGreater(len(log), 0)
        np.testing.assert_allclose(state.momentum(), final.momentum(), atol=1e-9)
        self.assertAlmostEqual(state.energy(), final.energy(), places=9)
        self.assertGreater(final.min_separation(), cfg.epsilon - 1e-9)
        self.assertEqual(state.n, final.n)

    def test_reproducible(self):
        cfg = ScalingConfig.from_mu(20, 5, d=2)
        logs = []
        for _ in range(2):
            state = sample_initial_state(cfg, PhaseFunction.constant(1, 2), np.random.default_rng(5), seed=5)
            logs.append(evolve(state, 0.3)[1])
        self.assertEqual(logs[0], logs[1])

    def test_snapshots(self):
        snapshots, log = evolve_with_snapshots(head_on_state(), [0.0, 0.1, 0.2, 0.5])
        self.assertEqual([0.0, 0.1, 0.2, 0.5], [s.time for s in snapshots])
        self.assertEqual(1, len(log))
        np.testing.assert_allclose([1.0, 0, 0], snapshots[1].velocities[0])
        np.testing.assert_allclose([-1.0, 0, 0], snapshots[2].velocities[0])


class TestSampling(unittest.TestCase):
    def test_exclusion(self):
        cfg = ScalingConfig.from_mu(20, 5, d=2)
        state = sample_initial_state(cfg, PhaseFunction.constant(1, 2), np.random.default_rng(0), seed=0)
        self.assertTrue(state.is_admissible())
        self.assertEqual(0, state.time)
        self.assertEqual(0, state.seed)

    def test_poisson_counts_without_exclusion(self):
        cfg = ScalingConfig.from_mu(100, 10)
        rng = np.random.default_rng(2)
        phi0 = parse_expression('(* 2 (ind v0))', bound=2.0)
        counts, tagged = [], []
        for _ in range(400):
            state = sample_initial_state(cfg, phi0, rng, exclusion=False)
            counts.append(state.n - state.n_tagged)
            tagged.append(state.n_tagged)
            self.assertTrue(np.all(state.velocities[state.tags == TAGGED][:, 0] > 0))
        self.assertAlmostEqual(100, np.mean(counts), delta=3 * np.sqrt(100 / 400))
        # lambda * integral of M phi0 = 10 * 2 * 1/2
        self.assertAlmostEqual(10, np.mean(tagged), delta=3 * np.sqrt(10 / 400))

    def test_rejection_budget(self):
        # about 21 expected overlaps per configuration in d = 3
        cfg = ScalingConfig.from_mu(100, 10)
        with self.assertRaises(SamplingError):
            sample_initial_state(cfg, PhaseFunction.constant(1), np.random.default_rng(0), max_rejections=3)

    def test_sequential_fallback(self):
        cfg = ScalingConfig.from_mu(100, 10)
        with self.assertLogs('pykc.gas_sim.sampling', level='WARNING'):
            state = sample_initial_state(cfg, PhaseFunction.constant(1), np.random.default_rng(0), sequential=True)
        self.assertTrue(state.is_admissible())

    def test_negative_phi0(self):
        cfg = ScalingConfig.from_mu(100, 10)
        with self.assertRaises(ValueError):
            sample_initial_state(cfg, parse_expression('(- 0 1)', bound=1.0), np.random.default_rng(0),
                                 exclusion=False)


def _event(time, a, b, d=3):
    zero = np.zeros(d)
    return CollisionEvent(time, (a, b), np.eye(d)[0], (zero, zero), (zero, zero))


class TestCollisionGraph(unittest.TestCase):
    def setUp(self):
        self.log = CollisionLog(np.array([TAGGED, TAGGED, BACKGROUND, BACKGROUND]))
        for time, a, b in ((0.1, 0, 1), (0.2, 1, 2), (0.3, 0, 2), (0.4, 0, 1)):
            self.log.append(_event(time, a, b))

    def test_graph(self):
        graph = collision_graph(self.log)
        self.assertEqual([[0, 1, 2], [3]], graph.components)
        self.assertEqual([(0, 1), (1, 2), (0, 2)], graph.edges)
        self.assertEqual([0.4], [e.time for e in graph.recollisions])
        self.assertEqual([0.3, 0.4], [e.time for e in graph.cycle_closing])

    def test_graph_up_to_time(self):
        graph = collision_graph(self.log, upto=0.25)
        self.assertEqual([(0, 1), (1, 2)], graph.edges)
        self.assertEqual([], graph.cycle_closing)
        with self.assertRaises(ValueError):
            collision_graph(self.log, upto=1.0)

    def test_cycle_census(self):
        census = cycle_census(self.log)
        self.assertEqual(2, census['cycle_count'])
        self.assertEqual(0.3, census['first_cycle_time'])
        self.assertEqual([True, True], census['tagged_involvement'])

    def test_tagged_collision_fraction(self):
        self.assertEqual((2, 4), tagged_collision_fraction(self.log))

    def test_log_rejects_unordered_events(self):
        with self.assertRaises(ValueError):
            self.log.append(_event(0.05, 2, 3))


class TestExport(unittest.TestCase):
    def test_log_and_state_csv(self):
        state = head_on_state()
        _, log = evolve(state, 0.5)
        with tempfile.TemporaryDirectory() as directory:
            path = os.path.join(directory, 'log.csv')
            write_log_csv(path, log, state.cfg, seed=7)
            with open(path, newline='') as file:
                rows = list(csv.reader(file))
            self.assertEqual('# d=3', rows[0][0])
            self.assertEqual('seed=7', rows[0][-1])
            self.assertEqual(['t', 'pair_a', 'pair_b', 'omega_0', 'omega_1', 'omega_2'], rows[1][:6])
            self.assertEqual(3, len(rows))
            self.assertAlmostEqual(0.15, float(rows[2][0]))

            path = os.path.join(directory, 'state.csv')
            write_state_csv(path, state)
            with open(path, newline='') as file:
                rows = list(csv.reader(file))
            self.assertEqual(['id', 'tag', 'x_0', 'x_1', 'x_2', 'v_0', 'v_1', 'v_2'], rows[1])
            self.assertEqual(['0', '1', '0.3', '0.5', '0.5', '1.0', '0.0', '0.0'], rows[2])
