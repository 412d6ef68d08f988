import csv
import json
import os
import tempfile
import unittest
from datetime import timedelta
from unittest import mock

from pykc.experiments import (And, Duration, ExperimentConfig, ExperimentRunner, FarmProgress, Or, Replicas,
                              RunManifest, aggregate, read_manifest, resolve_workers, validate_config,
                              write_aggregate_csv)
from pykc.experiments.stop_conditions import duration_str
from pykc.scaling import ConfigError, FarmStoppedError, SchemaMismatchError

SMALL_PLANAR = """
# tiny planar mixture
seed = 7
replicas = 3
scaling.d = 2
scaling.mu = 20
scaling.lambda = 5
phi0.bound = 1
observables = v0; (norm2)
"""

SMALL_KINETIC = """
# coarse velocity grid in d = 3
seed = 3
replicas = 2
phi0.bound = 1
observables = v0
candidates = (* 0.1 v0)
solver.t = 0.02
solver.grid_m = 6
solver.v_max_tail = 1e-4
solver.n_samples = 200
"""


def planar_config(experiment: str, extra: str = '') -> ExperimentConfig:
    return ExperimentConfig.from_text(f'experiment = {experiment}\n' + SMALL_PLANAR + extra)


def kinetic_config(experiment: str, extra: str = '') -> ExperimentConfig:
    return ExperimentConfig.from_text(f'experiment = {experiment}\n' + SMALL_KINETIC + extra)


def read_rows(path: str):
    with open(path, newline='') as file:
        return list(csv.DictReader(file))


def read_estimates(path: str):
    with open(path) as file:
        return [json.loads(line) for line in file if line.strip()]


class TestExperimentConfig(unittest.TestCase):
    def test_defaults(self):
        cfg = ExperimentConfig.from_text('experiment = sample')
        self.assertEqual('sample', cfg.experiment)
        self.assertEqual(0, cfg.seed)
        self.assertEqual('jump', cfg['solver.backend'])
        self.assertEqual(['deterministic'], cfg['solver.backends'])
        self.assertTrue(cfg['sampling.exclusion'])
        self.assertAlmostEqual(0.1, cfg.scaling.epsilon)
        self.assertAlmostEqual(100 ** 0.6, cfg.scaling.lam)
        self.assertEqual(['v0'], [h.name for h in cfg.observables])

    def test_comments_and_sweeps(self):
        cfg = ExperimentConfig.from_text('experiment = lln  # sweep\nscaling.mu = 100; 400\n\nscaling.lambda = 10\n')
        self.assertEqual([100.0, 400.0], [s.mu for s in cfg.scalings])
        self.assertAlmostEqual(0.05, cfg.scalings[1].epsilon)

    def test_missing_experiment(self):
        with self.assertRaises(ConfigError) as context:
            ExperimentConfig.from_text('seed = 1')
        self.assertEqual('experiment', context.exception.field)

    def test_unknown_key(self):
        with self.assertRaises(ConfigError) as context:
            ExperimentConfig.from_text('experiment = sample\nreplica = 3')
        self.assertEqual('line 2: replica: unknown key', context.exception.message)

    def test_duplicate_key(self):
        with self.assertRaises(ConfigError) as context:
            ExperimentConfig.from_text('experiment = sample\nseed = 1\nseed = 2')
        self.assertEqual(3, context.exception.line)

    def test_invalid_value(self):
        with self.assertRaises(ConfigError) as context:
            ExperimentConfig.from_text('experiment = sample\nseed = x')
        self.assertEqual('seed', context.exception.field)
        self.assertEqual(2, context.exception.line)
        self.assertEqual(2, context.exception.exit_code)

    def test_missing_equals(self):
        with self.assertRaises(ConfigError) as context:
            ExperimentConfig.from_text('experiment = sample\nseed')
        self.assertEqual(2, context.exception.line)

    def test_scaling_violation(self):
        with self.assertRaises(ConfigError) as context:
            ExperimentConfig.from_text('experiment = sample\nscaling.mu = 20\nscaling.epsilon = 0.2')
        self.assertEqual('scaling.epsilon', context.exception.field)

    def test_semantic_violations(self):
        for text in ('experiment = nothing', 'experiment = sample\nreplicas = 0',
                     'experiment = sample\nsolver.backend = exact', 'experiment = sample\nhj.transport_sign = 2',
                     'experiment = sample\nobservables = (foo v0)'):
            with self.assertRaises(ConfigError):
                ExperimentConfig.from_text(text)

    def test_lenient_collects_errors(self):
        cfg = ExperimentConfig({'experiment': 'sample', 'seed': 'x', 'replicas': '0'}, strict=False)
        self.assertEqual(['seed', 'replicas'], [e.field for e in cfg.errors])

    def test_with_values_and_hash(self):
        cfg = ExperimentConfig.from_text('experiment = sample')
        same = ExperimentConfig.from_text('experiment = sample\n')
        self.assertEqual(cfg.hash(), same.hash())
        changed = cfg.with_values({'seed': 3})
        self.assertEqual(3, changed.seed)
        self.assertEqual(0, cfg.seed)
        self.assertNotEqual(cfg.hash(), changed.hash())
        self.assertEqual('3', changed.to_json()['seed'])

    def test_unknown_item(self):
        with self.assertRaises(KeyError):
            ExperimentConfig.from_text('experiment = sample')['solver.nothing']

    def test_planar_kernel_experiments(self):
        for experiment in ('solve-pde', 'bhj', 'rate'):
            with self.assertRaises(ConfigError) as context:
                planar_config(experiment)
            self.assertEqual('scaling.d', context.exception.field)

    def test_planar_deterministic_backend(self):
        with self.assertRaises(ConfigError) as context:
            planar_config('lln', 'solver.backend = deterministic\n')
        self.assertEqual('solver.backend', context.exception.field)
        self.assertEqual('dyson', planar_config('fluct', 'solver.backend = dyson\n')['solver.backend'])


class TestValidateConfig(unittest.TestCase):
    def setUp(self):
        self.directory = tempfile.TemporaryDirectory()

    def tearDown(self):
        self.directory.cleanup()

    def write(self, text: str) -> str:
        path = os.path.join(self.directory.name, 'run.cfg')
        with open(path, 'w') as file:
            file.write(text)
        return path

    def test_valid(self):
        report = validate_config(self.write('experiment = rate\ncandidates = v0\ncandidates.bound = 2\n'
                                            'phi0.bound = 1\n'))
        self.assertTrue(report.ok)
        self.assertIn('candidates[0]', report.checks)
        self.assertEqual(1.0, report.checks['phi0'])
        self.assertTrue(report.to_json()['ok'])

    def test_collects_every_error(self):
        report = validate_config(self.write('experiment = sample\nseed = x\nreplica = 2\n'))
        self.assertFalse(report.ok)
        self.assertEqual(['replica', 'seed'], report.fields())
        self.assertEqual(3, report.to_json()['errors'][0]['line'])

    def test_growth_class_violations(self):
        report = validate_config(self.write('experiment = rate\ncandidates = v0\ncandidates.bound = 0.5\n'
                                            'phi0 = (* 2 v0)\nphi0.bound = 1\n'))
        self.assertEqual(['candidates', 'phi0'], report.fields())


class TestStopConditions(unittest.TestCase):
    def test_replicas(self):
        progress = FarmProgress(4)
        condition = Replicas(2)
        self.assertFalse(condition.stop(progress))
        progress.record()
        self.assertEqual(0.5, condition.progress(progress))
        progress.record()
        self.assertTrue(condition.stop(progress))
        with self.assertRaises(ValueError):
            Replicas(0)

    def test_duration(self):
        progress = FarmProgress(1)
        self.assertTrue(Duration(timedelta(0)).stop(progress))
        self.assertFalse(Duration(timedelta(hours=1)).stop(progress))
        self.assertEqual({'kind': 'Duration', 'duration': '0:00:01.500000'},
                         Duration(timedelta(seconds=1.5)).to_json())
        self.assertEqual('1:01:01.000000', duration_str(timedelta(hours=1, minutes=1, seconds=1)))

    def test_combinations(self):
        progress = FarmProgress(3)
        progress.record(2)
        self.assertTrue(Or(Replicas(2), Duration(timedelta(hours=1))).stop(progress))
        self.assertFalse(And(Replicas(2), Duration(timedelta(hours=1))).stop(progress))
        self.assertEqual(1.0, Or(Replicas(2), Replicas(4)).progress(progress))
        self.assertEqual(0.5, And(Replicas(2), Replicas(4)).progress(progress))


class TestManifest(unittest.TestCase):
    def test_verify_and_status(self):
        with tempfile.TemporaryDirectory() as directory:
            path = os.path.join(directory, 'table.csv')
            with open(path, 'w') as file:
                file.write('a\n1\n')
            manifest = RunManifest('sample', 'hash', {'experiment': 'sample'}, [1, 2])
            manifest.record_output(path)
            self.assertEqual([], manifest.verify())
            self.assertTrue(manifest.partial)
            manifest.record_finished()
            self.assertFalse(manifest.partial)
            with open(path, 'a') as file:
                file.write('2\n')
            self.assertEqual([path], manifest.verify())
            manifest.write(os.path.join(directory, 'manifest.json'))
            written = read_manifest(os.path.join(directory, 'manifest.json'))
            self.assertEqual([1, 2], written['seeds'])
            self.assertFalse(written['partial'])
            self.assertRegex(written['wall_clock'], r'^\d+:\d{2}:\d{2}\.\d{6}$')

    def test_error_keeps_partial(self):
        manifest = RunManifest('sample', 'hash', {}, [])
        manifest.record_error(FarmStoppedError('stopped', 1))
        manifest.record_finished()
        self.assertTrue(manifest.partial)
        self.assertEqual({'kind': 'FarmStoppedError', 'message': 'stopped'}, manifest.error)


class TestResolveWorkers(unittest.TestCase):
    def test_requested(self):
        with mock.patch.dict(os.environ, {}, clear=True):
            self.assertEqual(1, resolve_workers())
            self.assertEqual(4, resolve_workers(4))

    def test_environment_override(self):
        with mock.patch.dict(os.environ, {'KC_WORKERS': '3'}):
            self.assertEqual(3, resolve_workers(1))
        with mock.patch.dict(os.environ, {'KC_WORKERS': 'many'}):
            with self.assertRaises(ValueError):
                resolve_workers()


class TestRunner(unittest.TestCase):
    def setUp(self):
        self.directory = tempfile.TemporaryDirectory()
        self.environment = mock.patch.dict(os.environ)
        self.environment.start()
        os.environ.pop('KC_WORKERS', None)

    def tearDown(self):
        self.environment.stop()
        self.directory.cleanup()

    def runner(self, name: str = 'out') -> ExperimentRunner:
        return ExperimentRunner().verbosity(0).out_dir(os.path.join(self.directory.name, name))

    def out(self, name: str) -> str:
        return os.path.join(self.directory.name, 'out', name)

    def test_sample(self):
        manifest = self.runner().run(planar_config('sample'))
        out = os.path.join(self.directory.name, 'out')
        rows = read_rows(os.path.join(out, 'sample.csv'))
        self.assertEqual(3, len(rows))
        self.assertEqual(['replica', 'seed', 'n', 'n_tagged', 'energy', 'min_separation', 'v0', '(norm2)'],
                         list(rows[0].keys()))
        self.assertFalse(manifest.partial)
        self.assertEqual(3, manifest.completed_replicas)
        self.assertEqual([], manifest.verify())
        written = read_manifest(os.path.join(out, 'manifest.json'))
        self.assertEqual(manifest.config_hash, written['config_hash'])
        self.assertEqual(3, len(written['seeds']))

    def test_reproducible(self):
        first = self.runner('a').run(planar_config('sample'))
        second = self.runner('b').run(planar_config('sample'))
        self.assertEqual(first.seeds, second.seeds)
        self.assertEqual(read_rows(os.path.join(self.directory.name, 'a', 'sample.csv')),
                         read_rows(os.path.join(self.directory.name, 'b', 'sample.csv')))

    def test_evolve(self):
        manifest = self.runner().run(planar_config('evolve', 'solver.t = 0.05\n'))
        rows = read_rows(os.path.join(self.directory.name, 'out', 'evolve.csv'))
        self.assertEqual(3, len(rows))
        for row in rows:
            self.assertLess(float(row['energy_drift']), 1e-9)
        self.assertTrue(os.path.exists(os.path.join(self.directory.name, 'out', 'log_0.csv')))
        self.assertEqual(2, len(manifest.outputs))

    def test_stopped_farm_keeps_prefix(self):
        manifest = self.runner().stop_condition(Replicas(1)).run(planar_config('sample'))
        self.assertTrue(manifest.terminated_early)
        self.assertTrue(manifest.partial)
        self.assertEqual(1, len(read_rows(os.path.join(self.directory.name, 'out', 'sample.csv'))))

    def test_too_few_replicas(self):
        runner = self.runner().stop_condition(Replicas(1))
        with self.assertRaises(FarmStoppedError):
            runner.run(planar_config('cgf', 'solver.t = 0.05\n'))
        written = read_manifest(os.path.join(self.directory.name, 'out', 'manifest.json'))
        self.assertTrue(written['partial'])
        self.assertEqual('FarmStoppedError', written['error']['kind'])

    def test_lln_reference_from_backend(self):
        self.runner().run(planar_config('lln', 'solver.t = 0.05\nsolver.n_samples = 500\n'))
        rows = read_rows(self.out('lln.csv'))
        self.assertEqual(['mu', 'lambda', 'epsilon', 'observable', 'mean', 'stderr', 'reference', 'reference_stderr',
                          'error', 'replicas'], list(rows[0].keys()))
        self.assertEqual(['v0', '(norm2)'], [row['observable'] for row in rows])
        self.assertGreater(float(rows[0]['reference_stderr']), 0.0)
        self.assertEqual('3', rows[0]['replicas'])

    def test_fluct(self):
        cfg = planar_config('fluct', 'solver.t = 0.05\nsolver.n_samples = 500\n').with_values({'replicas': 30})
        self.runner().run(cfg)
        self.assertEqual(30, len(read_rows(self.out('fluct_replicas.csv'))))
        rows = read_rows(self.out('fluct.csv'))
        self.assertEqual(['g', 'h', 'sample', 'target', 'stderr', 'z', 'n'], list(rows[0].keys()))
        self.assertEqual([('v0', 'v0'), ('v0', '(norm2)'), ('(norm2)', '(norm2)')], [(r['g'], r['h']) for r in rows])
        names = [estimate['name'] for estimate in read_estimates(self.out('fluct.jsonl'))]
        self.assertEqual(['kappa3[v0]', 'pair_correlation', 'kappa3[(norm2)]', 'pair_correlation'], names)

    def test_cycles(self):
        cfg = planar_config('cycles', 'solver.t = 0.05\n').with_values({'scaling.mu': '20; 40'})
        self.runner().run(cfg)
        rows = read_rows(self.out('cycles.csv'))
        self.assertEqual(['mu', 'epsilon', 'lambda', 'cycle_frequency', 'cycle_stderr', 'collisions', 'tagged_fraction',
                          'lambda_over_mu'], list(rows[0].keys()))
        self.assertEqual([20.0, 40.0], [float(row['mu']) for row in rows])

    def test_solve_pde(self):
        self.runner().run(kinetic_config('solve-pde', 'solver.backends = deterministic; jump; dyson\n'))
        rows = read_rows(self.out('solve.csv'))
        self.assertEqual(['t', 'v0'], list(rows[0].keys()))
        self.assertEqual([0.0, 0.01, 0.02], [float(row['t']) for row in rows])
        names = [estimate['name'] for estimate in read_estimates(self.out('solve.jsonl'))]
        self.assertEqual(['deterministic[v0]', 'jump[v0]', 'dyson[v0]'], names)
        self.assertTrue(os.path.exists(self.out('field_t.csv')))

    def test_tree_mc(self):
        self.runner().run(kinetic_config('tree-mc'))
        estimates = read_estimates(self.out('tree_mc.jsonl'))
        self.assertEqual(1, len(estimates))
        self.assertEqual('dyson', estimates[0]['backend'])
        self.assertEqual(200, estimates[0]['n'])

    def test_bhj(self):
        manifest = self.runner().run(kinetic_config('bhj'))
        rows = read_rows(self.out('bhj.csv'))
        self.assertEqual(['candidate', 'name', 'action', 'initial_g', 'direct', 'direct_stderr', 'difference'],
                         list(rows[0].keys()))
        self.assertEqual(1, len(rows))
        self.assertTrue(os.path.exists(self.out('chi_t.csv')))
        self.assertTrue(os.path.exists(self.out('eta_0.csv')))
        self.assertEqual([], manifest.verify())

    def test_rate(self):
        self.runner().run(kinetic_config('rate'))
        rows = read_rows(self.out('rate.csv'))
        self.assertEqual(['candidate', 'name', 'pairing', 'rate', 'rate_stderr', 'value'], list(rows[0].keys()))
        self.assertEqual('0', rows[0]['name'])
        self.assertEqual(2, len(rows))
        names = [estimate['name'] for estimate in read_estimates(self.out('rate.jsonl'))]
        self.assertEqual(['lambda_hat', 'lambda_hat_minus_one'], names)


class TestAggregate(unittest.TestCase):
    def setUp(self):
        self.directory = tempfile.TemporaryDirectory()

    def tearDown(self):
        self.directory.cleanup()

    def write(self, name: str, rows, header=('replica', 'seed', 'a', 'b')) -> str:
        path = os.path.join(self.directory.name, name)
        with open(path, 'w', newline='') as file:
            writer = csv.writer(file)
            writer.writerow(header)
            writer.writerows(rows)
        return path

    def test_mean_and_median(self):
        first = self.write('1.csv', [[0, 11, 1.0, 5.0], [1, 12, 2.0, 5.0]])
        second = self.write('2.csv', [[0, 13, 6.0, 5.0]])
        rows = aggregate([first, second])
        self.assertEqual(['a', 'b'], [row.column for row in rows])
        self.assertAlmostEqual(3.0, rows[0].center)
        self.assertAlmostEqual((7 / 3) ** 0.5, rows[0].stderr)
        self.assertEqual((1.0, 6.0, 3), (rows[0].minimum, rows[0].maximum, rows[0].n))
        self.assertEqual(0.0, rows[1].stderr)
        self.assertEqual(2.0, aggregate([first, second], 'median')[0].center)

    def test_order_independent(self):
        first = self.write('1.csv', [[0, 1, 0.1, 1.0], [1, 2, 0.7, 2.0]])
        second = self.write('2.csv', [[0, 3, 0.2, 3.0]])
        forward = [row.to_json() for row in aggregate([first, second])]
        backward = [row.to_json() for row in aggregate([second, first])]
        self.assertEqual(forward, backward)

    def test_schema_mismatch(self):
        first = self.write('1.csv', [[0, 1, 1.0, 2.0]])
        second = self.write('2.csv', [[0, 1, 1.0]], header=('replica', 'seed', 'a'))
        with self.assertRaises(SchemaMismatchError):
            aggregate([first, second])

    def test_single_value_warning(self):
        path = self.write('1.csv', [[0, 1, 1.0, 2.0]])
        with self.assertLogs('pykc.experiments.aggregate', 'WARNING'):
            rows = aggregate([path])
        self.assertTrue(all(row.single for row in rows))

    def test_invalid_arguments(self):
        with self.assertRaises(ValueError):
            aggregate([])
        with self.assertRaises(ValueError):
            aggregate([self.write('1.csv', [[0, 1, 1.0, 2.0]])], 'mode')

    def test_write(self):
        path = self.write('1.csv', [[0, 1, 1.0, 2.0], [1, 2, 3.0, 2.0]])
        out = os.path.join(self.directory.name, 'pooled.csv')
        write_aggregate_csv(out, aggregate([path]))
        rows = read_rows(out)
        self.assertEqual(['column', 'mean', 'stderr', 'min', 'max', 'n', 'single'], list(rows[0].keys()))
        self.assertEqual('2.0', rows[0]['mean'])


if __name__ == '__main__':
    unittest.main()
