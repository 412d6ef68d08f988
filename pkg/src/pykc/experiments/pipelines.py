"""
Experiment pipelines. Each takes a RunContext, farms replicas or runs solvers, and registers every file it
writes with the run manifest. Tables are CSV, estimates line-delimited JSON.
"""
import csv
import logging
import math
from functools import partial
from typing import Dict, List, Optional, Sequence

import numpy as np

from pykc.gas_sim import (cycle_census, evolve, sample_initial_state, tagged_collision_fraction, write_log_csv,
                          write_state_csv)
from pykc.kinetic import (Deterministic, Dyson, ExpEndpoint, F1Backend, Jump, VelocityField, VelocityGrid,
                          build_kernel, solve_rb_deterministic, write_field_csv)
from pykc.kinetic.paths import Endpoint
from pykc.large_deviations import (ObservablePath, candidate_family, hj_action, legendre_rate, rate_direct,
                                   solve_bhj_for)
from pykc.phase_function import PhaseFunction
from pykc.scaling import Estimate, ScalingConfig
from pykc.statistics import (MIN_FLUCTUATION_REPLICAS, empirical_cgf, ensemble_cumulants,
                             fluctuation_covariance_test, fluctuation_samples, pair_correlation_integral,
                             tagged_empirical_measure, write_estimates)

logger = logging.getLogger(__name__)

KINETIC_STREAM = 900


def _write_rows(context, name: str, rows: List[Dict]):
    path = context.path(name)
    with open(path, 'w', newline='') as file:
        writer = csv.DictWriter(file, fieldnames=list(rows[0].keys()) if rows else [])
        writer.writeheader()
        writer.writerows({key: repr(value) if isinstance(value, float) else value for key, value in row.items()}
                         for row in rows)
    context.register(path)
    return path


def _write_estimates(context, name: str, estimates: Sequence[Estimate]):
    path = context.path(name)
    write_estimates(path, estimates)
    context.register(path)
    return path


def _sampling_options(cfg) -> Dict:
    return {'max_rejections': cfg['budget.max_rejections'], 'exclusion': cfg['sampling.exclusion'],
            'sequential': cfg['sampling.sequential']}


def _grid(cfg) -> VelocityGrid:
    return VelocityGrid.for_beta(cfg['scaling.beta'], cfg['solver.grid_m'], cfg['scaling.d'],
                                 cfg['solver.v_max_tail'])


def make_backend(cfg, name: Optional[str] = None, kernel=None, workers: int = 1) -> F1Backend:
    name = name if name is not None else cfg['solver.backend']
    beta, d = cfg['scaling.beta'], cfg['scaling.d']
    if name == 'jump':
        return Jump(cfg['solver.n_samples'], beta, d, workers=workers)
    if name == 'dyson':
        return Dyson(cfg['solver.n_samples'], cfg['solver.k_max'], beta, d, workers=workers)
    return Deterministic(kernel.grid if kernel is not None else _grid(cfg), cfg['solver.dt'], beta, kernel)


def _output_times(t: float, dt_max: float) -> List[float]:
    n = max(1, math.ceil(t / dt_max - 1e-9))
    return [t * i / n for i in range(n + 1)]


class BackendMeasure:
    """Kinetic solution seen through an F1 backend: `integrate(h, s)` is the endpoint estimate ∫F₁[h](s)."""

    def __init__(self, backend: F1Backend, phi0: PhaseFunction, rng: np.random.Generator):
        self._backend = backend
        self._phi0 = phi0
        self._rng = rng

    def estimate(self, h: PhaseFunction, s: float) -> Estimate:
        return self._backend.estimate(Endpoint(h), self._phi0, s, self._rng)

    def integrate(self, h: PhaseFunction, s: float) -> float:
        return self.estimate(h, s).value


def kinetic_measure(context, t: float):
    """Kinetic solution at t: grid solution for the deterministic backend, else the configured F1 backend."""
    cfg = context.cfg
    if cfg['solver.backend'] == 'deterministic':
        return solve_rb_deterministic(cfg.phi0, t, _grid(cfg), cfg['solver.dt'], cfg['scaling.beta']).at(t)
    return BackendMeasure(make_backend(cfg, workers=context.workers), cfg.phi0, context.rng(KINETIC_STREAM))


def _reference(measure, h: PhaseFunction, t: float) -> Estimate:
    if isinstance(measure, BackendMeasure):
        return measure.estimate(h, t)
    return Estimate(h.name, measure.integrate(h, t))


# replica tasks, module level so that worker processes can unpickle them

def _sample_replica(scaling: ScalingConfig, phi0: PhaseFunction, options: Dict,
                    observables: Sequence[PhaseFunction], seed: int) -> Dict:
    state = sample_initial_state(scaling, phi0, np.random.default_rng(seed), seed=seed, **options)
    row = {'n': state.n, 'n_tagged': state.n_tagged, 'energy': state.energy(),
           'min_separation': state.min_separation()}
    row.update({h.name: tagged_empirical_measure(state, h, 0.0) for h in observables})
    return row


def _evolve_replica(scaling: ScalingConfig, phi0: PhaseFunction, options: Dict,
                    observables: Sequence[PhaseFunction], t: float, max_events: int, seed: int) -> Dict:
    initial = sample_initial_state(scaling, phi0, np.random.default_rng(seed), seed=seed, **options)
    if t > 0:
        final, log = evolve(initial, t, max_events)
    else:
        final, log = initial, None
    row = {'n': final.n, 'n_tagged': final.n_tagged}
    if log is not None:
        tagged_pairs, collisions = tagged_collision_fraction(log)
        census = cycle_census(log)
        row.update({'collisions': collisions, 'tagged_pairs': tagged_pairs, 'cycles': census['cycle_count'],
                    'energy_drift': abs(final.energy() - initial.energy()),
                    'momentum_drift': float(np.linalg.norm(final.momentum() - initial.momentum()))})
    for h in observables:
        row[h.name] = tagged_empirical_measure(final, h, t)
        row[f'sum[{h.name}]'] = row[h.name] * scaling.lam
        values = h.evaluate(t, final.positions[final.tags == 1], final.velocities[final.tags == 1], 1.0)
        row[f'squares[{h.name}]'] = float(np.sum(values ** 2))
    return row


def _replica_rows(seeds: Sequence[int], results: Sequence[Dict]) -> List[Dict]:
    return [dict({'replica': i, 'seed': seed}, **result) for i, (seed, result) in enumerate(zip(seeds, results))]


def _column(results: Sequence[Dict], name: str) -> np.ndarray:
    return np.array([r[name] for r in results], dtype=float)


# pipelines

def run_sample(context):
    cfg = context.cfg
    scaling = cfg.scaling
    seeds = context.replica_seeds(cfg.replicas)
    task = partial(_sample_replica, scaling, cfg.phi0, _sampling_options(cfg), cfg.observables)
    results = context.map_replicas(task, seeds, label='sampling')
    _write_rows(context, 'sample.csv', _replica_rows(seeds, results))
    state = sample_initial_state(scaling, cfg.phi0, np.random.default_rng(seeds[0]), seed=seeds[0],
                                 **_sampling_options(cfg))
    write_state_csv(context.path('state_0.csv'), state)
    context.register(context.path('state_0.csv'))


def run_evolve(context):
    cfg = context.cfg
    scaling = cfg.scaling
    t = cfg['solver.t']
    seeds = context.replica_seeds(cfg.replicas)
    task = partial(_evolve_replica, scaling, cfg.phi0, _sampling_options(cfg), cfg.observables, t,
                   cfg['budget.max_events'])
    results = context.map_replicas(task, seeds, label='evolving')
    _write_rows(context, 'evolve.csv', _replica_rows(seeds, results))
    initial = sample_initial_state(scaling, cfg.phi0, np.random.default_rng(seeds[0]), seed=seeds[0],
                                   **_sampling_options(cfg))
    _, log = evolve(initial, t, cfg['budget.max_events'])
    write_log_csv(context.path('log_0.csv'), log, scaling, seeds[0])
    context.register(context.path('log_0.csv'))


def run_lln(context):
    """One error row per (μ, observable): replica mean of π̃_t[h] against the kinetic ⟨M φ(t), h⟩."""
    cfg = context.cfg
    t = cfg['solver.t']
    measure = kinetic_measure(context, t)
    references = {h.name: _reference(measure, h, t) for h in cfg.observables}
    rows = []
    for stream, scaling in enumerate(cfg.scalings):
        seeds = context.replica_seeds(cfg.replicas, stream)
        task = partial(_evolve_replica, scaling, cfg.phi0, _sampling_options(cfg), cfg.observables, t,
                       cfg['budget.max_events'])
        results = context.map_replicas(task, seeds, minimum=2, label=f'lln mu={scaling.mu:g}')
        for h in cfg.observables:
            estimate = Estimate.from_samples(h.name, _column(results, h.name))
            reference = references[h.name]
            rows.append({'mu': scaling.mu, 'lambda': scaling.lam, 'epsilon': scaling.epsilon,
                         'observable': h.name, 'mean': estimate.value, 'stderr': estimate.stderr,
                         'reference': reference.value, 'reference_stderr': reference.stderr,
                         'error': abs(estimate.value - reference.value), 'replicas': estimate.n})
    _write_rows(context, 'lln.csv', rows)


def run_fluct(context):
    """Fluctuation covariances against ∫ M φ(t) g h and the third k-statistic of every ζ[h]."""
    cfg = context.cfg
    scaling = cfg.scaling
    t = cfg['solver.t']
    solution = kinetic_measure(context, t)
    seeds = context.replica_seeds(cfg.replicas)
    task = partial(_evolve_replica, scaling, cfg.phi0, _sampling_options(cfg), cfg.observables, t,
                   cfg['budget.max_events'])
    results = context.map_replicas(task, seeds, minimum=MIN_FLUCTUATION_REPLICAS, label='fluctuations')
    _write_rows(context, 'fluct_replicas.csv', _replica_rows(seeds, results))
    observables = cfg.observables
    zeta = {h.name: fluctuation_samples(_column(results, h.name), scaling.lam) for h in observables}
    rows, estimates = [], []
    for i, g in enumerate(observables):
        for h in observables[i:]:
            test = fluctuation_covariance_test(zeta[g.name], zeta[h.name], solution, g, h, t)
            rows.append(dict({'g': g.name, 'h': h.name}, **test.to_json()))
        cumulants = ensemble_cumulants(zeta[g.name], 3)
        estimates.append(cumulants[2].to_estimate(f'kappa3[{g.name}]'))
        estimates.append(pair_correlation_integral(_column(results, f'sum[{g.name}]'),
                                                   _column(results, f'squares[{g.name}]'), scaling.lam))
    _write_rows(context, 'fluct.csv', rows)
    _write_estimates(context, 'fluct.jsonl', estimates)


def run_cgf(context):
    """(1/λ) log mean exp Σ H against ∫F₁[e^H](t) - ∫F₁[1](t) from the configured backend."""
    cfg = context.cfg
    scaling = cfg.scaling
    t = cfg['solver.t']
    seeds = context.replica_seeds(cfg.replicas)
    task = partial(_evolve_replica, scaling, cfg.phi0, _sampling_options(cfg), cfg.observables, t,
                   cfg['budget.max_events'])
    results = context.map_replicas(task, seeds, minimum=2, label='cgf')
    backend = make_backend(cfg, workers=context.workers)
    estimates = []
    for stream, H in enumerate(cfg.observables):
        empirical = empirical_cgf(_column(results, f'sum[{H.name}]'), scaling.lam)
        exponential = backend.estimate(ExpEndpoint(H), cfg.phi0, t, context.rng(2 * stream))
        mass = backend.estimate(Endpoint(PhaseFunction.constant(1, cfg['scaling.d'])), cfg.phi0, t,
                                context.rng(2 * stream + 1))
        reference = Estimate(f'limit[{H.name}]', exponential.value - mass.value,
                             math.hypot(exponential.stderr, mass.stderr), exponential.n)
        estimates += [Estimate(f'cgf[{H.name}]', empirical.value, empirical.stderr, empirical.n,
                               **empirical.extra), reference]
    _write_estimates(context, 'cgf.jsonl', estimates)


def run_cycles(context):
    """Cycle frequency and tagged-tagged collision fraction per μ, and the log-log slope of cycles vs ε."""
    cfg = context.cfg
    t = cfg['solver.t']
    rows = []
    for stream, scaling in enumerate(cfg.scalings):
        seeds = context.replica_seeds(cfg.replicas, stream)
        task = partial(_evolve_replica, scaling, cfg.phi0, _sampling_options(cfg), [], t, cfg['budget.max_events'])
        results = context.map_replicas(task, seeds, minimum=2, label=f'cycles mu={scaling.mu:g}')
        collisions = _column(results, 'collisions')
        cycles = Estimate.from_samples('cycles', _column(results, 'cycles') / np.maximum(collisions, 1))
        total = float(np.sum(collisions))
        rows.append({'mu': scaling.mu, 'epsilon': scaling.epsilon, 'lambda': scaling.lam,
                     'cycle_frequency': cycles.value, 'cycle_stderr': cycles.stderr,
                     'collisions': total, 'tagged_fraction': float(np.sum(_column(results, 'tagged_pairs')) / total)
                     if total else 0.0, 'lambda_over_mu': scaling.p_mu})
    _write_rows(context, 'cycles.csv', rows)
    usable = [row for row in rows if row['cycle_frequency'] > 0]
    if len(usable) >= 2:
        slope = np.polyfit(np.log([r['epsilon'] for r in usable]), np.log([r['cycle_frequency'] for r in usable]), 1)[0]
        _write_estimates(context, 'cycles.jsonl', [Estimate('cycle_slope', float(slope), 0.0, len(usable))])
    else:
        logger.warning('fewer than two sweeps observed cycles; no slope fitted')


def run_solve_pde(context):
    """Deterministic observable table on the snapshot grid, final field, and the backend comparison at t."""
    cfg = context.cfg
    t = cfg['solver.t']
    grid = _grid(cfg)
    kernel = build_kernel(grid, cfg['scaling.beta'])
    times = _output_times(t, cfg['solver.dt_max'])
    trajectory = solve_rb_deterministic(cfg.phi0, times, grid, cfg['solver.dt'], cfg['scaling.beta'], kernel)
    observables = cfg.observables
    rows = [dict({'t': s}, **{h.name: field.pair_with(h, s) for h in observables}) for s, field in trajectory]
    _write_rows(context, 'solve.csv', rows)
    write_field_csv(context.path('field_t.csv'), trajectory.at(t), t)
    context.register(context.path('field_t.csv'))
    estimates = []
    for stream, name in enumerate(cfg['solver.backends']):
        backend = make_backend(cfg, name, kernel, context.workers)
        for index, h in enumerate(observables):
            estimate = backend.estimate(Endpoint(h), cfg.phi0, t, context.rng(100 * stream + index))
            estimates.append(Estimate(f'{name}[{h.name}]', estimate.value, estimate.stderr, estimate.n))
    _write_estimates(context, 'solve.jsonl', estimates)


def run_tree_mc(context):
    cfg = context.cfg
    backend = make_backend(cfg, 'dyson', workers=context.workers)
    estimates = [backend.estimate(Endpoint(h), cfg.phi0, cfg['solver.t'], context.rng(index))
                 for index, h in enumerate(cfg.observables)]
    _write_estimates(context, 'tree_mc.jsonl', estimates)


def _observable_paths(cfg) -> List[ObservablePath]:
    sign = cfg['hj.transport_sign']
    if cfg.candidates:
        return [ObservablePath(h, cfg['candidates.bound'], sign) for h in cfg.candidates]
    return candidate_family(cfg['rate.family_size'], cfg['scaling.beta'], cfg['scaling.d'], cfg['rate.amplitude'],
                            cfg.seed)


def run_bhj(context):
    """Hamilton-Jacobi action against the direct rate for every candidate path."""
    cfg = context.cfg
    t = cfg['solver.t']
    grid = _grid(cfg)
    kernel = build_kernel(grid, cfg['scaling.beta'])
    backend = make_backend(cfg, kernel=kernel, workers=context.workers)
    rows = []
    for index, g in enumerate(_observable_paths(cfg)):
        solution = solve_bhj_for(g, cfg.phi0, t, kernel, cfg['solver.dt'])
        action = hj_action(g, solution)
        direct = rate_direct(g, cfg.phi0, t, backend, context.rng(index))
        rows.append({'candidate': index, 'name': g.name, 'action': action.value,
                     'initial_g': action.extra['initial_g'], 'direct': direct.value, 'direct_stderr': direct.stderr,
                     'difference': action.value - direct.value})
        if index == 0:
            write_field_csv(context.path('chi_t.csv'), solution.chi.at(t), t)
            write_field_csv(context.path('eta_0.csv'), solution.eta.at(0.0), 0.0)
            context.register(context.path('chi_t.csv'))
            context.register(context.path('eta_0.csv'))
    _write_rows(context, 'bhj.csv', rows)


def run_rate(context):
    """Legendre lower bound at the Rayleigh-Boltzmann path of φ₀, rescaled to unit mass when configured."""
    cfg = context.cfg
    t = cfg['solver.t']
    beta = cfg['scaling.beta']
    grid = _grid(cfg)
    kernel = build_kernel(grid, beta)
    phi0 = cfg.phi0
    if cfg['rate.normalize']:
        phi0 = phi0 * (1 / VelocityField.from_phase_function(phi0, grid, beta).mass())
    v_path = solve_rb_deterministic(phi0, _output_times(t, cfg['solver.dt_max']), grid, cfg['solver.dt'], beta,
                                    kernel)
    backend = make_backend(cfg, kernel=kernel)
    candidates = _observable_paths(cfg)
    if cfg.candidates:
        candidates = [ObservablePath.zero(cfg['scaling.d'])] + candidates
    evaluation = legendre_rate(v_path, t, candidates, phi0, backend, context.rng(0),
                               dt_max=cfg['solver.dt_max'], workers=context.workers)
    path = context.path('rate.csv')
    evaluation.write_csv(path)
    context.register(path)
    _write_estimates(context, 'rate.jsonl', [
        Estimate('lambda_hat', evaluation.lower_bound, evaluation.stderr, len(candidates),
                 argmax=evaluation.argmax.name),
        Estimate('lambda_hat_minus_one', evaluation.minus_one_bound, evaluation.stderr, len(candidates))])


PIPELINES = {
    'sample': run_sample,
    'evolve': run_evolve,
    'lln': run_lln,
    'fluct': run_fluct,
    'cgf': run_cgf,
    'cycles': run_cycles,
    'solve-pde': run_solve_pde,
    'tree-mc': run_tree_mc,
    'bhj': run_bhj,
    'rate': run_rate,
}
