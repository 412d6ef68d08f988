import logging
import math
from typing import Dict, List, Optional, Union

import numpy as np
from scipy.stats import poisson

from pykc.geometry import sample_flux_angles, scatter, wrap
from pykc.kinetic.jump_mc import sample_partners
from pykc.kinetic.kernel import collision_constant, loss_rate, mean_speed
from pykc.kinetic.paths import DEFAULT_BLOCK_SIZE, Endpoint, PathBatch, PathFunctional, block_seeds, map_blocks
from pykc.phase_function import PhaseFunction
from pykc.scaling import Estimate, Rng, Vector

logger = logging.getLogger(__name__)

MAX_ORDER = 12


class DysonHistory:
    """
    One backward pseudo-trajectory: k added partners at strictly decreasing times t > t_1 > ... > t_k > 0,
    branch signs (+1 gain, -1 loss), angles, partner velocities and the accumulated signed weight.
    """

    def __init__(self, times: Vector, signs: Vector, omegas: Vector, partners: Vector, weight: float):
        times = np.asarray(times, dtype=float)
        if np.any(np.diff(times) >= 0):
            raise ValueError('invalid argument value: expecting strictly decreasing times')
        if not math.isfinite(weight):
            raise ValueError('invalid argument value: expecting a finite weight')
        self._times = times
        self._signs = np.asarray(signs, dtype=int)
        self._omegas = np.asarray(omegas, dtype=float)
        self._partners = np.asarray(partners, dtype=float)
        self._weight = float(weight)

    @property
    def k(self) -> int:
        return len(self._times)

    @property
    def times(self) -> Vector:
        return self._times

    @property
    def signs(self) -> Vector:
        return self._signs

    @property
    def omegas(self) -> Vector:
        return self._omegas

    @property
    def partners(self) -> Vector:
        return self._partners

    @property
    def weight(self) -> float:
        return self._weight

    def to_json(self):
        return {'kind': type(self).__name__, 'times': self._times.tolist(), 'signs': self._signs.tolist(),
                'omegas': self._omegas.tolist(), 'partners': self._partners.tolist(), 'weight': self._weight}


def mean_loss_rate(beta: float, d: int = 3) -> float:
    """ν̄ = c_d E|V - V'| for independent Maxwellian V, V'."""
    return collision_constant(d) * math.sqrt(2) * mean_speed(beta, d)


def _order_probabilities(rate: float, k_max: int) -> Vector:
    probabilities = poisson.pmf(np.arange(k_max + 1), rate)
    return probabilities / np.sum(probabilities)


def _backward_histories(k: int, m: int, t: float, beta: float, d: int, rng: Rng) -> Dict[str, Vector]:
    """
    Builds m histories with k added partners backward from (x, v) ~ uniform × M_β at time t. Partners are
    drawn ∝ |v - v*| M_β(v*), so each added partner contributes the factor 2 s ν_β(v). The loss branch keeps
    the velocity, the gain branch replaces it by the pre-collisional v - <v - v*, ω>ω.
    """
    x = rng.random((m, d))
    v = rng.normal(0.0, 1 / math.sqrt(beta), size=(m, d))
    times = np.sort(rng.random((m, k)) * t, axis=1)[:, ::-1]
    signs = rng.choice(np.array([-1, 1]), size=(m, k))
    partners = np.zeros((m, k, d))
    omegas = np.zeros((m, k, d))
    factors = np.ones(m)
    segments = [v.copy()]
    position = x.copy()
    previous = np.full(m, float(t))
    current = v.copy()
    for i in range(k):
        position -= current * (previous - times[:, i])[:, None]
        partners[:, i] = sample_partners(current, beta, rng)
        omegas[:, i], _ = sample_flux_angles(current - partners[:, i], rng)
        factors *= 2 * signs[:, i] * loss_rate(current, beta, d)
        gain = signs[:, i] > 0
        current[gain] = scatter(current[gain], partners[gain, i], omegas[gain, i])[0]
        segments.append(current.copy())
        previous = times[:, i]
    start = position - current * previous[:, None]
    breaks = np.concatenate([np.zeros((m, 1)), times[:, ::-1], np.full((m, 1), float(t))], axis=1)
    velocities = np.stack(segments[::-1], axis=1)
    return {'times': times, 'signs': signs, 'omegas': omegas, 'partners': partners, 'factors': factors,
            'batch': PathBatch(start, breaks, velocities)}


def sample_dyson_histories(n: int, t: float, k_max: int, rng: Rng, beta: float = 1.0, d: int = 3,
                           proposal_rate: Optional[float] = None) -> List[DysonHistory]:
    """Draws n histories from the proposal of estimate_f1_dyson, for inspection."""
    rate = 2 * mean_loss_rate(beta, d) * t if proposal_rate is None else proposal_rate
    probabilities = _order_probabilities(rate, k_max)
    orders = rng.choice(k_max + 1, size=n, p=probabilities)
    histories = []
    for k in orders:
        sample = _backward_histories(int(k), 1, t, beta, d, rng)
        weight = sample['factors'][0] * t ** k / (math.factorial(k) * probabilities[k])
        histories.append(DysonHistory(sample['times'][0], sample['signs'][0], sample['omegas'][0],
                                      sample['partners'][0], weight))
    return histories


def _dyson_block(size: int, seed, phi0: PhaseFunction, functional: PathFunctional, t: float, k_max: int,
                 rate: float, beta: float, d: int):
    rng = np.random.default_rng(seed)
    probabilities = _order_probabilities(rate, k_max)
    orders = rng.choice(k_max + 1, size=size, p=probabilities)
    values = np.empty(size)
    magnitudes = np.empty(size)
    for k in np.unique(orders):
        index = np.flatnonzero(orders == k)
        sample = _backward_histories(int(k), len(index), t, beta, d, rng)
        batch = sample['batch']
        x0, v0 = batch.initial()
        unweighted = functional.evaluate(batch) * phi0.evaluate(0.0, wrap(x0), v0)
        weights = sample['factors'] * t ** k / (math.factorial(int(k)) * probabilities[k])
        values[index] = weights * unweighted
        magnitudes[index] = np.abs(unweighted)
    return values, orders, magnitudes


class _BlockTask:
    def __init__(self, *arguments):
        self._arguments = arguments

    def __call__(self, size, seed):
        return _dyson_block(size, seed, *self._arguments)


def estimate_f1_dyson(functional: Union[PathFunctional, PhaseFunction], phi0: PhaseFunction, t: float, k_max: int,
                      n_samples: int, rng: Rng, beta: float = 1.0, d: int = 3,
                      proposal_rate: Optional[float] = None, block_size: int = DEFAULT_BLOCK_SIZE,
                      workers: Optional[int] = 1) -> Estimate:
    """
    Signed unbiased estimator of ∫F₁[H](t) from truncated Dyson pseudo-trajectories: the number k of added
    partners is truncated Poisson(2ν̄ t), times are uniform on the ordered simplex, branch signs uniform,
    partners drawn ∝ |v - v*| M_β and angles from the flux density. Each history carries the importance
    weight Π 2 s_i ν_β(v_i) · t^k / (k! p(k)), which is Π s_i ν_β(v_i) / ν̄ up to the constant e^{2ν̄ t}.

    :param functional: trajectory observable; a PhaseFunction h stands for h(t, z(t))
    :param phi0: initial perturbation
    :param t: final time, at most 1
    :param k_max: largest number of added partners, at most 12
    :param n_samples: number of histories
    :param rng: random generator seeding the sample blocks
    :param proposal_rate: Poisson rate of the order proposal, default 2ν̄ t
    :return: estimate with per-order breakdown and the truncation tail in `extra`
    """
    if not 0 <= t <= 1:
        raise ValueError(f'invalid argument value: expecting 0 <= t <= 1, got {t}')
    if not 0 <= k_max <= MAX_ORDER:
        raise ValueError(f'invalid argument value: expecting 0 <= k_max <= {MAX_ORDER}, got {k_max}')
    if n_samples < 2:
        raise ValueError(f'invalid argument value: expecting n_samples >= 2, got {n_samples}')
    if isinstance(functional, PhaseFunction):
        functional = Endpoint(functional)
    rate = 2 * mean_loss_rate(beta, d) * t if proposal_rate is None else proposal_rate
    blocks = block_seeds(rng, n_samples, block_size)
    results = map_blocks(_BlockTask(phi0, functional, t, k_max, rate, beta, d), blocks, workers)
    values = np.concatenate([r[0] for r in results])
    orders = np.concatenate([r[1] for r in results])
    magnitudes = np.concatenate([r[2] for r in results])
    breakdown = {}
    for k in range(k_max + 1):
        selected = values[orders == k]
        if len(selected):
            breakdown[k] = {'count': int(len(selected)),
                            'contribution': float(np.sum(selected) / n_samples),
                            'variance': float(np.var(selected, ddof=1)) if len(selected) > 1 else 0.0}
    growth = 2 * mean_loss_rate(beta, d) * t
    tail = float(np.mean(magnitudes) * math.exp(growth) * poisson.sf(k_max, growth))
    estimate = Estimate.from_samples(functional.name, values,
                                     backend='dyson', t=t, per_order=breakdown, truncation_tail=tail)
    if tail > estimate.stderr:
        logger.warning(f'Dyson truncation tail {tail:.3e} exceeds the standard error {estimate.stderr:.3e}; '
                       f'increase k_max')
    return estimate
