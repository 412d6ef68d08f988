import csv
import json
import math
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.integrate import trapezoid
from scipy.special import logsumexp

from pykc.gas_sim.state import TAGGED, SystemState
from pykc.phase_function import PhaseFunction
from pykc.scaling import Estimate, OverflowGuardError, ScalingConfig, Vector

DEFAULT_DT_MAX = 0.01
MIN_FLUCTUATION_REPLICAS = 30
MAX_CUMULANT_ORDER = 4
OVERFLOW_GUARD = 700.0


def empirical_measure(state: SystemState, H: PhaseFunction, t: Optional[float] = None) -> float:
    """π_t[H] = (1/μ) Σ_i H(t, z_i, ℓ_i) over all particles."""
    if state.n == 0:
        return 0.0
    t = state.time if t is None else t
    values = H.evaluate(t, state.positions, state.velocities, state.tags.astype(float))
    return float(np.sum(values) / state.cfg.mu)


def tagged_empirical_measure(state: SystemState, h: PhaseFunction, t: Optional[float] = None) -> float:
    """π̃_t[h] = (1/λ) Σ_{ℓ_i = 1} h(t, z_i)."""
    tagged = state.tags == TAGGED
    if not np.any(tagged):
        return 0.0
    t = state.time if t is None else t
    values = h.evaluate(t, state.positions[tagged], state.velocities[tagged], 1.0)
    return float(np.sum(values) / state.cfg.lam)


class EmpiricalMeasure:
    """A particle state seen as the measure h -> π_s[h] or, with `tagged`, h -> π̃_s[h]."""

    def __init__(self, state: SystemState, tagged: bool = True):
        self._state = state
        self._tagged = tagged

    @property
    def state(self) -> SystemState:
        return self._state

    def integrate(self, h: PhaseFunction, s: float) -> float:
        if self._tagged:
            return tagged_empirical_measure(self._state, h, s)
        return empirical_measure(self._state, h, s)


def as_measure(value) -> object:
    """States become tagged empirical measures; anything with an `integrate(h, s)` method passes through."""
    if isinstance(value, SystemState):
        return EmpiricalMeasure(value)
    if not hasattr(value, 'integrate'):
        raise ValueError(f'invalid argument value: expecting a measure, got {type(value).__name__}')
    return value


def filtered_mean(snapshots: Sequence[Tuple[float, object]], h: PhaseFunction, t: float,
                  dt_max: float = DEFAULT_DT_MAX, transport_sign: int = 1) -> float:
    """
    {h, m}_t = m_t(h(t)) - ∫_0^t m_s((∂_s + sign v·∇_x) h(s)) ds with the time integral by the trapezoid rule.

    :param snapshots: (time, measure) pairs covering [0, t]; measures are states or fields
    :param h: observable
    :param t: final time, which must be a snapshot time
    :param dt_max: largest allowed gap between consecutive snapshots
    :param transport_sign: orientation of the transport derivative, -1 for the Legendre pairing
    """
    ordered = sorted(((float(s), as_measure(m)) for s, m in snapshots if s <= t + 1e-12), key=lambda p: p[0])
    if not ordered or abs(ordered[0][0]) > 1e-12 or abs(ordered[-1][0] - t) > 1e-12:
        raise ValueError(f'invalid argument value: expecting snapshots covering [0, {t}]')
    times = np.array([s for s, _ in ordered])
    gaps = np.diff(times)
    if len(gaps) and np.max(gaps) > dt_max + 1e-12:
        raise ValueError(f'invalid argument value: snapshot gap {np.max(gaps)} exceeds dt_max = {dt_max}')
    derivative = h.transport_derivative(transport_sign)
    final = ordered[-1][1].integrate(h, t)
    if derivative.is_zero or len(times) < 2:
        return float(final)
    values = np.array([m.integrate(derivative, s) for s, m in ordered])
    return float(final - trapezoid(values, times))


class ReplicaEnsemble:
    """Per-replica samples of one or more named statistics with their seeds."""

    def __init__(self, cfg: ScalingConfig, seeds: Sequence[int], samples: Dict[str, Vector]):
        seeds = [int(s) for s in seeds]
        if len(set(seeds)) != len(seeds):
            raise ValueError('invalid argument value: expecting distinct replica seeds')
        for name, values in samples.items():
            if len(values) != len(seeds):
                raise ValueError(f'invalid argument value: expecting {len(seeds)} samples of {name}')
        self._cfg = cfg
        self._seeds = seeds
        self._samples = {name: np.asarray(values, dtype=float) for name, values in samples.items()}

    @property
    def cfg(self) -> ScalingConfig:
        return self._cfg

    @property
    def seeds(self) -> List[int]:
        return self._seeds

    @property
    def names(self) -> List[str]:
        return list(self._samples)

    def __len__(self):
        return len(self._seeds)

    def __getitem__(self, name: str) -> Vector:
        return self._samples[name]

    def write_csv(self, path: str):
        write_ensemble_csv(path, self)

    def to_json(self):
        return {'kind': type(self).__name__, 'cfg': self._cfg.to_json(), 'replicas': len(self._seeds),
                'names': self.names}


class CumulantEstimate:
    def __init__(self, order: int, value: float, stderr: float, n: int):
        if not 1 <= order <= MAX_CUMULANT_ORDER:
            raise ValueError(f'invalid argument value: expecting order in 1..{MAX_CUMULANT_ORDER}, got {order}')
        self._order = order
        self._value = float(value)
        self._stderr = float(stderr)
        self._n = n

    @property
    def order(self) -> int:
        return self._order

    @property
    def value(self) -> float:
        return self._value

    @property
    def stderr(self) -> float:
        return self._stderr

    @property
    def n(self) -> int:
        return self._n

    def to_estimate(self, name: str = 'kappa') -> Estimate:
        return Estimate(f'{name}{self._order}', self._value, self._stderr, self._n)

    def to_json(self):
        return {'order': self._order, 'value': self._value, 'stderr': self._stderr, 'n': self._n}


def fluctuation_samples(values: Union[ReplicaEnsemble, Vector], lam: Optional[float] = None,
                        name: Optional[str] = None) -> Vector:
    """
    ζ_r = √λ (π̃_r - mean π̃) for per-replica tagged empirical measures.

    :param values: ensemble (with `name` selecting the column) or raw samples
    :param lam: tagged chemical potential, default the ensemble's λ
    """
    if isinstance(values, ReplicaEnsemble):
        lam = values.cfg.lam if lam is None else lam
        values = values[name if name is not None else values.names[0]]
    values = np.asarray(values, dtype=float)
    if len(values) < MIN_FLUCTUATION_REPLICAS:
        raise ValueError(f'invalid argument value: expecting at least {MIN_FLUCTUATION_REPLICAS} replicas, '
                         f'got {len(values)}')
    if lam is None or lam <= 0:
        raise ValueError(f'invalid argument value: expecting lambda > 0, got {lam}')
    return math.sqrt(lam) * (values - np.mean(values))


def _k_statistics(sums: Sequence, n: int, max_order: int) -> list:
    """Unbiased k-statistics κ₁..κ_max_order from the power sums S_r of n samples (vectorized)."""
    s1, s2, s3, s4 = (list(sums) + [None] * 4)[:4]
    statistics = [s1 / n]
    if max_order >= 2:
        statistics.append((n * s2 - s1 ** 2) / (n * (n - 1)))
    if max_order >= 3:
        statistics.append((2 * s1 ** 3 - 3 * n * s1 * s2 + n ** 2 * s3) / (n * (n - 1) * (n - 2)))
    if max_order >= 4:
        statistics.append((-6 * s1 ** 4 + 12 * n * s1 ** 2 * s2 - 3 * n * (n - 1) * s2 ** 2
                           - 4 * n * (n + 1) * s1 * s3 + n ** 2 * (n + 1) * s4) / (n * (n - 1) * (n - 2) * (n - 3)))
    return statistics


def _jackknife_stderr(replicates: Vector) -> float:
    n = len(replicates)
    return float(math.sqrt((n - 1) / n * np.sum((replicates - np.mean(replicates)) ** 2)))


def ensemble_cumulants(samples: Vector, max_order: int = MAX_CUMULANT_ORDER) -> List[CumulantEstimate]:
    """
    Unbiased k-statistics κ₁..κ_max_order with leave-one-out jackknife standard errors.

    :param samples: scalar samples
    :param max_order: at most 4
    """
    if not 1 <= max_order <= MAX_CUMULANT_ORDER:
        raise ValueError(f'invalid argument value: expecting max_order in 1..{MAX_CUMULANT_ORDER}, got {max_order}')
    samples = np.asarray(samples, dtype=float)
    n = len(samples)
    if n < max_order + 1:
        raise ValueError(f'invalid argument value: degenerate sample size {n} for order {max_order}')
    mean = np.mean(samples)
    centred = samples - mean
    sums = [np.sum(centred ** r) for r in range(1, max_order + 1)]
    full = _k_statistics(sums, n, max_order)
    # leave-one-out power sums
    loo = _k_statistics([s - centred ** r for r, s in enumerate(sums, start=1)], n - 1, max_order)
    estimates = []
    for order in range(1, max_order + 1):
        value = full[order - 1] + (mean if order == 1 else 0.0)
        replicates = loo[order - 1] + (mean if order == 1 else 0.0)
        estimates.append(CumulantEstimate(order, value, _jackknife_stderr(replicates), n))
    return estimates


def empirical_cgf(values: Union[ReplicaEnsemble, Vector], lam: Optional[float] = None,
                  name: Optional[str] = None) -> Estimate:
    """
    (1/λ) log(mean_r exp S_r) for per-replica sums S = Σ_{tagged} H, computed with logsumexp. The jackknife
    bias estimate and standard error are reported alongside.
    """
    if isinstance(values, ReplicaEnsemble):
        lam = values.cfg.lam if lam is None else lam
        values = values[name if name is not None else values.names[0]]
    values = np.asarray(values, dtype=float)
    n = len(values)
    if n < 2:
        raise ValueError(f'invalid argument value: expecting at least 2 replicas, got {n}')
    if lam is None or lam <= 0:
        raise ValueError(f'invalid argument value: expecting lambda > 0, got {lam}')
    if np.max(values) - math.log(n) > OVERFLOW_GUARD:
        raise OverflowGuardError(f'max S - log(replicas) = {np.max(values) - math.log(n):.1f} > {OVERFLOW_GUARD}; '
                                 f'use an observable of smaller norm')
    value = (logsumexp(values) - math.log(n)) / lam
    shift = np.max(values)
    weights = np.exp(values - shift)
    total = np.sum(weights)
    # leave-one-out log-mean-exp, guarded against total cancellation
    remaining = np.maximum(total - weights, np.finfo(float).tiny)
    replicates = (np.log(remaining) + shift - math.log(n - 1)) / lam
    bias = (n - 1) * (np.mean(replicates) - value)
    return Estimate('cgf', value, _jackknife_stderr(replicates), n, jackknife_bias=float(bias), lam=lam)


class CovarianceTest:
    def __init__(self, sample: float, target: float, stderr: float, n: int):
        self._sample = sample
        self._target = target
        self._stderr = stderr
        self._n = n

    @property
    def sample(self) -> float:
        return self._sample

    @property
    def target(self) -> float:
        return self._target

    @property
    def stderr(self) -> float:
        return self._stderr

    @property
    def z(self) -> float:
        if self._stderr == 0:
            return 0.0 if self._sample == self._target else math.inf
        return (self._sample - self._target) / self._stderr

    def to_json(self):
        return {'sample': self._sample, 'target': self._target, 'stderr': self._stderr, 'z': self.z, 'n': self._n}


def fluctuation_covariance_test(zeta_g: Vector, zeta_h: Vector, phi_solution, g: PhaseFunction, h: PhaseFunction,
                                t: float) -> CovarianceTest:
    """
    Compares the sample covariance of fluctuation samples (ζ[g], ζ[h]) with ∫ M_β φ(t) g h.

    :param zeta_g: fluctuation samples of g
    :param zeta_h: fluctuation samples of h, same replicas
    :param phi_solution: kinetic solution at time t (any measure with `integrate(h, s)`)
    :return: studentized discrepancy
    """
    zeta_g = np.asarray(zeta_g, dtype=float)
    zeta_h = np.asarray(zeta_h, dtype=float)
    if zeta_g.shape != zeta_h.shape:
        raise ValueError('invalid argument value: expecting fluctuation samples of equal length')
    n = len(zeta_g)
    products = (zeta_g - np.mean(zeta_g)) * (zeta_h - np.mean(zeta_h))
    sample = float(np.sum(products) / (n - 1))
    stderr = float(np.std(products, ddof=1) / math.sqrt(n))
    target = float(as_measure(phi_solution).integrate(g * h, t))
    return CovarianceTest(sample, target, stderr, n)


def pair_correlation_integral(sums: Vector, squares: Vector, lam: float) -> Estimate:
    """
    ∫ f₂ H⊗H estimator (κ₂(S) - mean Q) / λ² from per-replica S = Σ_{tagged} H and Q = Σ_{tagged} H².
    """
    sums = np.asarray(sums, dtype=float)
    squares = np.asarray(squares, dtype=float)
    n = len(sums)
    if n < 5 or len(squares) != n:
        raise ValueError('invalid argument value: expecting at least 5 paired replicas')
    centred = sums - np.mean(sums)
    s1, s2 = np.sum(centred), np.sum(centred ** 2)
    value = ((n * s2 - s1 ** 2) / (n * (n - 1)) - np.mean(squares)) / lam ** 2
    loo_s1 = s1 - centred
    loo_s2 = s2 - centred ** 2
    loo_mean_q = (np.sum(squares) - squares) / (n - 1)
    replicates = (((n - 1) * loo_s2 - loo_s1 ** 2) / ((n - 1) * (n - 2)) - loo_mean_q) / lam ** 2
    return Estimate('pair_correlation', float(value), _jackknife_stderr(replicates), n)


def write_ensemble_csv(path: str, ensemble: ReplicaEnsemble):
    with open(path, 'w', newline='') as file:
        writer = csv.writer(file)
        writer.writerow(['replica', 'seed'] + ensemble.names)
        for replica, seed in enumerate(ensemble.seeds):
            writer.writerow([replica, seed] + [repr(float(ensemble[name][replica])) for name in ensemble.names])


def read_ensemble_csv(path: str, cfg: ScalingConfig) -> ReplicaEnsemble:
    with open(path, newline='') as file:
        rows = list(csv.reader(file))
    names = rows[0][2:]
    seeds = [int(row[1]) for row in rows[1:]]
    samples = {name: [float(row[2 + i]) for row in rows[1:]] for i, name in enumerate(names)}
    return ReplicaEnsemble(cfg, seeds, samples)


def write_estimates(path: str, estimates: Iterable[Estimate], append: bool = False):
    """Line-delimited JSON records, one estimate per line."""
    with open(path, 'a' if append else 'w') as file:
        for estimate in estimates:
            file.write(json.dumps(estimate.to_json()) + '\n')
