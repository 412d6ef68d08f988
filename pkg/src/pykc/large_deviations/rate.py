import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Sequence

import numpy as np

from pykc.kinetic.backends import F1Backend
from pykc.large_deviations.observable_path import ObservablePath
from pykc.phase_function import PhaseFunction, parse_expression
from pykc.scaling import Estimate, Rng
from pykc.statistics import DEFAULT_DT_MAX, as_measure, filtered_mean

logger = logging.getLogger(__name__)

DEFAULT_MASS_TOLERANCE = 1e-6


def rate_direct(g: ObservablePath, phi0: PhaseFunction, t: float, backend: F1Backend, rng: Optional[Rng]) -> Estimate:
    """
    I(t, g) = ∫ F₁[exp(g(t, z_t) - ∫_0^t θ(s, z_s) ds)](t), evaluated by the given F₁ backend.

    :param g: observable path of bounded transport
    :param phi0: initial perturbation
    :param t: final time
    :param backend: jump, dyson or deterministic backend
    :param rng: random generator, unused by the deterministic backend
    """
    estimate = backend.estimate(g.weight(), phi0, t, rng)
    return Estimate(f'I[{g.name}]', estimate.value, estimate.stderr, estimate.n, **estimate.extra)


def _snapshots(v_path):
    return v_path.snapshots() if hasattr(v_path, 'snapshots') else list(v_path)


class RateEvaluation:
    """
    Lower bound Λ̂ = max_h {h, 𝔳} - I(t, h) + 1 over a finite candidate list, with the per-candidate table.
    The bound under the opposite convention ({h, 𝔳} - I(t, h) - 1) is carried alongside.
    """

    def __init__(self, candidates: Sequence[ObservablePath], pairings: Sequence[float],
                 rates: Sequence[Estimate]):
        if not candidates:
            raise ValueError('invalid argument value: expecting at least one candidate')
        if not len(candidates) == len(pairings) == len(rates):
            raise ValueError('invalid argument value: expecting one pairing and one rate per candidate')
        self._candidates = list(candidates)
        self._pairings = np.asarray(pairings, dtype=float)
        self._rates = list(rates)
        self._values = self._pairings - np.array([r.value for r in rates]) + 1

    @property
    def candidates(self) -> List[ObservablePath]:
        return self._candidates

    @property
    def values(self) -> np.ndarray:
        return self._values

    @property
    def lower_bound(self) -> float:
        return float(np.max(self._values))

    @property
    def minus_one_bound(self) -> float:
        return self.lower_bound - 2

    @property
    def argmax(self) -> ObservablePath:
        return self._candidates[int(np.argmax(self._values))]

    @property
    def stderr(self) -> float:
        return self._rates[int(np.argmax(self._values))].stderr

    def rows(self):
        return [{'candidate': index, 'name': candidate.name, 'pairing': float(pairing), 'rate': rate.value,
                 'rate_stderr': rate.stderr, 'value': float(value)}
                for index, (candidate, pairing, rate, value)
                in enumerate(zip(self._candidates, self._pairings, self._rates, self._values))]

    def write_csv(self, path: str):
        rows = self.rows()
        with open(path, 'w', newline='') as file:
            writer = csv.DictWriter(file, fieldnames=list(rows[0].keys()))
            writer.writeheader()
            writer.writerows(rows)

    def to_json(self):
        return {'kind': type(self).__name__, 'lower_bound': self.lower_bound,
                'minus_one_bound': self.minus_one_bound, 'argmax': self.argmax.name, 'table': self.rows()}


def legendre_rate(v_path, t: float, candidates: Sequence[ObservablePath], phi0: PhaseFunction,
                  backend: F1Backend, rng: Optional[Rng] = None, mass_tolerance: float = DEFAULT_MASS_TOLERANCE,
                  dt_max: float = DEFAULT_DT_MAX, workers: Optional[int] = 1) -> RateEvaluation:
    """
    Evaluates the Legendre lower bound of the rate function at the measure path 𝔳 over a candidate family.
    Candidates are evaluated concurrently with independent child generators; the table keeps list order.

    :param v_path: (time, measure) snapshots covering [0, t], or a FieldTrajectory
    :param t: final time
    :param candidates: observable paths, each certified by the caller
    :param phi0: initial perturbation of mass ∫ M_β φ₀ = 1
    :param backend: F₁ backend for the direct rate
    :param rng: random generator for stochastic backends
    :param mass_tolerance: allowed deviation of the initial mass from 1
    :param dt_max: largest snapshot gap in the pairing quadrature
    :param workers: concurrent candidate evaluations
    """
    if not candidates:
        raise ValueError('invalid argument value: expecting a nonempty candidate list')
    snapshots = _snapshots(v_path)
    first = min(snapshots, key=lambda pair: pair[0])
    mass = float(as_measure(first[1]).integrate(PhaseFunction.constant(1, phi0.d), first[0]))
    if abs(mass - 1) > mass_tolerance:
        raise ValueError(f'invalid argument value: expecting unit initial mass, got {mass}')
    rng = rng if rng is not None else np.random.default_rng(0)
    seeds = np.random.SeedSequence(int(rng.integers(2 ** 63))).spawn(len(candidates))

    def evaluate(index: int):
        candidate = candidates[index]
        pairing = filtered_mean(snapshots, candidate.h, t, dt_max, candidate.transport_sign)
        rate = rate_direct(candidate, phi0, t, backend, np.random.default_rng(seeds[index]))
        logger.debug(f'candidate {candidate.name}: pairing {pairing:.6g}, rate {rate.value:.6g}')
        return pairing, rate

    if workers is None or workers <= 1:
        results = [evaluate(i) for i in range(len(candidates))]
    else:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            results = list(executor.map(evaluate, range(len(candidates))))
    evaluation = RateEvaluation(candidates, [r[0] for r in results], [r[1] for r in results])
    logger.info(f'Legendre lower bound {evaluation.lower_bound:.6g} over {len(candidates)} candidates')
    return evaluation


def candidate_family(n: int, beta: float = 1.0, d: int = 3, amplitude: float = 0.2, seed: int = 0,
                     homogeneous: bool = True) -> List[ObservablePath]:
    """
    Deterministic family of n scaled basis observables: the zero path, constants, velocity monomials and
    |v|² times a Gaussian of width β/4, and (unless homogeneous) single spatial modes times the same
    Gaussian. Scales are drawn uniformly in [-amplitude, amplitude].
    """
    if n < 1:
        raise ValueError('invalid argument value: expecting n >= 1')
    c = beta / 4
    basis = ['1', f'(* (norm2) (gauss {c}))'] + [f'(* v{i} (gauss {c}))' for i in range(d)]
    if not homogeneous:
        basis += [f'(* (cos (* 2 pi x{i})) (gauss {c}))' for i in range(d)]
    rng = np.random.default_rng(seed)
    family = [ObservablePath.zero(d)]
    for index in range(n - 1):
        text = basis[index % len(basis)]
        scale = float(rng.uniform(-amplitude, amplitude))
        h = parse_expression(f'(* {scale!r} {text})', d)
        # covers the sup of every basis element and of its transport derivative
        constant = abs(scale) * (1 + 2 * np.pi * (2 / (c * np.e)))
        family.append(ObservablePath(h, constant, name=f'c{index}'))
    return family
