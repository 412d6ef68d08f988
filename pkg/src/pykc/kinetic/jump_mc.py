import logging
import math
from typing import List, Optional, Sequence

import numpy as np

from pykc.geometry import sample_flux_angles, scatter, uniform_sphere
from pykc.kinetic.kernel import loss_rate, mean_speed
from pykc.kinetic.paths import (DEFAULT_BLOCK_SIZE, Endpoint, PathBatch, PathFunctional, block_seeds,
                                combine_blocks, map_blocks)
from pykc.phase_function import PhaseFunction
from pykc.scaling import Estimate, RejectionBudgetError, Rng, Vector

logger = logging.getLogger(__name__)

DEFAULT_MAX_PARTNER_ROUNDS = 1000


def sample_partners(v: Vector, beta: float, rng: Rng, max_rounds: int = DEFAULT_MAX_PARTNER_ROUNDS) -> Vector:
    """
    Draws v_c with density ∝ |v - v_c| M_β(v_c) for every row of v. Proposals come from the mixture
    ∝ (|v| + |v_c|) M_β(v_c), i.e. M_β with probability |v| / (|v| + E|V|) and the speed-biased |v_c| M_β
    otherwise, and are accepted with probability |v - v_c| / (|v| + |v_c|) <= 1.
    """
    n, d = v.shape
    speed = np.linalg.norm(v, axis=1)
    average = mean_speed(beta, d)
    partners = np.empty_like(v)
    pending = np.arange(n)
    for _ in range(max_rounds):
        if not len(pending):
            return partners
        m = len(pending)
        from_maxwellian = rng.random(m) < speed[pending] / (speed[pending] + average)
        proposal = rng.normal(0.0, 1 / math.sqrt(beta), size=(m, d))
        # |v_c| M_β has chi-distributed speed with d + 1 degrees of freedom
        biased = np.sqrt(rng.chisquare(d + 1, size=m) / beta)[:, None] * uniform_sphere(m, d, rng)
        proposal[~from_maxwellian] = biased[~from_maxwellian]
        proposal_speed = np.linalg.norm(proposal, axis=1)
        relative = np.linalg.norm(v[pending] - proposal, axis=1)
        accepted = rng.random(m) * (speed[pending] + proposal_speed) < relative
        partners[pending[accepted]] = proposal[accepted]
        pending = pending[~accepted]
    raise RejectionBudgetError(f'{len(pending)} partner draws still rejected after {max_rounds} rounds')


def simulate_jump_paths(x0: Vector, v0: Vector, t: float, beta: float, rng: Rng, direction: int = 1,
                        max_rounds: int = DEFAULT_MAX_PARTNER_ROUNDS):
    """
    Velocity-jump process of the linear Boltzmann generator: free flight, jumps at rate ν_β(v) (exact since
    v is constant between jumps), partner from |v - v_c| M_β, angle from the flux density, v' from scatter.
    With direction = -1 positions move along -v, which traces the backward characteristics.

    :return: (PathBatch over [0, t], jump counts)
    """
    x0 = np.asarray(x0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    n, d = v0.shape
    jump_times: List[list] = [[] for _ in range(n)]
    velocities: List[list] = [[v] for v in v0]
    clock = np.zeros(n)
    current = v0.copy()
    active = np.arange(n)
    while len(active):
        rates = loss_rate(current[active], beta, d)
        clock[active] += rng.exponential(1.0, size=len(active)) / rates
        active = active[clock[active] < t]
        if not len(active):
            break
        partners = sample_partners(current[active], beta, rng, max_rounds)
        omega, _ = sample_flux_angles(partners - current[active], rng)
        current[active] = scatter(current[active], partners, omega)[0]
        for i in active:
            jump_times[i].append(clock[i])
            velocities[i].append(current[i].copy())
    counts = np.array([len(times) for times in jump_times])
    batch = PathBatch.from_jumps(x0, [np.array(times) for times in jump_times],
                                 [direction * np.array(vs) for vs in velocities], t)
    return batch, counts


def _jump_block(size: int, seed, phi0: PhaseFunction, functionals: Sequence[PathFunctional], t: float,
                beta: float, d: int):
    rng = np.random.default_rng(seed)
    x = rng.random((size, d))
    v = rng.normal(0.0, 1 / math.sqrt(beta), size=(size, d))
    batch, counts = simulate_jump_paths(x, v, t, beta, rng, direction=-1)
    end_x, end_v = batch.endpoint()
    weights = phi0.evaluate(0.0, end_x, -end_v)
    values = []
    for functional in functionals:
        if isinstance(functional, Endpoint):
            values.append(functional.h.evaluate(t, x, v) * weights)
        else:
            raise ValueError('invalid argument value: backward paths support endpoint observables only')
    return np.array(values), counts


class _BlockTask:
    def __init__(self, phi0, functionals, t, beta, d):
        self._arguments = (phi0, functionals, t, beta, d)

    def __call__(self, size, seed):
        return _jump_block(size, seed, *self._arguments)


def solve_rb_jump_mc(phi0: PhaseFunction, observables: Sequence[PhaseFunction], t: float, n_samples: int,
                     rng: Rng, beta: float = 1.0, d: int = 3, block_size: int = DEFAULT_BLOCK_SIZE,
                     workers: Optional[int] = 1) -> List[Estimate]:
    """
    Estimates ⟨M_β φ(t), h⟩ = E_{z ~ M_β}[h(t, z) φ₀(Z_t)] for every observable, where Z is the jump process
    run along the backward characteristic from z. The last estimate is the mean jump count.

    :param phi0: initial perturbation (signs allowed)
    :param observables: observables h evaluated at time t
    :param t: final time
    :param n_samples: number of sampled paths
    :param rng: random generator seeding the sample blocks
    :return: one Estimate per observable followed by the 'jumps' estimate
    """
    if n_samples < 2:
        raise ValueError(f'invalid argument value: expecting n_samples >= 2, got {n_samples}')
    functionals = [Endpoint(h) for h in observables]
    blocks = block_seeds(rng, n_samples, block_size)
    results = map_blocks(_BlockTask(phi0, functionals, t, beta, d), blocks, workers)
    values = np.concatenate([r[0] for r in results], axis=1)
    counts = combine_blocks([r[1] for r in results])
    estimates = [Estimate.from_samples(h.name, row, backend='jump', t=t) for h, row in zip(observables, values)]
    estimates.append(Estimate.from_samples('jumps', counts, backend='jump', t=t))
    logger.info(f'jump MC: {n_samples} paths, mean jump count {np.mean(counts):.4f}')
    return estimates


def forward_path_block(size: int, seed, phi0: PhaseFunction, functional: PathFunctional, t: float, beta: float,
                       d: int) -> Vector:
    """
    Values of ∫ M φ₀ E[H(Z^{[0,t]})] per sample for forward paths started from M_β with uniform positions:
    the estimator of ∫F₁[H](t).
    """
    rng = np.random.default_rng(seed)
    x = rng.random((size, d))
    v = rng.normal(0.0, 1 / math.sqrt(beta), size=(size, d))
    batch, _ = simulate_jump_paths(x, v, t, beta, rng, direction=1)
    return phi0.evaluate(0.0, x, v) * functional.evaluate(batch)
