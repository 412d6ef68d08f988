import logging
import math
from typing import Optional, Tuple

import numpy as np
from scipy.spatial import cKDTree

from pykc.gas_sim.state import BACKGROUND, TAGGED, SystemState
from pykc.phase_function import PhaseFunction
from pykc.scaling import GrowthClassError, Rng, SamplingError, ScalingConfig, Vector

logger = logging.getLogger(__name__)

DEFAULT_MAX_REJECTIONS = 100000
MAX_INSERTION_RETRIES = 10000


def _overlapping_pairs(positions: Vector, epsilon: float) -> set:
    if len(positions) < 2:
        return set()
    # boxsize makes the tree periodic on the unit torus
    return cKDTree(positions, boxsize=1.0).query_pairs(epsilon)


def _sample_tagged(cfg: ScalingConfig, phi0: PhaseFunction, rng: Rng) -> Tuple[Vector, Vector]:
    """
    Thinning of a Poisson process with intensity λ C (β/β')^{d/2} M_{β'} against λ M_β φ₀, where
    φ₀ <= C exp(a|v|²) is the declared bound and β' = β - 2a. Accepted points are Poisson with intensity
    λ M_β φ₀, so the tagged count is Poisson(λ ∫ M_β φ₀) without computing the integral.
    """
    d, beta = cfg.d, cfg.beta
    bound = phi0.bound
    if bound is None and phi0.is_constant:
        bound = abs(float(phi0.expression))
    if bound is None:
        raise ValueError('invalid argument value: expecting phi0 with a declared bound for thinning')
    growth = phi0.growth
    if not 0 <= growth <= beta / 4:
        raise GrowthClassError(f'phi0 growth {growth} outside [0, beta/4]')
    proposal_beta = beta - 2 * growth
    intensity = cfg.lam * bound * (beta / proposal_beta) ** (d / 2)
    count = rng.poisson(intensity)
    x = rng.random((count, d))
    v = rng.normal(0.0, 1.0 / math.sqrt(proposal_beta), size=(count, d))
    values = phi0.evaluate(0.0, x, v, TAGGED)
    if np.any(values < 0):
        raise ValueError('invalid argument value: expecting phi0 >= 0 for sampling')
    ratio = values * np.exp(-growth * np.sum(v * v, axis=1)) / bound
    if np.any(ratio > 1 + 1e-12):
        raise GrowthClassError(f'declared bound {bound} of phi0 violated: ratio {np.max(ratio)}')
    accepted = rng.random(count) < ratio
    return x[accepted], v[accepted]


def _draw_configuration(cfg: ScalingConfig, phi0: Optional[PhaseFunction], rng: Rng):
    n_background = rng.poisson(cfg.mu)
    x = rng.random((n_background, cfg.d))
    v = cfg.sample_maxwellian(n_background, rng)
    tags = np.full(n_background, BACKGROUND, dtype=int)
    if cfg.lam > 0 and phi0 is not None:
        x_tagged, v_tagged = _sample_tagged(cfg, phi0, rng)
        x = np.concatenate([x, x_tagged])
        v = np.concatenate([v, v_tagged])
        tags = np.concatenate([tags, np.full(len(x_tagged), TAGGED, dtype=int)])
    return x, v, tags


def _insert_sequentially(x: Vector, epsilon: float, rng: Rng) -> Vector:
    placed = np.empty((0, x.shape[1]))
    for point in x:
        for _ in range(MAX_INSERTION_RETRIES):
            if not len(placed) or cKDTree(placed, boxsize=1.0).query(point, distance_upper_bound=epsilon)[0] > epsilon:
                break
            point = rng.random(x.shape[1])
        else:
            raise SamplingError('sequential insertion found no free position', 0.0)
        placed = np.vstack([placed, point])
    return placed


def sample_initial_state(cfg: ScalingConfig, phi0: Optional[PhaseFunction], rng: Rng,
                         max_rejections: int = DEFAULT_MAX_REJECTIONS, exclusion: bool = True,
                         sequential: bool = False, seed: Optional[int] = None) -> SystemState:
    """
    Draws the grand-canonical tagged mixture: Poisson(μ) background particles with Maxwellian velocities and
    Poisson tagged particles with phase density λ M_β φ₀. With `exclusion` the whole configuration is redrawn
    until no pair overlaps, which realizes the law conditioned on admissibility exactly.

    :param cfg: scaling configuration
    :param phi0: nonnegative initial perturbation of the tagged particles (ignored when λ = 0)
    :param rng: random generator
    :param max_rejections: number of configurations drawn before giving up
    :param exclusion: False skips the exclusion condition (ideal-gas proxy)
    :param sequential: approximate fallback that re-places offending particles one at a time
    :param seed: recorded in the returned state
    :return: admissible state at time 0
    """
    if not exclusion:
        return SystemState(cfg, *_draw_configuration(cfg, phi0, rng), seed=seed)
    if sequential:
        logger.warning('sequential insertion does not sample the exact grand-canonical law')
        x, v, tags = _draw_configuration(cfg, phi0, rng)
        return SystemState(cfg, _insert_sequentially(x, cfg.epsilon, rng), v, tags, seed=seed)
    for attempt in range(1, max_rejections + 1):
        x, v, tags = _draw_configuration(cfg, phi0, rng)
        if not _overlapping_pairs(x, cfg.epsilon):
            if attempt > 1:
                logger.debug(f'admissible configuration after {attempt} attempts')
            return SystemState(cfg, x, v, tags, seed=seed)
    raise SamplingError(f'no admissible configuration in {max_rejections} attempts', 1.0 / max_rejections)
