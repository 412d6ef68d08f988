import math
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, List, Optional

import numpy as np
from numpy.polynomial.legendre import leggauss

from pykc.geometry import wrap
from pykc.phase_function import PhaseFunction
from pykc.scaling import Rng, Vector

DEFAULT_BLOCK_SIZE = 10000
SEGMENT_NODES = 4


class PathBatch:
    """
    Piecewise-linear phase-space paths of one particle on [0, t], stacked over samples. Sample n starts at
    `start[n]` and moves with `velocities[n, k]` on [breaks[n, k], breaks[n, k+1]]; unused trailing segments
    have zero length.
    """

    def __init__(self, start: Vector, breaks: Vector, velocities: Vector):
        self._start = np.asarray(start, dtype=float)
        self._breaks = np.asarray(breaks, dtype=float)
        self._velocities = np.asarray(velocities, dtype=float)
        if self._breaks.shape[1] != self._velocities.shape[1] + 1:
            raise ValueError('invalid argument value: expecting one more break than segments')
        if np.any(np.diff(self._breaks, axis=1) < 0):
            raise ValueError('invalid argument value: expecting nondecreasing break times')

    @staticmethod
    def from_jumps(start: Vector, jump_times: List[Vector], velocities: List[Vector], t: float):
        """
        Assembles a batch from per-sample jump times (increasing, in (0, t)) and velocity lists (one more
        entry than jumps).
        """
        n = len(start)
        segments = max([len(v) for v in velocities], default=1)
        d = np.shape(start)[1]
        breaks = np.full((n, segments + 1), float(t))
        breaks[:, 0] = 0.0
        stacked = np.zeros((n, segments, d))
        for i, (times, vs) in enumerate(zip(jump_times, velocities)):
            breaks[i, 1:1 + len(times)] = times
            stacked[i, :len(vs)] = vs
            stacked[i, len(vs):] = vs[-1]
        return PathBatch(start, breaks, stacked)

    @property
    def n(self) -> int:
        return len(self._start)

    @property
    def t(self) -> float:
        return float(self._breaks[0, -1]) if self.n else 0.0

    @property
    def start(self) -> Vector:
        return self._start

    @property
    def breaks(self) -> Vector:
        return self._breaks

    @property
    def velocities(self) -> Vector:
        return self._velocities

    @property
    def jump_counts(self) -> Vector:
        lengths = np.diff(self._breaks, axis=1) > 0
        changes = np.any(self._velocities[:, 1:] != self._velocities[:, :-1], axis=2) & lengths[:, 1:]
        return np.sum(changes, axis=1)

    def _break_positions(self) -> Vector:
        steps = np.diff(self._breaks, axis=1)[:, :, None] * self._velocities
        return self._start[:, None, :] + np.concatenate(
            [np.zeros_like(steps[:, :1]), np.cumsum(steps, axis=1)], axis=1)

    def initial(self):
        return wrap(self._start), self._velocities[:, 0]

    def endpoint(self):
        return wrap(self._break_positions()[:, -1]), self._velocities[:, -1]

    def integrate(self, f: PhaseFunction, nodes: int = SEGMENT_NODES) -> Vector:
        """∫_0^t f(s, x(s), v(s)) ds per sample, by Gauss-Legendre quadrature on every segment."""
        if f.is_zero:
            return np.zeros(self.n)
        points, weights = leggauss(nodes)
        lower = self._breaks[:, :-1]
        length = np.diff(self._breaks, axis=1)
        positions = self._break_positions()[:, :-1]
        offsets = (points + 1) / 2
        s = lower[:, :, None] + length[:, :, None] * offsets
        x = positions[:, :, None, :] + (length[:, :, None] * offsets)[..., None] * self._velocities[:, :, None, :]
        v = np.broadcast_to(self._velocities[:, :, None, :], x.shape)
        values = f.evaluate(s, wrap(x), v)
        return np.sum(values * weights * (length[:, :, None] / 2), axis=(1, 2))


class PathFunctional:
    """Function of a whole particle trajectory z^{[0,t]}, evaluated on a PathBatch."""

    @property
    def name(self) -> str:
        return type(self).__name__

    def evaluate(self, batch: PathBatch) -> Vector:
        """
        :param batch: sampled trajectories
        :return: one value per trajectory
        """
        raise NotImplementedError

    def to_json(self):
        raise NotImplementedError


class Endpoint(PathFunctional):
    """H(z^{[0,t]}) = h(t, z(t))."""

    def __init__(self, h: PhaseFunction):
        self._h = h

    @property
    def name(self) -> str:
        return self._h.name

    @property
    def h(self) -> PhaseFunction:
        return self._h

    def evaluate(self, batch: PathBatch) -> Vector:
        x, v = batch.endpoint()
        return self._h.evaluate(batch.t, x, v)

    def to_json(self):
        return {'kind': type(self).__name__, 'h': self._h.to_json()}


class ExpEndpoint(Endpoint):
    """H(z^{[0,t]}) = exp(h(t, z(t)))."""

    def evaluate(self, batch: PathBatch) -> Vector:
        return np.exp(super().evaluate(batch))


class PathWeight(PathFunctional):
    """
    exp(g(t, z(t)) - ∫_0^t θ(s, z(s)) ds) with θ = (∂_s + sign v·∇_x) g; the default sign -1 is the
    transport orientation of the Hamilton-Jacobi system.
    """

    def __init__(self, g: PhaseFunction, transport_sign: int = -1):
        self._g = g
        self._sign = transport_sign
        self._theta = g.transport_derivative(transport_sign)

    @property
    def name(self) -> str:
        return f'weight[{self._g.name}]'

    @property
    def g(self) -> PhaseFunction:
        return self._g

    @property
    def theta(self) -> PhaseFunction:
        return self._theta

    @property
    def transport_sign(self) -> int:
        return self._sign

    def evaluate(self, batch: PathBatch) -> Vector:
        x, v = batch.endpoint()
        return np.exp(self._g.evaluate(batch.t, x, v) - batch.integrate(self._theta))

    def to_json(self):
        return {'kind': type(self).__name__, 'g': self._g.to_json(), 'transport_sign': self._sign}


def block_seeds(rng: Rng, n_samples: int, block_size: int = DEFAULT_BLOCK_SIZE):
    """
    Splits n_samples into fixed-size blocks with counter-derived seed sequences, so results do not depend on
    the number of workers.

    :return: list of (block size, SeedSequence)
    """
    entropy = int(rng.integers(2 ** 63))
    sizes = [block_size] * (n_samples // block_size)
    if n_samples % block_size:
        sizes.append(n_samples % block_size)
    return [(size, np.random.SeedSequence(entropy, spawn_key=(index,))) for index, size in enumerate(sizes)]


def map_blocks(function: Callable, blocks: list, workers: Optional[int] = 1) -> list:
    """Applies function(size, seed_sequence) to every block, in block order, optionally in worker processes."""
    if workers is None or workers <= 1 or len(blocks) <= 1:
        return [function(size, seed) for size, seed in blocks]
    with ProcessPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(function, *zip(*blocks)))


def combine_blocks(values: List[Vector]) -> Vector:
    return np.concatenate(values) if values else np.zeros(0)


def standard_error(values: Vector) -> float:
    return float(np.std(values, ddof=1) / math.sqrt(len(values))) if len(values) > 1 else 0.0
