from typing import Optional

from pykc.kinetic.backends.f1_backend import F1Backend
from pykc.kinetic.dyson import estimate_f1_dyson
from pykc.kinetic.paths import DEFAULT_BLOCK_SIZE


class Dyson(F1Backend):
    """Signed Dyson pseudo-trajectory sampler truncated at k_max added partners."""

    def __init__(self, n_samples: int, k_max: int = 10, beta: float = 1.0, d: int = 3,
                 proposal_rate: Optional[float] = None, block_size: int = DEFAULT_BLOCK_SIZE,
                 workers: Optional[int] = 1):
        self._n_samples = n_samples
        self._k_max = k_max
        self._beta = beta
        self._d = d
        self._proposal_rate = proposal_rate
        self._block_size = block_size
        self._workers = workers

    def estimate(self, functional, phi0, t, rng):
        return estimate_f1_dyson(functional, phi0, t, self._k_max, self._n_samples, rng, self._beta, self._d,
                                 self._proposal_rate, self._block_size, self._workers)

    def to_json(self):
        return {'kind': type(self).__name__, 'n_samples': self._n_samples, 'k_max': self._k_max,
                'beta': self._beta, 'd': self._d}
