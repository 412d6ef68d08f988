from typing import Optional

import numpy as np

from pykc.kinetic.backends.f1_backend import F1Backend, as_functional
from pykc.kinetic.jump_mc import forward_path_block
from pykc.kinetic.paths import DEFAULT_BLOCK_SIZE, block_seeds, map_blocks
from pykc.scaling import Estimate


class _BlockTask:
    def __init__(self, *arguments):
        self._arguments = arguments

    def __call__(self, size, seed):
        return forward_path_block(size, seed, *self._arguments)


class Jump(F1Backend):
    """Forward paths of the velocity-jump process started from M_β with uniform positions."""

    def __init__(self, n_samples: int, beta: float = 1.0, d: int = 3, block_size: int = DEFAULT_BLOCK_SIZE,
                 workers: Optional[int] = 1):
        self._n_samples = n_samples
        self._beta = beta
        self._d = d
        self._block_size = block_size
        self._workers = workers

    def estimate(self, functional, phi0, t, rng):
        functional = as_functional(functional)
        blocks = block_seeds(rng, self._n_samples, self._block_size)
        values = map_blocks(_BlockTask(phi0, functional, t, self._beta, self._d), blocks, self._workers)
        return Estimate.from_samples(functional.name, np.concatenate(values), backend='jump', t=t)

    def to_json(self):
        return {'kind': type(self).__name__, 'n_samples': self._n_samples, 'beta': self._beta, 'd': self._d}
