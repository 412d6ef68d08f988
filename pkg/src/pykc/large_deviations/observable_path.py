from typing import Dict, Optional

import numpy as np

from pykc.kinetic.paths import PathWeight
from pykc.phase_function import PhaseFunction, quasi_random_points
from pykc.scaling import GrowthClassError

DEFAULT_CERTIFICATE_POINTS = 10000


class ObservablePath:
    """
    Time-dependent observable g(s, x, v) of bounded transport: (g - β|v|²/4)_+ and |(∂_s + sign v·∇_x) g|
    stay below `constant`. The default sign -1 is the transport orientation of the Hamilton-Jacobi system.
    """

    def __init__(self, h: PhaseFunction, constant: float = np.inf, transport_sign: int = -1,
                 name: Optional[str] = None):
        self._h = h
        self._constant = float(constant)
        self._sign = transport_sign
        self._theta = h.transport_derivative(transport_sign)
        self._name = name

    @staticmethod
    def zero(d: int = 3):
        return ObservablePath(PhaseFunction.constant(0, d), 0.0, name='0')

    @property
    def h(self) -> PhaseFunction:
        return self._h

    @property
    def theta(self) -> PhaseFunction:
        return self._theta

    @property
    def constant(self) -> float:
        return self._constant

    @property
    def transport_sign(self) -> int:
        return self._sign

    @property
    def name(self) -> str:
        return self._name if self._name is not None else self._h.name

    @property
    def is_homogeneous(self) -> bool:
        return self._h.is_homogeneous

    def weight(self) -> PathWeight:
        """Trajectory functional exp(g(t, z_t) - ∫_0^t θ(s, z_s) ds)."""
        return PathWeight(self._h, self._sign)

    def scaled(self, factor: float):
        return ObservablePath(self._h * factor, self._constant * abs(factor), self._sign,
                              f'{factor}*{self.name}')

    def certify(self, beta: float, t: float, n: int = DEFAULT_CERTIFICATE_POINTS, seed: int = 0) -> Dict[str, float]:
        """
        Checks the bounded-transport class on n scrambled Sobol points of [0, t] × torus × velocities.

        :return: the observed suprema of (g - β|v|²/4)_+ and |θ|
        """
        s, x, v, _ = quasi_random_points(self._h.d, n, beta, t, seed)
        excess = np.maximum(self._h.evaluate(s, x, v) - beta * np.sum(v * v, axis=1) / 4, 0.0)
        transport = np.abs(self._theta.evaluate(s, x, v))
        observed = {'growth': float(np.max(excess)), 'transport': float(np.max(transport))}
        for name, value in observed.items():
            if not np.isfinite(value) or value > self._constant:
                raise GrowthClassError(f'{self.name}: {name} supremum {value} exceeds {self._constant}')
        return observed

    def to_json(self):
        return {'kind': type(self).__name__, 'h': self._h.to_json(), 'constant': self._constant,
                'transport_sign': self._sign}
