from typing import Optional

from pykc.kinetic.backends.f1_backend import F1Backend, as_functional
from pykc.kinetic.deterministic import solve_feynman_kac, solve_rb_deterministic
from pykc.kinetic.grid import VelocityField, VelocityGrid
from pykc.kinetic.kernel import KernelMatrix, build_kernel
from pykc.kinetic.paths import Endpoint, ExpEndpoint, PathWeight
from pykc.phase_function import PhaseFunction
from pykc.scaling import Estimate, UnsupportedBackendError


class Deterministic(F1Backend):
    """
    Grid backend. Endpoint observables pair the Rayleigh-Boltzmann solution with h; path weights
    exp(g(t) - ∫θ) are the Feynman-Kac value ∫ M φ₀ η(0) of the backward solve with killing θ and
    terminal data e^{g(t)}.
    """

    def __init__(self, grid: VelocityGrid, dt: float, beta: float = 1.0, kernel: Optional[KernelMatrix] = None):
        self._grid = grid
        self._dt = dt
        self._beta = beta
        self._kernel = kernel

    @property
    def kernel(self) -> KernelMatrix:
        if self._kernel is None:
            self._kernel = build_kernel(self._grid, self._beta)
        return self._kernel

    def estimate(self, functional, phi0, t, rng=None):
        functional = as_functional(functional)
        if isinstance(functional, ExpEndpoint):
            g, theta, sign = functional.h, PhaseFunction.constant(0, self._grid.d), -1
        elif isinstance(functional, PathWeight):
            g, theta, sign = functional.g, functional.theta, functional.transport_sign
        elif isinstance(functional, Endpoint):
            trajectory = solve_rb_deterministic(phi0, t, self._grid, self._dt, self._beta, self.kernel)
            return Estimate(functional.name, trajectory.pair_with(functional.h, t), 0.0, self._grid.n,
                            backend='deterministic', t=t)
        else:
            raise UnsupportedBackendError(f'{type(functional).__name__} is not supported by the grid backend')
        if not (g.is_homogeneous and theta.is_homogeneous):
            raise UnsupportedBackendError('the grid backend evaluates path weights of homogeneous g only')
        gamma = VelocityField.from_phase_function(g.exp(), self._grid, self._beta, t)
        eta = solve_feynman_kac(self.kernel, theta, gamma, t, self._dt, sign, record_steps=False).at(0.0)
        initial = VelocityField.from_phase_function(phi0, self._grid, self._beta).homogeneous_part()
        value = float(self._grid.integrate(initial.to_form('density').values * eta.values))
        return Estimate(functional.name, value, 0.0, self._grid.n, backend='deterministic', t=t)

    def to_json(self):
        return {'kind': type(self).__name__, 'grid': self._grid.to_json(), 'dt': self._dt, 'beta': self._beta}
