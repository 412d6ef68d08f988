import logging
from typing import Union

import numpy as np
from scipy.integrate import trapezoid

from pykc.kinetic.collision import density_generator
from pykc.kinetic.deterministic import (FieldTrajectory, check_stability, integrate_field, killed_generator,
                                        solve_feynman_kac)
from pykc.kinetic.grid import VelocityField
from pykc.kinetic.kernel import KernelMatrix
from pykc.large_deviations.observable_path import ObservablePath
from pykc.phase_function import PhaseFunction
from pykc.scaling import Estimate, PositivityError, UnsupportedBackendError

logger = logging.getLogger(__name__)

POSITIVITY_TOLERANCE = 1e-10


class BHJSolution:
    """
    Forward density-form χ and backward function-form η of the decoupled Boltzmann-Hamilton-Jacobi system on
    a common time grid. The Hamiltonian pair is q = χ η, p = log η.
    """

    def __init__(self, chi: FieldTrajectory, eta: FieldTrajectory, kernel: KernelMatrix, initial: VelocityField,
                 gamma: VelocityField, theta: PhaseFunction, transport_sign: int):
        if len(chi) != len(eta):
            raise ValueError('invalid argument value: expecting chi and eta on a common time grid')
        self._chi = chi
        self._eta = eta
        self._kernel = kernel
        self._initial = initial
        self._gamma = gamma
        self._theta = theta
        self._sign = transport_sign

    @property
    def times(self):
        return self._chi.times

    @property
    def t(self) -> float:
        return self._chi.times[-1]

    @property
    def chi(self) -> FieldTrajectory:
        return self._chi

    @property
    def eta(self) -> FieldTrajectory:
        return self._eta

    @property
    def kernel(self) -> KernelMatrix:
        return self._kernel

    @property
    def initial(self) -> VelocityField:
        return self._initial

    @property
    def gamma(self) -> VelocityField:
        return self._gamma

    @property
    def theta(self) -> PhaseFunction:
        return self._theta

    @property
    def transport_sign(self) -> int:
        return self._sign

    def q(self, index: int) -> VelocityField:
        chi = self._chi.fields[index]
        return chi.with_values(chi.values * self._eta.fields[index].values, 'density')

    def p(self, index: int) -> VelocityField:
        eta = self._eta.fields[index]
        return eta.with_values(np.log(eta.values), 'function')

    def conserved_pairing(self) -> np.ndarray:
        """∫ χ(s) η(s) at every grid time; constant in s for the exact system."""
        weights = self._kernel.grid.weights
        return np.array([weights @ (c.values * e.values) for c, e in zip(self._chi.fields, self._eta.fields)])

    def to_json(self):
        return {'kind': type(self).__name__, 'times': len(self.times), 't': self.t,
                'theta': self._theta.to_json(), 'transport_sign': self._sign}


def _check_positive(trajectory: FieldTrajectory, name: str, strict: bool):
    for time, field in trajectory:
        values = np.real(field.values)
        scale = max(float(np.max(np.abs(values))), 1.0)
        if strict and np.any(values <= 0) or np.any(values < -POSITIVITY_TOLERANCE * scale):
            raise PositivityError(f'{name} lost positivity at s = {time}: min {np.min(values):.3e}; '
                                  f'reduce the time step')


def solve_bhj(theta: PhaseFunction, gamma_t: VelocityField, phi0: Union[PhaseFunction, VelocityField], t: float,
              kernel: KernelMatrix, dt: float, transport_sign: int = -1) -> BHJSolution:
    """
    Integrates χ forward from M_β φ₀ with the density-form collision and source -θχ, and η backward from
    γ(t) with the function-form collision and source +θη. Both steps are uniformized exponentials of
    Metzler matrices, which keeps χ ≥ 0 and η > 0.

    :param theta: homogeneous bounded source
    :param gamma_t: positive terminal data
    :param phi0: initial perturbation
    :param t: final time
    :param kernel: kernel matrix
    :param dt: largest step
    :param transport_sign: orientation of the transport term in both equations
    """
    if not theta.is_homogeneous or not gamma_t.is_homogeneous:
        raise UnsupportedBackendError('the BHJ solver supports homogeneous theta and gamma only')
    check_stability(kernel, dt)
    grid = kernel.grid
    points = grid.points
    if not np.all(np.isfinite(theta.evaluate(np.linspace(0, t, 5)[:, None], np.zeros_like(points)[None],
                                             points[None]))):
        raise ValueError('invalid argument value: expecting a bounded theta')
    if np.any(gamma_t.to_form('function').values <= 0):
        raise ValueError('invalid argument value: expecting positive terminal data gamma')
    initial = phi0 if isinstance(phi0, VelocityField) else VelocityField.from_phase_function(phi0, grid, kernel.beta)
    chi0 = initial.to_form('density')
    chi = integrate_field(chi0, killed_generator(density_generator(kernel), theta, points), t, dt,
                          transport_sign=transport_sign, record_steps=True)
    eta = solve_feynman_kac(kernel, theta, gamma_t, t, dt, transport_sign, record_steps=True)
    if chi0.is_homogeneous:
        _check_positive(chi, 'chi', strict=False)
    _check_positive(eta, 'eta', strict=True)
    logger.debug(f'BHJ solved on {len(chi)} time points')
    return BHJSolution(chi, eta, kernel, initial, gamma_t, theta, transport_sign)


def hj_action(g: ObservablePath, solution: BHJSolution, tolerance: float = 1e-10) -> Estimate:
    """
    Î(t, g) = I(0) + ∫_0^t ∫ q (∂_s - v·∇_x)(p - g) ds + ∫_0^t ℋ(q(s), p(s)) ds on the solver time grid
    (trapezoid rule), with the initial term ∫ M_β φ₀ e^{p(0)}. The literal ∫ M_β φ₀ e^{g(0)} is reported
    alongside as `initial_g`.

    :param g: observable path from which the solution's θ and γ were derived
    :param solution: solved BHJ system
    :param tolerance: allowed mismatch of the terminal data γ against e^{g(t)}
    """
    if not g.is_homogeneous or not solution.initial.is_homogeneous:
        raise UnsupportedBackendError('the action is evaluated for homogeneous data only')
    kernel = solution.kernel
    grid = kernel.grid
    points = grid.points
    zeros = np.zeros_like(points)
    t = solution.t
    expected = np.exp(g.h.evaluate(t, zeros, points))
    gamma = solution.gamma.to_form('function').values
    if solution.theta.expression != g.theta.expression or \
            np.max(np.abs(gamma - expected)) > tolerance * max(1.0, float(np.max(np.abs(expected)))):
        raise ValueError('invalid argument value: mismatched boundary data between g and the BHJ solution')
    times = np.array(solution.times)
    chi = solution.chi.stacked_values()
    eta = solution.eta.stacked_values()
    log_eta = np.log(eta)
    derivative = np.gradient(log_eta, times, axis=0, edge_order=2) if len(times) > 2 else \
        np.gradient(log_eta, times, axis=0)
    theta = np.array([g.theta.evaluate(s, zeros, points) for s in times])
    transport = (chi * eta * (derivative - theta)) @ grid.weights
    generator = kernel.generator()
    hamiltonian = np.einsum('ni,ni->n', chi * grid.weights, (generator @ eta.T).T)
    initial_density = solution.initial.to_form('density').values
    initial = float(grid.integrate(initial_density * eta[0]))
    initial_g = float(grid.integrate(initial_density * np.exp(g.h.evaluate(0.0, zeros, points))))
    transport_term = float(trapezoid(transport, times))
    hamiltonian_term = float(trapezoid(hamiltonian, times))
    return Estimate(f'action[{g.name}]', initial + transport_term + hamiltonian_term, 0.0, len(times),
                    initial=initial, initial_g=initial_g, transport=transport_term, hamiltonian=hamiltonian_term,
                    t=t)


def solve_bhj_for(g: ObservablePath, phi0: Union[PhaseFunction, VelocityField], t: float, kernel: KernelMatrix,
                  dt: float) -> BHJSolution:
    """Solves the system with θ = (∂_s + sign v·∇_x) g and γ(t) = e^{g(t)} derived from g."""
    gamma = VelocityField.from_phase_function(g.h.exp(), kernel.grid, kernel.beta, t)
    return solve_bhj(g.theta, gamma, phi0, t, kernel, dt, g.transport_sign)
