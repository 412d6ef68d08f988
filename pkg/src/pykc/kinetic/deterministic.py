import logging
import math
from typing import Callable, List, Optional, Sequence, Union

import numpy as np

from pykc.kinetic.collision import uniformized_exp
from pykc.kinetic.grid import VelocityField, VelocityGrid
from pykc.kinetic.kernel import KernelMatrix, build_kernel
from pykc.phase_function import PhaseFunction
from pykc.scaling import StabilityError, Vector

logger = logging.getLogger(__name__)

STABILITY_FACTOR = 0.1


class FieldTrajectory:
    """Velocity fields at increasing times."""

    def __init__(self, times: Sequence[float], fields: Sequence[VelocityField]):
        if len(times) != len(fields):
            raise ValueError('invalid argument value: expecting one field per time')
        if np.any(np.diff(times) <= 0):
            raise ValueError('invalid argument value: expecting increasing times')
        self._times = [float(t) for t in times]
        self._fields = list(fields)

    @property
    def times(self) -> List[float]:
        return self._times

    @property
    def fields(self) -> List[VelocityField]:
        return self._fields

    def at(self, t: float, tolerance: float = 1e-12) -> VelocityField:
        for time, field in zip(self._times, self._fields):
            if abs(time - t) <= tolerance:
                return field
        raise ValueError(f'invalid argument value: no snapshot at t = {t}')

    def pair_with(self, h: PhaseFunction, t: float) -> float:
        return self.at(t).pair_with(h, t)

    def snapshots(self):
        """(time, field) pairs, the measure path form used by filtered means."""
        return list(zip(self._times, self._fields))

    def stacked_values(self) -> Vector:
        return np.array([field.values for field in self._fields])

    def __len__(self):
        return len(self._times)

    def __iter__(self):
        return iter(zip(self._times, self._fields))

    def to_json(self):
        return {'kind': type(self).__name__, 'times': self._times}


def check_stability(kernel: KernelMatrix, dt: float):
    """Raises StabilityError unless dt <= 0.1 / max ν on the grid."""
    limit = STABILITY_FACTOR / float(np.max(kernel.loss))
    if dt > limit:
        raise StabilityError(f'time step {dt} exceeds the stability limit {limit:.6g} = 0.1 / max(nu)')


def _transport(values: Vector, field: VelocityField, h: float, sign: float) -> Vector:
    """Exact free transport of the Fourier coefficients over a signed time h: c_k <- c_k exp(-sign 2πi k·v h)."""
    if field.is_homogeneous:
        return values
    phases = np.exp(-sign * 2j * math.pi * h * (field.modes @ field.grid.points.T))
    return values * phases


def _collide(matrix: Vector, values: Vector, h: float) -> Vector:
    if values.ndim == 1:
        return uniformized_exp(matrix, values, h)
    return uniformized_exp(matrix, values.T, h).T


def _step_count(span: float, dt: float) -> int:
    return max(1, math.ceil(span / dt - 1e-9))


def integrate_field(field: VelocityField, generator: Callable[[float], Vector], t_end: float, dt: float,
                    output_times: Optional[Sequence[float]] = None, transport_sign: int = 1,
                    backward: bool = False, record_steps: bool = False) -> FieldTrajectory:
    """
    Strang splitting of (∂_s + sign v·∇_x) f = A(s) f with exact per-mode transport half steps around a
    uniformized exp(h A(s_mid)) collision step. A(s) must be Metzler. Backward integration starts from
    `field` at t_end and solves the adjoint equation ∂_s f + sign v·∇_x f + A(s) f = 0 down to 0.

    :param field: initial (forward) or terminal (backward) data
    :param generator: s -> (N, N) matrix A(s)
    :param t_end: final time
    :param dt: largest step
    :param output_times: snapshot times in [0, t_end]; default t_end (forward) or 0 (backward)
    :param transport_sign: orientation of the free transport term
    :param backward: integrate from t_end down to 0
    :param record_steps: also keep every intermediate step
    :return: trajectory in increasing time order
    """
    if output_times is None:
        output_times = [0.0 if backward else t_end]
    targets = sorted({float(s) for s in output_times}, reverse=backward)
    if any(s < 0 or s > t_end + 1e-12 for s in targets):
        raise ValueError(f'invalid argument value: expecting output times in [0, {t_end}]')
    current = t_end if backward else 0.0
    direction = -1.0 if backward else 1.0
    values = field.values
    times, fields = [], []

    def record(s):
        times.append(s)
        fields.append(field.with_values(values))

    if record_steps or current in targets:
        record(current)
    for target in targets:
        span = abs(target - current)
        if span == 0:
            continue
        n = _step_count(span, dt)
        h = span / n
        for i in range(n):
            middle = current + direction * h / 2
            values = _transport(values, field, direction * h / 2, transport_sign)
            values = _collide(generator(middle), values, h)
            values = _transport(values, field, direction * h / 2, transport_sign)
            current = target if i == n - 1 else current + direction * h
            if record_steps and i < n - 1:
                record(current)
        record(current)
    if backward:
        times.reverse()
        fields.reverse()
    unique_times, unique_fields = [], []
    for s, f in zip(times, fields):
        if not unique_times or abs(s - unique_times[-1]) > 1e-12:
            unique_times.append(s)
            unique_fields.append(f)
    return FieldTrajectory(unique_times, unique_fields)


def solve_rb_deterministic(phi0: Union[PhaseFunction, VelocityField], times: Union[float, Sequence[float]],
                           grid: VelocityGrid, dt: float, beta: float = 1.0,
                           kernel: Optional[KernelMatrix] = None, record_steps: bool = False) -> FieldTrajectory:
    """
    Solves ∂_t φ + v·∇_x φ = L φ on the grid, φ(0) = φ₀, by Strang splitting: exact transport per Fourier mode
    and the collision step exp(h G) of the function-form generator, applied by uniformization. G is the
    conjugate of the symmetric-form operator K - ν̃, so the step equals the exponential integrator on
    R = M^{1/2} φ; it keeps φ ≡ 1 fixed, conserves ∫ M φ and obeys the maximum principle.

    :param phi0: initial perturbation, projected onto the grid (and its Fourier modes) if symbolic
    :param times: output time(s)
    :param grid: velocity grid (d = 3)
    :param dt: largest step, at most 0.1 / max ν
    :param beta: inverse temperature
    :param kernel: prebuilt kernel on the grid
    :return: function-form snapshots at the output times
    """
    kernel = kernel if kernel is not None else build_kernel(grid, beta)
    check_stability(kernel, dt)
    field = phi0 if isinstance(phi0, VelocityField) else VelocityField.from_phase_function(phi0, grid, beta)
    field = field.to_form('function')
    times = [times] if np.isscalar(times) else list(times)
    generator = kernel.generator()
    trajectory = integrate_field(field, lambda s: generator, max(times), dt, times, record_steps=record_steps)
    logger.debug(f'deterministic solve to t = {max(times)} on {grid.n} velocities')
    return trajectory


def solve_feynman_kac(kernel: KernelMatrix, theta: PhaseFunction, gamma: VelocityField, t: float, dt: float,
                      transport_sign: int = -1, record_steps: bool = True) -> FieldTrajectory:
    """
    Backward solve of ∂_s η + sign v·∇_x η + L η - θ η = 0, η(t) = γ, so that
    η(s, z) = E[γ(Z_t) exp(-∫_s^t θ(r, Z_r) dr)] along the linear Boltzmann process started at z at time s.
    θ must not depend on x.
    """
    if not theta.is_homogeneous:
        raise ValueError('invalid argument value: expecting theta independent of x')
    check_stability(kernel, dt)
    points = kernel.grid.points
    generator = kernel.generator()

    return integrate_field(gamma.to_form('function'), killed_generator(generator, theta, points), t, dt,
                           transport_sign=transport_sign, backward=True, record_steps=record_steps)


def killed_generator(generator: Vector, theta: PhaseFunction, points: Vector) -> Callable[[float], Vector]:
    """s -> generator - diag(θ(s, ·)), built once when θ does not depend on time."""
    zeros = np.zeros_like(points)
    if not theta.is_time_dependent:
        constant = generator - np.diag(theta.evaluate(0.0, zeros, points))
        return lambda s: constant
    return lambda s: generator - np.diag(theta.evaluate(s, zeros, points))
