import logging
from typing import Optional, Sequence, Union

import numpy as np
from scipy.sparse.linalg import expm_multiply

from pykc.kinetic.collision import bias_values, biased_generator
from pykc.kinetic.deterministic import STABILITY_FACTOR, FieldTrajectory, integrate_field
from pykc.kinetic.grid import VelocityField
from pykc.kinetic.kernel import KernelMatrix
from pykc.large_deviations.observable_path import ObservablePath
from pykc.phase_function import PhaseFunction
from pykc.scaling import StabilityError, UnsupportedBackendError

logger = logging.getLogger(__name__)


class BiasedPath:
    """Snapshots of a biased linear Boltzmann path with the largest one-step residual against expm_multiply."""

    def __init__(self, trajectory: FieldTrajectory, p: ObservablePath, residual: float):
        self._trajectory = trajectory
        self._p = p
        self._residual = float(residual)

    @property
    def trajectory(self) -> FieldTrajectory:
        return self._trajectory

    @property
    def times(self):
        return self._trajectory.times

    @property
    def p(self) -> ObservablePath:
        return self._p

    @property
    def residual(self) -> float:
        return self._residual

    def at(self, t: float) -> VelocityField:
        return self._trajectory.at(t)

    def snapshots(self):
        return self._trajectory.snapshots()

    def to_json(self):
        return {'kind': type(self).__name__, 'p': self._p.to_json(), 'times': self.times,
                'residual': self._residual}


def _as_path(p: Union[ObservablePath, PhaseFunction]) -> ObservablePath:
    return p if isinstance(p, ObservablePath) else ObservablePath(p)


def _biased_matrix(kernel: KernelMatrix, p: ObservablePath):
    return lambda s: biased_generator(kernel, bias_values(p.h, kernel, s))


def solve_biased_path(p: Union[ObservablePath, PhaseFunction], v0: VelocityField, t: float, kernel: KernelMatrix,
                      dt: float, output_times: Optional[Sequence[float]] = None) -> BiasedPath:
    """
    Integrates ∂_s 𝔳 = ∫B M(v_c)[𝔳(v') e^{p(v) - p(v')} - 𝔳(v) e^{p(v') - p(v)}] forward from 𝔳(0) = v0. Every
    step is a uniformized exponential of the Metzler matrix at the step midpoint; the reported residual is the
    largest relative deviation of a step from the scipy exponential of the same matrix.

    :param p: homogeneous bias of growth at most β/4
    :param v0: homogeneous function-form initial field
    :param t: final time
    :param kernel: kernel matrix on the field grid
    :param dt: largest step, at most 0.1 over the largest exit rate of the biased matrix
    :param output_times: times that must appear among the recorded steps
    """
    p = _as_path(p)
    if not p.is_homogeneous or not v0.is_homogeneous:
        raise UnsupportedBackendError('biased paths are solved for homogeneous p and 𝔳 only')
    matrix = _biased_matrix(kernel, p)
    sampled = [matrix(s) for s in np.linspace(0, t, 3)]
    limit = STABILITY_FACTOR / max(float(np.max(-np.diag(m))) for m in sampled)
    if dt > limit:
        raise StabilityError(f'time step {dt} exceeds the biased stability limit {limit:.6g}')
    field = v0.to_form('function')
    trajectory = integrate_field(field, matrix, t, dt, output_times, record_steps=True)
    residual = 0.0
    snapshots = trajectory.snapshots()
    for (s0, f0), (s1, f1) in zip(snapshots, snapshots[1:]):
        reference = expm_multiply((s1 - s0) * matrix((s0 + s1) / 2), f0.values)
        scale = max(float(np.max(np.abs(reference))), 1e-300)
        residual = max(residual, float(np.max(np.abs(f1.values - reference))) / scale)
    logger.debug(f'biased path to t = {t}: residual {residual:.3e}')
    return BiasedPath(trajectory, p, residual)


def biased_path_response(direction: Union[ObservablePath, PhaseFunction], v0: VelocityField, t: float,
                         kernel: KernelMatrix, p: Optional[Union[ObservablePath, PhaseFunction]] = None
                         ) -> VelocityField:
    """
    Tangent-linear response d/dε 𝔳(t) of the biased path to the bias p + ε q at ε = 0, for time-independent p and
    q: the upper block of exp(t [[B, J], [0, B]]) applied to (0, v0) with J = dB/dε.

    :param direction: perturbation q of the bias
    :param v0: homogeneous function-form initial field
    :param t: final time
    :param kernel: kernel matrix
    :param p: base bias, zero when omitted
    """
    direction = _as_path(direction)
    base = _as_path(p) if p is not None else ObservablePath.zero(kernel.grid.d)
    for path in (direction, base):
        if not path.is_homogeneous or path.h.is_time_dependent:
            raise UnsupportedBackendError('the response is computed for homogeneous time-independent biases only')
    if not v0.is_homogeneous:
        raise UnsupportedBackendError('the response is computed for homogeneous fields only')
    values = bias_values(base.h, kernel, 0.0)
    q = bias_values(direction.h, kernel, 0.0)
    gain = kernel.gain
    shift = values[:, None] - values[None, :]
    dq = q[:, None] - q[None, :]
    jacobian = gain * np.exp(shift) * dq
    jacobian[np.diag_indices(len(q))] += np.sum(gain * np.exp(-shift) * dq, axis=1)
    matrix = biased_generator(kernel, values)
    n = len(q)
    block = np.zeros((2 * n, 2 * n))
    block[:n, :n] = matrix
    block[:n, n:] = jacobian
    block[n:, n:] = matrix
    start = np.concatenate([np.zeros(n), np.real(v0.to_form('function').values)])
    response = expm_multiply(t * block, start)[:n]
    return v0.to_form('function').with_values(response)
