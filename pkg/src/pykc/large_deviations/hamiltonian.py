from typing import Union

import numpy as np

from pykc.kinetic.grid import VelocityField
from pykc.kinetic.kernel import KernelMatrix
from pykc.phase_function import PhaseFunction
from pykc.scaling import GrowthClassError, UnsupportedBackendError


def hamiltonian_value(q: VelocityField, p: Union[PhaseFunction, VelocityField], kernel: KernelMatrix,
                      s: float = 0.0) -> float:
    """
    ℋ(q, p) = ∫ B M_β(v₂) q(z₁) (e^{p(z₁') - p(z₁)} - 1) on the grid: Σ_i w_i q_i (Σ_j T_ij e^{p_j - p_i} - ν̃_i).

    :param q: homogeneous density-form field
    :param p: homogeneous momentum, growth at most β/4
    :param kernel: kernel matrix on the field grid
    :param s: time at which a symbolic p is evaluated
    """
    if q.form != 'density':
        raise ValueError(f'invalid argument value: expecting a density-form q, got {q.form}')
    if not q.is_homogeneous:
        raise UnsupportedBackendError('the Hamiltonian is evaluated for homogeneous q only')
    if isinstance(p, VelocityField):
        if not p.is_homogeneous:
            raise UnsupportedBackendError('the Hamiltonian is evaluated for homogeneous p only')
        values = np.real(p.to_form('function').values)
    else:
        if not p.is_homogeneous:
            raise UnsupportedBackendError('the Hamiltonian is evaluated for homogeneous p only')
        if p.growth > kernel.beta / 4:
            raise GrowthClassError(f'p grows like exp({p.growth}|v|^2), faster than the beta/4 class')
        points = kernel.grid.points
        values = p.evaluate(s, np.zeros_like(points), points)
    relative = np.sum(kernel.gain * np.exp(values[None, :] - values[:, None]), axis=1) - kernel.balanced_loss
    return float(kernel.grid.integrate(q.values * relative))
