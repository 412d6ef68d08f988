import logging
import math
from typing import Callable, Optional, Union

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import RegularGridInterpolator

from pykc.kinetic.grid import VelocityField
from pykc.kinetic.kernel import KernelMatrix
from pykc.phase_function import PhaseFunction
from pykc.scaling import GrowthClassError, UnsupportedBackendError, Vector

logger = logging.getLogger(__name__)

POISSON_TAIL = 1e-16
MAX_UNIFORMIZED_RATE = 50.0


def uniformized_exp(generator: Vector, values: Vector, t: float) -> Vector:
    """
    exp(t A) applied to values for a Metzler matrix A (nonnegative off-diagonal entries) by uniformization:
    Σ_n Poisson(n; Λt) P^n with P = I + A/Λ ≥ 0, Λ = max(-A_ii). Every partial sum is a nonnegative
    combination, so nonnegative input stays nonnegative. The Poisson weights are renormalized after
    truncation, which keeps row-stochastic P exactly stochastic. Long times are split so the first weight
    does not underflow.

    :param generator: (N, N) Metzler matrix
    :param values: (N,) or (N, n) array, real or complex
    :param t: time span, t >= 0
    """
    if t < 0:
        raise ValueError(f'invalid argument value: expecting t >= 0, got {t}')
    rate = float(np.max(-np.diag(generator))) if len(generator) else 0.0
    if t == 0:
        return values.copy()
    if rate <= 0:
        return _taylor_exp(generator, values, t)
    substeps = max(1, math.ceil(rate * t / MAX_UNIFORMIZED_RATE))
    tau = t / substeps
    lam = rate * tau
    step = generator / rate + np.eye(len(generator))
    result = values
    for _ in range(substeps):
        term = result
        weight = math.exp(-lam)
        accumulated = weight * term
        total = weight
        n = 0
        while n <= lam or weight > POISSON_TAIL * total:
            n += 1
            term = step @ term
            weight *= lam / n
            accumulated = accumulated + weight * term
            total += weight
        result = accumulated / total
    return result


def _taylor_exp(generator: Vector, values: Vector, t: float) -> Vector:
    term = values
    result = values.copy()
    for n in range(1, 60):
        term = t * (generator @ term) / n
        result = result + term
        if np.max(np.abs(term)) < 1e-18:
            break
    return result


def density_generator(kernel: KernelMatrix) -> Vector:
    """Adjoint of the function-form generator in the w-weighted pairing: L* = W⁻¹ Gᵀ W."""
    weights = kernel.grid.weights
    return kernel.generator().T * weights[None, :] / weights[:, None]


def symmetric_generator(kernel: KernelMatrix) -> Vector:
    """Collision generator for R = M^{1/2} φ: K - diag(ν̃), with ν̃ the balanced loss."""
    return kernel.matrix * kernel.grid.weights[None, :] - np.diag(kernel.balanced_loss)


def apply_collision(field: VelocityField, kernel: KernelMatrix, form: Optional[str] = None,
                    quadrature: Optional['DirectQuadrature'] = None) -> VelocityField:
    """
    Applies the collision operator in the representation of the field: L φ (function form), L* χ
    (density form) or K R - ν R (symmetric form). With `quadrature` the operator is evaluated by direct
    (v_c, σ) quadrature of the interpolated field instead of the kernel matrix.

    :param field: field on the kernel grid
    :param kernel: kernel matrix
    :param form: expected form of the field; a different field form is an error
    :param quadrature: optional direct quadrature
    """
    if form is not None and form != field.form:
        raise ValueError(f'invalid argument value: expecting a {form}-form field, got {field.form}')
    if field.grid != kernel.grid:
        raise ValueError('invalid argument value: expecting the field on the kernel grid')
    if quadrature is not None:
        phi = field.to_form('function')
        values = quadrature.apply_on_grid(phi)
        return phi.with_values(values).to_form(field.form)
    if field.form == 'function':
        operator = kernel.generator()
    elif field.form == 'density':
        operator = density_generator(kernel)
    else:
        operator = symmetric_generator(kernel)
    values = field.values
    result = operator @ values if values.ndim == 1 else (operator @ values.T).T
    return field.with_values(result)


def bias_values(p: Union[PhaseFunction, VelocityField], kernel: KernelMatrix, s: float) -> Vector:
    if isinstance(p, VelocityField):
        if not p.is_homogeneous:
            raise UnsupportedBackendError('biased collision operators support homogeneous p only')
        return np.real(p.to_form('function').values)
    if not p.is_homogeneous:
        raise UnsupportedBackendError('biased collision operators support homogeneous p only')
    if p.growth > kernel.beta / 4:
        raise GrowthClassError(f'p grows like exp({p.growth}|v|^2), faster than the beta/4 class')
    points = kernel.grid.points
    return p.evaluate(s, np.zeros_like(points), points)


def biased_generator(kernel: KernelMatrix, p: Vector) -> Vector:
    """
    Matrix B of the biased operator 𝔳 ↦ Σ_j T_ij 𝔳_j e^{p_i - p_j} - 𝔳_i Σ_j T_ij e^{p_j - p_i}, with T the
    function-form gain matrix. B is Metzler and reduces to the collision generator at p = 0.
    """
    gain = kernel.gain
    shift = p[:, None] - p[None, :]
    matrix = gain * np.exp(shift)
    loss = np.sum(gain * np.exp(-shift), axis=1)
    matrix[np.diag_indices(len(p))] -= loss
    return matrix


def biased_collision_rhs(field: VelocityField, p: Union[PhaseFunction, VelocityField], kernel: KernelMatrix,
                         s: float = 0.0) -> VelocityField:
    """
    Right-hand side ∫B M(v_c)[𝔳(v') e^{p(v)-p(v')} - 𝔳(v) e^{p(v')-p(v)}] of the biased linear Boltzmann
    equation on the grid.

    :param field: homogeneous function-form field 𝔳
    :param p: bias, homogeneous and of growth at most β/4
    :param kernel: kernel matrix on the field grid
    :param s: time at which p is evaluated
    """
    if not field.is_homogeneous:
        raise UnsupportedBackendError('biased collision operators support homogeneous fields only')
    values = bias_values(p, kernel, s)
    return field.with_values(biased_generator(kernel, values) @ field.values)


class DirectQuadrature:
    """
    Pointwise quadrature of the d = 3 collision operators for callables of v: Gauss-Hermite nodes for the
    Maxwellian partner and a Gauss-Legendre × trapezoid product rule for σ on the sphere, with
    v' = (v + v_c)/2 + |v - v_c| σ / 2 and ∫ <ω, u>_+ f dω = (|u|/4) ∫ f dσ.
    """

    def __init__(self, beta: float = 1.0, partner_nodes: int = 12, sphere_nodes: int = 8):
        self._beta = float(beta)
        nodes, weights = hermegauss(partner_nodes)
        mesh = np.meshgrid(nodes, nodes, nodes, indexing='ij')
        self._partners = np.stack([c.ravel() for c in mesh], axis=1) / math.sqrt(beta)
        product = np.meshgrid(weights, weights, weights, indexing='ij')
        self._partner_weights = np.prod(np.stack([c.ravel() for c in product], axis=1), axis=1) / (
            2 * math.pi) ** 1.5
        cosines, cosine_weights = leggauss(sphere_nodes)
        azimuths = np.arange(2 * sphere_nodes) * math.pi / sphere_nodes
        c, a = np.meshgrid(cosines, azimuths, indexing='ij')
        s = np.sqrt(1 - c ** 2)
        self._sigma = np.stack([(s * np.cos(a)).ravel(), (s * np.sin(a)).ravel(), c.ravel()], axis=1)
        self._sigma_weights = (np.repeat(cosine_weights, 2 * sphere_nodes) * math.pi / sphere_nodes)

    @property
    def beta(self) -> float:
        return self._beta

    def _post_velocities(self, v: Vector):
        u = v[None, :] - self._partners
        speed = np.linalg.norm(u, axis=1)
        centre = (v[None, :] + self._partners) / 2
        post = centre[:, None, :] + speed[:, None, None] * self._sigma[None, :, :] / 2
        return speed, post

    def loss(self, v: Vector) -> float:
        v = np.asarray(v, dtype=float)
        speed = np.linalg.norm(v[None, :] - self._partners, axis=1)
        return float(math.pi * speed @ self._partner_weights)

    def gain(self, phi: Callable[[Vector], Vector], v: Vector) -> float:
        """∫ M(v_c) (|u|/4) ∫ φ(v') dσ dv_c at a single velocity."""
        speed, post = self._post_velocities(np.asarray(v, dtype=float))
        values = phi(post.reshape(-1, 3)).reshape(post.shape[:2])
        return float((speed / 4 * (values @ self._sigma_weights)) @ self._partner_weights)

    def collision(self, phi: Callable[[Vector], Vector], v: Vector) -> float:
        """Function-form L φ at v."""
        v = np.asarray(v, dtype=float)
        return self.gain(phi, v) - self.loss(v) * float(phi(v[None, :])[0])

    def biased(self, field: Callable[[Vector], Vector], p: Callable[[Vector], Vector], v: Vector) -> float:
        """Biased right-hand side at v for callables 𝔳 and p."""
        v = np.asarray(v, dtype=float)
        speed, post = self._post_velocities(v)
        flat = post.reshape(-1, 3)
        p_here = float(p(v[None, :])[0])
        shifted = (field(flat) * np.exp(p_here - p(flat))).reshape(post.shape[:2])
        returned = np.exp(p(flat) - p_here).reshape(post.shape[:2])
        gain = (speed / 4 * (shifted @ self._sigma_weights)) @ self._partner_weights
        loss = (speed / 4 * (returned @ self._sigma_weights)) @ self._partner_weights
        return float(gain - float(field(v[None, :])[0]) * loss)

    def apply_on_grid(self, field: VelocityField) -> Vector:
        """Function-form collision of a homogeneous grid field, linearly interpolated (0 outside the box)."""
        if not field.is_homogeneous:
            raise UnsupportedBackendError('direct quadrature supports homogeneous fields only')
        grid = field.grid
        axes = (grid.axis,) * grid.d
        interpolator = RegularGridInterpolator(axes, field.values.reshape((grid.m,) * grid.d),
                                               bounds_error=False, fill_value=0.0)
        return np.array([self.collision(interpolator, v) for v in grid.points])

    def to_json(self):
        return {'kind': type(self).__name__, 'beta': self._beta, 'partners': len(self._partners),
                'sphere': len(self._sigma)}
