import logging
import math
from typing import Optional

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import integrate
from scipy.special import erf, erfc, erfcx, gammaln, i0e, i1e

from pykc.kinetic.grid import VelocityGrid
from pykc.scaling import UnsupportedBackendError, Vector, sphere_area

logger = logging.getLogger(__name__)

DEFAULT_BLOCK_ROWS = 256
ANGULAR_NODES = 64


def collision_constant(d: int) -> float:
    """c_d = |S^{d-2}| / (d - 1), the angular integral of <ω, û>_+ over S^{d-1}."""
    return sphere_area(d - 1) / (d - 1)


def mean_speed(beta: float, d: int) -> float:
    """E|V| for V ~ M_β in dimension d."""
    return math.sqrt(2 / beta) * math.exp(gammaln((d + 1) / 2) - gammaln(d / 2))


def loss_rate(v: Vector, beta: float = 1.0, d: int = 3) -> Vector:
    """
    ν_β(v) = c_d ∫ M_β(v_c) |v - v_c| dv_c through the closed forms of the Gaussian mean distance:
    erf in d = 3 and exponentially scaled Bessel functions in d = 2.

    :param v: velocities, shape (..., d)
    :return: loss rates, shape v.shape[:-1]
    """
    v = np.asarray(v, dtype=float)
    a = np.linalg.norm(v, axis=-1)
    sigma = 1 / math.sqrt(beta)
    if d == 3:
        safe = np.where(a > 0, a, 1.0)
        distance = sigma * (math.sqrt(2 / math.pi) * np.exp(-a ** 2 / (2 * sigma ** 2))
                            + (a / sigma + sigma / safe) * erf(a / (sigma * math.sqrt(2))))
        distance = np.where(a > 0, distance, mean_speed(beta, 3))
    elif d == 2:
        y = a ** 2 / (2 * sigma ** 2)
        distance = sigma * math.sqrt(math.pi / 2) * ((1 + y) * i0e(y / 2) + y * i1e(y / 2))
    else:
        raise ValueError(f'invalid argument value: expecting d in (2, 3), got {d}')
    return collision_constant(d) * distance


def loss_rate_quadrature(speed: float, beta: float = 1.0, d: int = 3) -> float:
    """
    Independent evaluation of ν_β by nested quadrature over the partner speed r and the cosine c of the
    angle to v, used to check the closed forms.
    """
    sigma2 = 1 / beta
    radial = sphere_area(d - 1) / (2 * math.pi * sigma2) ** (d / 2)

    def integrand(c, r):
        # the (1 - c^2)^{(d-3)/2} factor is the measure of the cosine on S^{d-1}
        return (r ** (d - 1) * math.exp(-r * r / (2 * sigma2)) * (1 - c * c) ** ((d - 3) / 2)
                * math.sqrt(max(speed * speed + r * r - 2 * speed * r * c, 0.0)))

    value, _ = integrate.dblquad(integrand, 0, math.inf, -1, 1, epsabs=1e-13, epsrel=1e-11)
    return collision_constant(d) * radial * value


def _radial_cell_integral(b: Vector, beta: float) -> Vector:
    """∫_0^∞ r exp(-β/4 [(r + b)^2 + b^2]) dr, stable for either sign of b."""
    root = math.sqrt(beta) / 2
    positive = np.maximum(b, 0.0)
    negative = np.minimum(b, 0.0)
    # erfc form has no cancellation for b <= 0, the erfcx form none for b > 0
    for_negative = np.exp(-beta * negative ** 2 / 4) * (
        (2 / beta) * np.exp(-beta * negative ** 2 / 4) - negative * math.sqrt(math.pi / beta) * erfc(negative * root))
    for_positive = np.exp(-beta * positive ** 2 / 2) * (
        2 / beta - positive * math.sqrt(math.pi / beta) * erfcx(positive * root))
    return np.where(b > 0, for_positive, for_negative)


def gain_row_integral(v: Vector, beta: float = 1.0) -> Vector:
    """(K̂ 1)(v) = ∫ k(v, η) dη for the d = 3 gain kernel, by Gauss-Legendre quadrature in the angle cosine."""
    a = np.linalg.norm(np.asarray(v, dtype=float), axis=-1)
    nodes, weights = leggauss(ANGULAR_NODES)
    values = _radial_cell_integral(a[..., None] * nodes, beta) @ weights
    return math.sqrt(beta / (2 * math.pi)) * 2 * math.pi * values


def gain_kernel(v: Vector, eta: Vector, beta: float = 1.0) -> Vector:
    """
    Symmetric gain kernel √(β/2π) |η-v|^{-1} exp(-β [|η-v|²/8 + (|η|²-|v|²)² / (8|η-v|²)]) in d = 3,
    set to 0 on the diagonal.
    """
    v = np.asarray(v, dtype=float)
    eta = np.asarray(eta, dtype=float)
    r2 = np.sum((eta - v) ** 2, axis=-1)
    delta = np.sum(eta ** 2, axis=-1) - np.sum(v ** 2, axis=-1)
    safe = np.where(r2 > 0, r2, 1.0)
    values = math.sqrt(beta / (2 * math.pi)) / np.sqrt(safe) * np.exp(-beta * (safe / 8 + delta ** 2 / (8 * safe)))
    return np.where(r2 > 0, values, 0.0)


class KernelMatrix:
    """
    Gain kernel on a velocity grid in the symmetric (R = M^{1/2} φ) representation: (K R)_i = Σ_j S_ij w_j R_j.
    The diagonal holds the cell integral of the singularity, fixed so that every row integrates the constant
    exactly: Σ_j S_ij w_j = (K̂ 1)(v_i).
    """

    def __init__(self, grid: VelocityGrid, beta: float, matrix: Vector):
        self._grid = grid
        self._beta = float(beta)
        self._matrix = matrix
        self._loss = loss_rate(grid.points, beta, grid.d)
        self._gain = None

    @property
    def grid(self) -> VelocityGrid:
        return self._grid

    @property
    def beta(self) -> float:
        return self._beta

    @property
    def matrix(self) -> Vector:
        return self._matrix

    @property
    def loss(self) -> Vector:
        """Analytic loss rate ν_β on the grid."""
        return self._loss

    @property
    def sqrt_maxwellian(self) -> Vector:
        return np.sqrt(self._grid.maxwellian(self._beta))

    def apply(self, r: Vector) -> Vector:
        """K R for values of shape (N,) or stacked rows (n, N)."""
        return (self._matrix @ (self._grid.weights * r).T).T

    @property
    def gain(self) -> Vector:
        """
        Function-form gain matrix T_ij = S_ij w_j M^{1/2}_j / M^{1/2}_i, so that (T φ)_i approximates
        ∫ B M(v_c) φ(v') at v_i.
        """
        if self._gain is None:
            norms2 = self._grid.norms2
            ratio = np.exp(self._beta * (norms2[:, None] - norms2[None, :]) / 4)
            self._gain = self._matrix * self._grid.weights[None, :] * ratio
        return self._gain

    @property
    def balanced_loss(self) -> Vector:
        """Row sums of the gain matrix: the loss rate that makes φ ≡ 1 an exact discrete fixed point."""
        return np.sum(self.gain, axis=1)

    def generator(self) -> Vector:
        """Function-form collision generator G = T - diag(T 1); a rate matrix in detailed balance with w M."""
        return self.gain - np.diag(self.balanced_loss)

    def to_json(self):
        return {'kind': type(self).__name__, 'grid': self._grid.to_json(), 'beta': self._beta}


def build_kernel(grid: VelocityGrid, beta: float = 1.0, block_rows: int = DEFAULT_BLOCK_ROWS) -> KernelMatrix:
    """
    Assembles the gain kernel on the grid in blocks of rows. Off-diagonal entries are point values of the
    kernel; the singular diagonal is the remainder of the analytic row integral.

    :param grid: velocity grid of dimension 3
    :param beta: inverse temperature
    :param block_rows: rows assembled per block
    :return: the kernel matrix
    """
    if grid.d != 3:
        raise UnsupportedBackendError(f'the kernel backend supports d = 3 only, got d = {grid.d}; '
                                      f'use the jump or dyson backend')
    points = grid.points
    n = grid.n
    matrix = np.empty((n, n))
    for start in range(0, n, block_rows):
        stop = min(start + block_rows, n)
        matrix[start:stop] = gain_kernel(points[start:stop, None, :], points[None, :, :], beta)
        logger.debug(f'kernel rows {start}..{stop} of {n} assembled')
    weights = grid.weights
    off_diagonal = matrix @ weights
    diagonal = (gain_row_integral(points, beta) - off_diagonal) / weights
    negative = diagonal < 0
    if np.any(negative):
        logger.debug(f'{int(np.sum(negative))} negative diagonal cell integrals clipped to 0')
    matrix[np.diag_indices(n)] = np.maximum(diagonal, 0.0)
    return KernelMatrix(grid, beta, matrix)


def kernel_bound(v: Vector, beta: float = 1.0, d: int = 3) -> Vector:
    """Pointwise bound 17 |S^{d-1}| / (β |v|) on the row integral of the gain kernel."""
    return 17 * sphere_area(d) / (beta * np.linalg.norm(np.asarray(v, dtype=float), axis=-1))


def eigen_relation_error(kernel: KernelMatrix, mask: Optional[Vector] = None) -> float:
    """max |K M^{1/2} - ν M^{1/2}| / (ν M^{1/2}) over the (masked) grid points."""
    root = kernel.sqrt_maxwellian
    target = kernel.loss * root
    error = np.abs(kernel.apply(root) - target) / target
    if mask is not None:
        error = error[mask]
    return float(np.max(error))
