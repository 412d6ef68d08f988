import csv
import math
from typing import Optional, Sequence

import numpy as np
from scipy.special import erf

from pykc.phase_function import PhaseFunction
from pykc.scaling import Vector

DEFAULT_V_MAX_TAIL = 1e-10
DEFAULT_X_POINTS = 8
FORMS = ('function', 'density', 'symmetric')


class VelocityGrid:
    """
    Tensor grid of m equispaced nodes per axis on [-v_max, v_max]^d with product trapezoid weights.
    Points are ordered C-style, the last axis varying fastest.
    """

    def __init__(self, v_max: float, m: int, d: int = 3):
        if not v_max > 0:
            raise ValueError(f'invalid argument value: expecting v_max > 0, got {v_max}')
        if m < 2:
            raise ValueError(f'invalid argument value: expecting m >= 2, got {m}')
        self._v_max = float(v_max)
        self._m = m
        self._d = d
        self._axis = np.linspace(-v_max, v_max, m)
        spacing = self._axis[1] - self._axis[0]
        axis_weights = np.full(m, spacing)
        axis_weights[[0, -1]] = spacing / 2
        mesh = np.meshgrid(*([self._axis] * d), indexing='ij')
        self._points = np.stack([c.ravel() for c in mesh], axis=1)
        weights = np.meshgrid(*([axis_weights] * d), indexing='ij')
        self._weights = np.prod(np.stack([w.ravel() for w in weights], axis=1), axis=1)
        self._spacing = spacing

    @staticmethod
    def for_beta(beta: float, m: int, d: int = 3, tail: float = DEFAULT_V_MAX_TAIL):
        """Grid whose radius leaves a Gaussian tail below `tail` per axis direction: v_max = sqrt(-2 log(tail) / beta)."""
        return VelocityGrid(math.sqrt(-2 * math.log(tail) / beta), m, d)

    @property
    def v_max(self) -> float:
        return self._v_max

    @property
    def m(self) -> int:
        return self._m

    @property
    def d(self) -> int:
        return self._d

    @property
    def n(self) -> int:
        return len(self._points)

    @property
    def axis(self) -> Vector:
        return self._axis

    @property
    def spacing(self) -> float:
        return self._spacing

    @property
    def points(self) -> Vector:
        return self._points

    @property
    def weights(self) -> Vector:
        return self._weights

    @property
    def norms2(self) -> Vector:
        return np.sum(self._points ** 2, axis=1)

    def maxwellian(self, beta: float) -> Vector:
        return (beta / (2 * math.pi)) ** (self._d / 2) * np.exp(-beta * self.norms2 / 2)

    def tail_mass(self, beta: float) -> float:
        """Maxwellian mass outside the box [-v_max, v_max]^d."""
        return float(1 - erf(self._v_max * math.sqrt(beta / 2)) ** self._d)

    def integrate(self, values: Vector) -> Vector:
        return np.asarray(values) @ self._weights

    def to_json(self):
        return {'kind': type(self).__name__, 'v_max': self._v_max, 'm': self._m, 'd': self._d}

    def __eq__(self, other):
        return isinstance(other, VelocityGrid) and self.to_json() == other.to_json()

    def __hash__(self):
        return hash((self._v_max, self._m, self._d))


def _x_grid(n_x: int, d: int) -> Vector:
    axis = np.arange(n_x) / n_x
    mesh = np.meshgrid(*([axis] * d), indexing='ij')
    return np.stack([c.ravel() for c in mesh], axis=1)


def _is_leading_half(mode: Sequence[int]) -> bool:
    for k in mode:
        if k != 0:
            return k > 0
    return True


class VelocityField:
    """
    Values on a velocity grid, either spatially homogeneous (shape (N,)) or as complex Fourier coefficients
    (shape (n_modes, N)) on the torus with the real field Re Σ_k c_k(v) e^{2πi k·x}. Modes are kept in
    one half space, so a real field keeps its nonzero modes with doubled coefficients.

    `form` records what the values represent: 'function' φ, 'density' M φ or 'symmetric' M^{1/2} φ.
    """

    def __init__(self, grid: VelocityGrid, values: Vector, form: str = 'function', modes: Optional[Vector] = None,
                 beta: float = 1.0):
        if form not in FORMS:
            raise ValueError(f'invalid argument value: expecting form in {FORMS}, got {form}')
        values = np.asarray(values)
        if modes is None:
            if values.shape != (grid.n,):
                raise ValueError(f'invalid argument value: expecting {grid.n} values, got shape {values.shape}')
            values = values.astype(float)
        else:
            modes = np.asarray(modes, dtype=int).reshape(-1, grid.d)
            if values.shape != (len(modes), grid.n):
                raise ValueError(f'invalid argument value: expecting shape {(len(modes), grid.n)}, '
                                 f'got {values.shape}')
            values = values.astype(complex)
        if not np.all(np.isfinite(values)):
            raise ValueError('invalid argument value: expecting finite field values')
        self._grid = grid
        self._values = values
        self._form = form
        self._modes = modes
        self._beta = float(beta)

    @staticmethod
    def from_phase_function(phi: PhaseFunction, grid: VelocityGrid, beta: float = 1.0, t: float = 0.0,
                            form: str = 'function', n_x: int = DEFAULT_X_POINTS, tolerance: float = 1e-12):
        """
        Projects an observable onto the grid. Spatially varying observables are resolved with an FFT on an
        n_x^d point grid of the torus and keep the modes with coefficients above `tolerance`.
        """
        v = grid.points
        if phi.is_homogeneous:
            values = phi.evaluate(t, np.zeros_like(v), v)
            field = VelocityField(grid, values, 'function', beta=beta)
        else:
            x = _x_grid(n_x, grid.d)
            values = phi.evaluate(t, x[:, None, :], v[None, :, :])
            shape = (n_x,) * grid.d + (grid.n,)
            spectrum = np.fft.fftn(values.reshape(shape), axes=tuple(range(grid.d))) / n_x ** grid.d
            modes, coefficients = [], []
            for index in np.ndindex(*(n_x,) * grid.d):
                mode = tuple(k if k <= n_x // 2 else k - n_x for k in index)
                if not _is_leading_half(mode):
                    continue
                c = spectrum[index]
                if np.max(np.abs(c)) <= tolerance:
                    continue
                modes.append(mode)
                coefficients.append(c if not any(mode) else 2 * c)
            if not modes:
                modes, coefficients = [(0,) * grid.d], [np.zeros(grid.n, dtype=complex)]
            field = VelocityField(grid, np.array(coefficients), 'function', np.array(modes), beta)
        return field.to_form(form)

    @property
    def grid(self) -> VelocityGrid:
        return self._grid

    @property
    def values(self) -> Vector:
        return self._values

    @property
    def form(self) -> str:
        return self._form

    @property
    def modes(self) -> Optional[Vector]:
        return self._modes

    @property
    def beta(self) -> float:
        return self._beta

    @property
    def is_homogeneous(self) -> bool:
        return self._modes is None

    def with_values(self, values: Vector, form: Optional[str] = None):
        return VelocityField(self._grid, values, form or self._form, self._modes, self._beta)

    def _form_factor(self, form: str) -> Vector:
        m = self._grid.maxwellian(self._beta)
        return {'function': np.ones_like(m), 'density': m, 'symmetric': np.sqrt(m)}[form]

    def to_form(self, form: str):
        if form not in FORMS:
            raise ValueError(f'invalid argument value: expecting form in {FORMS}, got {form}')
        if form == self._form:
            return self
        return self.with_values(self._values * self._form_factor(form) / self._form_factor(self._form), form)

    def homogeneous_part(self):
        """The k = 0 mode as a homogeneous real field."""
        if self._modes is None:
            return self
        zero = np.all(self._modes == 0, axis=1)
        values = np.real(self._values[zero][0]) if np.any(zero) else np.zeros(self._grid.n)
        return VelocityField(self._grid, values, self._form, beta=self._beta)

    def spatial_values(self, x: Vector) -> Vector:
        """Real field values at positions x, shape (len(x), N)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self._modes is None:
            return np.broadcast_to(self._values, (len(x), self._grid.n)).copy()
        phases = np.exp(2j * math.pi * x @ self._modes.T)
        return np.real(phases @ self._values)

    def pair_with(self, h: PhaseFunction, t: float = 0.0, n_x: int = DEFAULT_X_POINTS) -> float:
        """∫∫ M φ(x, v) h(t, x, v) dx dv by grid quadrature, the torus averaged on an n_x^d point grid."""
        density = self.to_form('density')
        v = self._grid.points
        if density.is_homogeneous and h.is_homogeneous:
            return float(self._grid.integrate(density.values * h.evaluate(t, np.zeros_like(v), v)))
        x = _x_grid(n_x, self._grid.d)
        values = density.spatial_values(x) * h.evaluate(t, x[:, None, :], v[None, :, :])
        return float(np.mean(self._grid.integrate(values)))

    integrate = pair_with

    def mass(self) -> float:
        return float(self._grid.integrate(np.real(self.homogeneous_part().to_form('density').values)))

    def to_json(self):
        json = {'kind': type(self).__name__, 'grid': self._grid.to_json(), 'form': self._form, 'beta': self._beta}
        if self._modes is not None:
            json['modes'] = self._modes.tolist()
        return json


def write_field_csv(path: str, field: VelocityField, time: Optional[float] = None):
    """Writes grid coordinates and values, one row per grid point (and mode for inhomogeneous fields)."""
    d = field.grid.d
    with open(path, 'w', newline='') as file:
        writer = csv.writer(file)
        writer.writerow([f'# form={field.form},beta={field.beta},time={time}'])
        if field.is_homogeneous:
            writer.writerow([f'v{i}' for i in range(d)] + ['value'])
            for v, value in zip(field.grid.points, field.values):
                writer.writerow([repr(float(c)) for c in v] + [repr(float(value))])
        else:
            writer.writerow([f'k{i}' for i in range(d)] + [f'v{i}' for i in range(d)] + ['real', 'imag'])
            for mode, row in zip(field.modes, field.values):
                for v, value in zip(field.grid.points, row):
                    writer.writerow([int(k) for k in mode] + [repr(float(c)) for c in v]
                                    + [repr(float(value.real)), repr(float(value.imag))])
