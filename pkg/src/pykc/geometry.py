import numpy as np

from pykc.scaling import Rng, Vector

UNIT_TOLERANCE = 1e-9


def wrap(x: Vector) -> Vector:
    """Maps positions back onto the unit torus [0,1)^d."""
    x = np.asarray(x, dtype=float)
    wrapped = x - np.floor(x)
    # x slightly below 0 rounds to exactly 1.0
    wrapped[wrapped >= 1.0] = 0.0
    return wrapped


def min_image_displacement(a: Vector, b: Vector) -> Vector:
    """
    Returns the representative of b - a on the unit torus with components in (-1/2, 1/2], so that exact
    half-torus ties resolve to +1/2. Works row-wise on stacked positions.

    :param a: position(s) in [0,1)^d
    :param b: position(s) in [0,1)^d
    :return: nearest-image displacement(s)
    """
    delta = np.asarray(b, dtype=float) - np.asarray(a, dtype=float)
    return delta - np.ceil(delta - 0.5)


def _check_unit(omega: Vector):
    norms = np.linalg.norm(omega, axis=-1)
    if np.any(np.abs(norms - 1) > UNIT_TOLERANCE):
        raise ValueError(f'invalid argument value: expecting unit omega, got norm {norms}')


def scatter(v: Vector, w: Vector, omega: Vector):
    """
    Hard-sphere exchange of the normal momentum component:
    v' = v - <v-w,ω>ω, w' = w + <v-w,ω>ω. Grazing input (<v-w,ω> = 0) is returned unchanged.

    :param v: velocity (or stacked velocities) of the first particle
    :param w: velocity (or stacked velocities) of the second particle
    :param omega: unit vector(s) along the line of centers
    :return: post-collisional velocities (v', w')
    """
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    omega = np.asarray(omega, dtype=float)
    _check_unit(omega)
    normal = np.sum((v - w) * omega, axis=-1, keepdims=True) * omega
    return v - normal, w + normal


def deviation_sigma(v: Vector, w: Vector, omega: Vector) -> Vector:
    """Post-collisional relative direction σ = (v' - w') / |v' - w'|."""
    v_post, w_post = scatter(v, w, omega)
    relative = v_post - w_post
    return relative / np.linalg.norm(relative, axis=-1, keepdims=True)


def uniform_sphere(n: int, d: int, rng: Rng) -> Vector:
    points = rng.normal(size=(n, d))
    return points / np.linalg.norm(points, axis=1, keepdims=True)


class DeviationAngle:
    def __init__(self, omega: Vector, sigma: Vector):
        self._omega = np.asarray(omega, dtype=float)
        self._sigma = np.asarray(sigma, dtype=float)

    @property
    def omega(self) -> Vector:
        return self._omega

    @property
    def sigma(self) -> Vector:
        return self._sigma

    def to_json(self):
        return {'kind': type(self).__name__, 'omega': self._omega.tolist(), 'sigma': self._sigma.tolist()}


def sample_flux_angles(u: Vector, rng: Rng):
    """
    Vectorized flux sampling: for each row of u draws ω on {<ω,u> > 0} with density proportional to <ω,u>_+.
    σ is drawn uniformly on the sphere and mapped through ω = (û - σ) / |û - σ|, which is the inverse of the
    reflection σ = û - 2<û,ω>ω.

    :param u: relative velocities, shape (n, d), all nonzero
    :param rng: random generator
    :return: (omega, sigma) arrays of shape (n, d)
    """
    u = np.atleast_2d(np.asarray(u, dtype=float))
    norms = np.linalg.norm(u, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError('invalid argument value: expecting nonzero relative velocity')
    u_hat = u / norms
    n, d = u.shape
    if d == 2:
        # the map σ -> ω has constant Jacobian in the plane, so draw the angle to û with density cos(θ)/2
        theta = np.arcsin(2 * rng.random(n) - 1)
        cos, sin = np.cos(theta), np.sin(theta)
        omega = np.stack([cos * u_hat[:, 0] - sin * u_hat[:, 1], sin * u_hat[:, 0] + cos * u_hat[:, 1]], axis=1)
        sigma = u_hat - 2 * np.sum(u_hat * omega, axis=1, keepdims=True) * omega
        return omega, sigma
    sigma = uniform_sphere(n, d, rng)
    difference = u_hat - sigma
    lengths = np.linalg.norm(difference, axis=1)
    degenerate = lengths < 1e-12
    while np.any(degenerate):
        sigma[degenerate] = uniform_sphere(int(np.sum(degenerate)), d, rng)
        difference[degenerate] = u_hat[degenerate] - sigma[degenerate]
        lengths[degenerate] = np.linalg.norm(difference[degenerate], axis=1)
        degenerate = lengths < 1e-12
    return difference / lengths[:, None], sigma


def sample_flux_angle(u: Vector, rng: Rng) -> DeviationAngle:
    omega, sigma = sample_flux_angles(np.asarray(u, dtype=float)[None, :], rng)
    return DeviationAngle(omega[0], sigma[0])
