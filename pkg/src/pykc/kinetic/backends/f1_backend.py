from typing import Union

from pykc.kinetic.paths import Endpoint, PathFunctional
from pykc.phase_function import PhaseFunction
from pykc.scaling import Estimate, Rng


class F1Backend:
    def estimate(self, functional: PathFunctional, phi0: PhaseFunction, t: float, rng: Rng) -> Estimate:
        """
        Evaluates ∫F₁[H](t): the expectation of a trajectory functional H under the limiting tagged-particle
        path law started from M_β φ₀.

        :param functional: trajectory functional H
        :param phi0: initial perturbation
        :param t: final time
        :param rng: random generator (unused by deterministic backends)
        :return: the estimate, with zero standard error for deterministic backends
        """
        raise NotImplementedError

    def to_json(self):
        """
        Returns the backend in json format. Used for logging purposes only

        :return: The backend in json format.
        """
        return {'kind': type(self).__name__}


def as_functional(functional: Union[PathFunctional, PhaseFunction]) -> PathFunctional:
    return Endpoint(functional) if isinstance(functional, PhaseFunction) else functional
