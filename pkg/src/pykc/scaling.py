import math
from typing import Dict, List, Optional, Tuple

import numpy as np

Vector = np.ndarray
Rng = np.random.Generator

SUPPORTED_DIMENSIONS = (2, 3)
SCALING_TOLERANCE = 1e-9


class PyKCError(Exception):
    """
    Base class of all domain failures. Carries a human readable `message`; the class decides the
    process exit code of the command line.
    """
    exit_code = 1

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message


class ConfigError(PyKCError):
    exit_code = 2

    def __init__(self, message: str, field: Optional[str] = None, line: Optional[int] = None):
        location = ''
        if line is not None:
            location += f'line {line}: '
        if field is not None:
            location += f'{field}: '
        super().__init__(location + message)
        self.field = field
        self.line = line


class BudgetExceededError(PyKCError):
    exit_code = 3


class SamplingError(BudgetExceededError):
    def __init__(self, message: str, acceptance: float):
        super().__init__(f'{message} (estimated acceptance: {acceptance:.3e})')
        self.acceptance = acceptance


class RunawayDynamicsError(BudgetExceededError):
    pass


class RejectionBudgetError(BudgetExceededError):
    pass


class FarmStoppedError(BudgetExceededError):
    def __init__(self, message: str, completed: int):
        super().__init__(message)
        self.completed = completed


class UnsupportedBackendError(PyKCError):
    pass


class StabilityError(PyKCError):
    pass


class PositivityError(PyKCError):
    pass


class GrowthClassError(PyKCError):
    pass


class EnumerationError(PyKCError):
    pass


class SchemaMismatchError(PyKCError):
    pass


class OverflowGuardError(PyKCError):
    pass


def sphere_area(d: int) -> float:
    """Surface area |S^{d-1}| of the unit sphere in R^d."""
    return 2 * math.pi ** (d / 2) / math.gamma(d / 2)


class ScalingConfig:
    """
    Parameters (d, ε, μ, λ, β) of the tagged hard-sphere mixture under the mixed scaling μ ε^{d-1} = 1,
    1 ≤ λ < μ. λ = 0 is accepted as the untagged equilibrium gas.
    """

    def __init__(self, d: int, epsilon: float, mu: float, lam: float, beta: float = 1.0, check: bool = True):
        self._d = d
        self._epsilon = float(epsilon)
        self._mu = float(mu)
        self._lambda = float(lam)
        self._beta = float(beta)
        if check:
            violations = self.violations()
            if violations:
                name, message = violations[0]
                raise ConfigError(message, field=name)

    @staticmethod
    def from_mu(mu: float, lam: float, beta: float = 1.0, d: int = 3):
        """
        Creates the configuration whose diameter satisfies the mixed scaling exactly.

        :param mu: background chemical potential
        :param lam: tagged chemical potential
        :param beta: inverse temperature
        :param d: dimension
        :return: the scaling configuration
        """
        return ScalingConfig(d, mu ** (-1.0 / (d - 1)), mu, lam, beta)

    @property
    def d(self) -> int:
        return self._d

    @property
    def epsilon(self) -> float:
        return self._epsilon

    @property
    def mu(self) -> float:
        return self._mu

    @property
    def lam(self) -> float:
        return self._lambda

    @property
    def beta(self) -> float:
        return self._beta

    @property
    def p_mu(self) -> float:
        return self._lambda / self._mu

    def violations(self) -> List[Tuple[str, str]]:
        violations = []
        if self._d not in SUPPORTED_DIMENSIONS:
            violations.append(('dimension', f'expecting d in {SUPPORTED_DIMENSIONS}, got {self._d}'))
            return violations
        if not 0 < self._epsilon < 0.25:
            violations.append(('epsilon', f'expecting 0 < epsilon < 1/4, got {self._epsilon}'))
        if self._mu <= 0 or abs(self._mu * self._epsilon ** (self._d - 1) - 1) > SCALING_TOLERANCE:
            violations.append(('mixed scaling',
                               f'expecting mu * epsilon^(d-1) = 1, got {self._mu * self._epsilon ** (self._d - 1)}'))
        if self._lambda != 0 and not 1 <= self._lambda < self._mu:
            violations.append(('lambda', f'expecting 1 <= lambda < mu, got lambda = {self._lambda}, mu = {self._mu}'))
        if not self._beta > 0:
            violations.append(('beta', f'expecting beta > 0, got {self._beta}'))
        return violations

    def maxwellian(self, v: Vector) -> Vector:
        v = np.asarray(v, dtype=float)
        norm2 = np.sum(v * v, axis=-1)
        return (self._beta / (2 * math.pi)) ** (self._d / 2) * np.exp(-self._beta * norm2 / 2)

    def sample_maxwellian(self, n: int, rng: Rng) -> Vector:
        return rng.normal(0.0, 1.0 / math.sqrt(self._beta), size=(n, self._d))

    def to_json(self) -> Dict[str, float]:
        return {'d': self._d, 'epsilon': self._epsilon, 'mu': self._mu, 'lambda': self._lambda, 'beta': self._beta}

    def __eq__(self, other):
        return isinstance(other, ScalingConfig) and self.to_json() == other.to_json()

    def __hash__(self):
        return hash(tuple(self.to_json().values()))

    def __repr__(self):
        return (f'ScalingConfig(d={self._d}, epsilon={self._epsilon}, mu={self._mu}, '
                f'lam={self._lambda}, beta={self._beta})')


class Estimate:
    """A named value with standard error and sample count, emitted as one line-delimited record."""

    def __init__(self, name: str, value: float, stderr: float = 0.0, n: int = 1, **extra):
        self._name = name
        self._value = float(value)
        self._stderr = float(stderr)
        self._n = int(n)
        self._extra = extra

    @staticmethod
    def from_samples(name: str, samples: Vector, **extra):
        samples = np.asarray(samples, dtype=float)
        n = len(samples)
        stderr = float(np.std(samples, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        return Estimate(name, float(np.mean(samples)) if n else 0.0, stderr, n, **extra)

    @property
    def name(self) -> str:
        return self._name

    @property
    def value(self) -> float:
        return self._value

    @property
    def stderr(self) -> float:
        return self._stderr

    @property
    def n(self) -> int:
        return self._n

    @property
    def extra(self) -> Dict:
        return self._extra

    def within(self, reference: float, sigmas: float = 3.0, slack: float = 0.0) -> bool:
        return abs(self._value - reference) <= sigmas * self._stderr + slack

    def to_json(self):
        json = {'name': self._name, 'value': self._value, 'stderr': self._stderr, 'n': self._n}
        json.update(self._extra)
        return json

    def __repr__(self):
        return f'Estimate({self._name}: {self._value} ± {self._stderr}, n={self._n})'
