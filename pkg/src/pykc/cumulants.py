import itertools
import math
from fractions import Fraction
from typing import Dict, FrozenSet, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import comb
from scipy.stats import poisson
from sympy.functions.combinatorial.numbers import bell
from sympy.utilities.iterables import partitions as integer_partitions

from pykc.geometry import min_image_displacement
from pykc.phase_function import PhaseFunction
from pykc.scaling import EnumerationError, Vector

MAX_PARTITION_ORDER = 12
MAX_TOY_ATOMS = 6
MAX_TOY_OUTCOMES = 1000000
MAX_EXPANSION_ORDER = 256
INITIAL_EXPANSION_ORDER = 16
SERIES_TOLERANCE = 1e-16

Subset = FrozenSet[int]
Number = Union[int, float, Fraction]


class SetPartition:
    def __init__(self, blocks: Sequence[Sequence[int]]):
        self._blocks = tuple(tuple(sorted(block)) for block in blocks)

    @property
    def blocks(self) -> Tuple[Tuple[int, ...], ...]:
        return self._blocks

    def __len__(self):
        return len(self._blocks)

    def __iter__(self):
        yield from self._blocks

    def __eq__(self, other):
        return isinstance(other, SetPartition) and self._blocks == other._blocks

    def __hash__(self):
        return hash(self._blocks)

    def __repr__(self):
        return 'SetPartition(' + '|'.join(''.join(map(str, block)) for block in self._blocks) + ')'

    def to_json(self):
        return {'kind': type(self).__name__, 'blocks': [list(block) for block in self._blocks]}


def _check_order(n: int):
    if not 1 <= n <= MAX_PARTITION_ORDER:
        raise ValueError(f'invalid argument value: expecting 1 <= n <= {MAX_PARTITION_ORDER}, got {n}')


def iter_partitions(elements: Sequence[int]) -> Iterator[SetPartition]:
    """
    Yields all set partitions of `elements` in restricted-growth-string order: element i joins block a_i with
    a_1 = 0 and a_i <= 1 + max(a_1 .. a_{i-1}), strings enumerated lexicographically.
    """
    n = len(elements)
    if n == 0:
        return
    growth = [0] * n
    maxima = [0] * n
    while True:
        blocks = [[] for _ in range(maxima[-1] + 1)]
        for element, block in zip(elements, growth):
            blocks[block].append(element)
        yield SetPartition(blocks)

        # advance to the next restricted growth string
        i = n - 1
        while i > 0 and growth[i] == maxima[i - 1] + 1:
            i -= 1
        if i == 0:
            return
        growth[i] += 1
        maxima[i] = max(maxima[i - 1], growth[i])
        for j in range(i + 1, n):
            growth[j] = 0
            maxima[j] = maxima[i]


def enumerate_partitions(n: int) -> List[SetPartition]:
    _check_order(n)
    return list(iter_partitions(range(1, n + 1)))


def partition_count(n: int) -> int:
    """Bell number of n, the size of `enumerate_partitions(n)`."""
    return int(bell(n))


class _IndexedFamily:
    """
    Values indexed per nonempty subset of {1..n} (general mode) or per cardinality (exchangeable mode).
    """

    def __init__(self, order: int, values: Dict, exchangeable: bool = False):
        _check_order(order)
        self._order = order
        self._exchangeable = exchangeable
        if exchangeable:
            self._values = {int(k): v for k, v in values.items()}
        else:
            self._values = {frozenset(k): v for k, v in values.items()}

    @property
    def order(self) -> int:
        return self._order

    @property
    def exchangeable(self) -> bool:
        return self._exchangeable

    @property
    def values(self) -> Dict:
        return dict(self._values)

    def value(self, subset) -> Number:
        key = len(subset) if self._exchangeable else frozenset(subset)
        if key not in self._values:
            raise ValueError(f'missing value for {sorted(subset) if not self._exchangeable else key} '
                             f'in {type(self).__name__}')
        return self._values[key]

    def __getitem__(self, subset):
        if isinstance(subset, int):
            return self.value(range(1, subset + 1))
        return self.value(subset)

    def to_general(self):
        values = {}
        for size in range(1, self._order + 1):
            for subset in itertools.combinations(range(1, self._order + 1), size):
                values[frozenset(subset)] = self.value(subset)
        return type(self)(self._order, values)

    def to_json(self):
        if self._exchangeable:
            values = {str(k): str(v) for k, v in sorted(self._values.items())}
        else:
            values = {','.join(map(str, sorted(k))): str(v) for k, v in sorted(self._values.items(), key=lambda kv: (
                len(kv[0]), sorted(kv[0])))}
        return {'kind': type(self).__name__, 'order': self._order, 'exchangeable': self._exchangeable,
                'values': values}


class CorrelationFamily(_IndexedFamily):
    pass


class CumulantFamily(_IndexedFamily):
    pass


def _mobius_weight(blocks: int) -> int:
    return (-1) ** (blocks - 1) * math.factorial(blocks - 1)


def _product(values):
    result = 1
    for value in values:
        result = result * value
    return result


def _partition_type_count(n: int, multiplicities: Dict[int, int]) -> int:
    """Number of set partitions of an n-set whose block sizes have the given multiplicities."""
    denominator = 1
    for size, count in multiplicities.items():
        denominator *= math.factorial(size) ** count * math.factorial(count)
    return math.factorial(n) // denominator


def _exchangeable_transform(family: _IndexedFamily, mobius: bool) -> Dict[int, Number]:
    result = {}
    for n in range(1, family.order + 1):
        total = 0
        for multiplicities in integer_partitions(n):
            blocks = sum(multiplicities.values())
            term = _partition_type_count(n, multiplicities)
            if mobius:
                term *= _mobius_weight(blocks)
            term = term * _product(_power(family.value(range(size)), count)
                                   for size, count in multiplicities.items())
            total = total + term
        result[n] = total
    return result


def _power(value, count):
    result = 1
    for _ in range(count):
        result = result * value
    return result


def _general_transform(family: _IndexedFamily, mobius: bool) -> Dict[Subset, Number]:
    result = {}
    elements = range(1, family.order + 1)
    for size in range(1, family.order + 1):
        for subset in itertools.combinations(elements, size):
            total = 0
            for partition in iter_partitions(subset):
                term = _product(family.value(block) for block in partition)
                if mobius:
                    term = _mobius_weight(len(partition)) * term
                total = total + term
            result[frozenset(subset)] = total
    return result


def cumulants_from_correlations(G: CorrelationFamily) -> CumulantFamily:
    """
    g_A = Σ_σ (-1)^{|σ|-1} (|σ|-1)! Π_i G_{σ_i} over the set partitions σ of every subset A. Exact when the values
    are integers or fractions.
    """
    if G.exchangeable:
        return CumulantFamily(G.order, _exchangeable_transform(G, True), exchangeable=True)
    return CumulantFamily(G.order, _general_transform(G, True))


def correlations_from_cumulants(g: CumulantFamily) -> CorrelationFamily:
    """G_A = Σ_σ Π_i g_{σ_i}, the inverse of `cumulants_from_correlations`."""
    if g.exchangeable:
        return CorrelationFamily(g.order, _exchangeable_transform(g, False), exchangeable=True)
    return CorrelationFamily(g.order, _general_transform(g, False))


def exclusion_cumulant(positions: Sequence[Vector], epsilon: float) -> float:
    """
    Cumulant of the hard-sphere exclusion indicators G_A = 1{all pairs of A at torus distance > epsilon}.
    Vanishes whenever the overlap graph of the points is disconnected.
    """
    n = len(positions)
    if not 2 <= n <= 8:
        raise ValueError(f'invalid argument value: expecting 2 <= n <= 8 positions, got {n}')
    points = np.asarray(positions, dtype=float)
    displacement = min_image_displacement(points[:, None, :], points[None, :, :])
    separated = np.linalg.norm(displacement, axis=-1) > epsilon

    def admissible(block):
        return all(separated[i - 1, j - 1] for i, j in itertools.combinations(block, 2))

    total = 0
    for partition in iter_partitions(range(1, n + 1)):
        if all(admissible(block) for block in partition):
            total += _mobius_weight(len(partition))
    return float(total)


class ToyModel:
    """
    Finite discrete tagged point process: atoms are phase points (x, v, tag) and every outcome lists how many
    particles sit on each atom together with its probability. Correlation functions are factorial moment
    densities, computed exactly from the outcome table.

    The chemical potentials λ^{|ℓ|} μ^{p-|ℓ|} that normalize the densities f_p multiply them back in the
    cumulant expansion, so the expansion is written directly in the factorial cumulants of the counts.
    """

    def __init__(self, atoms: Sequence[Tuple[Vector, Vector, int]], outcomes: Sequence[Tuple[float, Sequence[int]]],
                 expansion_order: Optional[int] = None):
        if len(atoms) > MAX_TOY_ATOMS or len(outcomes) > MAX_TOY_OUTCOMES:
            raise EnumerationError(f'toy model is not enumerable: {len(atoms)} atoms, {len(outcomes)} outcomes '
                                   f'(limits {MAX_TOY_ATOMS}, {MAX_TOY_OUTCOMES})')
        self._atoms = [(np.asarray(x, dtype=float), np.asarray(v, dtype=float), int(tag)) for x, v, tag in atoms]
        self._probabilities = np.array([p for p, _ in outcomes], dtype=float)
        self._counts = np.array([list(c) for _, c in outcomes], dtype=int).reshape(len(outcomes), len(atoms))
        if expansion_order is not None and not 1 <= expansion_order <= MAX_EXPANSION_ORDER:
            raise ValueError(f'invalid argument value: expecting 1 <= expansion_order <= {MAX_EXPANSION_ORDER}, '
                             f'got {expansion_order}')
        self._expansion_order = expansion_order

    @staticmethod
    def poisson_clusters(atoms, clusters: Sequence[Tuple[float, Sequence[int]]], tail: float = 1e-17):
        """
        Poisson cluster process: clusters of each type arrive with Poisson(rate) counts and deposit the given
        particle counts on the atoms. Its factorial cumulants vanish beyond the largest cluster size, so the
        expansion is finite. Cluster counts are enumerated up to a Poisson tail below `tail`.
        """
        ranges = []
        for rate, _ in clusters:
            ranges.append(range(int(poisson(rate).isf(tail)) + 2 if rate > 0 else 1))
        sizes = [sum(cluster) for _, cluster in clusters]
        outcomes = []
        for numbers in itertools.product(*ranges):
            probability = 1.0
            counts = np.zeros(len(atoms), dtype=int)
            for (rate, cluster), k in zip(clusters, numbers):
                probability *= poisson(rate).pmf(k)
                counts += k * np.asarray(cluster, dtype=int)
            outcomes.append((probability, counts.tolist()))
        return ToyModel(atoms, outcomes, max(max(sizes) if sizes else 1, 1))

    @property
    def atoms(self):
        return self._atoms

    @property
    def expansion_order(self) -> Optional[int]:
        """Fixed number of expansion orders, or None when the expansion runs until its terms are negligible."""
        return self._expansion_order

    def log_laplace(self, values: Vector) -> float:
        """log E[exp Σ_i H(z_i)] computed by direct enumeration of the outcomes."""
        exponents = self._counts @ np.asarray(values, dtype=float)
        shift = np.max(exponents)
        return float(shift + np.log(np.sum(self._probabilities * np.exp(exponents - shift))))

    def factorial_moment(self, multiplicities: Vector) -> float:
        falling = np.ones(len(self._probabilities))
        for atom, k in enumerate(multiplicities):
            for j in range(int(k)):
                falling = falling * np.clip(self._counts[:, atom] - j, 0, None)
        return float(np.sum(self._probabilities * falling))

    def cumulant(self, atoms: Tuple[int, ...]) -> float:
        total = 0.0
        for partition in iter_partitions(range(len(atoms))):
            term = float(_mobius_weight(len(partition)))
            for block in partition:
                multiplicities = np.bincount([atoms[i] for i in block], minlength=len(self._atoms))
                term *= self.factorial_moment(multiplicities)
            total += term
        return total

    def order_moments(self, weights: Vector, order: int) -> Vector:
        """
        a_k = Σ_{|n| = k} F_n Π_i w_i^{n_i} / n_i! for k = 0..order, with F_n the factorial moments of the atom
        counts. Evaluated outcome by outcome as the truncated product Σ_k Π_i C(N_i, n_i) w_i^{n_i}.
        """
        ks = np.arange(order + 1)
        product = np.zeros((len(self._probabilities), order + 1))
        product[:, 0] = 1.0
        for atom, w in enumerate(np.asarray(weights, dtype=float)):
            factor = comb(self._counts[:, atom, None], ks[None, :]) * w ** ks[None, :]
            convolved = np.empty_like(product)
            for k in ks:
                convolved[:, k] = np.sum(product[:, :k + 1] * factor[:, k::-1], axis=1)
            product = convolved
        return self._probabilities @ product

    def cumulant_orders(self, weights: Vector, order: int) -> Vector:
        """
        Order-p terms (1/p!) Σ_{ordered p-tuples} κ Π w of the factorial cumulant expansion for p = 1..order,
        from the order moments through the logarithm recursion p c_p = p a_p - Σ_{j<p} j c_j a_{p-j}.
        """
        moments = self.order_moments(weights, order)
        if not np.all(np.isfinite(moments)) or moments[0] <= 0:
            raise EnumerationError(f'factorial moments of order up to {order} overflow')
        a = moments / moments[0]
        c = np.zeros(order + 1)
        for p in range(1, order + 1):
            c[p] = a[p] - sum(j * c[j] * a[p - j] for j in range(1, p)) / p
        return c[1:]


def verify_cgf_identity(toy_model: ToyModel, H: PhaseFunction, order: Optional[int] = None,
                        tolerance: float = SERIES_TOLERANCE) -> float:
    """
    Compares log E[exp Σ H] with the cumulant expansion
    Σ_p (1/p!) Σ_ℓ λ^{|ℓ|} μ^{p-|ℓ|} ∫ f_p (e^H - 1)^{⊗p}, where the integral runs over ordered atom tuples
    (repetitions included). Without a fixed order the expansion is summed until two consecutive orders fall
    below `tolerance`.

    :return: absolute difference of both sides
    """
    if not isinstance(toy_model, ToyModel):
        raise EnumerationError('verify_cgf_identity requires an explicitly enumerable toy model')
    atoms = toy_model.atoms
    values = np.array([float(H.evaluate(0.0, x[None, :], v[None, :], tag)[0]) for x, v, tag in atoms])
    direct = toy_model.log_laplace(values)
    weights = np.expm1(values)
    log_mass = math.log(float(toy_model.order_moments(weights, 0)[0]))

    order = toy_model.expansion_order if order is None else order
    if order is not None:
        return abs(direct - log_mass - float(np.sum(toy_model.cumulant_orders(weights, order))))

    order = INITIAL_EXPANSION_ORDER
    while order <= MAX_EXPANSION_ORDER:
        terms = toy_model.cumulant_orders(weights, order)
        expansion = float(np.sum(terms))
        negligible = np.abs(terms) < tolerance * (1 + abs(expansion))
        converged = np.flatnonzero(negligible[:-1] & negligible[1:])
        if len(converged):
            return abs(direct - log_mass - float(np.sum(terms[:converged[0]])))
        order *= 2
    raise EnumerationError(f'cumulant expansion did not converge within {MAX_EXPANSION_ORDER} orders; '
                           f'e^H - 1 lies outside its radius of convergence')
