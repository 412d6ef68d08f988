import math
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import sympy
from scipy.stats import norm, qmc

from pykc.scaling import GrowthClassError, Vector

T = sympy.Symbol('t', real=True)
TAG = sympy.Symbol('tag', real=True)
X = tuple(sympy.Symbol(f'x{i}', real=True) for i in range(3))
V = tuple(sympy.Symbol(f'v{i}', real=True) for i in range(3))

DEFAULT_BOUND_SAMPLES = 10000


class PhaseFunction:
    """
    Observable over (t, x, v, tag) held as a sympy expression. The declared `bound` C and `growth` a state that
    |h(t, x, v, tag)| <= C exp(a |v|^2) everywhere; `growth = 0` is a plain sup bound.
    """

    def __init__(self, expression, d: int = 3, bound: Optional[float] = None, growth: float = 0.0,
                 name: Optional[str] = None):
        self._expression = sympy.sympify(expression)
        self._d = d
        self._bound = bound
        self._growth = float(growth)
        self._name = name
        self._compiled = None
        unknown = self._expression.free_symbols - set(self.symbols)
        if unknown:
            raise ValueError(f'invalid argument value: unknown symbols {sorted(map(str, unknown))} for d = {d}')

    def __getstate__(self):
        state = self.__dict__.copy()
        state['_compiled'] = None
        return state

    @staticmethod
    def constant(c: float, d: int = 3):
        return PhaseFunction(sympy.nsimplify(c) if isinstance(c, int) else sympy.Float(c), d, abs(c))

    @property
    def expression(self):
        return self._expression

    @property
    def d(self) -> int:
        return self._d

    @property
    def bound(self) -> Optional[float]:
        return self._bound

    @property
    def growth(self) -> float:
        return self._growth

    @property
    def name(self) -> str:
        return self._name if self._name is not None else str(self._expression)

    @property
    def symbols(self) -> Tuple[sympy.Symbol, ...]:
        return (T,) + X[:self._d] + V[:self._d] + (TAG,)

    @property
    def is_homogeneous(self) -> bool:
        return not (self._expression.free_symbols & set(X))

    @property
    def is_time_dependent(self) -> bool:
        return T in self._expression.free_symbols

    @property
    def is_zero(self) -> bool:
        return self._expression == 0

    @property
    def is_constant(self) -> bool:
        return not self._expression.free_symbols

    def named(self, name: str):
        return PhaseFunction(self._expression, self._d, self._bound, self._growth, name)

    def with_bound(self, bound: float, growth: float = 0.0):
        return PhaseFunction(self._expression, self._d, bound, growth, self._name)

    def evaluate(self, t, x: Vector, v: Vector, tag=1) -> Vector:
        """
        Evaluates the observable on stacked phase points.

        :param t: time, scalar or array broadcastable against the points
        :param x: positions, shape (..., d)
        :param v: velocities, shape (..., d)
        :param tag: tag(s) in {0, 1}
        :return: float array of shape x.shape[:-1]
        """
        if self._compiled is None:
            self._compiled = sympy.lambdify(self.symbols, self._expression, modules='numpy')
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        shape = np.broadcast_shapes(x.shape[:-1], v.shape[:-1])
        arguments = ([t]
                     + [x[..., i] for i in range(self._d)]
                     + [v[..., i] for i in range(self._d)]
                     + [tag])
        values = self._compiled(*arguments)
        return np.broadcast_to(np.asarray(values, dtype=float), shape).copy()

    __call__ = evaluate

    def transport_derivative(self, sign: int = 1):
        """
        Returns (∂_t + sign v·∇_x) of this observable as a new phase function.

        :param sign: +1 for the forward free transport, -1 for the backward form used by Hamilton-Jacobi
        """
        derivative = sympy.diff(self._expression, T)
        for i in range(self._d):
            derivative += sign * V[i] * sympy.diff(self._expression, X[i])
        return PhaseFunction(sympy.simplify(derivative), self._d)

    def at_time(self, t: float):
        return PhaseFunction(self._expression.subs(T, t), self._d, self._bound, self._growth, self._name)

    def exp(self):
        bound = None if self._bound is None or self._growth != 0 else math.exp(self._bound)
        return PhaseFunction(sympy.exp(self._expression), self._d, bound)

    def verify_bound(self, beta: float = 1.0, t_max: float = 1.0, n: int = DEFAULT_BOUND_SAMPLES,
                     seed: int = 0) -> float:
        """
        Checks the declared bound on n scrambled Sobol points: x uniform on the torus, v Gaussian with
        variance 4/beta per axis, t uniform on [0, t_max], tag in {0, 1}.

        :return: the largest observed value of |h| exp(-growth |v|^2)
        """
        if self._bound is None:
            raise GrowthClassError(f'no bound declared for {self.name}')
        t, x, v, tag = quasi_random_points(self._d, n, beta, t_max, seed)
        values = np.abs(self.evaluate(t, x, v, tag)) * np.exp(-self._growth * np.sum(v * v, axis=-1))
        observed = float(np.max(values)) if values.size else 0.0
        if not np.all(np.isfinite(values)) or observed > self._bound * (1 + 1e-12):
            raise GrowthClassError(f'declared bound {self._bound} of {self.name} violated: observed {observed}')
        return observed

    def _combine(self, other, expression, bound, growth):
        return PhaseFunction(expression, self._d, bound, growth)

    def __add__(self, other):
        other = _as_phase_function(other, self._d)
        bound = None if self._bound is None or other._bound is None else self._bound + other._bound
        return self._combine(other, self._expression + other._expression, bound, max(self._growth, other._growth))

    __radd__ = __add__

    def __neg__(self):
        return PhaseFunction(-self._expression, self._d, self._bound, self._growth)

    def __sub__(self, other):
        return self + (-_as_phase_function(other, self._d))

    def __rsub__(self, other):
        return _as_phase_function(other, self._d) - self

    def __mul__(self, other):
        other = _as_phase_function(other, self._d)
        bound = None if self._bound is None or other._bound is None else self._bound * other._bound
        return self._combine(other, self._expression * other._expression, bound, self._growth + other._growth)

    __rmul__ = __mul__

    def to_json(self) -> Dict[str, Union[str, float, None]]:
        return {'kind': type(self).__name__, 'expression': str(self._expression), 'bound': self._bound,
                'growth': self._growth}

    def __repr__(self):
        return f'PhaseFunction({self._expression})'


def _as_phase_function(value, d: int) -> PhaseFunction:
    if isinstance(value, PhaseFunction):
        if value.d != d:
            raise ValueError('invalid argument value: expecting phase functions of equal dimension')
        return value
    return PhaseFunction.constant(value, d)


def quasi_random_points(d: int, n: int, beta: float, t_max: float, seed: int):
    sampler = qmc.Sobol(2 * d + 2, scramble=True, seed=seed)
    points = sampler.random(n)
    x = points[:, :d]
    # keep the Gaussian transform away from the 0 and 1 edges of the unit cube
    v = norm.ppf(np.clip(points[:, d:2 * d], 1e-12, 1 - 1e-12)) * (2 / math.sqrt(beta))
    t = points[:, 2 * d] * t_max
    tag = (points[:, 2 * d + 1] > 0.5).astype(float)
    return t, x, v, tag


# prefix grammar ------------------------------------------------------------------------------------------------------

def _tokenize(text: str) -> List[str]:
    return text.replace('(', ' ( ').replace(')', ' ) ').split()


def _atom(token: str, d: int):
    if token == 'pi':
        return sympy.pi
    if token == 't':
        return T
    if token == 'tag':
        return TAG
    if token[0] in 'xv' and token[1:].isdigit():
        index = int(token[1:])
        if index >= d:
            raise ValueError(f'invalid expression: coordinate {token} out of range for d = {d}')
        return (X if token[0] == 'x' else V)[index]
    try:
        return sympy.nsimplify(token) if token.lstrip('-').isdigit() else sympy.Float(float(token))
    except ValueError:
        raise ValueError(f'invalid expression: unknown atom `{token}`')


def _norm2(d: int):
    return sum(V[i] ** 2 for i in range(d))


_ARITIES = {'+': None, '*': None, '-': (1, 2), '/': (2, 2), '^': (2, 2), 'sin': (1, 1), 'cos': (1, 1),
            'exp': (1, 1), 'gauss': (1, 1), 'norm2': (0, 0), 'ind': (1, 1)}


def _form(operator: str, operands: Sequence, d: int):
    if operator not in _ARITIES:
        raise ValueError(f'invalid expression: unknown operator `{operator}`')
    arity = _ARITIES[operator]
    if arity is not None and not arity[0] <= len(operands) <= arity[1]:
        raise ValueError(f'invalid expression: operator `{operator}` takes {arity[0]}..{arity[1]} operands')
    if operator == '+':
        return sympy.Add(*operands)
    if operator == '*':
        return sympy.Mul(*operands)
    if operator == '-':
        return -operands[0] if len(operands) == 1 else operands[0] - operands[1]
    if operator == '/':
        return operands[0] / operands[1]
    if operator == '^':
        return operands[0] ** operands[1]
    if operator == 'sin':
        return sympy.sin(operands[0])
    if operator == 'cos':
        return sympy.cos(operands[0])
    if operator == 'exp':
        return sympy.exp(operands[0])
    if operator == 'gauss':
        return sympy.exp(-operands[0] * _norm2(d))
    if operator == 'norm2':
        return _norm2(d)
    return sympy.Piecewise((1, operands[0] > 0), (0, True))


def _parse_tokens(tokens: List[str], position: int, d: int):
    if position >= len(tokens):
        raise ValueError('invalid expression: unexpected end of input')
    token = tokens[position]
    if token == ')':
        raise ValueError('invalid expression: unexpected `)`')
    if token != '(':
        return _atom(token, d), position + 1
    if position + 1 >= len(tokens):
        raise ValueError('invalid expression: unexpected end of input')
    operator = tokens[position + 1]
    position += 2
    operands = []
    while position < len(tokens) and tokens[position] != ')':
        operand, position = _parse_tokens(tokens, position, d)
        operands.append(operand)
    if position >= len(tokens):
        raise ValueError('invalid expression: missing `)`')
    return _form(operator, operands, d), position + 1


def parse_expression(text: str, d: int = 3, bound: Optional[float] = None, growth: float = 0.0,
                     name: Optional[str] = None) -> PhaseFunction:
    """
    Parses the prefix grammar used in configuration files, e.g. `(* 0.5 (cos (* 2 pi x0)))`.

    :param text: expression text
    :param d: dimension
    :param bound: declared bound C
    :param growth: declared Gaussian growth coefficient a
    :param name: optional display name
    :return: the parsed phase function
    """
    tokens = _tokenize(text)
    if not tokens:
        raise ValueError('invalid expression: empty')
    expression, position = _parse_tokens(tokens, 0, d)
    if position != len(tokens):
        raise ValueError(f'invalid expression: trailing input after position {position}')
    return PhaseFunction(expression, d, bound, growth, name if name is not None else text.strip())


def parse_expression_list(text: str, d: int = 3) -> List[PhaseFunction]:
    return [parse_expression(part, d) for part in text.split(';') if part.strip()]
