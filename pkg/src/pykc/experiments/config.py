import hashlib
import json
from typing import Any, Callable, Dict, List, Optional, Tuple

from pykc.large_deviations.observable_path import ObservablePath
from pykc.phase_function import PhaseFunction, parse_expression
from pykc.scaling import ConfigError, GrowthClassError, ScalingConfig

EXPERIMENTS = ('sample', 'evolve', 'lln', 'fluct', 'cgf', 'cycles', 'solve-pde', 'tree-mc', 'bhj', 'rate')
PARTICLE_EXPERIMENTS = ('sample', 'evolve', 'lln', 'fluct', 'cgf', 'cycles')
BACKENDS = ('deterministic', 'jump', 'dyson')
KERNEL_EXPERIMENTS = ('solve-pde', 'bhj', 'rate')
BACKEND_EXPERIMENTS = ('lln', 'fluct', 'cgf')


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ('true', 'yes', 'on', '1'):
        return True
    if lowered in ('false', 'no', 'off', '0'):
        return False
    raise ValueError(f'expecting a boolean, got `{text}`')


def _parse_floats(text: str) -> List[float]:
    values = [float(part) for part in text.split(';') if part.strip()]
    if not values:
        raise ValueError('expecting at least one number')
    return values


def _parse_names(text: str) -> List[str]:
    return [part.strip() for part in text.split(';') if part.strip()]


class Field:
    """One schema entry: parser, default, required flag and documentation."""

    def __init__(self, parse: Callable[[str], Any], default: Optional[str] = None, required: bool = False,
                 doc: str = ''):
        self._parse = parse
        self._default = default
        self._required = required
        self._doc = doc

    @property
    def default(self) -> Optional[str]:
        return self._default

    @property
    def required(self) -> bool:
        return self._required

    @property
    def doc(self) -> str:
        return self._doc

    def parse(self, text: str):
        return self._parse(text)


SCHEMA: Dict[str, Field] = {
    'experiment': Field(str, required=True, doc=f'one of {", ".join(EXPERIMENTS)}'),
    'seed': Field(int, '0', doc='base seed; replica seeds are spawned from it'),
    'replicas': Field(int, '10', doc='number of particle-system replicas'),
    'output': Field(str, 'results', doc='output directory'),
    'scaling.d': Field(int, '3', doc='dimension, 2 or 3'),
    'scaling.mu': Field(_parse_floats, '100', doc='background chemical potential; `;`-separated list for sweeps'),
    'scaling.epsilon': Field(float, doc='diameter; derived from mu by the mixed scaling when omitted'),
    'scaling.lambda': Field(float, doc='tagged chemical potential'),
    'scaling.lambda_exponent': Field(float, '0.6', doc='lambda = mu^exponent when scaling.lambda is omitted'),
    'scaling.beta': Field(float, '1', doc='inverse temperature'),
    'phi0': Field(str, '1', doc='initial perturbation, prefix expression'),
    'phi0.bound': Field(float, doc='declared sup bound of phi0'),
    'observables': Field(str, 'v0', doc='`;`-separated prefix expressions'),
    'candidates': Field(str, doc='`;`-separated prefix expressions for bhj and rate'),
    'candidates.bound': Field(float, '10', doc='bounded-transport constant of the listed candidates'),
    'sampling.exclusion': Field(_parse_bool, 'true', doc='condition the initial law on admissibility'),
    'sampling.sequential': Field(_parse_bool, 'false', doc='approximate sequential-insertion fallback'),
    'budget.max_rejections': Field(int, '100000', doc='admissibility rejection budget'),
    'budget.max_events': Field(int, '1000000', doc='collision event budget per replica'),
    'budget.duration': Field(float, doc='wall-clock limit of the replica farm in seconds'),
    'solver.t': Field(float, '0.5', doc='final time'),
    'solver.dt': Field(float, '0.002', doc='deterministic time step, at most 0.1 / max nu on the grid'),
    'solver.dt_max': Field(float, '0.01', doc='largest snapshot gap of filtered means'),
    'solver.grid_m': Field(int, '12', doc='velocity grid points per axis'),
    'solver.v_max_tail': Field(float, '1e-10', doc='Maxwellian tail mass beyond the grid box'),
    'solver.backend': Field(str, 'jump', doc=f'F1 backend, one of {", ".join(BACKENDS)}'),
    'solver.backends': Field(_parse_names, 'deterministic', doc='backends compared by solve-pde'),
    'solver.n_samples': Field(int, '10000', doc='Monte Carlo samples'),
    'solver.k_max': Field(int, '10', doc='Dyson truncation order'),
    'hj.transport_sign': Field(int, '-1', doc='orientation of the transport term of the Hamilton-Jacobi system'),
    'rate.family_size': Field(int, '30', doc='size of the generated candidate family'),
    'rate.amplitude': Field(float, '0.2', doc='scale range of the generated candidate family'),
    'rate.normalize': Field(_parse_bool, 'true', doc='rescale phi0 to unit grid mass'),
}


def parse_config_text(text: str) -> Tuple[Dict[str, Tuple[str, int]], List[ConfigError]]:
    """
    Splits `key = value` lines; `#` starts a comment.

    :return: raw values with their line numbers, and the syntax errors found
    """
    raw, errors = {}, []
    for number, line in enumerate(text.splitlines(), start=1):
        content = line.split('#', 1)[0].strip()
        if not content:
            continue
        if '=' not in content:
            errors.append(ConfigError('expecting `key = value`', line=number))
            continue
        key, value = (part.strip() for part in content.split('=', 1))
        if key not in SCHEMA:
            errors.append(ConfigError('unknown key', field=key, line=number))
        elif key in raw:
            errors.append(ConfigError(f'duplicate key, first set on line {raw[key][1]}', field=key, line=number))
        else:
            raw[key] = (value, number)
    return raw, errors


class ExperimentConfig:
    """
    Experiment configuration parsed against SCHEMA; raw texts are kept for hashing. A strict config raises the
    first problem found, a lenient one collects them in `errors`.
    """

    def __init__(self, raw: Dict[str, str], lines: Optional[Dict[str, int]] = None, strict: bool = True):
        self._raw = dict(raw)
        self._lines = dict(lines) if lines is not None else {}
        self._values, errors = self._parse()
        errors += self.violations()
        if strict and errors:
            raise errors[0]
        self._errors = errors

    @staticmethod
    def from_text(text: str):
        raw, errors = parse_config_text(text)
        if errors:
            raise errors[0]
        return ExperimentConfig({key: value for key, (value, _) in raw.items()},
                                {key: line for key, (_, line) in raw.items()})

    @staticmethod
    def from_file(path: str):
        with open(path) as file:
            return ExperimentConfig.from_text(file.read())

    def _parse(self) -> Tuple[Dict[str, Any], List[ConfigError]]:
        values, errors = {}, []
        for key, field in SCHEMA.items():
            text = self._raw.get(key, field.default)
            if text is None:
                if field.required:
                    errors.append(ConfigError('missing required key', field=key))
                values[key] = None
                continue
            try:
                values[key] = field.parse(text)
            except ValueError as e:
                errors.append(ConfigError(f'invalid value `{text}`: {e}', field=key, line=self._lines.get(key)))
                values[key] = None
        return values, errors

    def _error(self, key: str, message: str) -> ConfigError:
        return ConfigError(message, field=key, line=self._lines.get(key))

    def violations(self) -> List[ConfigError]:
        """Semantic checks on top of the per-field parsing; scaling constraints come from ScalingConfig."""
        errors = []
        v = self._values
        if v['experiment'] is not None and v['experiment'] not in EXPERIMENTS:
            errors.append(self._error('experiment', f'expecting one of {", ".join(EXPERIMENTS)}'))
        if v['replicas'] is not None and v['replicas'] < 1:
            errors.append(self._error('replicas', 'expecting at least one replica'))
        for key in ('solver.t', 'solver.dt', 'solver.dt_max', 'solver.n_samples', 'solver.grid_m'):
            if v[key] is not None and not v[key] > 0:
                errors.append(self._error(key, 'expecting a positive value'))
        if v['solver.backend'] is not None and v['solver.backend'] not in BACKENDS:
            errors.append(self._error('solver.backend', f'expecting one of {", ".join(BACKENDS)}'))
        for name in v['solver.backends'] or []:
            if name not in BACKENDS:
                errors.append(self._error('solver.backends', f'unknown backend `{name}`'))
        if v['scaling.d'] == 2:
            if v['experiment'] in KERNEL_EXPERIMENTS:
                errors.append(self._error('scaling.d', f'{v["experiment"]} needs the collision kernel, which '
                                                       f'supports d = 3 only'))
            elif v['experiment'] in BACKEND_EXPERIMENTS and v['solver.backend'] == 'deterministic':
                errors.append(self._error('solver.backend', 'the deterministic backend supports d = 3 only; '
                                                            'expecting jump or dyson'))
        if v['hj.transport_sign'] is not None and v['hj.transport_sign'] not in (-1, 1):
            errors.append(self._error('hj.transport_sign', 'expecting -1 or 1'))
        if all(v[key] is not None for key in ('scaling.mu', 'scaling.d', 'scaling.beta', 'scaling.lambda_exponent')):
            for mu in v['scaling.mu']:
                scaling = self._scaling(mu, check=False)
                for name, message in scaling.violations():
                    key = {'mixed scaling': 'scaling.epsilon', 'lambda': 'scaling.lambda',
                           'dimension': 'scaling.d', 'beta': 'scaling.beta'}.get(name, 'scaling.mu')
                    errors.append(ConfigError(f'{name}: {message}', field=key, line=self._lines.get(key)))
        for key in ('phi0', 'observables', 'candidates'):
            if self._raw.get(key, SCHEMA[key].default) is None or v['scaling.d'] is None:
                continue
            try:
                self._expressions(key)
            except ValueError as e:
                errors.append(self._error(key, str(e)))
        return errors

    def _scaling(self, mu: float, check: bool = True) -> ScalingConfig:
        v = self._values
        d = v['scaling.d']
        epsilon = v['scaling.epsilon']
        if epsilon is None:
            epsilon = mu ** (-1.0 / (d - 1)) if d > 1 else 0.0
        lam = v['scaling.lambda'] if v['scaling.lambda'] is not None else mu ** v['scaling.lambda_exponent']
        return ScalingConfig(d, epsilon, mu, lam, v['scaling.beta'], check)

    def _expressions(self, key: str) -> List[PhaseFunction]:
        text = self._raw.get(key, SCHEMA[key].default)
        if text is None:
            return []
        d = self._values['scaling.d']
        bound = self._values.get(f'{key}.bound')
        return [parse_expression(part, d, bound) for part in text.split(';') if part.strip()]

    @property
    def errors(self) -> List[ConfigError]:
        return self._errors

    def __getitem__(self, key: str):
        if key not in SCHEMA:
            raise KeyError(key)
        return self._values[key]

    @property
    def experiment(self) -> str:
        return self._values['experiment']

    @property
    def seed(self) -> int:
        return self._values['seed']

    @property
    def replicas(self) -> int:
        return self._values['replicas']

    @property
    def output(self) -> str:
        return self._values['output']

    @property
    def scalings(self) -> List[ScalingConfig]:
        return [self._scaling(mu) for mu in self._values['scaling.mu']]

    @property
    def scaling(self) -> ScalingConfig:
        return self.scalings[0]

    @property
    def phi0(self) -> PhaseFunction:
        return self._expressions('phi0')[0]

    @property
    def observables(self) -> List[PhaseFunction]:
        return self._expressions('observables')

    @property
    def candidates(self) -> List[PhaseFunction]:
        return self._expressions('candidates')

    def with_values(self, overrides: Dict[str, Any]):
        """Copy with raw values replaced, e.g. {'seed': 3, 'solver.t': 0.2}."""
        raw = dict(self._raw)
        raw.update({key: str(value) for key, value in overrides.items()})
        return ExperimentConfig(raw, self._lines)

    def to_json(self) -> Dict[str, str]:
        """Effective raw values including defaults, in schema order."""
        return {key: self._raw.get(key, field.default) for key, field in SCHEMA.items()
                if self._raw.get(key, field.default) is not None}

    def hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_json(), sort_keys=True).encode()).hexdigest()


class ConfigReport:
    """Outcome of validate_config: every problem found, none raised."""

    def __init__(self, path: str, errors: List[ConfigError], checks: Optional[Dict[str, Any]] = None):
        self._path = path
        self._errors = list(errors)
        self._checks = dict(checks) if checks is not None else {}

    @property
    def path(self) -> str:
        return self._path

    @property
    def errors(self) -> List[ConfigError]:
        return self._errors

    @property
    def checks(self) -> Dict[str, Any]:
        return self._checks

    @property
    def ok(self) -> bool:
        return not self._errors

    def fields(self) -> List[Optional[str]]:
        return [e.field for e in self._errors]

    def to_json(self):
        return {'path': self._path, 'ok': self.ok, 'checks': self._checks,
                'errors': [{'line': e.line, 'field': e.field, 'message': e.message} for e in self._errors]}


def validate_config(path: str, growth_samples: int = 4096) -> ConfigReport:
    """
    Full schema, scaling-constraint and growth-class report of a config file without running anything.
    Declared bounds of phi0 and the bounded-transport class of the candidates are checked on scrambled
    Sobol points.
    """
    with open(path) as file:
        raw, errors = parse_config_text(file.read())
    lines = {key: line for key, (_, line) in raw.items()}
    cfg = ExperimentConfig({key: value for key, (value, _) in raw.items()}, lines, strict=False)
    errors += cfg.errors
    checks = {}
    if errors:
        return ConfigReport(path, errors, checks)
    beta, t = cfg['scaling.beta'], cfg['solver.t']
    for index, h in enumerate(cfg.candidates):
        try:
            checks[f'candidates[{index}]'] = ObservablePath(h, cfg['candidates.bound'],
                                                            cfg['hj.transport_sign']).certify(beta, t, growth_samples)
        except GrowthClassError as e:
            errors.append(ConfigError(e.message, field='candidates', line=lines.get('candidates')))
    if cfg.phi0.bound is not None:
        try:
            checks['phi0'] = cfg.phi0.verify_bound(beta, t, growth_samples)
        except GrowthClassError as e:
            errors.append(ConfigError(e.message, field='phi0', line=lines.get('phi0')))
    return ConfigReport(path, errors, checks)
