"""
Experiment configuration: INI file + command-line overrides, merged
over settings.MVIS_DEFAULTS and validated by ExperimentConfigSerializer.

    [model]
    name = kuramoto
    K = 1.0
    sigma = 0.3

    [payoff]
    name = exp
    a = 0.5
    b = 10

    [simulation]
    x0 = 0.0
    T = 1.0
    n_steps = 50
    N = 1000
    algorithm = all
    seed = 20201108

    [output]
    path = results/table1

    [optimality]
    check = yes
    tolerance = 0.01
"""
import configparser
import logging

from dataclasses import asdict, dataclass
from typing import Optional

from django.conf import settings

from core.control import ShootingSettings
from core.exceptions import ConfigurationError
from core.grid import TimeGrid
from experiments.serializers import ExperimentConfigSerializer


logger = logging.getLogger(__name__)

# (section, key in file) -> config field
FILE_KEYS = {
    ('model', 'name'): 'model',
    ('model', 'K'): 'K',
    ('model', 'sigma'): 'sigma',
    ('payoff', 'name'): 'payoff',
    ('payoff', 'a'): 'a',
    ('payoff', 'b'): 'b',
    ('payoff', 'c'): 'c',
    ('simulation', 'x0'): 'x0',
    ('simulation', 'T'): 'T',
    ('simulation', 'n_steps'): 'n_steps',
    ('simulation', 'N'): 'N',
    ('simulation', 'N2'): 'N2',
    ('simulation', 'M'): 'M',
    ('simulation', 'algorithm'): 'algorithm',
    ('simulation', 'seed'): 'seed',
    ('simulation', 'threads'): 'threads',
    ('output', 'path'): 'out',
    ('output', 'dump_paths'): 'dump_paths',
    ('output', 'no_timings'): 'no_timings',
    ('optimality', 'check'): 'check_optimality',
    ('optimality', 'tolerance'): 'tolerance',
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved and validated experiment parameters"""
    model: str
    K: float
    sigma: float
    payoff: str
    a: Optional[float]
    b: Optional[float]
    c: float
    x0: float
    T: float
    n_steps: int
    N: int
    N2: Optional[int]
    M: int
    algorithm: str
    seed: int
    out: str
    threads: int
    dump_paths: bool
    no_timings: bool
    check_optimality: bool
    tolerance: float

    @property
    def grid(self):
        return TimeGrid(T=self.T, n_steps=self.n_steps)

    @property
    def second_run_size(self):
        """N2 of the decoupled algorithm, N when not given"""
        return self.N2 or self.N

    @property
    def algorithms(self):
        if self.algorithm == 'all':
            return ['mc', 'decoupled', 'complete']
        return [self.algorithm]

    def model_params(self):
        return {'K': self.K, 'sigma': self.sigma}

    def payoff_params(self):
        """Payoff keyword arguments, unset ones left to the payoff"""
        params = {'a': self.a, 'b': self.b, 'c': self.c}
        return {key: value for key, value in params.items()
                if value is not None}

    def shooting(self):
        return ShootingSettings(**settings.MVIS_SHOOTING)


def read_config_file(path):
    """Flatten an INI experiment file into config field values"""
    # Keys are case-sensitive (K and N are distinct from k and n)
    parser = configparser.ConfigParser()
    parser.optionxform = str
    with open(path) as handle:
        parser.read_file(handle)

    values = {}
    for section in parser.sections():
        for key, value in parser.items(section):
            try:
                field = FILE_KEYS[(section, key)]
            except KeyError:
                raise ConfigurationError(
                    f'{path}: unknown key {key!r} in section [{section}]'
                ) from None
            values[field] = None if value.lower() == 'none' else value
    logger.debug('Read %d settings from %s', len(values), path)

    return values


def resolve_config(path=None, overrides=None, defaults=None):
    """Merge defaults, file values and non-None overrides, then validate.

    Raises rest_framework.exceptions.ValidationError on invalid values.
    """
    data = dict(settings.MVIS_DEFAULTS)
    data.update(defaults or {})
    if path:
        data.update(read_config_file(path))
    data.update({
        key: value for key, value in (overrides or {}).items()
        if value is not None
    })

    serializer = ExperimentConfigSerializer(data=data)
    serializer.is_valid(raise_exception=True)

    return ExperimentConfig(**serializer.validated_data)


def format_config(config):
    """One 'key = value' line per field"""
    return '\n'.join(
        f'{key} = {value}' for key, value in asdict(config).items()
    )
