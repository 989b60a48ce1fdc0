"""
Shared base for the experiment management commands: common arguments,
config resolution and the mapping of library errors to exit codes.
"""
import configparser
import logging

from django.core.management.base import BaseCommand, CommandError

from rest_framework.exceptions import ValidationError

from core.exceptions import (
    ConfigurationError,
    DomainError,
    PayoffVanishesError,
    SimulationError,
    SolverError,
)
from experiments.config import format_config, resolve_config
from experiments.serializers import ALGORITHMS


logger = logging.getLogger(__name__)

EXIT_CONFIG = 1
EXIT_SOLVER = 2
EXIT_SIMULATION = 3

# Checked in order: PayoffVanishesError is a DomainError but is raised
# by the solver
EXIT_CODES = [
    (PayoffVanishesError, EXIT_SOLVER),
    (SolverError, EXIT_SOLVER),
    (SimulationError, EXIT_SIMULATION),
    (ValidationError, EXIT_CONFIG),
    (ConfigurationError, EXIT_CONFIG),
    (DomainError, EXIT_CONFIG),
    (configparser.Error, EXIT_CONFIG),
    (OSError, EXIT_CONFIG),
]


def exit_code(error):
    for error_class, code in EXIT_CODES:
        if isinstance(error, error_class):
            return code

    return None


class ExperimentCommand(BaseCommand):
    """Base command: parse flags, resolve the config, run, map errors"""

    def add_arguments(self, parser):
        parser.add_argument('--config', help='INI experiment file')
        parser.add_argument('--seed', type=int)
        parser.add_argument('--algorithm', choices=ALGORITHMS)
        parser.add_argument('--N', type=int, dest='N')
        parser.add_argument('--N2', type=int, dest='N2')
        parser.add_argument('--M', type=int, dest='M')
        parser.add_argument('--out', help='output path prefix')
        parser.add_argument('--threads', type=int)
        # None when absent so the config file value is kept
        parser.add_argument('--dump-paths', action='store_true',
                            default=None, dest='dump_paths')
        parser.add_argument('--no-timings', action='store_true',
                            default=None, dest='no_timings',
                            help='write 0.0 in timing columns')
        parser.add_argument('--check-optimality', action='store_true',
                            default=None, dest='check_optimality')
        parser.add_argument('--tolerance', type=float)

    override_keys = [
        'seed', 'algorithm', 'N', 'N2', 'M', 'out', 'threads',
        'dump_paths', 'no_timings', 'check_optimality', 'tolerance',
    ]

    def config_defaults(self, options):
        """Extra defaults applied below the config file"""
        return {}

    def resolve(self, options):
        overrides = {key: options.get(key) for key in self.override_keys}
        config = resolve_config(
            options.get('config'), overrides,
            defaults=self.config_defaults(options),
        )
        self.stdout.write('Resolved configuration:')
        self.stdout.write(format_config(config))

        return config

    def execute_experiment(self, options):
        raise NotImplementedError

    def handle(self, *args, **options):
        try:
            self.execute_experiment(options)
        except Exception as error:
            code = exit_code(error)
            if code is None:
                raise
            logger.error('%s failed: %s', type(error).__name__, error)
            raise CommandError(
                f'{type(error).__name__}: {error}', returncode=code,
            ) from error

    def report_files(self, files):
        for path in files:
            self.stdout.write(f'  {path}')
        self.stdout.write(self.style.SUCCESS('Done!'))
