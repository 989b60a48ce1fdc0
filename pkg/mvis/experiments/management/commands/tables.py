from experiments.commands import ExperimentCommand
from experiments.pipeline import TABLES, reproduce_tables, table_defaults


class Command(ExperimentCommand):
    """Django command to reproduce the result tables"""
    help = 'Reproduce table1, table2 or the chaos experiment as CSV'

    def add_arguments(self, parser):
        parser.add_argument('which', choices=TABLES)
        parser.add_argument('--sizes', type=int, nargs='+',
                            help='particle counts of the sweep')
        super().add_arguments(parser)

    def config_defaults(self, options):
        return table_defaults(options['which'])

    def execute_experiment(self, options):
        config = self.resolve(options)
        self.stdout.write(f'Reproducing {options["which"]}...')
        path = reproduce_tables(options['which'], config,
                                sizes=options.get('sizes'))
        self.report_files([path])
