from experiments.commands import ExperimentCommand
from experiments.pipeline import run_experiment


class Command(ExperimentCommand):
    """Django command to run the selected estimators on one config"""
    help = 'Run plain Monte Carlo and/or importance-sampling estimators'

    def execute_experiment(self, options):
        config = self.resolve(options)
        result = run_experiment(config)

        for report in result.reports:
            self.stdout.write(
                f'{report.algorithm:>10}  N={report.N}  '
                f'estimate={report.estimate:.6g}  '
                f'std_error={report.std_error:.3g}  ess={report.ess:.1f}'
            )
        for algorithm, gap in result.gaps.items():
            style = self.style.SUCCESS if gap.certified \
                else self.style.WARNING
            self.stdout.write(style(
                f'{algorithm} optimality gap {gap.relative_gap:.3e} '
                f'({gap.scope})'
            ))
        self.report_files(result.files)
