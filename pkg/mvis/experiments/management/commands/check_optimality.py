from experiments.commands import ExperimentCommand
from experiments.pipeline import (
    build_problem,
    check_optimality,
    run_algorithms,
    write_json,
)
from experiments.serializers import GapReportSerializer


class Command(ExperimentCommand):
    """Django command to check asymptotic optimality of the IS controls.

    Solves the BVP of each selected importance-sampling algorithm and
    compares the sup-objective at that control with the simplified one.
    Exits with status 0 whether or not the control is certified.
    """
    help = 'Compute the asymptotic optimality gap of the IS controls'

    def execute_experiment(self, options):
        config = self.resolve(options)
        algorithms = [
            algorithm for algorithm in config.algorithms
            if algorithm != 'mc'
        ]
        if not algorithms:
            self.stdout.write(self.style.WARNING(
                'Plain Monte Carlo has no control to check'
            ))
            return

        problem = build_problem(config)
        # The decoupled check needs the frozen law of the first phase
        runs = run_algorithms(problem, algorithms, config.N,
                              config.second_run_size, config.seed)
        files = []
        for algorithm, run in runs.items():
            gap = check_optimality(problem, algorithm, run, config.tolerance)
            style = self.style.SUCCESS if gap.certified \
                else self.style.WARNING
            self.stdout.write(style(
                f'{algorithm}: L(h)={gap.sup_value:.6g}  '
                f'simplified={gap.simplified_value:.6g}  '
                f'relative gap={gap.relative_gap:.3e}  scope={gap.scope}  '
                f'{"certified" if gap.certified else "not certified"}'
            ))
            files.append(write_json(
                f'{config.out}_gap_{algorithm}.json', GapReportSerializer,
                gap,
            ))
        self.report_files(files)
