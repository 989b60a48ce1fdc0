"""
Experiment pipelines built on the core library:

* mc: simulate_particles_p -> estimate
* decoupled: P-run -> freeze_measure_path -> solve_bvp_decoupled
  -> simulate_decoupled_q -> estimate
* complete: solve_bvp_complete -> simulate_complete_q -> estimate

plus the table sweeps and the report writers.
"""
import csv
import dataclasses
import logging

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional

from django.conf import settings

from rest_framework.renderers import JSONRenderer

from core.control import (
    BVPSolution,
    ShootingSettings,
    optimality_check_complete,
    optimality_check_decoupled,
    solve_bvp_complete,
    solve_bvp_decoupled,
)
from core.estimators import chaos_error_experiment, estimate
from core.grid import TimeGrid
from core.measures import freeze_measure_path
from core.models import ModelSpec, Payoff, build_model, build_payoff
from core.sim import (
    ParticleEnsemble,
    simulate_complete_q,
    simulate_decoupled_q,
    simulate_particles_p,
)
from core.streams import derive_seed
from experiments.serializers import (
    BVPSolutionSerializer,
    ChaosReportSerializer,
    EstimatorReportSerializer,
    GapReportSerializer,
)


logger = logging.getLogger(__name__)

REPORT_COLUMNS = [
    'algorithm', 'N', 'estimate', 'std_error', 'ess', 'wall_time_s',
    'seed', 'solve_time_s',
]

TABLES = ['table1', 'table2', 'chaos']

# Table 2 values are printed in units of 1e-9
TABLE2_SCALE = 1e9

TIMING_FIELDS = ('wall_time_s', 'solve_time_s')


@dataclass(frozen=True)
class Problem:
    """Everything a single algorithm run needs besides N and the seed"""
    model: ModelSpec
    payoff: Payoff
    grid: TimeGrid
    x0: float
    shooting: ShootingSettings
    workers: int = 1


@dataclass
class AlgorithmRun:
    """Outcome of one algorithm: its report and the objects behind it"""
    report: object
    ensemble: ParticleEnsemble
    solution: Optional[BVPSolution] = None
    p_run: Optional[ParticleEnsemble] = None


@dataclass
class ExperimentResult:
    runs: Dict[str, AlgorithmRun] = field(default_factory=dict)
    gaps: Dict[str, object] = field(default_factory=dict)
    chaos: Optional[object] = None
    files: List[str] = field(default_factory=list)

    @property
    def reports(self):
        return [run.report for run in self.runs.values()]


def build_problem(config, workers=None):
    """Model, payoff and grid from a resolved config"""
    return Problem(
        model=build_model(config.model, **config.model_params()),
        payoff=build_payoff(config.payoff, **config.payoff_params()),
        grid=config.grid,
        x0=config.x0,
        shooting=config.shooting(),
        workers=config.threads if workers is None else workers,
    )


def table_defaults(which):
    """Default overrides for a table sweep"""
    if which == 'table2':
        return {'payoff': 'tanh', 'a': 15.0, 'b': 1.0}
    if which == 'chaos':
        return dict(settings.MVIS_CHAOS, algorithm='mc')
    return {}


# ** SINGLE ALGORITHMS


def run_mc(problem, N, seed):
    ensemble = simulate_particles_p(problem.model, N, problem.grid,
                                    problem.x0, seed,
                                    workers=problem.workers)

    return AlgorithmRun(report=estimate(ensemble, problem.payoff),
                        ensemble=ensemble)


def run_decoupled(problem, N, N2, seed, p_run=None):
    """Two-phase decoupled importance sampling.

    The first phase is the plain P-run with the base seed (reused when
    given); the second phase draws its streams from a derived seed.
    Reported wall time covers both simulations, solve time the BVP.
    """
    if p_run is None:
        p_run = simulate_particles_p(problem.model, N, problem.grid,
                                     problem.x0, seed,
                                     workers=problem.workers)
    path = freeze_measure_path(p_run)
    solution = solve_bvp_decoupled(problem.model, path, problem.payoff,
                                   problem.grid, x0=problem.x0,
                                   settings=problem.shooting)
    ensemble = simulate_decoupled_q(problem.model, path, solution.control,
                                    N2, problem.grid, problem.x0,
                                    derive_seed(seed, 1),
                                    workers=problem.workers)
    report = estimate(ensemble, problem.payoff,
                      solve_time_s=solution.solve_time_s)
    report = dataclasses.replace(
        report,
        wall_time_s=p_run.wall_time_s + ensemble.wall_time_s,
        seed=seed,
    )

    return AlgorithmRun(report=report, ensemble=ensemble,
                        solution=solution, p_run=p_run)


def run_complete(problem, N, seed):
    solution = solve_bvp_complete(problem.model, problem.payoff, N,
                                  problem.grid, x0=problem.x0,
                                  settings=problem.shooting)
    ensemble = simulate_complete_q(problem.model, solution.control, N,
                                   problem.grid, problem.x0, seed,
                                   workers=problem.workers)
    report = estimate(ensemble, problem.payoff,
                      solve_time_s=solution.solve_time_s)

    return AlgorithmRun(report=report, ensemble=ensemble, solution=solution)


def run_algorithms(problem, algorithms, N, N2, seed):
    """Run the selected algorithms in the order mc, decoupled, complete.
    The decoupled first phase reuses the mc run when both are selected."""
    runs = {}
    if 'mc' in algorithms:
        runs['mc'] = run_mc(problem, N, seed)
    if 'decoupled' in algorithms:
        p_run = runs['mc'].ensemble if 'mc' in runs else None
        runs['decoupled'] = run_decoupled(problem, N, N2, seed, p_run=p_run)
    if 'complete' in algorithms:
        runs['complete'] = run_complete(problem, N, seed)

    return runs


def check_optimality(problem, algorithm, run, tolerance):
    """Gap report for the control an algorithm used"""
    if algorithm == 'decoupled':
        return optimality_check_decoupled(
            problem.model, freeze_measure_path(run.p_run), problem.payoff,
            run.solution.control, problem.grid, x0=problem.x0,
            tolerance=tolerance, settings=problem.shooting,
        )

    return optimality_check_complete(
        problem.model, problem.payoff, run.solution.control,
        run.solution.N, problem.grid, x0=problem.x0,
        u_hat=run.solution.hat_control, tolerance=tolerance,
        settings=problem.shooting,
    )


# ** REPORT WRITERS


def _strip_timings(report):
    return dataclasses.replace(report, **{key: 0.0 for key in TIMING_FIELDS})


def write_reports_csv(path, reports, timings=True):
    """One row per report in REPORT_COLUMNS order"""
    with open(path, 'w', newline='') as handle:
        writer = csv.writer(handle)
        writer.writerow(REPORT_COLUMNS)
        for report in reports:
            if not timings:
                report = _strip_timings(report)
            data = EstimatorReportSerializer(report).data
            writer.writerow([_cell(data[column]) for column in REPORT_COLUMNS])

    return path


def _cell(value):
    return repr(value) if isinstance(value, float) else value


def write_json(path, serializer_class, instance):
    with open(path, 'wb') as handle:
        handle.write(JSONRenderer().render(serializer_class(instance).data))

    return path


def run_experiment(config):
    """Run the algorithms a config selects and write their reports.

    Files: {out}.csv with one row per algorithm, {out}_bvp_{algo}.json
    for every solved BVP, {out}_gap_{algo}.json with check_optimality,
    {out}_chaos.json when M > 1, and with dump_paths the particle paths
    {out}_paths_{algo}.csv plus the frozen law {out}_measure_path.csv.
    """
    problem = build_problem(config)
    result = ExperimentResult()
    logger.info('Running %s with N=%d, seed %d',
                ', '.join(config.algorithms), config.N, config.seed)

    result.runs = run_algorithms(problem, config.algorithms, config.N,
                                 config.second_run_size, config.seed)

    if config.M > 1 and 'mc' in config.algorithms:
        result.chaos = chaos_error_experiment(
            problem.model, problem.payoff, config.N, config.M, problem.grid,
            problem.x0, config.seed, workers=problem.workers,
        )

    if config.check_optimality:
        for algorithm, run in result.runs.items():
            if run.solution is not None:
                result.gaps[algorithm] = check_optimality(
                    problem, algorithm, run, config.tolerance,
                )

    out = config.out
    result.files.append(write_reports_csv(
        f'{out}.csv', result.reports, timings=not config.no_timings,
    ))
    for algorithm, run in result.runs.items():
        if run.solution is not None:
            solution = run.solution
            if config.no_timings:
                solution = dataclasses.replace(solution, solve_time_s=0.0)
            result.files.append(write_json(
                f'{out}_bvp_{algorithm}.json', BVPSolutionSerializer,
                solution,
            ))
        if config.dump_paths:
            result.files.append(
                _dump(run.ensemble, f'{out}_paths_{algorithm}.csv')
            )
        if config.dump_paths and run.p_run is not None:
            path = freeze_measure_path(run.p_run)
            path.write_csv(f'{out}_measure_path.csv')
            result.files.append(f'{out}_measure_path.csv')
    for algorithm, gap in result.gaps.items():
        result.files.append(write_json(
            f'{out}_gap_{algorithm}.json', GapReportSerializer, gap,
        ))
    if result.chaos is not None:
        chaos = result.chaos
        if config.no_timings:
            chaos = dataclasses.replace(chaos, wall_time_s=0.0)
        result.files.append(write_json(
            f'{out}_chaos.json', ChaosReportSerializer, chaos,
        ))

    return result


def _dump(ensemble, path):
    ensemble.write_csv(path)
    return path


# ** TABLE SWEEPS


def _table_columns(which):
    columns = ['N']
    for algorithm in ('mc', 'decoupled', 'complete'):
        columns += [f'{algorithm}_payoff', f'{algorithm}_error']
        if which == 'table1':
            columns.append(f'{algorithm}_time')
    columns.append('seed')

    return columns


def _table_row(which, N, seed, runs, timings):
    scale = TABLE2_SCALE if which == 'table2' else 1.0
    row = {'N': N, 'seed': seed}
    for algorithm, run in runs.items():
        report = run.report if timings else _strip_timings(run.report)
        row[f'{algorithm}_payoff'] = report.estimate * scale
        row[f'{algorithm}_error'] = report.std_error * scale
        if which == 'table1':
            row[f'{algorithm}_time'] = report.wall_time_s \
                + report.solve_time_s

    return row


def reproduce_tables(which, config, sizes=None):
    """Sweep N for table1/table2 or repeat plain runs for chaos; writes
    {out}_{which}.csv and returns its path.

    Sweep cells run concurrently on config.threads workers (one thread
    per cell); every cell uses the base seed.
    """
    if which not in TABLES:
        raise ValueError(f'unknown table {which!r}')
    path = f'{config.out}_{which}.csv'
    timings = not config.no_timings

    if which == 'chaos':
        problem = build_problem(config)
        report = chaos_error_experiment(
            problem.model, problem.payoff, config.N, config.M, problem.grid,
            problem.x0, config.seed, workers=problem.workers,
        )
        if not timings:
            report = dataclasses.replace(report, wall_time_s=0.0)
        data = ChaosReportSerializer(report).data
        columns = ['N', 'M', 'mean_estimate', 'mean_std_error',
                   'std_across', 'wall_time_s', 'seed']
        with open(path, 'w', newline='') as handle:
            writer = csv.writer(handle)
            writer.writerow(columns)
            writer.writerow([_cell(data[column]) for column in columns])
        logger.info('Chaos experiment written to %s', path)
        return path

    sizes = list(sizes or settings.MVIS_TABLE_SIZES)
    problem = build_problem(config, workers=1)

    def cell(N):
        runs = run_algorithms(problem, ['mc', 'decoupled', 'complete'],
                              N, N, config.seed)
        logger.info('%s row N=%d done', which, N)
        return _table_row(which, N, config.seed, runs, timings)

    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            rows = list(pool.map(cell, sizes))
    else:
        rows = [cell(N) for N in sizes]

    columns = _table_columns(which)
    with open(path, 'w', newline='') as handle:
        writer = csv.writer(handle)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(row[column]) for column in columns])
    logger.info('%s written to %s', which, path)

    return path
