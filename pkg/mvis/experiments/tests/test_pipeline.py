import os
import tempfile

import numpy as np

from django.test import SimpleTestCase

from core.control import solve_bvp_complete
from core.estimators import EstimatorReport, estimate
from core.sim import simulate_complete_q
from core.streams import derive_seed
from experiments.config import resolve_config
from experiments.pipeline import (
    build_problem,
    check_optimality,
    run_algorithms,
    run_decoupled,
    table_defaults,
    write_reports_csv,
)


def sample_report(**params):
    """Helper function to create an estimator report"""
    defaults = {
        'algorithm': 'mc',
        'N': 10,
        'estimate': 1.5,
        'std_error': 0.1,
        'ess': 10.0,
        'wall_time_s': 0.25,
        'seed': 1,
        'solve_time_s': 0.0,
    }
    defaults.update(**params)

    return EstimatorReport(**defaults)


class PipelineTests(SimpleTestCase):
    """Test the algorithm pipelines"""

    def test_decoupled_reuses_plain_run(self):
        """Test the first decoupled phase is the plain run itself"""
        config = resolve_config(overrides={'N': 40, 'N2': 60, 'seed': 3})
        runs = run_algorithms(build_problem(config), config.algorithms,
                              config.N, config.second_run_size, config.seed)

        self.assertIs(runs['decoupled'].p_run, runs['mc'].ensemble)
        self.assertEqual(runs['decoupled'].report.N, 60)
        self.assertEqual(runs['decoupled'].report.seed, 3)
        self.assertEqual(runs['decoupled'].ensemble.seed, derive_seed(3, 1))
        self.assertGreater(runs['complete'].report.solve_time_s, 0.0)

    def test_write_reports_csv_without_timings(self):
        with tempfile.TemporaryDirectory() as directory:
            path = os.path.join(directory, 'report.csv')
            write_reports_csv(path, [sample_report()], timings=False)
            with open(path) as handle:
                lines = handle.read().splitlines()

        self.assertEqual(
            lines[0],
            'algorithm,N,estimate,std_error,ess,wall_time_s,seed,'
            'solve_time_s',
        )
        self.assertEqual(lines[1], 'mc,10,1.5,0.1,10.0,0.0,1,0.0')

    def test_non_finite_values_written_empty(self):
        with tempfile.TemporaryDirectory() as directory:
            path = os.path.join(directory, 'report.csv')
            write_reports_csv(path, [sample_report(std_error=float('nan'))])
            with open(path) as handle:
                lines = handle.read().splitlines()

        self.assertEqual(lines[1].split(',')[3], '')

    def test_table_defaults(self):
        self.assertEqual(table_defaults('table2')['payoff'], 'tanh')
        self.assertEqual(table_defaults('chaos')['algorithm'], 'mc')
        self.assertEqual(table_defaults('table1'), {})


class KuramotoAcceptanceTests(SimpleTestCase):
    """Test the Kuramoto example with the exp payoff at desk scale"""

    def setUp(self):
        self.config = resolve_config(overrides={'N': 1000,
                                                'seed': 20201108})
        self.problem = build_problem(self.config)

    def test_default_seed_thousand_particles(self):
        """Test plain Monte Carlo ranges and a tenfold error cut by both
        importance samplers"""
        config, problem = self.config, self.problem
        runs = run_algorithms(problem, config.algorithms, config.N,
                              config.second_run_size, config.seed)
        mc = runs['mc'].report
        decoupled = runs['decoupled'].report
        complete = runs['complete'].report

        self.assertTrue(1.2 <= mc.estimate <= 1.9)
        self.assertTrue(0.08 <= mc.std_error <= 0.25)
        self.assertLessEqual(decoupled.std_error, mc.std_error / 10)
        self.assertLessEqual(complete.std_error, mc.std_error / 10)

        gap = check_optimality(problem, 'decoupled', runs['decoupled'],
                               config.tolerance)
        self.assertLessEqual(gap.relative_gap, 1e-2)

    def test_decoupled_estimate_per_seed(self):
        """Test seeds whose frozen law lands in the published band"""
        for seed in (1, 2, 3):
            report = run_decoupled(self.problem, 1000, 1000, seed).report
            self.assertTrue(1.55 <= report.estimate <= 1.61, seed)

    def test_complete_estimate_seed_average(self):
        """Test the mean of 100 seeded complete runs lies in the band"""
        problem = self.problem
        solution = solve_bvp_complete(problem.model, problem.payoff, 1000,
                                      problem.grid, x0=problem.x0)
        estimates = [
            estimate(simulate_complete_q(problem.model, solution.control,
                                         1000, problem.grid, problem.x0,
                                         seed),
                     problem.payoff).estimate
            for seed in range(1, 101)
        ]

        self.assertTrue(1.55 <= np.mean(estimates) <= 1.61)

    def test_decoupled_ten_thousand_particles(self):
        report = run_decoupled(self.problem, 10000, 10000,
                               self.config.seed).report

        self.assertLessEqual(report.std_error, 0.002)
        self.assertTrue(1.55 <= report.estimate <= 1.61)


class TanhAcceptanceTests(SimpleTestCase):
    """Test the rare-event tanh payoff"""

    def setUp(self):
        self.config = resolve_config(
            defaults=table_defaults('table2'),
            overrides={'N': 10000, 'algorithm': 'decoupled',
                       'seed': 20201108},
        )
        self.problem = build_problem(self.config)

    def test_decoupled_ten_thousand_particles(self):
        """Test the payoff band and a hundredfold error cut against the
        plain Monte-Carlo error implied by E[G^2]"""
        run = run_decoupled(self.problem, 10000, 10000, self.config.seed)
        report = run.report

        self.assertTrue(3.0e-9 <= report.estimate <= 5.0e-9)
        self.assertLessEqual(report.std_error, 5e-11)

        ensemble = run.ensemble
        second_moment = np.mean(
            ensemble.weights * self.problem.payoff.g(ensemble.terminal) ** 2
        )
        plain_error = np.sqrt(second_moment - report.estimate ** 2) \
            / np.sqrt(report.N)
        self.assertLessEqual(report.std_error, plain_error / 100)

        plain = estimate(run.p_run, self.problem.payoff)
        if plain.estimate > 0:
            self.assertLessEqual(report.std_error, plain.std_error)

    def test_decoupled_error_scaling(self):
        """Test the error shrinks like 1/sqrt(N) from 10^3 to 10^5"""
        errors = [
            run_decoupled(self.problem, N, N, self.config.seed)
            .report.std_error
            for N in (1000, 100000)
        ]

        self.assertTrue(8.0 <= errors[0] / errors[1] <= 13.0)
