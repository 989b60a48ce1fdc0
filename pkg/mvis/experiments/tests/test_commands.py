import csv
import json
import os
import tempfile

from io import StringIO
from unittest.mock import patch

from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase

from core.exceptions import ExplosionError, ShootingConvergenceError
from experiments.pipeline import REPORT_COLUMNS


def read_rows(path):
    """Helper function to read a CSV report as dicts"""
    with open(path, newline='') as handle:
        return list(csv.DictReader(handle))


class CommandTestCase(SimpleTestCase):

    def setUp(self):
        self.directory = tempfile.TemporaryDirectory()
        self.addCleanup(self.directory.cleanup)
        self.out = os.path.join(self.directory.name, 'run')

    def call(self, name, *args, **params):
        """Helper function to run a command quietly at small N"""
        defaults = {
            'N': 30,
            'out': self.out,
            'stdout': StringIO(),
        }
        defaults.update(**params)
        call_command(name, *args, **defaults)

        return defaults['stdout'].getvalue()

    def write_config(self, text):
        path = os.path.join(self.directory.name, 'experiment.ini')
        with open(path, 'w') as handle:
            handle.write(text)

        return path


class RunCommandTests(CommandTestCase):
    """Test the run command"""

    def test_run_all_algorithms(self):
        """Test one CSV row per algorithm plus the BVP reports"""
        output = self.call('run')
        rows = read_rows(f'{self.out}.csv')

        self.assertIn('Resolved configuration:', output)
        self.assertEqual([row['algorithm'] for row in rows],
                         ['mc', 'decoupled', 'complete'])
        self.assertEqual(list(rows[0].keys()), REPORT_COLUMNS)
        for row in rows:
            self.assertEqual(row['N'], '30')
        for algorithm in ('decoupled', 'complete'):
            with open(f'{self.out}_bvp_{algorithm}.json') as handle:
                solution = json.load(handle)
            self.assertEqual(solution['kind'], algorithm)
            self.assertLessEqual(solution['residual_norm'], 1e-8)
            self.assertEqual(len(solution['control']), 50)

    def test_constant_payoff_exact(self):
        """Test plain Monte Carlo of G = c gives c with zero error"""
        path = self.write_config(
            '[payoff]\nname = constant\nc = 2.5\n'
            '[simulation]\nalgorithm = mc\n'
        )
        self.call('run', config=path)
        row = read_rows(f'{self.out}.csv')[0]

        self.assertEqual(float(row['estimate']), 2.5)
        self.assertEqual(float(row['std_error']), 0.0)

    def test_byte_identical_without_timings(self):
        """Test identical config and seed reproduce the CSV exactly"""
        contents = []
        for _ in range(2):
            self.call('run', seed=11, no_timings=True)
            with open(f'{self.out}.csv', 'rb') as handle:
                contents.append(handle.read())

        self.assertEqual(contents[0], contents[1])
        self.assertEqual(read_rows(f'{self.out}.csv')[0]['wall_time_s'],
                         '0.0')

    def test_rows_carry_seed(self):
        self.call('run', seed=123, algorithm='decoupled')

        self.assertEqual(read_rows(f'{self.out}.csv')[0]['seed'], '123')

    def test_dump_paths_and_optimality(self):
        """Test the optional path dumps and gap reports"""
        self.call('run', dump_paths=True, check_optimality=True)

        for algorithm in ('mc', 'decoupled', 'complete'):
            self.assertTrue(
                os.path.exists(f'{self.out}_paths_{algorithm}.csv')
            )
        self.assertTrue(os.path.exists(f'{self.out}_measure_path.csv'))
        with open(f'{self.out}_gap_complete.json') as handle:
            gap = json.load(handle)
        self.assertEqual(gap['scope'], 'exchangeable-restriction')
        self.assertTrue(gap['certified'])

    def test_repetitions_write_chaos_report(self):
        self.call('run', algorithm='mc', M=3)

        with open(f'{self.out}_chaos.json') as handle:
            chaos = json.load(handle)
        self.assertEqual(len(chaos['estimates']), 3)


class ExitCodeTests(CommandTestCase):
    """Test library errors map to the documented exit codes"""

    def test_invalid_config_exit_1(self):
        path = self.write_config('[simulation]\nN = 0\n')

        with self.assertRaises(CommandError) as context:
            self.call('run', config=path, N=None)
        self.assertEqual(context.exception.returncode, 1)

    def test_missing_config_exit_1(self):
        with self.assertRaises(CommandError) as context:
            self.call('run', config=os.path.join(self.directory.name, 'no'))
        self.assertEqual(context.exception.returncode, 1)

    @patch('experiments.management.commands.run.run_experiment')
    def test_solver_failure_exit_2(self, mock_run):
        mock_run.side_effect = ShootingConvergenceError(1.0, 50)

        with self.assertRaises(CommandError) as context:
            self.call('run')
        self.assertEqual(context.exception.returncode, 2)

    @patch('experiments.management.commands.run.run_experiment')
    def test_explosion_exit_3(self, mock_run):
        mock_run.side_effect = ExplosionError(12)

        with self.assertRaises(CommandError) as context:
            self.call('run')
        self.assertEqual(context.exception.returncode, 3)

    def test_vanishing_payoff_exit_2(self):
        path = self.write_config(
            '[payoff]\nname = constant\nc = 0\n'
            '[simulation]\nalgorithm = complete\n'
        )

        with self.assertRaises(CommandError) as context:
            self.call('run', config=path)
        self.assertEqual(context.exception.returncode, 2)


class TablesCommandTests(CommandTestCase):
    """Test the table reproduction command"""

    def test_table1_sizes(self):
        """Test one row per requested N with every algorithm"""
        self.call('tables', 'table1', sizes=[20, 40], N=None, threads=2)
        rows = read_rows(f'{self.out}_table1.csv')

        self.assertEqual([row['N'] for row in rows], ['20', '40'])
        self.assertIn('decoupled_time', rows[0])
        self.assertIn('complete_error', rows[0])

    def test_table2_scaled_without_times(self):
        self.call('tables', 'table2', sizes=[20], N=None, no_timings=True)
        rows = read_rows(f'{self.out}_table2.csv')

        self.assertNotIn('mc_time', rows[0])
        self.assertGreater(float(rows[0]['decoupled_payoff']), 0.0)

    def test_chaos(self):
        self.call('tables', 'chaos', N=20, M=3)
        row = read_rows(f'{self.out}_chaos.csv')[0]

        self.assertEqual(row['M'], '3')
        self.assertEqual(row['N'], '20')


class CheckOptimalityCommandTests(CommandTestCase):
    """Test the optimality check command"""

    def test_decoupled_gap_report(self):
        output = self.call('check_optimality', algorithm='decoupled')

        with open(f'{self.out}_gap_decoupled.json') as handle:
            gap = json.load(handle)
        self.assertEqual(gap['scope'], 'full')
        self.assertIn('certified', output)

    def test_plain_monte_carlo_has_nothing_to_check(self):
        output = self.call('check_optimality', algorithm='mc')

        self.assertIn('no control', output)
