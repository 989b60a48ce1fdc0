import numpy as np

from django.test import SimpleTestCase

from core import models
from core.control import solve_bvp_complete, solve_bvp_decoupled
from core.estimators import (
    chaos_error_experiment,
    effective_sample_size,
    estimate,
)
from core.exceptions import DomainError
from core.grid import TimeGrid
from core.measures import freeze_measure_path
from core.sim import (
    ParticleEnsemble,
    simulate_complete_q,
    simulate_decoupled_q,
    simulate_particles_p,
)


GRID = TimeGrid(T=1.0, n_steps=50)


def weighted_ensemble(weights, terminal=None):
    """Helper function to build an ensemble with given weights"""
    weights = np.asarray(weights, dtype=float)
    if terminal is None:
        terminal = np.zeros(weights.size)
    grid = TimeGrid(T=1.0, n_steps=1)
    states = np.column_stack([np.zeros(weights.size), terminal])

    return ParticleEnsemble(
        grid=grid,
        states=states,
        increments=np.zeros((weights.size, 1)),
        weights=weights,
        seed=0,
    )


class EstimateTests(SimpleTestCase):
    """Test the weighted Monte-Carlo estimator"""

    def test_constant_payoff_is_exact(self):
        """Test a constant payoff gives c with zero error"""
        ensemble = simulate_particles_p(models.kuramoto(), 300, GRID, 0.0, 1)
        report = estimate(ensemble, models.constant_payoff(c=2.5))

        self.assertEqual(report.estimate, 2.5)
        self.assertEqual(report.std_error, 0.0)
        self.assertEqual(report.ess, 300)
        self.assertEqual(report.algorithm, 'mc')
        self.assertEqual(report.seed, 1)

    def test_deterministic_limit(self):
        """Test sigma = 0 gives G(x0) exactly"""
        ensemble = simulate_particles_p(models.zero_drift(sigma=0.0), 50,
                                        GRID, 0.5, 1)
        payoff = models.exp_payoff()
        report = estimate(ensemble, payoff)

        self.assertEqual(report.estimate, float(payoff(0.5)))
        self.assertEqual(report.std_error, 0.0)

    def test_weighted_estimate(self):
        """Test (1/N) sum Z_i G(X_i) and its standard error"""
        ensemble = weighted_ensemble([0.5, 1.5, 1.0, 1.0],
                                     terminal=[0.0, 1.0, 2.0, 3.0])
        payoff = models.exp_payoff(a=1.0, b=0.0)
        report = estimate(ensemble, payoff, algorithm='decoupled')
        values = np.array([0.5, 1.5, 1.0, 1.0])

        self.assertAlmostEqual(report.estimate, 1.0)
        self.assertAlmostEqual(report.std_error,
                               values.std(ddof=1) / 2.0)
        self.assertEqual(report.algorithm, 'decoupled')

    def test_effective_sample_size(self):
        self.assertAlmostEqual(effective_sample_size(np.ones(10)), 10.0)
        self.assertAlmostEqual(effective_sample_size([1.0, 0.0, 0.0]), 1.0)
        self.assertAlmostEqual(effective_sample_size([1.0, 1.0, 2.0]),
                               16.0 / 6.0)

    def test_effective_sample_size_tiny_weights(self):
        """Test weights far below the square-root of the smallest float"""
        self.assertAlmostEqual(
            effective_sample_size(np.full(1000, 1e-200)), 1000.0
        )
        weights = np.full(4, 1e-300)
        weights[0] = 2e-300
        self.assertAlmostEqual(effective_sample_size(weights),
                               25.0 / 7.0)

    def test_effective_sample_size_zero_weights_invalid(self):
        with self.assertRaises(DomainError):
            effective_sample_size(np.zeros(3))

    def test_degenerate_weights_warn(self):
        """Test a warning when one weight dominates"""
        weights = np.ones(200)
        weights[0] = 1e8

        with self.assertLogs('core.estimators', level='WARNING'):
            report = estimate(weighted_ensemble(weights),
                              models.constant_payoff())
        self.assertLess(report.ess, 2.0)


class OracleTests(SimpleTestCase):
    """Test all estimators against the closed-form OU moment"""

    def setUp(self):
        self.sigma, self.x0 = 0.3, 0.5
        self.model = models.linear_ou(sigma=self.sigma)
        self.payoff = models.exp_payoff(a=1.0, b=1.0)
        self.expected = models.ou_exp_moment(self.x0, self.sigma, 1.0,
                                             GRID.n_steps)

    def assertWithinErrors(self, report, errors=4):
        self.assertLess(abs(report.estimate - self.expected),
                        errors * report.std_error)

    def test_plain_monte_carlo(self):
        ensemble = simulate_particles_p(self.model, 5000, GRID, self.x0, 3)

        self.assertWithinErrors(estimate(ensemble, self.payoff))

    def test_decoupled_importance_sampling(self):
        p_run = simulate_particles_p(self.model, 500, GRID, self.x0, 3)
        path = freeze_measure_path(p_run)
        solution = solve_bvp_decoupled(self.model, path, self.payoff, GRID)
        ensemble = simulate_decoupled_q(self.model, path, solution.control,
                                        5000, GRID, self.x0, 4)
        report = estimate(ensemble, self.payoff)
        plain = estimate(p_run, self.payoff)

        self.assertWithinErrors(report)
        self.assertEqual(report.algorithm, 'decoupled')
        self.assertLess(report.std_error, plain.std_error)

    def test_complete_importance_sampling(self):
        solution = solve_bvp_complete(self.model, self.payoff, 5000, GRID,
                                      x0=self.x0)
        ensemble = simulate_complete_q(self.model, solution.control, 5000,
                                       GRID, self.x0, 5)
        report = estimate(ensemble, self.payoff)

        self.assertWithinErrors(report)
        self.assertEqual(report.algorithm, 'complete')

    def test_seeded_trials_within_three_errors(self):
        """Test at least 95 of 100 seeds land within 3 standard errors of
        the Euler-chain moment, for every algorithm"""
        N = 1000
        path = freeze_measure_path(
            simulate_particles_p(self.model, 2, GRID, self.x0, 0)
        )
        decoupled = solve_bvp_decoupled(self.model, path, self.payoff, GRID,
                                        x0=self.x0).control
        complete = solve_bvp_complete(self.model, self.payoff, N, GRID,
                                      x0=self.x0).control

        hits = {'mc': 0, 'decoupled': 0, 'complete': 0}
        for seed in range(100):
            ensembles = {
                'mc': simulate_particles_p(self.model, N, GRID, self.x0,
                                           seed),
                'decoupled': simulate_decoupled_q(self.model, path,
                                                  decoupled, N, GRID,
                                                  self.x0, seed),
                'complete': simulate_complete_q(self.model, complete, N,
                                                GRID, self.x0, seed),
            }
            for algorithm, ensemble in ensembles.items():
                report = estimate(ensemble, self.payoff)
                if abs(report.estimate - self.expected) \
                        <= 3 * report.std_error:
                    hits[algorithm] += 1

        for algorithm, count in hits.items():
            self.assertGreaterEqual(count, 95, algorithm)


class ChaosTests(SimpleTestCase):
    """Test the repeated-run propagation-of-chaos experiment"""

    def test_single_repetition(self):
        """Test M = 1 is one plain run with the base seed"""
        model, payoff = models.kuramoto(), models.exp_payoff()
        report = chaos_error_experiment(model, payoff, 100, 1, GRID, 0.0, 9)
        single = estimate(simulate_particles_p(model, 100, GRID, 0.0, 9),
                          payoff)

        self.assertEqual(report.estimates, [single.estimate])
        self.assertEqual(report.std_across, 0.0)
        self.assertEqual(report.mean_std_error, single.std_error)

    def test_repetitions_are_independent(self):
        """Test repetitions use distinct seeds, threaded or not"""
        model, payoff = models.kuramoto(), models.exp_payoff()
        serial = chaos_error_experiment(model, payoff, 100, 4, GRID, 0.0, 9)
        threaded = chaos_error_experiment(model, payoff, 100, 4, GRID, 0.0,
                                          9, workers=2)

        self.assertEqual(len(set(serial.estimates)), 4)
        self.assertEqual(serial.estimates, threaded.estimates)
        self.assertAlmostEqual(serial.mean_estimate,
                               np.mean(serial.estimates))
        self.assertGreater(serial.std_across, 0.0)

    def test_reduced_scale_chaos_experiment(self):
        """Test N = 5000 with 20 repetitions against the published
        average 1.5772 and average error 0.0653"""
        report = chaos_error_experiment(models.kuramoto(),
                                        models.exp_payoff(), 5000, 20, GRID,
                                        0.0, 20201108, workers=2)

        self.assertEqual(len(report.estimates), 20)
        self.assertAlmostEqual(report.mean_estimate, 1.5772, delta=0.06)
        self.assertAlmostEqual(report.mean_std_error, 0.0653, delta=0.03)
        self.assertAlmostEqual(report.std_across, 0.0653, delta=0.045)

    def test_no_repetitions_invalid(self):
        with self.assertRaises(DomainError):
            chaos_error_experiment(models.kuramoto(), models.exp_payoff(),
                                   100, 0, GRID, 0.0, 9)
