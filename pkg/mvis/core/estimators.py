"""
Monte-Carlo estimators: plain, decoupled-IS and complete-IS estimates
from an ensemble, and the repeated-run propagation-of-chaos experiment.
"""
import logging
import time

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List

import numpy as np

from core.exceptions import DomainError
from core.sim import (
    MEASURE_P,
    MEASURE_Q_COMPLETE,
    MEASURE_Q_DECOUPLED,
    simulate_particles_p,
)
from core.streams import derive_seed


logger = logging.getLogger(__name__)

ALGORITHM_LABELS = {
    MEASURE_P: 'mc',
    MEASURE_Q_DECOUPLED: 'decoupled',
    MEASURE_Q_COMPLETE: 'complete',
}

# Warn when the weights concentrate on less than this share of particles
ESS_WARNING_RATIO = 0.01


@dataclass(frozen=True)
class EstimatorReport:
    """Estimate of E_P[G(X_T)] with its Monte-Carlo statistics"""
    algorithm: str
    N: int
    estimate: float
    std_error: float
    ess: float
    wall_time_s: float
    seed: int
    solve_time_s: float = 0.0


@dataclass(frozen=True)
class ChaosReport:
    """M independent plain estimates at fixed N"""
    N: int
    M: int
    seed: int
    mean_estimate: float
    mean_std_error: float
    std_across: float
    wall_time_s: float
    estimates: List[float] = field(default_factory=list)


def effective_sample_size(weights):
    """(sum w)^2 / sum w^2, scale free so tiny weights do not underflow"""
    weights = np.asarray(weights, dtype=float)
    largest = np.max(weights)
    if not largest > 0:
        raise DomainError('effective sample size needs a positive weight')
    scaled = weights / largest
    ess = np.sum(scaled) ** 2 / np.sum(scaled ** 2)

    return float(min(ess, weights.size))


def estimate(ensemble, payoff, algorithm=None, solve_time_s=0.0):
    """(1/N) sum_i Z_i G(X_i(T)) and the standard error of the
    per-particle contributions"""
    N = ensemble.n_particles
    contributions = ensemble.weights * payoff.g(ensemble.terminal)

    if np.ptp(contributions) == 0:
        value, std_error = float(contributions[0]), 0.0
    else:
        value = float(np.mean(contributions))
        std_error = float(np.std(contributions, ddof=1) / np.sqrt(N))

    ess = effective_sample_size(ensemble.weights)
    if ess < ESS_WARNING_RATIO * N:
        logger.warning(
            'Effective sample size %.1f of %d: weights are degenerate',
            ess, N,
        )

    return EstimatorReport(
        algorithm=algorithm or ALGORITHM_LABELS[ensemble.measure_label],
        N=N,
        estimate=value,
        std_error=std_error,
        ess=ess,
        wall_time_s=ensemble.wall_time_s,
        seed=ensemble.seed,
        solve_time_s=solve_time_s,
    )


def repetition_seeds(seed, M):
    """The base seed first, then derived seeds"""
    return [seed] + [derive_seed(seed, m) for m in range(1, M)]


def chaos_error_experiment(model, payoff, N, M, grid, x0, seed, workers=1):
    """Average M independent plain estimates.

    The spread across repetitions is statistical error; the mean of the
    estimates converges, as M grows, to E[G(X^{1,N}_T)], whose distance
    to the McKean-Vlasov value is the propagation-of-chaos error.
    """
    if M < 1:
        raise DomainError(f'need at least one repetition, got {M}')

    def run(rep_seed):
        ensemble = simulate_particles_p(model, N, grid, x0, rep_seed)
        return estimate(ensemble, payoff)

    started = time.perf_counter()
    seeds = repetition_seeds(seed, M)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(run, seeds))
    else:
        reports = [run(rep_seed) for rep_seed in seeds]
    elapsed = time.perf_counter() - started

    estimates = np.array([report.estimate for report in reports])
    errors = np.array([report.std_error for report in reports])
    if M > 1 and np.ptp(estimates) > 0:
        std_across = float(np.std(estimates, ddof=1))
    else:
        std_across = 0.0
    logger.info(
        'Chaos experiment N=%d M=%d: mean %.6f, mean error %.6f',
        N, M, estimates.mean(), errors.mean(),
    )

    return ChaosReport(
        N=N,
        M=M,
        seed=seed,
        mean_estimate=float(estimates.mean()),
        mean_std_error=float(errors.mean()),
        std_across=std_across,
        wall_time_s=elapsed,
        estimates=estimates.tolist(),
    )
