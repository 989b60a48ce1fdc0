"""
Euler-Maruyama simulation of the three particle systems:

* the interacting system under P,
* the decoupled system under Q, driven by a frozen measure path,
* the complete system under Q, interacting through the
  likelihood-weighted empirical measure (1/N) sum_j Z_j delta_{X_j}.

Under Q the Brownian motion is W^Q = W - h, so every particle gets the
extra drift sigma * hdot and the likelihood dP/dQ is

    Z_T = exp(-sum_k hdot_k dW^Q_k - 1/2 sum_k hdot_k^2 dt),

evaluated exactly on the grid increments.
"""
import csv
import logging
import time

from dataclasses import dataclass

import numpy as np

from core.exceptions import (
    ConfigurationError,
    DegenerateLikelihoodError,
    DomainError,
    ExplosionError,
)
from core.grid import TimeGrid
from core.measures import PROBABILITY, RAW_AVERAGE, WeightedCloud
from core.streams import brownian_increments


logger = logging.getLogger(__name__)

MEASURE_P = 'P'
MEASURE_Q_DECOUPLED = 'Q-decoupled'
MEASURE_Q_COMPLETE = 'Q-complete'

# Below this total likelihood mass the weighted measure is meaningless
LIKELIHOOD_FLOOR = 1e-280

__all__ = [
    'TimeGrid', 'ControlPath', 'ParticleEnsemble', 'log_likelihood',
    'simulate_particles_p', 'simulate_decoupled_q', 'simulate_complete_q',
]


@dataclass(frozen=True, eq=False)
class ControlPath:
    """Piecewise-constant hdot: hdot[k] holds on [t_k, t_{k+1})"""
    hdot: np.ndarray

    def __post_init__(self):
        hdot = np.array(self.hdot, dtype=float).ravel()
        if not np.all(np.isfinite(hdot)):
            raise DomainError('control path has non-finite entries')
        hdot.flags.writeable = False
        object.__setattr__(self, 'hdot', hdot)

    def __len__(self):
        return self.hdot.size

    @classmethod
    def zeros(cls, grid):
        return cls(np.zeros(grid.n_steps))

    @classmethod
    def constant(cls, grid, value):
        return cls(np.full(grid.n_steps, float(value)))

    def matches(self, grid):
        return self.hdot.size == grid.n_steps

    def h(self, grid):
        """The Cameron-Martin path h(t_k) = sum_{j<k} hdot_j dt"""
        return np.concatenate([[0.0], np.cumsum(self.hdot * grid.dt)])

    def energy(self, grid):
        """int hdot^2 dt"""
        return float(np.sum(self.hdot ** 2) * grid.dt)

    def resample(self, grid, new_grid):
        """Value in force at the left node of every cell of new_grid"""
        return ControlPath(np.array([
            self.hdot[grid.left_index(t)] for t in new_grid.times[:-1]
        ]))

    def shifted(self, delta):
        return ControlPath(self.hdot + delta)


@dataclass(frozen=True, eq=False)
class ParticleEnsemble:
    """N simulated paths with their increments and likelihood weights"""
    grid: TimeGrid
    states: np.ndarray
    increments: np.ndarray
    weights: np.ndarray
    seed: int
    measure_label: str = MEASURE_P
    wall_time_s: float = 0.0

    @property
    def n_particles(self):
        return self.states.shape[0]

    @property
    def terminal(self):
        return self.states[:, -1]

    def write_csv(self, path):
        """Rows step,particle,state,weight (weight is Z_i(T)).
        Increments are not written."""
        with open(path, 'w', newline='') as handle:
            writer = csv.writer(handle)
            writer.writerow(['step', 'particle', 'state', 'weight'])
            for k in range(self.grid.n_steps + 1):
                for i in range(self.n_particles):
                    writer.writerow([
                        k, i, repr(float(self.states[i, k])),
                        repr(float(self.weights[i])),
                    ])


def log_likelihood(h, increments, grid):
    """log dP/dQ per particle: -sum hdot dW^Q - 1/2 sum hdot^2 dt"""
    return -(increments @ h.hdot) - 0.5 * np.sum(h.hdot ** 2) * grid.dt


def _start(x0, n_particles, grid):
    if n_particles < 1:
        raise DomainError(f'need at least one particle, got {n_particles}')
    states = np.empty((n_particles, grid.n_steps + 1))
    states[:, 0] = x0

    return states


def _check_finite(states, k):
    if not np.all(np.isfinite(states[:, k])):
        logger.error('Non-finite state at step %d', k)
        raise ExplosionError(k)


def _check_control(h, grid):
    if not h.matches(grid):
        raise ConfigurationError(
            f'control has {len(h)} cells, grid has {grid.n_steps}'
        )


def _warn_underflow(weights, label):
    underflowed = int(np.count_nonzero(weights == 0.0))
    if underflowed:
        logger.warning(
            '%s: %d of %d likelihood weights underflowed to 0',
            label, underflowed, weights.size,
        )


def simulate_particles_p(model, N, grid, x0, seed, workers=1, ids=None):
    """Interacting particle system under P"""
    started = time.perf_counter()
    states = _start(x0, N, grid)
    dW = brownian_increments(seed, N, grid, workers=workers, ids=ids)
    dt, sigma = grid.dt, model.sigma
    ones = np.ones(N)

    for k in range(grid.n_steps):
        x = states[:, k]
        field = model.mean_field(WeightedCloud(x, ones, PROBABILITY))
        states[:, k + 1] = x + field.drift(grid.time(k), x) * dt \
            + sigma * dW[:, k]
        _check_finite(states, k + 1)

    elapsed = time.perf_counter() - started
    logger.debug('P-simulation: N=%d, steps=%d, %.3fs',
                 N, grid.n_steps, elapsed)

    return ParticleEnsemble(
        grid=grid,
        states=states,
        increments=dW,
        weights=np.ones(N),
        seed=seed,
        measure_label=MEASURE_P,
        wall_time_s=elapsed,
    )


def simulate_decoupled_q(model, path, h, N2, grid, x0, seed, workers=1,
                         ids=None):
    """Independent particles under Q, driven by a frozen measure path"""
    if not path.covers(grid):
        raise ConfigurationError(
            f'measure path grid {path.grid} does not match {grid}'
        )
    _check_control(h, grid)

    started = time.perf_counter()
    states = _start(x0, N2, grid)
    dW = brownian_increments(seed, N2, grid, workers=workers, ids=ids)
    dt, sigma = grid.dt, model.sigma

    for k in range(grid.n_steps):
        x = states[:, k]
        field = model.mean_field(path.cloud(k))
        states[:, k + 1] = x \
            + (field.drift(grid.time(k), x) + sigma * h.hdot[k]) * dt \
            + sigma * dW[:, k]
        _check_finite(states, k + 1)

    weights = np.exp(log_likelihood(h, dW, grid))
    _warn_underflow(weights, MEASURE_Q_DECOUPLED)
    elapsed = time.perf_counter() - started
    logger.debug('Decoupled Q-simulation: N=%d, steps=%d, %.3fs',
                 N2, grid.n_steps, elapsed)

    return ParticleEnsemble(
        grid=grid,
        states=states,
        increments=dW,
        weights=weights,
        seed=seed,
        measure_label=MEASURE_Q_DECOUPLED,
        wall_time_s=elapsed,
    )


def simulate_complete_q(model, h, N, grid, x0, seed, workers=1, ids=None):
    """Interacting particles under Q with likelihood-weighted interaction"""
    if N < 2:
        raise DomainError(f'complete measure change needs N >= 2, got {N}')
    _check_control(h, grid)

    started = time.perf_counter()
    states = _start(x0, N, grid)
    dW = brownian_increments(seed, N, grid, workers=workers, ids=ids)
    dt, sigma = grid.dt, model.sigma
    log_z = np.zeros(N)
    z = np.ones(N)

    for k in range(grid.n_steps):
        if np.sum(z) < LIKELIHOOD_FLOOR:
            raise DegenerateLikelihoodError(k)
        x = states[:, k]
        field = model.mean_field(WeightedCloud(x, z, RAW_AVERAGE))
        states[:, k + 1] = x \
            + (field.drift(grid.time(k), x) + sigma * h.hdot[k]) * dt \
            + sigma * dW[:, k]
        _check_finite(states, k + 1)
        log_z -= h.hdot[k] * dW[:, k] + 0.5 * h.hdot[k] ** 2 * dt
        z = np.exp(log_z)

    if np.sum(z) < LIKELIHOOD_FLOOR:
        raise DegenerateLikelihoodError(grid.n_steps)
    _warn_underflow(z, MEASURE_Q_COMPLETE)

    elapsed = time.perf_counter() - started
    logger.debug('Complete Q-simulation: N=%d, steps=%d, %.3fs',
                 N, grid.n_steps, elapsed)

    return ParticleEnsemble(
        grid=grid,
        states=states,
        increments=dW,
        weights=z,
        seed=seed,
        measure_label=MEASURE_Q_COMPLETE,
        wall_time_s=elapsed,
    )
