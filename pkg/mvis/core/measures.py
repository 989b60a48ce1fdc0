"""
Empirical measures: (optionally weighted) particle clouds, frozen
measure paths and the one-dimensional Wasserstein-2 distance.
"""
import csv
import logging

from dataclasses import dataclass

import numpy as np

from core.exceptions import DomainError
from core.grid import TimeGrid


logger = logging.getLogger(__name__)

PROBABILITY = 'probability'
RAW_AVERAGE = 'raw-average'
NORMALIZATIONS = (PROBABILITY, RAW_AVERAGE)


def _frozen(values):
    array = np.array(values, dtype=float)
    array.flags.writeable = False

    return array


@dataclass(frozen=True, eq=False)
class WeightedCloud:
    """Measure sum_j w_j delta_{y_j} / D.

    D is sum_j w_j in probability mode and the number of points in
    raw-average mode, where the cloud holds (1/N) sum_j Z_j delta_{X_j}
    and is not a probability measure path by path.
    """
    points: np.ndarray
    weights: np.ndarray
    normalization: str = PROBABILITY

    def __post_init__(self):
        points = _frozen(self.points).ravel()
        weights = _frozen(self.weights).ravel()
        if points.size == 0:
            raise DomainError('empty cloud')
        if points.shape != weights.shape:
            raise DomainError(
                f'{points.size} points but {weights.size} weights'
            )
        if np.any(weights < 0) or not np.any(weights > 0):
            raise DomainError(
                'weights must be nonnegative with at least one positive'
            )
        if self.normalization not in NORMALIZATIONS:
            raise DomainError(
                f'unknown normalization {self.normalization!r}'
            )
        object.__setattr__(self, 'points', points)
        object.__setattr__(self, 'weights', weights)

    @classmethod
    def uniform(cls, points):
        """Empirical measure with unit weights"""
        points = np.asarray(points, dtype=float)

        return cls(points=points, weights=np.ones(points.size))

    def __len__(self):
        return self.points.size

    @property
    def denominator(self):
        if self.normalization == PROBABILITY:
            return float(np.sum(self.weights))

        return float(self.points.size)

    @property
    def total_mass(self):
        return float(np.sum(self.weights)) / self.denominator

    def as_probability(self):
        return WeightedCloud(self.points, self.weights, PROBABILITY)

    def __eq__(self, other):
        if not isinstance(other, WeightedCloud):
            return NotImplemented

        return (
            self.normalization == other.normalization
            and np.array_equal(self.points, other.points)
            and np.array_equal(self.weights, other.weights)
        )


@dataclass(frozen=True, eq=False)
class MeasurePath:
    """Empirical law frozen at every grid node, left-continuous in time"""
    grid: TimeGrid
    states: np.ndarray

    def __post_init__(self):
        states = _frozen(self.states)
        if states.ndim != 2 or states.shape[0] < 1:
            raise DomainError('measure path needs an (N, n_steps + 1) array')
        if states.shape[1] != self.grid.n_steps + 1:
            raise DomainError(
                f'measure path has {states.shape[1]} nodes, '
                f'grid has {self.grid.n_steps + 1}'
            )
        object.__setattr__(self, 'states', states)

    @property
    def n_particles(self):
        return self.states.shape[0]

    def cloud(self, k):
        """Unit-weight cloud at node k"""
        return WeightedCloud.uniform(self.states[:, k])

    def cloud_at(self, t):
        """Law in force at time t (value at the left node of its cell)"""
        return self.cloud(self.grid.left_index(t))

    @property
    def clouds(self):
        return [self.cloud(k) for k in range(self.grid.n_steps + 1)]

    def covers(self, grid):
        return self.grid == grid

    def __eq__(self, other):
        if not isinstance(other, MeasurePath):
            return NotImplemented

        return (
            self.grid == other.grid
            and np.array_equal(self.states, other.states)
        )

    def write_csv(self, path):
        """Write rows step,particle,state"""
        with open(path, 'w', newline='') as handle:
            writer = csv.writer(handle)
            writer.writerow(['step', 'particle', 'state'])
            for k in range(self.grid.n_steps + 1):
                for i, state in enumerate(self.states[:, k]):
                    writer.writerow([k, i, repr(float(state))])
        logger.debug('Measure path written to %s', path)

    @classmethod
    def read_csv(cls, path, T):
        """Read a path written by write_csv; T fixes the horizon"""
        with open(path, newline='') as handle:
            rows = [
                (int(row['step']), int(row['particle']), float(row['state']))
                for row in csv.DictReader(handle)
            ]
        if not rows:
            raise DomainError(f'{path} holds no measure path')
        n_steps = max(row[0] for row in rows)
        n_particles = max(row[1] for row in rows) + 1
        states = np.full((n_particles, n_steps + 1), np.nan)
        for step, particle, state in rows:
            states[particle, step] = state
        if np.isnan(states).any():
            raise DomainError(f'{path} does not cover every node')

        return cls(grid=TimeGrid(T=T, n_steps=n_steps), states=states)


def freeze_measure_path(ensemble):
    """Fix the empirical law of a simulated ensemble"""
    return MeasurePath(grid=ensemble.grid, states=ensemble.states)


def _quantile_steps(cloud):
    """Sorted atoms and their cumulative probabilities"""
    order = np.argsort(cloud.points, kind='stable')
    weights = cloud.weights[order]

    return cloud.points[order], np.cumsum(weights) / np.sum(weights)


def wasserstein2_1d(mu, nu):
    """W2 between two clouds in probability normalization.

    In one dimension the monotone coupling is optimal, so W2^2 is the
    L2 distance of the quantile functions; both are step functions and
    the integral is exact over the merged breakpoints.
    """
    for cloud in (mu, nu):
        if not isinstance(cloud, WeightedCloud):
            raise DomainError('wasserstein2_1d needs WeightedClouds')
        if cloud.normalization != PROBABILITY:
            raise DomainError('wasserstein2_1d needs probability clouds')

    x_mu, cw_mu = _quantile_steps(mu)
    x_nu, cw_nu = _quantile_steps(nu)
    levels = np.unique(np.concatenate([cw_mu, cw_nu]))
    levels = np.clip(levels, 0.0, 1.0)
    widths = np.diff(np.concatenate([[0.0], levels]))

    q_mu = x_mu[np.minimum(
        np.searchsorted(cw_mu, levels, side='left'), x_mu.size - 1
    )]
    q_nu = x_nu[np.minimum(
        np.searchsorted(cw_nu, levels, side='left'), x_nu.size - 1
    )]

    return float(np.sqrt(np.sum(widths * (q_mu - q_nu) ** 2)))
