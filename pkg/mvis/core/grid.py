from dataclasses import dataclass

import numpy as np

from core.exceptions import DomainError


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid 0 = t_0 < ... < t_n = T"""
    T: float
    n_steps: int

    def __post_init__(self):
        if not self.T > 0:
            raise DomainError(f'horizon must be positive, got {self.T}')
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise DomainError(
                f'n_steps must be a positive integer, got {self.n_steps}'
            )

    @property
    def dt(self):
        return self.T / self.n_steps

    @property
    def times(self):
        """All n_steps + 1 nodes"""
        return np.arange(self.n_steps + 1) * self.dt

    def time(self, k):
        return k * self.dt

    def left_index(self, t):
        """Index of the grid cell [t_k, t_{k+1}) holding t"""
        k = int(np.floor(t / self.dt + 1e-12))

        return min(max(k, 0), self.n_steps - 1)
