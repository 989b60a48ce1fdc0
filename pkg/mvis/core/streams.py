"""
Per-particle random streams.

Particle i always draws its Brownian increments from a Philox
counter-based generator keyed by (i, seed), so paths do not depend on
how particles are split across workers, and every simulator that is
given the same seed sees the same increments.
"""
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from core.exceptions import ConfigurationError


SEED_MASK = (1 << 64) - 1
BLOCK = 4096


def particle_generator(seed, particle):
    """Independent generator for one particle"""
    key = np.array([particle, seed & SEED_MASK], dtype=np.uint64)

    return np.random.Generator(np.random.Philox(key=key))


def derive_seed(seed, index):
    """Reproducible child seed, e.g. for repetition or sweep index"""
    sequence = np.random.SeedSequence([seed & SEED_MASK, index])

    return int(sequence.generate_state(1, dtype=np.uint64)[0])


def _fill(out, seed, ids, n_steps, scale):
    for row, particle in enumerate(ids):
        out[row] = particle_generator(seed, int(particle)).standard_normal(
            n_steps
        )
    out *= scale


def brownian_increments(seed, n_particles, grid, workers=1, ids=None):
    """(N, n_steps) array of Normal(0, dt) increments.

    ids selects which particle streams to use (default 0..N-1);
    permuting ids permutes the rows.
    """
    if ids is None:
        ids = np.arange(n_particles)
    ids = np.asarray(ids)
    if ids.shape != (n_particles,):
        raise ConfigurationError(
            f'expected {n_particles} particle ids, got {ids.size}'
        )
    out = np.empty((n_particles, grid.n_steps))
    scale = np.sqrt(grid.dt)
    blocks = [
        (slice(start, start + BLOCK), ids[start:start + BLOCK])
        for start in range(0, n_particles, BLOCK)
    ]

    if workers <= 1 or len(blocks) == 1:
        for rows, block_ids in blocks:
            _fill(out[rows], seed, block_ids, grid.n_steps, scale)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(_fill, out[rows], seed, block_ids,
                            grid.n_steps, scale)
                for rows, block_ids in blocks
            ]
            for future in futures:
                future.result()

    return out
