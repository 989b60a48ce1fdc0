"""
Candidate optimal measure changes from the Pontryagin systems.

Decoupled algorithm (frozen law mu^N), maximise 2 log G(X_T) - int u^2:

    p'  = -d_x b(t, X, mu_t) p,          p_T = 2 G'(X_T) / G(X_T)
    X'  = b(t, X, mu_t) + sigma u,       X_0 = x0,      u = sigma p / 2

Complete algorithm, exchangeable pair (X1, Xh) interacting through
m = (1/N) delta_X1 + ((N-1)/N) delta_Xh, maximise
2 log G(X1_T) - int u1^2 - (N-1)/2 int uh^2:

    p1' = -d_X1 b1 p1 - d_X1 bh p2,      p1_T = 2 G'(X1_T) / G(X1_T)
    p2' = -d_Xh b1 p1 - d_Xh bh p2,      p2_T = 0
    X1' = b1 + sigma u1,                 u1 = sigma p1 / 2
    Xh' = bh + sigma uh,                 uh = sigma p2 / (2 (N - 1))

The halved gain on uh is the default forcing. The objective above is
stationary in uh at the full gain sigma p2 / (N - 1), selectable as
FORCING_STATIONARY.

Both are solved by single shooting on the initial adjoint with a damped
Newton iteration. Frozen laws and controls are constant on every grid
cell (value at the left node); RK4 steps coincide with grid cells.
"""
import logging
import time

from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from core.exceptions import (
    ConfigurationError,
    DomainError,
    ShootingConvergenceError,
    SingularJacobianError,
)
from core.measures import MeasurePath
from core.models import payoff_terminal_adjoint
from core.sim import ControlPath


logger = logging.getLogger(__name__)

DECOUPLED = 'decoupled'
COMPLETE = 'complete'

SCOPE_FULL = 'full'
SCOPE_EXCHANGEABLE = 'exchangeable-restriction'

FORCING_HALVED = 'halved'
FORCING_STATIONARY = 'stationary'
FORCINGS = (FORCING_HALVED, FORCING_STATIONARY)

# Condition number above which the shooting Jacobian counts as singular
SINGULAR_CONDITION = 1e14


@dataclass(frozen=True)
class ShootingSettings:
    tolerance: float = 1e-8
    max_iterations: int = 50
    max_halvings: int = 8
    jacobian_step: float = 1e-6


@dataclass(frozen=True, eq=False)
class BVPSolution:
    """Solved state/adjoint trajectories and the induced control"""
    kind: str
    states: Dict[str, np.ndarray]
    adjoints: Dict[str, np.ndarray]
    residual_norm: float
    newton_iterations: int
    control: ControlPath
    objective_value: float
    hat_control: Optional[ControlPath] = None
    N: Optional[int] = None
    solve_time_s: float = 0.0

    @property
    def terminal_state(self):
        key = 'X' if self.kind == DECOUPLED else 'X1'
        return float(self.states[key][-1])


@dataclass(frozen=True, eq=False)
class GapReport:
    """Gap between L(h) and the simplified objective at h"""
    algorithm: str
    sup_value: float
    simplified_value: float
    gap: float
    relative_gap: float
    tolerance: float
    certified: bool
    scope: str
    inner: BVPSolution = field(repr=False, default=None)


def _rk4(rhs, t, y, dt):
    """One classical Runge-Kutta step"""
    k1 = rhs(t, y)
    k2 = rhs(t + 0.5 * dt, y + 0.5 * dt * k1)
    k3 = rhs(t + 0.5 * dt, y + 0.5 * dt * k2)
    k4 = rhs(t + dt, y + dt * k3)

    return y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _require_noise(model):
    if not model.noisy:
        raise DomainError('a measure change needs sigma > 0')


def _frozen_fields(model, path, grid):
    if not path.covers(grid):
        raise ConfigurationError(
            f'measure path grid {path.grid} does not match {grid}'
        )

    return [model.mean_field(path.cloud(k)) for k in range(grid.n_steps)]


def _log_payoff(payoff, x):
    """log G(x), -inf (with a warning) where the payoff vanishes"""
    with np.errstate(divide='ignore'):
        value = float(payoff.log_g(np.asarray(x, dtype=float)))
    if value == -np.inf:
        logger.warning('Payoff vanishes at controlled terminal state %r', x)

    return value


# ** NEWTON SHOOTING


def _jacobian(residual, z, r, step):
    """Forward-difference Jacobian of the shooting residual"""
    J = np.empty((r.size, z.size))
    for j in range(z.size):
        dz = step * max(1.0, abs(z[j]))
        shifted = z.copy()
        shifted[j] += dz
        J[:, j] = (residual(shifted) - r) / dz

    return J


def _newton_step(J, r):
    if not np.all(np.isfinite(J)):
        raise SingularJacobianError()
    with np.errstate(divide='ignore', invalid='ignore'):
        condition = np.linalg.cond(J)
    if not condition <= SINGULAR_CONDITION:
        raise SingularJacobianError()
    try:
        return np.linalg.solve(J, -r)
    except np.linalg.LinAlgError:
        raise SingularJacobianError() from None


def shoot(residual, guess, settings=None):
    """Damped Newton on residual(z) = 0.

    Each step is halved (up to max_halvings times) until the residual
    norm decreases. Returns (z, residual, iterations).
    """
    settings = settings or ShootingSettings()
    z = np.atleast_1d(np.array(guess, dtype=float))
    r = residual(z)
    norm = float(np.linalg.norm(r))
    if not np.isfinite(norm):
        raise ShootingConvergenceError(np.inf, 0)
    best = norm

    for iteration in range(settings.max_iterations):
        if norm <= settings.tolerance:
            return z, r, iteration
        delta = _newton_step(
            _jacobian(residual, z, r, settings.jacobian_step), r
        )

        scale = 1.0
        for _ in range(settings.max_halvings + 1):
            trial = z + scale * delta
            trial_r = residual(trial)
            trial_norm = float(np.linalg.norm(trial_r))
            if np.isfinite(trial_norm) and trial_norm < norm:
                break
            scale *= 0.5
        if not np.isfinite(trial_norm):
            raise ShootingConvergenceError(best, iteration + 1)

        z, r, norm = trial, trial_r, trial_norm
        best = min(best, norm)
        logger.debug('Newton iteration %d: residual %.3e (step %.4g)',
                     iteration + 1, norm, scale)

    if norm <= settings.tolerance:
        return z, r, settings.max_iterations
    raise ShootingConvergenceError(best, settings.max_iterations)


# ** DECOUPLED SYSTEM


def _integrate_single(model, fields, grid, x0, p0, law):
    """RK4 of (X, p) with u[k] = law(k, p[k]) held on cell k"""
    n, dt, sigma = grid.n_steps, grid.dt, model.sigma
    X = np.empty(n + 1)
    p = np.empty(n + 1)
    u = np.empty(n)
    X[0], p[0] = x0, p0

    for k in range(n):
        mean_field = fields[k]
        u[k] = law(k, p[k])
        forcing = sigma * u[k]

        def rhs(t, y):
            x, q = y
            return np.array([
                mean_field.drift(t, x) + forcing,
                -mean_field.drift_dx(t, x) * q,
            ])

        X[k + 1], p[k + 1] = _rk4(rhs, grid.time(k), np.array([X[k], p[k]]),
                                  dt)

    return X, p, u


def _integrate_state(model, fields, grid, x0, u):
    """RK4 of X' = b(t, X, mu_t) + sigma u[k] on every cell"""
    n, dt, sigma = grid.n_steps, grid.dt, model.sigma
    X = np.empty(n + 1)
    X[0] = x0

    for k in range(n):
        mean_field = fields[k]
        forcing = sigma * u[k]

        def rhs(t, y):
            return np.array([mean_field.drift(t, y[0]) + forcing])

        X[k + 1] = _rk4(rhs, grid.time(k), np.array([X[k]]), dt)[0]

    return X


def _adjoint_guess(payoff, fields, grid, X):
    """p(0) = p_T exp(int d_x b dt) along a given state path"""
    slopes = [
        float(fields[k].drift_dx(grid.time(k), X[k]))
        for k in range(grid.n_steps)
    ]
    p_T = float(payoff_terminal_adjoint(payoff, X[-1]))

    return p_T * np.exp(np.sum(slopes) * grid.dt)


def _initial_state(path, x0):
    return float(path.states[0, 0]) if x0 is None else float(x0)


def controlled_trajectory(model, path, u, grid, x0=None):
    """Deterministic path X' = b(t, X, mu_t) + sigma u under a frozen law"""
    fields = _frozen_fields(model, path, grid)
    if not u.matches(grid):
        raise ConfigurationError(
            f'control has {len(u)} cells, grid has {grid.n_steps}'
        )

    return _integrate_state(model, fields, grid, _initial_state(path, x0),
                            u.hdot)


def objective_decoupled(model, path, payoff, u, grid, x0=None):
    """2 log G(X_T(u)) - int u^2 dt"""
    X = controlled_trajectory(model, path, u, grid, x0)

    return 2.0 * _log_payoff(payoff, X[-1]) - u.energy(grid)


def solve_bvp_decoupled(model, path, payoff, grid, x0=None, settings=None):
    """Shooting solution of the decoupled Pontryagin system"""
    _require_noise(model)
    started = time.perf_counter()
    fields = _frozen_fields(model, path, grid)
    x0 = _initial_state(path, x0)
    half_sigma = 0.5 * model.sigma

    def law(k, p_k):
        return half_sigma * p_k

    def residual(z):
        X, p, _ = _integrate_single(model, fields, grid, x0, z[0], law)
        return np.array([p[-1] - payoff_terminal_adjoint(payoff, X[-1])])

    free = _integrate_state(model, fields, grid, x0, np.zeros(grid.n_steps))
    guess = _adjoint_guess(payoff, fields, grid, free)
    z, r, iterations = shoot(residual, [guess], settings)

    X, p, u = _integrate_single(model, fields, grid, x0, z[0], law)
    control = ControlPath(u)
    objective = 2.0 * _log_payoff(payoff, X[-1]) - control.energy(grid)
    elapsed = time.perf_counter() - started
    logger.info(
        'Decoupled BVP solved: p(0)=%.6g, residual %.2e, %d iterations',
        z[0], float(np.linalg.norm(r)), iterations,
    )

    return BVPSolution(
        kind=DECOUPLED,
        states={'X': X},
        adjoints={'p': p},
        residual_norm=float(np.linalg.norm(r)),
        newton_iterations=iterations,
        control=control,
        objective_value=objective,
        solve_time_s=elapsed,
    )


def optimality_check_decoupled(model, path, payoff, h, grid, x0=None,
                               tolerance=1e-2, settings=None):
    """Compare L(h; mu) with the simplified objective at h.

    L(h) = sup_u {2 log G(X(u)) - int h u + 1/2 int h^2 - 1/2 int u^2}
    is computed from its own Pontryagin system, whose optimal inner
    control is u = sigma p - h. L(h) >= simplified(h) always; equality
    (within tolerance, relative to |L(h)|) certifies h numerically.
    """
    _require_noise(model)
    if not h.matches(grid):
        raise ConfigurationError(
            f'control has {len(h)} cells, grid has {grid.n_steps}'
        )
    fields = _frozen_fields(model, path, grid)
    x0 = _initial_state(path, x0)
    sigma, dt = model.sigma, grid.dt

    def law(k, p_k):
        return sigma * p_k - h.hdot[k]

    def residual(z):
        X, p, _ = _integrate_single(model, fields, grid, x0, z[0], law)
        return np.array([p[-1] - payoff_terminal_adjoint(payoff, X[-1])])

    along_h = _integrate_state(model, fields, grid, x0, h.hdot)
    guess = _adjoint_guess(payoff, fields, grid, along_h)
    z, r, iterations = shoot(residual, [guess], settings)
    X, p, u = _integrate_single(model, fields, grid, x0, z[0], law)

    sup_value = (
        2.0 * _log_payoff(payoff, X[-1])
        - np.sum(h.hdot * u) * dt
        + 0.5 * h.energy(grid)
        - 0.5 * np.sum(u ** 2) * dt
    )
    simplified = 2.0 * _log_payoff(payoff, along_h[-1]) - h.energy(grid)
    inner = BVPSolution(
        kind=DECOUPLED,
        states={'X': X},
        adjoints={'p': p},
        residual_norm=float(np.linalg.norm(r)),
        newton_iterations=iterations,
        control=ControlPath(u),
        objective_value=float(sup_value),
    )

    return _gap_report(DECOUPLED, sup_value, simplified, tolerance,
                       SCOPE_FULL, inner)


def _gap_report(algorithm, sup_value, simplified, tolerance, scope, inner):
    gap = float(sup_value - simplified)
    scale = abs(sup_value) if sup_value != 0 else 1.0
    relative = abs(gap) / scale
    certified = relative <= tolerance
    logger.info('%s optimality gap %.3e (relative %.3e, %s)',
                algorithm, gap, relative,
                'certified' if certified else 'not certified')

    return GapReport(
        algorithm=algorithm,
        sup_value=float(sup_value),
        simplified_value=float(simplified),
        gap=gap,
        relative_gap=relative,
        tolerance=tolerance,
        certified=certified,
        scope=scope,
        inner=inner,
    )


# ** COMPLETE SYSTEM


class PairDynamics:
    """Drift of a tagged particle X1 and of the N-1 exchangeable others Xh
    under m = (1/N) delta_X1 + ((N-1)/N) delta_Xh, with the total
    derivatives needed by the adjoint equations."""

    def __init__(self, model, N):
        self.model = model
        self.N = N
        self.w1 = 1.0 / N
        self.wh = (N - 1.0) / N

    def drifts(self, t, x1, xh):
        beta, kappa = self.model.beta, self.model.kappa
        b1 = beta(t, x1) + self.w1 * kappa(t, x1, x1) \
            + self.wh * kappa(t, x1, xh)
        bh = beta(t, xh) + self.w1 * kappa(t, xh, x1) \
            + self.wh * kappa(t, xh, xh)

        return float(b1), float(bh)

    def jacobian(self, t, x1, xh):
        """[[d b1/d X1, d b1/d Xh], [d bh/d X1, d bh/d Xh]]"""
        m = self.model
        d11 = m.beta_dx(t, x1) \
            + self.w1 * (m.kappa_dx(t, x1, x1) + m.kappa_dy(t, x1, x1)) \
            + self.wh * m.kappa_dx(t, x1, xh)
        d1h = self.wh * m.kappa_dy(t, x1, xh)
        dh1 = self.w1 * m.kappa_dy(t, xh, x1)
        dhh = m.beta_dx(t, xh) + self.w1 * m.kappa_dx(t, xh, x1) \
            + self.wh * (m.kappa_dx(t, xh, xh) + m.kappa_dy(t, xh, xh))

        return float(d11), float(d1h), float(dh1), float(dhh)


def _integrate_pair(model, pair, grid, x0, p0, law):
    """RK4 of (X1, Xh, p1, p2) with (u1[k], uh[k]) = law(k, p1[k], p2[k])"""
    n, dt, sigma = grid.n_steps, grid.dt, model.sigma
    Y = np.empty((n + 1, 4))
    U = np.empty((n, 2))
    Y[0] = [x0, x0, p0[0], p0[1]]

    for k in range(n):
        U[k] = law(k, Y[k, 2], Y[k, 3])
        f1, fh = sigma * U[k, 0], sigma * U[k, 1]

        def rhs(t, y):
            x1, xh, q1, q2 = y
            b1, bh = pair.drifts(t, x1, xh)
            d11, d1h, dh1, dhh = pair.jacobian(t, x1, xh)
            return np.array([
                b1 + f1,
                bh + fh,
                -d11 * q1 - dh1 * q2,
                -d1h * q1 - dhh * q2,
            ])

        Y[k + 1] = _rk4(rhs, grid.time(k), Y[k], dt)

    return Y, U


def _integrate_pair_state(model, pair, grid, x0, u1, uh):
    n, dt, sigma = grid.n_steps, grid.dt, model.sigma
    Y = np.empty((n + 1, 2))
    Y[0] = [x0, x0]

    for k in range(n):
        f1, fh = sigma * u1[k], sigma * uh[k]

        def rhs(t, y):
            b1, bh = pair.drifts(t, y[0], y[1])
            return np.array([b1 + f1, bh + fh])

        Y[k + 1] = _rk4(rhs, grid.time(k), Y[k], dt)

    return Y


def _require_pair(N):
    if N < 2:
        raise DomainError(f'complete measure change needs N >= 2, got {N}')


def _hat_gain(N, forcing):
    """Divisor d in uh = sigma p2 / d"""
    if forcing == FORCING_HALVED:
        return 2.0 * (N - 1)
    if forcing == FORCING_STATIONARY:
        return N - 1.0
    raise ConfigurationError(
        f'unknown forcing {forcing!r}, expected one of {FORCINGS}'
    )


def controlled_pair_trajectory(model, N, u1, u_hat, grid, x0=0.0):
    """(X1, Xh) paths under piecewise-constant controls"""
    _require_pair(N)

    return _integrate_pair_state(model, PairDynamics(model, N), grid, x0,
                                 u1.hdot, u_hat.hdot)


def objective_complete(model, N, payoff, u1, u_hat, grid, x0=0.0):
    """2 log G(X1_T) - int u1^2 - (N-1)/2 int uh^2"""
    Y = controlled_pair_trajectory(model, N, u1, u_hat, grid, x0)

    return (
        2.0 * _log_payoff(payoff, Y[-1, 0])
        - u1.energy(grid)
        - 0.5 * (N - 1) * u_hat.energy(grid)
    )


def objective_simplified(model, law, payoff, u, grid, x0=None, u_hat=None):
    """Simplified objective for a frozen law (decoupled) or a particle
    count (complete; u_hat defaults to zero)"""
    if isinstance(law, MeasurePath):
        return objective_decoupled(model, law, payoff, u, grid, x0)
    if u_hat is None:
        u_hat = ControlPath.zeros(grid)

    return objective_complete(model, int(law), payoff, u, u_hat, grid,
                              0.0 if x0 is None else x0)


def _pair_guess(model, pair, payoff, grid, x0):
    """Adjoint guess from the uncontrolled pair, p2(0) = 0"""
    zeros = np.zeros(grid.n_steps)
    Y = _integrate_pair_state(model, pair, grid, x0, zeros, zeros)
    slopes = [
        pair.jacobian(grid.time(k), Y[k, 0], Y[k, 1])[0]
        for k in range(grid.n_steps)
    ]
    p_T = float(payoff_terminal_adjoint(payoff, Y[-1, 0]))

    return [p_T * np.exp(np.sum(slopes) * grid.dt), 0.0]


def _pair_residual(model, pair, payoff, grid, x0, law):
    def residual(z):
        Y, _ = _integrate_pair(model, pair, grid, x0, z, law)
        return np.array([
            Y[-1, 2] - payoff_terminal_adjoint(payoff, Y[-1, 0]),
            Y[-1, 3],
        ])

    return residual


def solve_bvp_complete(model, payoff, N, grid, x0=0.0, settings=None,
                       forcing=FORCING_HALVED):
    """Shooting solution of the complete (exchangeable pair) system"""
    _require_noise(model)
    _require_pair(N)
    gain = _hat_gain(N, forcing)
    started = time.perf_counter()
    pair = PairDynamics(model, N)
    sigma = model.sigma

    def law(k, p1, p2):
        return 0.5 * sigma * p1, sigma * p2 / gain

    residual = _pair_residual(model, pair, payoff, grid, x0, law)
    guess = _pair_guess(model, pair, payoff, grid, x0)
    z, r, iterations = shoot(residual, guess, settings)

    Y, U = _integrate_pair(model, pair, grid, x0, z, law)
    control, hat_control = ControlPath(U[:, 0]), ControlPath(U[:, 1])
    objective = (
        2.0 * _log_payoff(payoff, Y[-1, 0])
        - control.energy(grid)
        - 0.5 * (N - 1) * hat_control.energy(grid)
    )
    elapsed = time.perf_counter() - started
    logger.info(
        'Complete BVP solved: p(0)=(%.6g, %.3g), residual %.2e, '
        '%d iterations', z[0], z[1], float(np.linalg.norm(r)), iterations,
    )

    return BVPSolution(
        kind=COMPLETE,
        states={'X1': Y[:, 0], 'X_hat': Y[:, 1]},
        adjoints={'p1': Y[:, 2], 'p2': Y[:, 3]},
        residual_norm=float(np.linalg.norm(r)),
        newton_iterations=iterations,
        control=control,
        objective_value=float(objective),
        hat_control=hat_control,
        N=N,
        solve_time_s=elapsed,
    )


def optimality_check_complete(model, payoff, h, N, grid, x0=0.0,
                              u_hat=None, tolerance=1e-2, settings=None,
                              forcing=FORCING_HALVED):
    """Gap check for the complete algorithm over exchangeable inner
    controls only (u^2 = ... = u^N); the full check is N-dimensional.

    Inner system: u1 = sigma p1 - h, uh = sigma p2 / d with d from the
    same forcing as the solver. The simplified objective is evaluated
    at (h, u_hat), u_hat defaulting to zero.
    """
    _require_noise(model)
    _require_pair(N)
    gain = _hat_gain(N, forcing)
    if not h.matches(grid):
        raise ConfigurationError(
            f'control has {len(h)} cells, grid has {grid.n_steps}'
        )
    pair = PairDynamics(model, N)
    sigma, dt = model.sigma, grid.dt
    u_hat = u_hat if u_hat is not None else ControlPath.zeros(grid)

    def law(k, p1, p2):
        return sigma * p1 - h.hdot[k], sigma * p2 / gain

    residual = _pair_residual(model, pair, payoff, grid, x0, law)
    along_h = _integrate_pair_state(model, pair, grid, x0, h.hdot,
                                    u_hat.hdot)
    slopes = [
        pair.jacobian(grid.time(k), along_h[k, 0], along_h[k, 1])[0]
        for k in range(grid.n_steps)
    ]
    p_T = float(payoff_terminal_adjoint(payoff, along_h[-1, 0]))
    guess = [p_T * np.exp(np.sum(slopes) * dt), 0.0]
    z, r, iterations = shoot(residual, guess, settings)
    Y, U = _integrate_pair(model, pair, grid, x0, z, law)

    sup_value = (
        2.0 * _log_payoff(payoff, Y[-1, 0])
        - np.sum(h.hdot * U[:, 0]) * dt
        + 0.5 * h.energy(grid)
        - 0.5 * np.sum(U[:, 0] ** 2) * dt
        - 0.5 * (N - 1) * np.sum(U[:, 1] ** 2) * dt
    )
    simplified = (
        2.0 * _log_payoff(payoff, along_h[-1, 0])
        - h.energy(grid)
        - 0.5 * (N - 1) * u_hat.energy(grid)
    )
    inner = BVPSolution(
        kind=COMPLETE,
        states={'X1': Y[:, 0], 'X_hat': Y[:, 1]},
        adjoints={'p1': Y[:, 2], 'p2': Y[:, 3]},
        residual_norm=float(np.linalg.norm(r)),
        newton_iterations=iterations,
        control=ControlPath(U[:, 0]),
        objective_value=float(sup_value),
        hat_control=ControlPath(U[:, 1]),
        N=N,
    )

    return _gap_report(COMPLETE, sup_value, simplified, tolerance,
                       SCOPE_EXCHANGEABLE, inner)
