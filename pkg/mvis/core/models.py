"""
Model family: scalar McKean-Vlasov drifts in kernel form

    b(t, x, mu) = beta(t, x) + int kappa(t, x, y) mu(dy)

with a constant diffusion sigma, plus the terminal payoffs G.
Every callable is vectorised over numpy arrays.
"""
import logging

from dataclasses import dataclass, field
from typing import Callable, Dict, Tuple

import numpy as np

from scipy.special import expit

from core.exceptions import DomainError, PayoffVanishesError
from core.measures import WeightedCloud


logger = logging.getLogger(__name__)

# Upper bound on the size of a kernel block evaluated at once
DIRECT_BLOCK = 1 << 22


def _zero(t, x, *args):
    shape = np.broadcast_shapes(np.shape(x), *(np.shape(a) for a in args))

    return np.zeros(shape)


@dataclass(frozen=True)
class SeparableTerm:
    """One product a(t, x) * c(t, y) of a separable interaction kernel"""
    x_factor: Callable
    x_factor_dx: Callable
    y_factor: Callable


@dataclass(frozen=True)
class ModelSpec:
    """Drift in mean-field kernel form plus constant diffusion"""
    name: str
    sigma: float
    beta: Callable = _zero
    beta_dx: Callable = _zero
    kappa: Callable = _zero
    kappa_dx: Callable = _zero
    kappa_dy: Callable = _zero
    separable: Tuple[SeparableTerm, ...] = ()
    params: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        # sigma == 0 is only accepted as the deterministic limit of a
        # simulation; measure changes require sigma > 0
        if not np.isfinite(self.sigma) or self.sigma < 0:
            raise DomainError(
                f'sigma must be nonnegative, got {self.sigma}'
            )

    @property
    def noisy(self):
        return self.sigma > 0

    @property
    def reduction_hint(self):
        """True when the kernel admits O(N) separable evaluation"""
        return bool(self.separable) or not self.interacting

    @property
    def interacting(self):
        return self.kappa is not _zero

    def mean_field(self, cloud, direct=False):
        """Freeze the drift against a weighted cloud"""
        return MeanField(self, cloud, direct=direct)


class MeanField:
    """Drift b(t, ., mu) and its x-derivative for one fixed cloud mu.

    With a separable kernel the cloud is reduced to one weighted sum
    per term and time, so each evaluation costs O(len(x)). Otherwise
    the kernel is summed directly in blocks.
    """

    def __init__(self, model, cloud, direct=False):
        self.model = model
        self.cloud = cloud
        self.direct = direct or not model.reduction_hint
        self._sums = {}

    def _aggregates(self, t):
        """Weighted sums of every y-factor at time t (cached)"""
        try:
            return self._sums[t]
        except KeyError:
            cloud = self.cloud
            sums = [
                np.dot(cloud.weights, term.y_factor(t, cloud.points))
                / cloud.denominator
                for term in self.model.separable
            ]
            self._sums[t] = sums

            return sums

    def _direct(self, kernel, t, x):
        """Blockwise sum_j w_j kernel(t, x, y_j) / denominator"""
        x = np.asarray(x, dtype=float)
        flat = np.atleast_1d(x).ravel()
        points, weights = self.cloud.points, self.cloud.weights
        rows = max(1, DIRECT_BLOCK // len(points))
        out = np.empty_like(flat)
        for start in range(0, len(flat), rows):
            block = flat[start:start + rows]
            values = kernel(t, block[:, None], points[None, :])
            out[start:start + rows] = values @ weights
        out /= self.cloud.denominator

        return out.reshape(x.shape)

    def interaction(self, t, x):
        """int kappa(t, x, y) mu(dy)"""
        if self.direct:
            return self._direct(self.model.kappa, t, x)
        sums = self._aggregates(t)
        return sum(
            term.x_factor(t, x) * s
            for term, s in zip(self.model.separable, sums)
        )

    def drift(self, t, x):
        """b(t, x, mu)"""
        return self.model.beta(t, x) + self.interaction(t, x)

    def drift_dx(self, t, x):
        """Partial derivative of b(t, x, mu) in x with mu held fixed"""
        if self.direct:
            inner = self._direct(self.model.kappa_dx, t, x)
        else:
            sums = self._aggregates(t)
            inner = sum(
                term.x_factor_dx(t, x) * s
                for term, s in zip(self.model.separable, sums)
            )

        return self.model.beta_dx(t, x) + inner


def drift(model, t, x, cloud, direct=False):
    """Evaluate b(t, x, cloud) for a model and a weighted cloud"""
    if not isinstance(cloud, WeightedCloud):
        raise DomainError('drift needs a WeightedCloud')

    return model.mean_field(cloud, direct=direct).drift(t, x)


# ** PAYOFFS


@dataclass(frozen=True)
class Payoff:
    """Terminal functional G >= 0 with its adjoint terminal value"""
    name: str
    g: Callable
    log_grad: Callable
    log_g: Callable
    params: Dict[str, float] = field(default_factory=dict)

    def __call__(self, x):
        return self.g(x)


def payoff_eval(payoff, x):
    """G(x)"""
    return payoff.g(np.asarray(x, dtype=float))


def payoff_terminal_adjoint(payoff, x):
    """Terminal adjoint 2 G'(x) / G(x)"""
    x = np.asarray(x, dtype=float)
    if np.any(payoff.g(x) == 0):
        raise PayoffVanishesError()

    return payoff.log_grad(x)


def exp_payoff(a=0.5, b=10.0, **kwargs):
    """G(x) = a exp(b x)"""
    if a < 0:
        raise DomainError('exp payoff needs a >= 0')

    return Payoff(
        name='exp',
        g=lambda x: a * np.exp(b * x),
        log_grad=lambda x: np.full(np.shape(x), 2.0 * b),
        log_g=lambda x: np.log(a) + b * np.asarray(x, dtype=float),
        params={'a': a, 'b': b},
    )


def tanh_payoff(a=15.0, b=1.0, **kwargs):
    """G(x) = (tanh(a (x - b)) + 1) / 2, a mollified indicator of x >= b"""
    # (tanh(z) + 1) / 2 == expit(2 z) without cancellation for z << 0
    return Payoff(
        name='tanh',
        g=lambda x: expit(2.0 * a * (np.asarray(x, dtype=float) - b)),
        log_grad=lambda x: 4.0 * a * expit(
            -2.0 * a * (np.asarray(x, dtype=float) - b)
        ),
        log_g=lambda x: -np.logaddexp(
            0.0, -2.0 * a * (np.asarray(x, dtype=float) - b)
        ),
        params={'a': a, 'b': b},
    )


def constant_payoff(c=1.0, **kwargs):
    """G(x) = c"""
    if c < 0:
        raise DomainError('constant payoff needs c >= 0')

    return Payoff(
        name='constant',
        g=lambda x: np.full(np.shape(x), float(c)),
        log_grad=lambda x: np.zeros(np.shape(x)),
        log_g=lambda x: np.full(np.shape(x), np.log(c) if c > 0 else -np.inf),
        params={'c': c},
    )


# ** BUILT-IN MODELS


def kuramoto(K=1.0, sigma=0.3, **kwargs):
    """dX = (K int sin(y - X) mu(dy) - sin X) dt + sigma dW"""
    # sin(y - x) = sin y cos x - cos y sin x
    separable = (
        SeparableTerm(
            x_factor=lambda t, x: K * np.cos(x),
            x_factor_dx=lambda t, x: -K * np.sin(x),
            y_factor=lambda t, y: np.sin(y),
        ),
        SeparableTerm(
            x_factor=lambda t, x: -K * np.sin(x),
            x_factor_dx=lambda t, x: -K * np.cos(x),
            y_factor=lambda t, y: np.cos(y),
        ),
    )

    return ModelSpec(
        name='kuramoto',
        sigma=sigma,
        beta=lambda t, x: -np.sin(x),
        beta_dx=lambda t, x: -np.cos(x),
        kappa=lambda t, x, y: K * np.sin(y - x),
        kappa_dx=lambda t, x, y: -K * np.cos(y - x),
        kappa_dy=lambda t, x, y: K * np.cos(y - x),
        separable=separable,
        params={'K': K, 'sigma': sigma},
    )


def linear_ou(sigma=0.3, **kwargs):
    """dX = -X dt + sigma dW, no interaction"""
    return ModelSpec(
        name='linear-ou',
        sigma=sigma,
        beta=lambda t, x: -np.asarray(x, dtype=float),
        beta_dx=lambda t, x: -np.ones(np.shape(x)),
        params={'sigma': sigma},
    )


def ou_exp_moment(x0, sigma, T, n_steps=None):
    """E[exp(X_T)] for dX = -X dt + sigma dW started at x0.

    With n_steps the value is exact for the Euler chain with step T/n,
    which is what a simulation on that grid estimates.
    """
    if n_steps is None:
        mean = x0 * np.exp(-T)
        variance = sigma ** 2 * (1.0 - np.exp(-2.0 * T)) / 2.0
    else:
        decay = 1.0 - T / n_steps
        mean = x0 * decay ** n_steps
        variance = sigma ** 2 * (1.0 - decay ** (2 * n_steps)) \
            / (2.0 - T / n_steps)

    return float(np.exp(mean + 0.5 * variance))


def linear_mean_field(K=1.0, sigma=0.3, **kwargs):
    """dX = -K (X - E[X]) dt + sigma dW"""
    # K (y - x) = K * y  +  (-K x) * 1
    separable = (
        SeparableTerm(
            x_factor=lambda t, x: np.full(np.shape(x), float(K)),
            x_factor_dx=lambda t, x: np.zeros(np.shape(x)),
            y_factor=lambda t, y: np.asarray(y, dtype=float),
        ),
        SeparableTerm(
            x_factor=lambda t, x: -K * np.asarray(x, dtype=float),
            x_factor_dx=lambda t, x: np.full(np.shape(x), -float(K)),
            y_factor=lambda t, y: np.ones(np.shape(y)),
        ),
    )

    return ModelSpec(
        name='linear-mean-field',
        sigma=sigma,
        kappa=lambda t, x, y: K * (y - x),
        kappa_dx=lambda t, x, y: np.broadcast_to(
            -float(K), np.broadcast(x, y).shape
        ).copy(),
        kappa_dy=lambda t, x, y: np.broadcast_to(
            float(K), np.broadcast(x, y).shape
        ).copy(),
        separable=separable,
        params={'K': K, 'sigma': sigma},
    )


def zero_drift(sigma=0.3, **kwargs):
    """dX = sigma dW (scaled Brownian motion)"""
    return ModelSpec(
        name='zero-drift',
        sigma=sigma,
        params={'sigma': sigma},
    )


MODELS = {
    'kuramoto': kuramoto,
    'linear-ou': linear_ou,
    'linear-mean-field': linear_mean_field,
    'zero-drift': zero_drift,
}

PAYOFFS = {
    'exp': exp_payoff,
    'tanh': tanh_payoff,
    'constant': constant_payoff,
}


def build_model(name, **params):
    """Create a registered model from its key and parameters"""
    try:
        builder = MODELS[name]
    except KeyError:
        raise DomainError(f'unknown model {name!r}') from None

    return builder(**params)


def build_payoff(name, **params):
    """Create a registered payoff from its key and parameters"""
    try:
        builder = PAYOFFS[name]
    except KeyError:
        raise DomainError(f'unknown payoff {name!r}') from None

    return builder(**params)


# ** DERIVATIVE CHECKS


def _central_difference(f, x, step):
    return (f(x + step) - f(x - step)) / (2.0 * step)


def _mismatch(analytic, numeric, rtol):
    """Largest error relative to max(|numeric|, 1)"""
    scale = np.maximum(np.abs(numeric), 1.0)
    return float(np.max(np.abs(analytic - numeric) / scale) / rtol)


def check_derivatives(model, n_probes=100, seed=0, step=1e-5, rtol=1e-6,
                      low=-3.0, high=3.0):
    """Compare the analytic derivatives of a model with central
    differences. Returns the worst error per derivative in units of
    rtol (values <= 1 pass)."""
    rng = np.random.default_rng(seed)
    t = rng.uniform(0.0, 1.0, n_probes)
    x = rng.uniform(low, high, n_probes)
    y = rng.uniform(low, high, n_probes)

    report = {
        'beta_dx': _mismatch(
            model.beta_dx(t, x),
            _central_difference(lambda z: model.beta(t, z), x, step),
            rtol,
        ),
        'kappa_dx': _mismatch(
            model.kappa_dx(t, x, y),
            _central_difference(lambda z: model.kappa(t, z, y), x, step),
            rtol,
        ),
        'kappa_dy': _mismatch(
            model.kappa_dy(t, x, y),
            _central_difference(lambda z: model.kappa(t, x, z), y, step),
            rtol,
        ),
    }
    for i, term in enumerate(model.separable):
        report[f'separable[{i}].x_factor_dx'] = _mismatch(
            term.x_factor_dx(t, x),
            _central_difference(lambda z: term.x_factor(t, z), x, step),
            rtol,
        )
    worst = max(report.values())
    if worst > 1.0:
        logger.warning('Model %s fails derivative check: %s',
                       model.name, report)

    return report


def check_payoff(payoff, n_probes=100, seed=0, step=1e-5, rtol=1e-6,
                 low=-3.0, high=3.0):
    """Compare log_grad with 2 d/dx log G where G > 1e-300"""
    rng = np.random.default_rng(seed)
    x = rng.uniform(low, high, n_probes)
    x = x[payoff.g(x) > 1e-300]
    numeric = 2.0 * _central_difference(payoff.log_g, x, step)

    return _mismatch(payoff.log_grad(x), numeric, rtol)
