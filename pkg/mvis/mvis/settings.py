"""
Django settings for mvis project.

The project has no web surface: Django is used for its management
command framework, its settings/logging layer and its test runner.

For more information on this file, see
https://docs.djangoproject.com/en/4.2/topics/settings/
"""
import os

# Only needed because django.core.checks insists on it
SECRET_KEY = os.environ.get('MVIS_SECRET_KEY', 'mvis-not-a-web-service')

DEBUG = False

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    'rest_framework',
    'core',
    'experiments',
]

# No persistence: reports are written to CSV/JSON files
DATABASES = {}

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = True

USE_TZ = True

REST_FRAMEWORK = {
    'COMPACT_JSON': False,
}


# Logging
# https://docs.djangoproject.com/en/4.2/topics/logging/

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'mvis': {
            'format': '{asctime} {levelname} {name}: {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'mvis',
        },
    },
    'loggers': {
        'core': {
            'handlers': ['console'],
            'level': os.environ.get('MVIS_LOG_LEVEL', 'INFO'),
        },
        'experiments': {
            'handlers': ['console'],
            'level': os.environ.get('MVIS_LOG_LEVEL', 'INFO'),
        },
    },
}


# Simulation defaults (Kuramoto example: T=1, x0=0, K=1, sigma=0.3,
# G(x) = 0.5 exp(10 x), Euler step 0.02). Payoff parameters left at
# None fall back to the payoff's own defaults.

MVIS_SEED = int(os.environ.get('MVIS_SEED', 20201108))

MVIS_OPTIMALITY_TOLERANCE = 1e-2

MVIS_DEFAULTS = {
    'model': 'kuramoto',
    'K': 1.0,
    'sigma': 0.3,
    'payoff': 'exp',
    'a': None,
    'b': None,
    'c': 1.0,
    'x0': 0.0,
    'T': 1.0,
    'n_steps': 50,
    'N': 1000,
    'N2': None,
    'M': 1,
    'algorithm': 'all',
    'seed': MVIS_SEED,
    'out': 'results',
    'threads': 1,
    'dump_paths': False,
    'no_timings': False,
    'check_optimality': False,
    'tolerance': MVIS_OPTIMALITY_TOLERANCE,
}

MVIS_SHOOTING = {
    'tolerance': 1e-8,
    'max_iterations': 50,
    'max_halvings': 8,
    'jacobian_step': 1e-6,
}

MVIS_TABLE_SIZES = [1000, 5000, 10000, 50000, 100000]

MVIS_CHAOS = {
    'N': 5000,
    'M': 1000,
}
