import os
from pathlib import Path
import dotenv


BASE_DIR = Path(__file__).resolve().parent.parent
dotenv.load_dotenv(os.path.join(BASE_DIR, '.env'))

SECRET_KEY = os.environ.get('SECRET_KEY', 'nonsqueeze-local-only')
DEBUG = os.environ.get('DEBUG', 'False') == 'True'

ALLOWED_HOSTS = []

INSTALLED_APPS = [
    'rest_framework',
    'nonsqueeze',
]

# Reports and numerics only; nothing is persisted in a database.
DATABASES = {}

LANGUAGE_CODE = 'en-us'
TIME_ZONE = 'UTC'
USE_I18N = False
USE_TZ = True

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

REST_FRAMEWORK = {
    'DEFAULT_AUTHENTICATION_CLASSES': [],
    'DEFAULT_PERMISSION_CLASSES': [],
    'UNAUTHENTICATED_USER': None,
    'COERCE_DECIMAL_TO_STRING': True,
}

REPORT_OUTPUT_DIR = Path(os.environ.get('NONSQUEEZE_OUTPUT_DIR', BASE_DIR / 'reports'))

REPORT_SCHEMA_VERSION = 'v1'

NONSQUEEZE_DEFAULTS = {
    'seed': 7,
    'markov_max_entry': 10_000,
    'markov_iteration_cap': 64,
    'simpson_tol': 1e-13,
    'bisection_rel_tol': 1e-12,
    'bisection_max_steps': 200,
    'quadrature_tol': 1e-11,
    'symplectic_tol_analytic': 1e-9,
    'symplectic_tol_fd': 1e-4,
    'containment_tol': 1e-10,
    'symplectic_samples': 10_000,
    'defect_samples': 1_000_000,
    'lipschitz_samples': 20_000,
    'ou_samples': 1_000,
    'ou_step': 1e-5,
    'toric_samples': 10_000,
    'neighborhood_samples': 10_000_000,
    't_values': [0.05, 0.02, 0.01, 0.005],
    'tube_bound_t_values': [0.05, 0.02, 0.01],
    'tube_bound_slack': 0.15,
    'disk_radius': 2 ** 0.5,
    'cylinder_radius': 1.0,
    'shard_size': 2 ** 16,
}

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,

    'formatters': {
        'verbose': {
            'format': '[{asctime}] {levelname} [{name}:{lineno}] {message}',
            'style': '{',
            'datefmt': '%Y-%m-%d %H:%M:%S'
        },
        'simple': {
            'format': '{levelname} {message}',
            'style': '{',
        },
    },

    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'verbose',
        },
    },

    'loggers': {
        'root': {
            'handlers': ['console'],
            'level': 'WARNING',
        },

        'django': {
            'handlers': ['console'],
            'level': os.getenv('DJANGO_LOG_LEVEL', 'INFO'),
            'propagate': False,
        },

        'nonsqueeze': {
            'handlers': ['console'],
            'level': os.getenv('APP_LOG_LEVEL', 'INFO'),
            'propagate': False,
        },
    },
}
