import os
from pathlib import Path

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# SECURITY WARNING: the harness serves nothing, but Django still wants a key.
SECRET_KEY = os.getenv('SECRET_KEY', 'django-insecure-fractal-lab-experiment-harness')

DEBUG = os.getenv('DEBUG', 'False') == 'True'

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    'experiments',
]

# No models are persisted; reports go to plain files.
DATABASES = {}

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

USE_TZ = True
TIME_ZONE = 'UTC'


# Experiment harness

REPORTS_DIR = Path(os.getenv('FRACTAL_LAB_REPORTS_DIR', BASE_DIR / 'reports'))
DEFAULT_SEED = int(os.getenv('FRACTAL_LAB_SEED', '0'))
DEFAULT_THREADS = int(os.getenv('FRACTAL_LAB_THREADS', '1'))

# Numerical tunables shared by the geometry library
FRACTAL_LAB = {
    # discrete Hausdorff dimension estimator
    'HAUSDORFF_RATIO_FLOOR': float(os.getenv('HAUSDORFF_RATIO_FLOOR', '0.1')),
    'HAUSDORFF_GAMMA_STEPS': int(os.getenv('HAUSDORFF_GAMMA_STEPS', '64')),
    # 60 significant digits is a little over 128 fractional bits
    'DECIMAL_PRECISION': int(os.getenv('DECIMAL_PRECISION', '60')),
    'SEPARATION_SLACK': 2.0 ** -64,
    # boolean window length for exact sumset counting; longer windows are counted chunk by chunk
    'SUMSET_MASK_CEILING': int(os.getenv('SUMSET_MASK_CEILING', str(2 ** 24))),
    'SUMSET_PAIR_CEILING': int(os.getenv('SUMSET_PAIR_CEILING', str(10 ** 8))),
    'TREE_NODE_CAP': int(os.getenv('TREE_NODE_CAP', str(10 ** 6))),
    'INDEPENDENCE_EXPONENT_CAP': int(os.getenv('INDEPENDENCE_EXPONENT_CAP', '64')),
}

# Tolerance bands for asymptotic claims; exact claims never use these
EXPERIMENT_TOLERANCES = {
    'single_set': 0.01,
    'sumset': 0.05,
    'same_base': 0.02,
    'counterexample_dim': 0.03,
    'grid_uniformity': 0.05,
}


# Logging

LOG_LEVEL = os.getenv('LOG_LEVEL', 'INFO')

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'standard': {
            'format': '%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'standard',
        },
    },
    'loggers': {
        'fractal_lab': {
            'handlers': ['console'],
            'level': LOG_LEVEL,
            'propagate': False,
        },
        'experiments': {
            'handlers': ['console'],
            'level': LOG_LEVEL,
            'propagate': False,
        },
    },
}

# Load local overrides if present
try:
    from .local_settings import *  # noqa: F401,F403
except ImportError:
    pass
