"""
Django settings for the benchproject project.

A minimal project hosting the ibmg app, for running experiments with a
persistent database and, optionally, an RQ worker.
"""
import os
import sys
from pathlib import Path

BASE_DIR = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(BASE_DIR.parent))

SECRET_KEY = os.environ.get('DJANGO_SECRET_KEY', 'django-insecure-benchproject-only-for-local-runs')

DEBUG = True

ALLOWED_HOSTS = []

INSTALLED_APPS = [
    'django.contrib.contenttypes',
    'ibmg',
]

try:
    import django_rq  # noqa: F401

    INSTALLED_APPS.append('django_rq')
except ImportError:
    pass

DATABASES = {
    'default': {
        'ENGINE': 'django.db.backends.sqlite3',
        'NAME': os.environ.get('IBMG_DATABASE', BASE_DIR / 'db.sqlite3'),
    }
}

RQ_QUEUES = {
    'default': {
        'HOST': os.environ.get('REDIS_HOST', 'localhost'),
        'PORT': int(os.environ.get('REDIS_PORT', 6379)),
        'DB': 0,
        'DEFAULT_TIMEOUT': 3600,
    },
}

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = True

USE_TZ = True

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

IBMG_THREADS = int(os.environ.get('IBMG_THREADS', 1))
IBMG_QUEUE_SERVICE_TYPE = os.environ.get('IBMG_QUEUE_SERVICE_TYPE', 'local')
IBMG_OUTPUT_DIR = os.environ.get('IBMG_OUTPUT_DIR', str(BASE_DIR / 'results'))
IBMG_N_REPORTS_KEPT = 20

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'simple': {'format': '%(asctime)s - %(levelname)s - %(name)s - %(message)s'},
    },
    'handlers': {
        'console': {'class': 'logging.StreamHandler', 'formatter': 'simple'},
    },
    'loggers': {
        'rq.worker': {'handlers': ['console'], 'level': 'INFO'},
    },
}
