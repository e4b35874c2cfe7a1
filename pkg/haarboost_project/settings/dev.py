"""
Development settings for haarboost_project.

This file contains settings specific to development environment.
"""

from .base import *

DEBUG = True


# LUT memoisation for detection (see features.managers)
CACHES = {
    'default': {
        'BACKEND': 'django.core.cache.backends.locmem.LocMemCache',
        'LOCATION': 'haarboost-luts',
        'TIMEOUT': None,
        'OPTIONS': {
            'MAX_ENTRIES': 256,
        }
    }
}


# Logging configuration for training and detection debugging
LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{levelname} {asctime} {module} {message}',
            'style': '{',
        },
    },
    'handlers': {
        # stderr carries only the failure reason of a command
        'console': {
            'class': 'logging.StreamHandler',
            'stream': 'ext://sys.stdout',
            'formatter': 'verbose',
        },
    },
    'loggers': {
        'svm': {
            'handlers': ['console'],
            'level': 'INFO',
            'propagate': False,
        },
        'boosting': {
            'handlers': ['console'],
            'level': 'INFO',
            'propagate': False,
        },
        'boostsvm': {
            'handlers': ['console'],
            'level': 'DEBUG',
            'propagate': False,
        },
        'cascade': {
            'handlers': ['console'],
            'level': 'INFO',
            'propagate': False,
        },
        'evalkit': {
            'handlers': ['console'],
            'level': 'INFO',
            'propagate': False,
        },
        'cli': {
            'handlers': ['console'],
            'level': 'INFO',
            'propagate': False,
        },
    },
}
