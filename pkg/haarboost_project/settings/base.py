"""
Base settings for haarboost_project.

This file contains settings that are common across all environments.
Environment-specific settings are in dev.py and prod.py.
"""

import os
from pathlib import Path

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent.parent

# Load environment variables from .env file
from dotenv import load_dotenv
load_dotenv(BASE_DIR / '.env')


# Not used for signing anything (no web surface), Django still requires one.
SECRET_KEY = os.getenv('SECRET_KEY', 'haarboost-insecure-fallback-key')


# Application definition

INSTALLED_APPS = [
    'imaging',
    'features',
    'svm',
    'boosting',
    'boostsvm',
    'cascade',
    'evalkit',
    'cli',
]

# No database: every app keeps its domain objects in memory or in JSON/CSV files.
DATABASES = {}


# Internationalization
# https://docs.djangoproject.com/en/5.2/topics/i18n/

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = False

USE_TZ = True


def _env_int(name: str, default: int) -> int:
    raw = os.getenv(name)
    return int(raw) if raw else default


def _env_float(name: str, default: float) -> float:
    raw = os.getenv(name)
    return float(raw) if raw else default


# Toolkit defaults. Every config dataclass reads these through from_settings();
# explicit arguments (and CLI flags) override them.
HAARBOOST = {
    'FEATURES': {
        # 32x32 is the detector resolution used in the experiments; 24 is the
        # alternative quoted for the boosting description.
        'BASE_WINDOW': _env_int('HAARBOOST_BASE_WINDOW', 32),
        'ALTERNATE_BASE_WINDOW': 24,
        # Upper bound on windows x features x 4 cells evaluated per numpy batch
        'FEATURE_CHUNK': _env_int('HAARBOOST_FEATURE_CHUNK', 4_000_000),
    },
    'SVM': {
        'C': _env_float('HAARBOOST_SVM_C', 1.0),
        'KKT_TOLERANCE': 1e-3,
        'MAX_PASSES': 200,
        'CACHE_BUDGET': 1024,
    },
    'BOOSTING': {
        'TREE_MAX_DEPTH': 3,
        'NET_HIDDEN': 8,
        'NET_EPOCHS': 200,
        'NET_LEARNING_RATE': 0.5,
        'NET_MAX_INPUTS': 32,
        'EPSILON_FLOOR': 1e-10,
    },
    'BOOSTSVM': {
        'T_MAX': 50,
        'RESAMPLE_CAP': 1000,
        'SIGMA_INI_FACTOR': 10.0,
        'SIGMA_MIN_FACTOR': 0.1,
        'SIGMA_STEPS': 20,
        'MEDIAN_SUBSAMPLE': 200,
        'STALL_LIMIT': 3,
        'FEATURE_SUBSET_SIZE': 16,
    },
    'CASCADE': {
        'D_MIN': 0.995,
        'F_MAX': 0.5,
        'TARGET_FPR': 1e-3,
        'MAX_STAGES': 10,
        'MAX_ROUNDS_PER_STAGE': 50,
        'VALIDATION_FRACTION': 0.3,
        'NEGATIVE_RATIO': 10,
        # Random subset of the pool offered to the learners per training run
        'MAX_CANDIDATE_FEATURES': _env_int('HAARBOOST_MAX_CANDIDATE_FEATURES', 2000),
        # Windows examined per stage while bootstrapping negatives
        'MINING_BUDGET': 200_000,
        'MINING_BATCH': 256,
        'SCALE_FACTOR': 1.25,
        'STEP_FRACTION': 0.05,
        'MERGE_MIN_NEIGHBORS': 2,
        'MERGE_OVERLAP': 0.3,
    },
    'EVAL': {
        'MATCH_IOU': 0.5,
        'FD_TARGETS': [120, 200],
    },
}
