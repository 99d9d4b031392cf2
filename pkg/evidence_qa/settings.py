"""
Django settings for the evidence_qa project.

The project hosts no web surface; Django supplies the management-command
runner, the test runner and the settings layer the engine reads its
defaults from.

For the full list of settings and their values, see
https://docs.djangoproject.com/en/5.2/ref/settings/
"""

from pathlib import Path
from decouple import config

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent


SECRET_KEY = config('SECRET_KEY', default="camse-local-only-not-secret")

DEBUG = config('DEBUG', default=False, cast=bool)

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    "qa_engine",
]

# No models are defined; commands and tests never touch a database.
DATABASES = {}

USE_TZ = True


# ============================================================================
# Engine Settings
# These can be overridden with environment variables or a .env file
# ============================================================================

# CAMSE encoder
CAMSE_SCALES = config('CAMSE_SCALES', default=3, cast=int)  # window sizes 1..k
CAMSE_SUBSPACES = config('CAMSE_SUBSPACES', default=15, cast=int)  # r
CAMSE_EMBEDDING_DIM = config('CAMSE_EMBEDDING_DIM', default=200, cast=int)  # d
CAMSE_CONTEXT_SIZE = config('CAMSE_CONTEXT_SIZE', default=128, cast=int)  # u1
CAMSE_ATTENTION_CONTEXT_SIZE = config('CAMSE_ATTENTION_CONTEXT_SIZE', default=0, cast=int)  # u2, 0 = same as u1
CAMSE_ATTENTION_HIDDEN = config('CAMSE_ATTENTION_HIDDEN', default=100, cast=int)  # d_a
CAMSE_ATTENTION_CONTEXT = config('CAMSE_ATTENTION_CONTEXT', default=True, cast=bool)
CAMSE_DROPOUT = config('CAMSE_DROPOUT', default=0.2, cast=float)

# Scoring
CAMSE_GATE_HIDDEN = config('CAMSE_GATE_HIDDEN', default=128, cast=int)  # h_g
CAMSE_SAS_BIAS = config('CAMSE_SAS_BIAS', default=True, cast=bool)
CAMSE_SCORING_MODE = config('CAMSE_SCORING_MODE', default='sms+sas')  # sms+sas, sms_only, sas_only

# Training
CAMSE_BATCH_SIZE = config('CAMSE_BATCH_SIZE', default=10, cast=int)
CAMSE_EPOCHS = config('CAMSE_EPOCHS', default=30, cast=int)
CAMSE_LEARNING_RATE = config('CAMSE_LEARNING_RATE', default=0.001, cast=float)
CAMSE_LR_DECAY = config('CAMSE_LR_DECAY', default=0.95, cast=float)
CAMSE_ADAM_BETA1 = config('CAMSE_ADAM_BETA1', default=0.9, cast=float)
CAMSE_ADAM_BETA2 = config('CAMSE_ADAM_BETA2', default=0.999, cast=float)
CAMSE_ADAM_EPS = config('CAMSE_ADAM_EPS', default=1e-8, cast=float)
CAMSE_MAX_STATEMENT_LEN = config('CAMSE_MAX_STATEMENT_LEN', default=100, cast=int)
CAMSE_MAX_DOCUMENT_LEN = config('CAMSE_MAX_DOCUMENT_LEN', default=100, cast=int)
CAMSE_EVIDENCE_CAP = config('CAMSE_EVIDENCE_CAP', default=10, cast=int)
CAMSE_FINE_TUNE_EMBEDDINGS = config('CAMSE_FINE_TUNE_EMBEDDINGS', default=False, cast=bool)
CAMSE_SEED = config('CAMSE_SEED', default=13, cast=int)
CAMSE_COMPUTE_DTYPE = config('CAMSE_COMPUTE_DTYPE', default='f32')  # f32 or f64

# Retrieval and preprocessing
CAMSE_BM25_K1 = config('CAMSE_BM25_K1', default=1.2, cast=float)
CAMSE_BM25_B = config('CAMSE_BM25_B', default=0.75, cast=float)
CAMSE_DEDUP_THRESHOLD = config('CAMSE_DEDUP_THRESHOLD', default=0.8, cast=float)
CAMSE_EVIDENCE_SOURCE = config('CAMSE_EVIDENCE_SOURCE', default='dataset')  # dataset, bm25, neighbors
CAMSE_REPR_CONTEXT_SIZE = config('CAMSE_REPR_CONTEXT_SIZE', default=32, cast=int)
CAMSE_REPR_HIDDEN = config('CAMSE_REPR_HIDDEN', default=32, cast=int)
CAMSE_REPR_EPOCHS = config('CAMSE_REPR_EPOCHS', default=20, cast=int)
CAMSE_REPR_LEARNING_RATE = config('CAMSE_REPR_LEARNING_RATE', default=0.01, cast=float)

# Logging
CAMSE_LOG_LEVEL = config('CAMSE_LOG_LEVEL', default='INFO')

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "plain": {
            "format": "%(asctime)s %(levelname)s %(name)s: %(message)s",
        },
    },
    "handlers": {
        "console": {
            "class": "logging.StreamHandler",
            "formatter": "plain",
        },
    },
    "loggers": {
        "qa_engine": {
            "handlers": ["console"],
            "level": CAMSE_LOG_LEVEL,
            "propagate": False,
        },
    },
}
