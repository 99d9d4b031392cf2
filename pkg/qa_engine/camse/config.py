"""
Configuration management for the CAMSE engine.

This module provides centralized defaults for the encoder, scoring module,
training loop and retrieval layer. Values come from Django settings when
Django is configured and fall back to the built-in defaults otherwise, so
the engine can be imported by plain scripts as well as by the management
commands.
"""

import logging

logger = logging.getLogger(__name__)


# ============================================================================
# Helper function to safely get Django settings
# ============================================================================

def _get_setting(name, default=None):
    """Safely get a Django setting, returning default if Django not configured."""
    try:
        from django.conf import settings
        return getattr(settings, name, default)
    except Exception:
        return default


# ============================================================================
# Encoder Configuration
# ============================================================================

# Number of convolution scales (window sizes 1..k)
SCALES = _get_setting('CAMSE_SCALES', 3)

# Number of semantic subspaces r
SUBSPACES = _get_setting('CAMSE_SUBSPACES', 15)

# Word-embedding width d
EMBEDDING_DIM = _get_setting('CAMSE_EMBEDDING_DIM', 200)

# One-direction size of the context-layer Bi-LSTM (u1)
CONTEXT_SIZE = _get_setting('CAMSE_CONTEXT_SIZE', 128)

# One-direction size of the attention Bi-LSTM (u2); 0 means "same as u1"
ATTENTION_CONTEXT_SIZE = _get_setting('CAMSE_ATTENTION_CONTEXT_SIZE', 0)

# Attention hidden size d_a
ATTENTION_HIDDEN = _get_setting('CAMSE_ATTENTION_HIDDEN', 100)

# Context unit inside the attention layer (False gives the variant without it)
ATTENTION_CONTEXT = _get_setting('CAMSE_ATTENTION_CONTEXT', True)

DROPOUT = _get_setting('CAMSE_DROPOUT', 0.2)


# ============================================================================
# Scoring Configuration
# ============================================================================

GATE_HIDDEN = _get_setting('CAMSE_GATE_HIDDEN', 128)

SAS_BIAS = _get_setting('CAMSE_SAS_BIAS', True)

VALID_SCORING_MODES = ('sms+sas', 'sms_only', 'sas_only')

SCORING_MODE = _get_setting('CAMSE_SCORING_MODE', 'sms+sas')


# ============================================================================
# Training Configuration
# ============================================================================

BATCH_SIZE = _get_setting('CAMSE_BATCH_SIZE', 10)
EPOCHS = _get_setting('CAMSE_EPOCHS', 30)
LEARNING_RATE = _get_setting('CAMSE_LEARNING_RATE', 1e-3)
LR_DECAY = _get_setting('CAMSE_LR_DECAY', 0.95)
ADAM_BETA1 = _get_setting('CAMSE_ADAM_BETA1', 0.9)
ADAM_BETA2 = _get_setting('CAMSE_ADAM_BETA2', 0.999)
ADAM_EPS = _get_setting('CAMSE_ADAM_EPS', 1e-8)

# Truncation limits in tokens (100 for exam questions, 70 for EMR questions)
MAX_STATEMENT_LEN = _get_setting('CAMSE_MAX_STATEMENT_LEN', 100)
MAX_DOCUMENT_LEN = _get_setting('CAMSE_MAX_DOCUMENT_LEN', 100)

# Evidence documents scored per candidate choice
EVIDENCE_CAP = _get_setting('CAMSE_EVIDENCE_CAP', 10)

FINE_TUNE_EMBEDDINGS = _get_setting('CAMSE_FINE_TUNE_EMBEDDINGS', False)

SEED = _get_setting('CAMSE_SEED', 13)

VALID_DTYPES = ('f32', 'f64')

COMPUTE_DTYPE = _get_setting('CAMSE_COMPUTE_DTYPE', 'f32')


# ============================================================================
# Retrieval and Preprocessing Configuration
# ============================================================================

BM25_K1 = _get_setting('CAMSE_BM25_K1', 1.2)
BM25_B = _get_setting('CAMSE_BM25_B', 0.75)

# Levenshtein ratio at or above which a training question is dropped
DEDUP_THRESHOLD = _get_setting('CAMSE_DEDUP_THRESHOLD', 0.8)

VALID_EVIDENCE_SOURCES = ('dataset', 'bm25', 'neighbors')

# Evidence source used when a dataset is loaded for training or evaluation
EVIDENCE_SOURCE = _get_setting('CAMSE_EVIDENCE_SOURCE', 'dataset')

# LSTM-MLP classifier whose hidden activation is the neighbour representation
REPR_CONTEXT_SIZE = _get_setting('CAMSE_REPR_CONTEXT_SIZE', 32)
REPR_HIDDEN = _get_setting('CAMSE_REPR_HIDDEN', 32)
REPR_EPOCHS = _get_setting('CAMSE_REPR_EPOCHS', 20)
REPR_LEARNING_RATE = _get_setting('CAMSE_REPR_LEARNING_RATE', 0.01)


# ============================================================================
# Configuration Validation
# ============================================================================

def validate_configuration():
    """
    Validate the configured defaults and log warnings for invalid values.

    Returns:
        tuple: (is_valid: bool, errors: list)
    """
    errors = []

    for name, value in (
        ('CAMSE_SCALES', SCALES),
        ('CAMSE_SUBSPACES', SUBSPACES),
        ('CAMSE_EMBEDDING_DIM', EMBEDDING_DIM),
        ('CAMSE_CONTEXT_SIZE', CONTEXT_SIZE),
        ('CAMSE_ATTENTION_HIDDEN', ATTENTION_HIDDEN),
        ('CAMSE_GATE_HIDDEN', GATE_HIDDEN),
        ('CAMSE_BATCH_SIZE', BATCH_SIZE),
        ('CAMSE_EPOCHS', EPOCHS),
        ('CAMSE_EVIDENCE_CAP', EVIDENCE_CAP),
    ):
        if value < 1:
            errors.append(f"Invalid {name} '{value}'. Must be at least 1.")

    if ATTENTION_CONTEXT_SIZE < 0:
        errors.append(
            f"Invalid CAMSE_ATTENTION_CONTEXT_SIZE '{ATTENTION_CONTEXT_SIZE}'. "
            f"Must be non-negative (0 means same as CAMSE_CONTEXT_SIZE)."
        )

    if not 0 <= DROPOUT < 1:
        errors.append(f"Invalid CAMSE_DROPOUT '{DROPOUT}'. Must be in [0, 1).")

    if SCORING_MODE not in VALID_SCORING_MODES:
        errors.append(
            f"Invalid CAMSE_SCORING_MODE '{SCORING_MODE}'. "
            f"Must be one of: {', '.join(VALID_SCORING_MODES)}."
        )

    if COMPUTE_DTYPE not in VALID_DTYPES:
        errors.append(
            f"Invalid CAMSE_COMPUTE_DTYPE '{COMPUTE_DTYPE}'. "
            f"Must be one of: {', '.join(VALID_DTYPES)}."
        )

    for name, value in (('CAMSE_MAX_STATEMENT_LEN', MAX_STATEMENT_LEN),
                        ('CAMSE_MAX_DOCUMENT_LEN', MAX_DOCUMENT_LEN)):
        if value < SCALES:
            errors.append(
                f"{name} ({value}) must be at least CAMSE_SCALES ({SCALES})."
            )

    if not 0 < DEDUP_THRESHOLD <= 1:
        errors.append(
            f"Invalid CAMSE_DEDUP_THRESHOLD '{DEDUP_THRESHOLD}'. Must be in (0, 1]."
        )

    if LEARNING_RATE <= 0 or not 0 < LR_DECAY <= 1:
        errors.append(
            f"Invalid learning-rate schedule (lr={LEARNING_RATE}, decay={LR_DECAY})."
        )

    for error in errors:
        logger.warning(f"Configuration validation: {error}")

    is_valid = len(errors) == 0
    return is_valid, errors


# ============================================================================
# Initialize Configuration
# ============================================================================

try:
    _is_valid, _errors = validate_configuration()

    if not _is_valid:
        logger.warning(
            f"Configuration validation found {len(_errors)} issue(s). "
            "Check logs for details."
        )
except Exception as e:
    logger.debug(f"Configuration initialization deferred: {e}")
