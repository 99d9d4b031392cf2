"""
CAMSE question-answering engine.

This package provides the numerical core, text and retrieval layers, the
multi-scale attentive encoder, the dual SMS/SAS scoring module and the
training loop for multiple-choice, evidence-supported question answering.
"""

__version__ = '1.0.0'

# Export custom exceptions for easy importing
from .exceptions import (
    # Base exceptions
    CamseError,

    # Configuration exceptions
    ConfigError,
    SynthConfigError,

    # Data exceptions
    DataError,
    ParseError,
    CorruptionError,
    EmptySequenceError,
    DatasetError,

    # Numerical exceptions
    ComputeError,
    DimensionError,
    SequenceTooShortError,
    TapeError,
    GradCheckError,
    OptimizerStateError,

    # Training and storage exceptions
    TrainingError,
    DivergenceError,
    StorageError,
    CheckpointError,
    IndexFormatError,

    # Utility functions
    get_user_friendly_error,
    get_exit_code,
    is_user_error,
)

__all__ = [
    # Exceptions
    'CamseError',
    'ConfigError',
    'SynthConfigError',
    'DataError',
    'ParseError',
    'CorruptionError',
    'EmptySequenceError',
    'DatasetError',
    'ComputeError',
    'DimensionError',
    'SequenceTooShortError',
    'TapeError',
    'GradCheckError',
    'OptimizerStateError',
    'TrainingError',
    'DivergenceError',
    'StorageError',
    'CheckpointError',
    'IndexFormatError',
    # Utilities
    'get_user_friendly_error',
    'get_exit_code',
    'is_user_error',
]
