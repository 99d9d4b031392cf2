"""
Custom exception classes for the CAMSE question-answering engine.

This module defines a hierarchy of exceptions for the error conditions of
the numerical core, the text and retrieval layers, training and storage.
All exceptions inherit from CamseError for easy catching.
"""


# ============================================================================
# Base Exception
# ============================================================================

class CamseError(Exception):
    """
    Base exception for all engine errors.

    All custom exceptions in the engine inherit from this class,
    allowing for easy catching of any engine-related error.
    """

    def __init__(self, message: str, user_message: str = None):
        """
        Initialize the exception.

        Args:
            message: Technical error message for logging
            user_message: Operator-facing message (optional, defaults to message)
        """
        super().__init__(message)
        self.message = message
        self.user_message = user_message or message

    def get_user_message(self) -> str:
        """Get operator-facing error message."""
        return self.user_message


# ============================================================================
# Configuration Exceptions
# ============================================================================

class ConfigError(CamseError):
    """Raised when a configuration value or key is invalid."""
    pass


class SynthConfigError(ConfigError):
    """Raised when a synthetic corpus configuration cannot be realised."""
    pass


# ============================================================================
# Data Exceptions
# ============================================================================

class DataError(CamseError):
    """Base exception for malformed or inconsistent input data."""
    pass


class ParseError(DataError):
    """Raised when a text file cannot be parsed."""

    def __init__(self, message: str, path: str = None, line: int = None):
        location = ""
        if path is not None:
            location = f"{path}"
            if line is not None:
                location += f":{line}"
            location += ": "
        self.path = path
        self.line = line
        super().__init__(f"{location}{message}")


class CorruptionError(DataError):
    """Raised when stored ids or payloads are outside their valid range."""
    pass


class EmptySequenceError(DataError):
    """Raised when text yields no tokens."""

    def __init__(self, message: str = "Input text contains no tokens"):
        super().__init__(message)


class DatasetError(DataError):
    """Raised when a dataset is empty or a record violates its invariants."""
    pass


# ============================================================================
# Numerical Exceptions
# ============================================================================

class ComputeError(CamseError):
    """Base exception for numerical core errors."""
    pass


class DimensionError(ComputeError):
    """Raised when operand shapes are incompatible."""
    pass


class SequenceTooShortError(ComputeError):
    """Raised when a sequence is shorter than the widest convolution window."""

    def __init__(self, length: int, required: int):
        self.length = length
        self.required = required
        super().__init__(
            f"Sequence of length {length} is shorter than required length {required}"
        )


class TapeError(ComputeError):
    """Raised when the gradient tape is used out of order."""
    pass


class GradCheckError(ComputeError):
    """Raised when a gradient check cannot be carried out validly."""
    pass


class OptimizerStateError(ComputeError):
    """Raised when optimizer state does not belong to the parameters given."""
    pass


# ============================================================================
# Training Exceptions
# ============================================================================

class TrainingError(CamseError):
    """Base exception for training loop failures."""
    pass


class DivergenceError(TrainingError):
    """Raised when the training loss stops being finite."""

    def __init__(self, epoch: int, batch: int, loss: float):
        self.epoch = epoch
        self.batch = batch
        self.loss = loss
        super().__init__(
            f"Training diverged at epoch {epoch}, batch {batch} (loss={loss})",
            "Training diverged. Lower the learning rate or check the data."
        )


# ============================================================================
# Storage Exceptions
# ============================================================================

class StorageError(CamseError):
    """Base exception for persisted artifacts."""
    pass


class CheckpointError(StorageError):
    """Raised when a checkpoint is missing, malformed or incompatible."""
    pass


class IndexFormatError(StorageError):
    """Raised when a retrieval index file is malformed."""
    pass


# ============================================================================
# Utility Functions
# ============================================================================

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_RUNTIME = 3


def get_user_friendly_error(exception: Exception) -> str:
    """
    Convert any exception to an operator-facing error message.

    Args:
        exception: The exception to convert

    Returns:
        Error message string
    """
    if isinstance(exception, CamseError):
        return exception.get_user_message()

    if isinstance(exception, FileNotFoundError):
        return f"File not found: {exception.filename}"
    if isinstance(exception, PermissionError):
        return f"Permission denied: {exception.filename}"
    if isinstance(exception, MemoryError):
        return "Out of memory. Reduce model sizes or the evidence cap."
    return "An unexpected error occurred."


def get_exit_code(exception: Exception) -> int:
    """
    Map an exception to the command-line exit code.

    Returns:
        1 for usage/config problems, 2 for IO/parse problems,
        3 for runtime failures (divergence and everything else)
    """
    if isinstance(exception, ConfigError):
        return EXIT_USAGE
    if isinstance(exception, (DataError, StorageError, OSError)):
        return EXIT_IO
    return EXIT_RUNTIME


def is_user_error(exception: Exception) -> bool:
    """
    Determine if an error is due to operator input rather than the engine.

    Args:
        exception: The exception to check

    Returns:
        True if the input (config, data files) is at fault
    """
    user_error_types = (
        ConfigError,
        DataError,
        StorageError,
    )

    return isinstance(exception, user_error_types)
