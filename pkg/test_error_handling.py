#!/usr/bin/env python
"""
Test script to verify error handling across the question-answering engine.

This script tests:
1. Exception hierarchy
2. Operator-facing error messages
3. Exit code mapping
4. Input-error detection
"""

import sys
import os

# Add the project to the path
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from qa_engine.camse.exceptions import (
    # Base exception
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
    get_exit_code,
    get_user_friendly_error,
    is_user_error,
)


def test_exception_hierarchy():
    """Test that exception hierarchy is correct."""
    print("Testing exception hierarchy...")

    assert issubclass(SynthConfigError, ConfigError)

    for cls in (ParseError, CorruptionError, EmptySequenceError, DatasetError):
        assert issubclass(cls, DataError)

    for cls in (DimensionError, SequenceTooShortError, TapeError, GradCheckError, OptimizerStateError):
        assert issubclass(cls, ComputeError)

    assert issubclass(DivergenceError, TrainingError)
    assert issubclass(CheckpointError, StorageError)
    assert issubclass(IndexFormatError, StorageError)

    for cls in (ConfigError, DataError, ComputeError, TrainingError, StorageError):
        assert issubclass(cls, CamseError)

    print("✓ Exception hierarchy is correct")


def test_error_details():
    """Test that structured exceptions carry their details."""
    print("\nTesting exception details...")

    error = ParseError("Expected 3 values", path="vectors.txt", line=7)
    assert str(error) == "vectors.txt:7: Expected 3 values"
    assert error.line == 7

    error = SequenceTooShortError(2, 3)
    assert (error.length, error.required) == (2, 3)

    error = DivergenceError(4, 12, float('nan'))
    assert "epoch 4, batch 12" in error.message
    assert "learning rate" in error.get_user_message()

    print("✓ Exception details are correct")


def test_exit_codes():
    """Test that failures map to the documented exit codes."""
    print("\nTesting exit codes...")

    test_cases = [
        (ConfigError("unknown key"), 1),
        (SynthConfigError("vocab too small"), 1),
        (ParseError("bad row"), 2),
        (CheckpointError("truncated"), 2),
        (FileNotFoundError(2, "No such file", "missing.jsonl"), 2),
        (DivergenceError(1, 1, float('inf')), 3),
        (DimensionError("shape mismatch"), 3),
        (RuntimeError("anything else"), 3),
    ]

    for exception, expected in test_cases:
        code = get_exit_code(exception)
        assert code == expected, f"{exception.__class__.__name__}: expected {expected}, got {code}"
        print(f"✓ {exception.__class__.__name__} -> {code}")

    print("✓ Exit codes are correct")


def test_user_error_detection():
    """Test that input errors are told apart from engine failures."""
    print("\nTesting user error detection...")

    user_errors = [
        ConfigError("bad value"),
        DatasetError("empty dataset"),
        IndexFormatError("old version"),
    ]

    for error in user_errors:
        assert is_user_error(error), f"{error.__class__.__name__} should be a user error"
        print(f"✓ {error.__class__.__name__} correctly identified as user error")

    engine_errors = [
        TapeError("backward twice"),
        DivergenceError(1, 1, float('nan')),
        CamseError("generic"),
    ]

    for error in engine_errors:
        assert not is_user_error(error), f"{error.__class__.__name__} should be an engine error"
        print(f"✓ {error.__class__.__name__} correctly identified as engine error")

    print("✓ User error detection is correct")


def test_generic_error_handling():
    """Test handling of exceptions from outside the engine."""
    print("\nTesting generic error handling...")

    test_cases = [
        (FileNotFoundError(2, "No such file", "train.jsonl"), "File not found: train.jsonl"),
        (PermissionError(13, "Permission denied", "model.ckpt"), "Permission denied: model.ckpt"),
        (MemoryError(), "Out of memory"),
        (Exception("Some random error"), "An unexpected error occurred"),
    ]

    for exception, expected_substring in test_cases:
        user_msg = get_user_friendly_error(exception)
        assert expected_substring.lower() in user_msg.lower(), \
            f"Expected '{expected_substring}' in '{user_msg}' for {exception!r}"
        print(f"✓ {exception.__class__.__name__} -> '{user_msg}'")

    print("✓ Generic error handling is correct")


def main():
    """Run all tests."""
    print("=" * 70)
    print("ERROR HANDLING TEST SUITE")
    print("=" * 70)

    try:
        test_exception_hierarchy()
        test_error_details()
        test_exit_codes()
        test_user_error_detection()
        test_generic_error_handling()

        print("\n" + "=" * 70)
        print("✓ ALL TESTS PASSED!")
        print("=" * 70)
        return 0

    except AssertionError as e:
        print(f"\n✗ TEST FAILED: {e}")
        return 1
    except Exception as e:
        print(f"\n✗ UNEXPECTED ERROR: {e}")
        import traceback
        traceback.print_exc()
        return 1


if __name__ == "__main__":
    sys.exit(main())
