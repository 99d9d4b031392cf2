#!/usr/bin/env python3
"""
Setup script for the evidence QA engine
"""

import subprocess
import sys


def run_command(command, description):
    """Run a command and handle errors"""
    print(f"\n{description}...")
    try:
        subprocess.run(command, shell=True, check=True, capture_output=True, text=True)
        print(f"✓ {description} completed successfully")
        return True
    except subprocess.CalledProcessError as e:
        print(f"✗ {description} failed: {e}")
        print(f"Error output: {e.stderr}")
        return False


def main():
    print("Setting up the evidence QA engine...")

    if not run_command(f"{sys.executable} -m pip install -r requirements.txt", "Installing Python dependencies"):
        print("Failed to install dependencies. Please install manually:")
        print("pip install Django python-decouple numpy matplotlib")
        return

    if not run_command(f"{sys.executable} manage.py check", "Checking project configuration"):
        return

    print("\nSetup completed successfully!")
    print("\nTo generate a toy corpus and train on it, run:")
    print("python manage.py synth association data/assoc")
    print("python manage.py train --config run.env")
    print("\nTo run the test suite:")
    print("python manage.py test")


if __name__ == "__main__":
    if len(sys.argv) > 1:
        # Invoked by a build frontend (pip/setuptools); metadata is in pyproject.toml.
        from setuptools import setup

        setup()
    else:
        main()
