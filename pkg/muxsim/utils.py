"""
Utility functions for the muxsim library.
"""

import os
from enum import IntEnum
from pathlib import Path
from typing import Union

import numpy as np
from dotenv import load_dotenv


DATA_DIR = Path(__file__).parent / "data"


class MuxSimError(Exception):
    """Base exception for muxsim library."""
    pass


class ConfigError(MuxSimError):
    """Raised when a device or experiment configuration is invalid."""
    pass


class FitFailureError(MuxSimError):
    """Raised when a fit does not converge or degenerates."""
    pass


class Stage(IntEnum):
    """RNG stream identifiers for the stages of one shot."""
    INIT = 0
    HERALD_TRAJECTORY = 1
    HERALD_NOISE = 2
    PULSE = 3
    READOUT_TRAJECTORY = 4
    READOUT_NOISE = 5
    ADC_NOISE = 6
    FAST_NOISE = 7
    POPULATION = 8


def stream_rng(seed: int, *key: int) -> np.random.Generator:
    """
    Build an independent, reproducible random stream for a counter key.

    The stream depends only on (seed, key), never on how many draws other
    streams made, so shots can be processed in any order or on any number
    of workers and still produce identical numbers.

    Args:
        seed (int): Global 64-bit run seed.
        *key (int): Non-negative counters, e.g. (ensemble, shot, stage, channel).

    Returns:
        np.random.Generator: Philox-backed generator for this key.
    """
    sequence = np.random.SeedSequence(int(seed) % (1 << 64), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(sequence))


def get_worker_count() -> int:
    """
    Get the worker cap from MUXSIM_THREADS (environment or .env file).

    Returns:
        int: Number of shot workers, at least 1.

    Raises:
        ConfigError: If MUXSIM_THREADS is not a positive integer.
    """
    load_dotenv()  # Load environment variables from .env file
    raw = os.getenv('MUXSIM_THREADS')
    if not raw:
        return 1
    try:
        workers = int(raw)
    except ValueError as e:
        raise ConfigError(f"MUXSIM_THREADS must be an integer, got: {raw}") from e
    if workers < 1:
        raise ConfigError(f"MUXSIM_THREADS must be at least 1, got: {workers}")
    return workers


def validate_file_exists(file_path: Union[str, Path]) -> bool:
    """
    Check if a file exists and is readable.

    Args:
        file_path (str): Path to the file.

    Returns:
        bool: True if file exists and is readable, False otherwise.
    """
    return os.path.isfile(file_path) and os.access(file_path, os.R_OK)


def ensure_output_dir(output_dir: Union[str, Path]) -> Path:
    """
    Create the output directory if needed and check it is writable.

    Args:
        output_dir (str): Directory for run outputs.

    Returns:
        Path: The output directory.

    Raises:
        ConfigError: If the directory cannot be created or written.
    """
    path = Path(output_dir)
    if not path.exists():
        try:
            path.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise ConfigError(f"Cannot create output directory: {e}")

    if not os.access(path, os.W_OK):
        raise ConfigError(f"Output directory is not writable: {path}")
    return path


def format_number(value: float) -> str:
    """
    Format a float for the text outputs with a fixed, platform-stable width.

    Args:
        value (float): Number to format.

    Returns:
        str: Formatted number.
    """
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{float(value):.10g}"
