"""
muxsim: simulation of frequency-multiplexed dispersive readout of superconducting qubits.
"""

__version__ = "0.1.0"

from .config import ExperimentConfig, load_experiment_config, validate_experiment
from .core import (
    calibrate_efficiency,
    get_library_info,
    run_chi_calibration,
    run_crosstalk,
    run_experiment,
    run_histogram,
    run_jumps,
    run_rabi,
    run_ramsey,
    run_spectroscopy,
)
from .device import DeviceConfig, QubitCavityConfig, dispersive_shift, load_device
from .utils import ConfigError, FitFailureError, MuxSimError

__all__ = [
    "ExperimentConfig",
    "load_experiment_config",
    "validate_experiment",
    "calibrate_efficiency",
    "get_library_info",
    "run_chi_calibration",
    "run_crosstalk",
    "run_experiment",
    "run_histogram",
    "run_jumps",
    "run_rabi",
    "run_ramsey",
    "run_spectroscopy",
    "DeviceConfig",
    "QubitCavityConfig",
    "dispersive_shift",
    "load_device",
    "ConfigError",
    "FitFailureError",
    "MuxSimError",
]
