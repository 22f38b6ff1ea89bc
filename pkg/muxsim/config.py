"""
Experiment configuration.

A run is described by one JSON document deep-merged over the bundled
defaults.json. Every section is a frozen pydantic model; unknown keys are
rejected.
"""

import copy
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .amplifier import AmplifierConfig, DigitizerConfig, load_gain_profile_csv
from .device import DeviceConfig, load_device, validate_device
from .utils import DATA_DIR, ConfigError, validate_file_exists

logger = logging.getLogger(__name__)

EXPERIMENTS = ("spectroscopy", "rabi", "ramsey", "histogram", "jumps", "crosstalk", "chi_calibration")


class _Section(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class ReadoutSettings(_Section):
    photons: Union[float, Dict[str, float]] = 2.5
    integration_length: float = 1.0  # us
    snap_integration: bool = True
    phases: Dict[str, float] = Field(default_factory=dict)
    herald: bool = True
    pi_infidelity: float = 0.005

    @field_validator("integration_length")
    @classmethod
    def _length(cls, value):
        if value <= 0:
            raise ValueError(f"integration_length must be positive, got {value}")
        return value

    @field_validator("pi_infidelity")
    @classmethod
    def _infidelity(cls, value):
        if not 0 <= value <= 1:
            raise ValueError(f"pi_infidelity must be in [0, 1], got {value}")
        return value


class HistogramSettings(_Section):
    individual: bool = False  # also read each channel alone with the other tones off


class SpectroscopySettings(_Section):
    span: float = 40.0  # MHz around each cavity
    points: int = 81
    photons: float = 0.5
    settle_factor: float = 10.0  # settle time in units of 1/kappa


class RabiSettings(_Section):
    drive_rate: float = 5.0  # MHz
    max_duration: float = 1.0  # us
    points: int = 41
    shots_per_point: int = 200


class RamseySettings(_Section):
    detuning: float = 2.0  # MHz
    max_delay: float = 4.0  # us
    points: int = 101
    shots_per_point: Optional[int] = 1000


class JumpSettings(_Section):
    photons: float = 20.0
    trace_bin: float = 0.24  # us
    window_t1: float = 12.0  # window in units of T1
    min_dwell: float = 0.72  # us
    traces: int = 1000


class CrosstalkSettings(_Section):
    victim: str = "Q3"
    aggressor: str = "Q4"
    target_photons: float = 0.106
    leakage: Optional[float] = None  # calibrated from target_photons when None
    aggressor_photons: float = 2.5
    detuning: float = 2.0
    max_delay: float = 4.0
    points: int = 101
    shots_per_point: Optional[int] = None


class ChiCalibrationSettings(_Section):
    photon_settings: List[float] = Field(default_factory=lambda: [0.0, 1.0, 2.0])
    detuning: float = 10.0
    include_dephasing: bool = False
    shots_per_point: Optional[int] = None


class CalibrationSettings(_Section):
    channel: str = "Q2"
    target_fidelity: float = 0.9857
    efficiency_low: float = 0.02
    efficiency_high: float = 1.0
    tolerance: float = 1e-3
    shots: int = 10000


class ExperimentConfig(_Section):
    """Resolved configuration of one run."""

    experiment: Literal["spectroscopy", "rabi", "ramsey", "histogram", "jumps",
                        "crosstalk", "chi_calibration"] = "histogram"
    device: Optional[str] = None
    carrier_freq: Optional[float] = None
    channels: Optional[List[str]] = None
    amplifier: AmplifierConfig = Field(default_factory=AmplifierConfig)
    gain_profile_csv: Optional[str] = None
    digitizer: DigitizerConfig = Field(default_factory=DigitizerConfig)
    simulation_rate: float = 1000.0  # MHz
    readout: ReadoutSettings = Field(default_factory=ReadoutSettings)
    shots: int = 10000
    seed: int = 0
    output_dir: str = "muxsim_output"
    fast_path: bool = False
    histogram: HistogramSettings = Field(default_factory=HistogramSettings)
    spectroscopy: SpectroscopySettings = Field(default_factory=SpectroscopySettings)
    rabi: RabiSettings = Field(default_factory=RabiSettings)
    ramsey: RamseySettings = Field(default_factory=RamseySettings)
    jumps: JumpSettings = Field(default_factory=JumpSettings)
    crosstalk: CrosstalkSettings = Field(default_factory=CrosstalkSettings)
    chi_calibration: ChiCalibrationSettings = Field(default_factory=ChiCalibrationSettings)
    calibration: CalibrationSettings = Field(default_factory=CalibrationSettings)

    @field_validator("shots")
    @classmethod
    def _shots(cls, value):
        if value < 1:
            raise ValueError(f"shots must be at least 1, got {value}")
        return value

    @field_validator("seed")
    @classmethod
    def _seed(cls, value):
        if not 0 <= value < 2 ** 64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {value}")
        return value

    def updated(self, **changes) -> "ExperimentConfig":
        """Validated copy with top-level or dotted-section changes applied."""
        document = self.model_dump()
        for key, value in changes.items():
            target = document
            *path, leaf = key.split(".")
            for part in path:
                target = target[part]
            target[leaf] = value
        return parse_experiment_config(document)


def deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    """Recursively merge ``override`` into a copy of ``base``."""
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def _read_json(path: Union[str, Path]) -> Dict[str, Any]:
    if not validate_file_exists(path):
        raise ConfigError(f"Config file not found or not readable: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            document = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"Config file is not valid JSON: {path}: {e}") from e
    if not isinstance(document, dict):
        raise ConfigError(f"Config file must hold a JSON object: {path}")
    return document


def parse_experiment_config(document: Dict[str, Any]) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(document)
    except ValidationError as e:
        raise ConfigError(f"Invalid experiment config: {e}") from e


def load_experiment_config(path: Optional[Union[str, Path]] = None,
                           overrides: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    """
    Load an experiment config over the bundled defaults.

    Args:
        path (str, optional): User config JSON. Only defaults are used when None.
        overrides (dict, optional): Top-level values applied last (CLI flags);
            None values are ignored.

    Returns:
        ExperimentConfig: Validated configuration.

    Raises:
        ConfigError: If a file is missing or the merged document is invalid.
    """
    document = _read_json(DATA_DIR / "defaults.json")
    if path is not None:
        user = _read_json(path)
        # Relative device/gain paths are resolved against the config's directory.
        base = Path(path).resolve().parent
        for key in ("device", "gain_profile_csv"):
            if isinstance(user.get(key), str) and not Path(user[key]).is_absolute():
                user[key] = str(base / user[key])
        document = deep_merge(document, user)
    for key, value in (overrides or {}).items():
        if value is not None:
            document[key] = value
    cfg = parse_experiment_config(document)
    logger.debug("Experiment config resolved: %s", cfg.experiment)
    return cfg


def resolve_device(cfg: ExperimentConfig) -> DeviceConfig:
    """Load the device named by the config and check its channels."""
    dev = load_device(cfg.device, carrier_freq=cfg.carrier_freq)
    for label in cfg.channels or []:
        dev.index(label)
    if isinstance(cfg.readout.photons, dict):
        for label in cfg.readout.photons:
            dev.index(label)
    for label in (cfg.crosstalk.victim, cfg.crosstalk.aggressor, cfg.calibration.channel):
        dev.index(label)
    return dev


def resolve_amplifier(cfg: ExperimentConfig) -> AmplifierConfig:
    """Amplifier with the measured gain table attached when a CSV is configured."""
    if cfg.gain_profile_csv is None:
        return cfg.amplifier
    table = load_gain_profile_csv(cfg.gain_profile_csv)
    return cfg.amplifier.model_copy(update={"gain_table": table})


def validate_experiment(cfg: ExperimentConfig) -> List[str]:
    """
    Full pre-run validation of a config and its device.

    Returns:
        list: Human-readable problems; empty when the run can start.
    """
    try:
        dev = resolve_device(cfg)
        amp = resolve_amplifier(cfg)
    except ConfigError as e:
        return [str(e)]
    problems = validate_device(dev, amplifier=amp, digitizer_rate=cfg.digitizer.sample_rate)
    ratio = cfg.simulation_rate / cfg.digitizer.sample_rate
    if ratio < 1 or abs(ratio - round(ratio)) > 1e-9:
        problems.append(
            f"simulation_rate {cfg.simulation_rate} MHz is not an integer multiple of the digitizer rate"
        )
    return problems
