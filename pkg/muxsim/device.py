"""
Device parameters for the qubit-cavity channels and closed-form dispersive quantities.

Frequencies are ordinary frequencies: cavity and qubit frequencies in GHz,
rates and shifts in MHz, times in μs. Angular factors of 2π are applied
where a formula needs them.
"""

import json
import logging
from pathlib import Path
from typing import List, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, ValidationError, model_validator

from .utils import DATA_DIR, ConfigError, MuxSimError, validate_file_exists

logger = logging.getLogger(__name__)

GROUND = "g"
EXCITED = "e"
QUBIT_STATES = (GROUND, EXCITED)

DEFAULT_KAPPA_INT = 0.1  # MHz
DEFAULT_CARRIER_FREQ = 5.985  # GHz
STRADDLING_TOLERANCE = 1.0  # MHz
SPACING_TO_LINEWIDTH = 10.0


class StraddlingRegimeError(MuxSimError):
    """Raised when the qubit sits too close to the cavity or its straddling point."""
    pass


class QubitCavityConfig(BaseModel):
    """One qubit-cavity pair: a row of the device parameter table."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    label: str
    cavity_freq: float  # GHz
    kappa_ext: float  # MHz
    kappa_int: float = DEFAULT_KAPPA_INT  # MHz
    qubit_freq: float  # GHz
    anharmonicity: float  # MHz
    coupling_g: float  # MHz
    t1: float  # μs
    t2_ramsey: float  # μs
    t2_echo: float  # μs
    thermal_excited_pop: float = 0.04

    @model_validator(mode="before")
    @classmethod
    def _split_total_linewidth(cls, data):
        # Tables quote the loaded linewidth only.
        if isinstance(data, dict) and "kappa" in data:
            data = dict(data)
            kappa = float(data.pop("kappa"))
            kappa_int = float(data.get("kappa_int", DEFAULT_KAPPA_INT))
            data["kappa_int"] = kappa_int
            data.setdefault("kappa_ext", kappa - kappa_int)
        return data

    @property
    def kappa(self) -> float:
        """Total linewidth κ/2π in MHz."""
        return self.kappa_ext + self.kappa_int

    @property
    def detuning(self) -> float:
        """Qubit-cavity detuning Δ/2π in MHz."""
        return (self.qubit_freq - self.cavity_freq) * 1e3


class DeviceConfig(BaseModel):
    """All channels sharing one feedline, carrier and amplifier."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    channels: List[QubitCavityConfig]
    carrier_freq: float = DEFAULT_CARRIER_FREQ  # GHz
    crosstalk_leakage: Optional[List[List[float]]] = None

    @property
    def labels(self) -> List[str]:
        return [channel.label for channel in self.channels]

    @property
    def leakage(self) -> np.ndarray:
        """Leakage matrix ξ[j][k]; identity when not configured."""
        if self.crosstalk_leakage is None:
            return np.eye(len(self.channels))
        return np.asarray(self.crosstalk_leakage, dtype=float)

    def index(self, label: str) -> int:
        """
        Position of a channel in the device.

        Raises:
            ConfigError: If the label is unknown.
        """
        for i, channel in enumerate(self.channels):
            if channel.label == label:
                return i
        raise ConfigError(f"Unknown channel: {label}. Known channels: {', '.join(self.labels)}")

    def channel(self, label: str) -> QubitCavityConfig:
        return self.channels[self.index(label)]

    def offset(self, label: str) -> float:
        """Bare cavity frequency relative to the carrier, in MHz."""
        return (self.channel(label).cavity_freq - self.carrier_freq) * 1e3

    def min_spacing(self) -> float:
        """Smallest spacing between cavity frequencies, in MHz."""
        freqs = np.sort([channel.cavity_freq for channel in self.channels])
        if len(freqs) < 2:
            return float("inf")
        return float(np.min(np.diff(freqs)) * 1e3)

    def with_leakage(self, victim: str, aggressor: str, value: float) -> "DeviceConfig":
        """Copy of the device with one leakage entry ξ[victim][aggressor] replaced."""
        matrix = self.leakage.copy()
        matrix[self.index(victim), self.index(aggressor)] = value
        return self.model_copy(update={"crosstalk_leakage": matrix.tolist()})


def dispersive_shift(cfg: QubitCavityConfig) -> float:
    """
    Dispersive shift χ/2π of a transmon-cavity pair.

    Uses χ = g²α / (Δ(Δ + α)) with Δ the qubit-cavity detuning; the sign is kept.

    Args:
        cfg (QubitCavityConfig): Channel parameters.

    Returns:
        float: χ/2π in MHz.

    Raises:
        StraddlingRegimeError: If |Δ| or |Δ + α| is below 1 MHz.
    """
    delta = cfg.detuning
    alpha = cfg.anharmonicity
    if abs(delta) < STRADDLING_TOLERANCE or abs(delta + alpha) < STRADDLING_TOLERANCE:
        raise StraddlingRegimeError(
            f"Channel {cfg.label}: detuning {delta:.3f} MHz with anharmonicity {alpha:.3f} MHz "
            f"is in the straddling regime"
        )
    return cfg.coupling_g ** 2 * alpha / (delta * (delta + alpha))


def pulled_resonance(cfg: QubitCavityConfig, qubit_state: str) -> float:
    """
    Cavity resonance for a given qubit state, in GHz.

    Ground pulls by +χ, excited by -χ.
    """
    chi = dispersive_shift(cfg) * 1e-3
    if qubit_state == GROUND:
        return cfg.cavity_freq + chi
    if qubit_state == EXCITED:
        return cfg.cavity_freq - chi
    raise ValueError(f"Unknown qubit state: {qubit_state}")


def validate_device(dev: DeviceConfig, amplifier=None,
                    digitizer_rate: Optional[float] = None) -> List[str]:
    """
    Check a device against its invariants.

    Args:
        dev (DeviceConfig): Device to check.
        amplifier (AmplifierConfig, optional): If given, pulled resonances must
            lie inside pump ± bandwidth/2.
        digitizer_rate (float, optional): Sample rate in MHz; every tone offset
            must be below its Nyquist frequency.

    Returns:
        List[str]: Violated invariants; empty when the device is valid.
    """
    report = []
    for cfg in dev.channels:
        name = cfg.label
        if cfg.kappa_ext <= 0:
            report.append(f"{name}: kappa_ext must be positive (got {cfg.kappa_ext})")
        if cfg.kappa_int < 0:
            report.append(f"{name}: kappa_int must be non-negative (got {cfg.kappa_int})")
        if cfg.kappa_ext <= cfg.kappa_int:
            report.append(f"{name}: cavity is not over-coupled (kappa_ext <= kappa_int)")
        if cfg.anharmonicity >= 0:
            report.append(f"{name}: anharmonicity must be negative (got {cfg.anharmonicity})")
        if cfg.qubit_freq >= cfg.cavity_freq:
            report.append(f"{name}: qubit frequency must lie below the cavity frequency")
        if cfg.t2_ramsey > 2 * cfg.t1:
            report.append(f"{name}: t2_ramsey exceeds 2*t1")
        if cfg.t2_echo > 2 * cfg.t1:
            report.append(f"{name}: t2_echo exceeds 2*t1")
        if not 0 <= cfg.thermal_excited_pop < 0.5:
            report.append(f"{name}: thermal_excited_pop must be in [0, 0.5) (got {cfg.thermal_excited_pop})")
        try:
            resonances = [pulled_resonance(cfg, state) for state in QUBIT_STATES]
        except StraddlingRegimeError as e:
            report.append(str(e))
            continue
        if amplifier is not None:
            low = amplifier.pump_freq - amplifier.bandwidth * 1e-3 / 2
            high = amplifier.pump_freq + amplifier.bandwidth * 1e-3 / 2
            if not all(low <= f <= high for f in resonances):
                report.append(f"{name}: pulled resonances lie outside the amplifier band")
        if digitizer_rate is not None and abs(dev.offset(name)) >= digitizer_rate / 2:
            report.append(f"{name}: tone offset {dev.offset(name):.1f} MHz aliases at {digitizer_rate} MHz")

    freqs = [cfg.cavity_freq for cfg in dev.channels]
    if len(set(freqs)) != len(freqs):
        report.append("cavity frequencies must be distinct")
    elif len(freqs) > 1:
        max_linewidth = max(cfg.kappa for cfg in dev.channels)
        if dev.min_spacing() <= SPACING_TO_LINEWIDTH * max_linewidth:
            report.append(
                f"minimum cavity spacing {dev.min_spacing():.1f} MHz is not above "
                f"{SPACING_TO_LINEWIDTH:g}x the largest linewidth ({max_linewidth} MHz)"
            )

    labels = dev.labels
    if len(set(labels)) != len(labels):
        report.append("channel labels must be distinct")

    leakage = dev.leakage
    n = len(dev.channels)
    if leakage.shape != (n, n):
        report.append(f"crosstalk_leakage must be {n}x{n}")
    else:
        if np.any(leakage < 0):
            report.append("crosstalk_leakage entries must be non-negative")
        if not np.allclose(np.diag(leakage), 1.0):
            report.append("crosstalk_leakage diagonal must be 1")

    return report


def load_device(path: Optional[Union[str, Path]] = None,
                carrier_freq: Optional[float] = None) -> DeviceConfig:
    """
    Load a device description from JSON.

    Args:
        path (str, optional): Device JSON file. Defaults to the bundled table1.json.
        carrier_freq (float, optional): Override for the carrier frequency in GHz.

    Returns:
        DeviceConfig: The parsed device.

    Raises:
        ConfigError: If the file is missing or does not match the schema.
    """
    path = Path(path) if path is not None else DATA_DIR / "table1.json"
    if not validate_file_exists(path):
        raise ConfigError(f"Device file not found or not readable: {path}")

    try:
        with open(path, "r", encoding="utf-8") as f:
            document = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"Device file is not valid JSON: {path}: {e}") from e

    if carrier_freq is not None:
        document["carrier_freq"] = carrier_freq

    try:
        dev = DeviceConfig.model_validate(document)
    except ValidationError as e:
        raise ConfigError(f"Invalid device file {path}: {e}") from e

    logger.debug("Loaded device with channels %s from %s", dev.labels, path)
    return dev
