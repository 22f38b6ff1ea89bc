"""
Broadband parametric amplifier and digitizer model.

Amplifier noise is referred to the input: vacuum plus added noise set by a
single efficiency η, white across the band. Gain is phase preserving and
frequency dependent.
"""

import csv
import logging
import math
from dataclasses import replace
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator

from .device import DEFAULT_CARRIER_FREQ
from .feedline import ComplexWaveform
from .utils import ConfigError, validate_file_exists

logger = logging.getLogger(__name__)

DEFAULT_PUMP_FREQ = 5.984  # GHz


class DecimationError(ConfigError):
    """Raised when the digitizer rate does not divide the input rate."""
    pass


class AmplifierConfig(BaseModel):
    """
    Phenomenological JPA.

    ``efficiency`` may be ``inf`` to switch amplifier noise off.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    pump_freq: float = DEFAULT_PUMP_FREQ  # GHz
    peak_gain_db: float = 20.0
    bandwidth: float = 380.0  # MHz, full width at half the peak gain in dB
    rolloff_order: int = 1
    efficiency: float = 0.35
    saturation_flux: float = math.inf  # sqrt(photons/us)
    gain_table: Optional[List[Tuple[float, float]]] = None  # (GHz, dB)

    @field_validator("peak_gain_db")
    @classmethod
    def _gain(cls, value):
        if value < 0:
            raise ValueError(f"peak_gain_db must be non-negative, got {value}")
        return value

    @field_validator("bandwidth", "saturation_flux")
    @classmethod
    def _positive(cls, value):
        if value <= 0:
            raise ValueError(f"must be positive, got {value}")
        return value

    @field_validator("rolloff_order")
    @classmethod
    def _order(cls, value):
        if value < 1:
            raise ValueError(f"rolloff_order must be at least 1, got {value}")
        return value

    @field_validator("efficiency")
    @classmethod
    def _efficiency(cls, value):
        if not (0 < value <= 1 or math.isinf(value)):
            raise ValueError(f"efficiency must be in (0, 1], got {value}")
        return value

    @field_validator("gain_table")
    @classmethod
    def _table(cls, value):
        if value is not None:
            freqs = [f for f, _ in value]
            if len(freqs) < 2 or np.any(np.diff(freqs) <= 0):
                raise ValueError("gain_table frequencies must be strictly increasing")
        return value

    @property
    def noiseless(self) -> bool:
        return math.isinf(self.efficiency)


class DigitizerConfig(BaseModel):
    """Sample rate in MHz and per-quadrature ADC noise in sqrt(photons/us) per sample."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    sample_rate: float = 1000.0
    adc_noise_flux: float = 0.0

    @field_validator("sample_rate")
    @classmethod
    def _rate(cls, value):
        if value <= 0:
            raise ValueError(f"sample_rate must be positive, got {value}")
        return value

    @field_validator("adc_noise_flux")
    @classmethod
    def _noise(cls, value):
        if value < 0:
            raise ValueError(f"adc_noise_flux must be non-negative, got {value}")
        return value


def gain_profile(amp: AmplifierConfig, freq):
    """
    Linear power gain at a frequency.

    Args:
        amp (AmplifierConfig): Amplifier.
        freq: Signal frequency in GHz (scalar or array).

    Returns:
        Linear power gain, 10^(G_dB/10).
    """
    freq = np.asarray(freq, dtype=float)
    if amp.gain_table is not None:
        table = np.asarray(amp.gain_table, dtype=float)
        gain_db = np.interp(freq, table[:, 0], table[:, 1])
    else:
        x = 2.0 * (freq - amp.pump_freq) * 1e3 / amp.bandwidth
        gain_db = amp.peak_gain_db / (1.0 + x ** (2 * amp.rolloff_order))
    return 10.0 ** (gain_db / 10.0)


def noise_variance(amp: AmplifierConfig, sample_rate: float) -> float:
    """Per-quadrature input-referred noise variance per sample, fs/(4η)."""
    if amp.noiseless:
        return 0.0
    return sample_rate / (4.0 * amp.efficiency)


def complex_noise(rng: np.random.Generator, n: int, variance: float) -> np.ndarray:
    """Circular Gaussian noise with the given per-quadrature variance."""
    draws = rng.standard_normal((2, n))
    return np.sqrt(variance) * (draws[0] + 1j * draws[1])


def compress(samples: np.ndarray, saturation_flux: float) -> np.ndarray:
    """Soft compression A / sqrt(1 + (|A|/A_sat)²)."""
    if math.isinf(saturation_flux):
        return samples
    return samples / np.sqrt(1.0 + (np.abs(samples) / saturation_flux) ** 2)


def amplify(amp: AmplifierConfig, wf: ComplexWaveform, rng: Optional[np.random.Generator] = None,
            carrier_freq: float = DEFAULT_CARRIER_FREQ) -> ComplexWaveform:
    """
    Add input-referred noise, compress, and apply the gain profile.

    Args:
        amp (AmplifierConfig): Amplifier.
        wf (ComplexWaveform): Reflected waveform in the carrier frame.
        rng (np.random.Generator, optional): Noise stream; required unless noiseless.
        carrier_freq (float, optional): Carrier in GHz that maps baseband to RF.

    Returns:
        ComplexWaveform: Amplified waveform, referred to the output.
    """
    samples = np.asarray(wf.samples, dtype=complex)
    variance = noise_variance(amp, wf.sample_rate)
    if variance > 0:
        if rng is None:
            raise ValueError("amplify needs an rng when amplifier noise is on")
        samples = samples + complex_noise(rng, len(samples), variance)

    samples = compress(samples, amp.saturation_flux)

    freqs = carrier_freq + np.fft.fftfreq(len(samples), d=wf.dt) * 1e-3
    spectrum = np.fft.fft(samples) * np.sqrt(gain_profile(amp, freqs))
    return replace(wf.without_components(), samples=np.fft.ifft(spectrum))


def decimation_factor(input_rate: float, output_rate: float) -> int:
    """
    Integer decimation factor between two rates.

    Raises:
        DecimationError: If the ratio is below 1 or not an integer.
    """
    ratio = input_rate / output_rate
    factor = int(round(ratio))
    if factor < 1 or abs(ratio - factor) > 1e-9 * max(ratio, 1.0):
        raise DecimationError(
            f"Digitizer rate {output_rate} MHz must divide the input rate {input_rate} MHz"
        )
    return factor


def decimation_response(offset: float, input_rate: float, factor: int) -> complex:
    """Complex response of block averaging to a tone at ``offset`` MHz."""
    if factor == 1 or offset == 0:
        return 1.0 + 0j
    phases = np.exp(2j * np.pi * offset * np.arange(factor) / input_rate)
    return complex(phases.mean())


def digitize(dig: DigitizerConfig, wf: ComplexWaveform,
             rng: Optional[np.random.Generator] = None) -> ComplexWaveform:
    """
    Decimate by block averaging and add ADC noise.

    Trailing samples that do not fill a block are dropped.

    Raises:
        DecimationError: If the decimation factor is not an integer.
    """
    factor = decimation_factor(wf.sample_rate, dig.sample_rate)
    samples = np.asarray(wf.samples, dtype=complex)
    if factor > 1:
        n_blocks = len(samples) // factor
        samples = samples[:n_blocks * factor].reshape(n_blocks, factor).mean(axis=1)
    if dig.adc_noise_flux > 0:
        if rng is None:
            raise ValueError("digitize needs an rng when ADC noise is on")
        samples = samples + complex_noise(rng, len(samples), dig.adc_noise_flux ** 2)
    return ComplexWaveform(samples, dig.sample_rate, wf.t0, units=wf.units)


def load_gain_profile_csv(path: Union[str, Path]) -> List[Tuple[float, float]]:
    """
    Read a measured gain profile with columns (freq_GHz, gain_dB).

    Raises:
        ConfigError: If the file is missing, malformed or not strictly increasing.
    """
    if not validate_file_exists(path):
        raise ConfigError(f"Gain profile not found: {path}")
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as f:
        for line_no, row in enumerate(csv.reader(f), start=1):
            if not row or row[0].strip().startswith("#"):
                continue
            try:
                rows.append((float(row[0]), float(row[1])))
            except (ValueError, IndexError) as e:
                if line_no == 1:
                    continue  # header
                raise ConfigError(f"Bad gain profile row {line_no} in {path}: {row}") from e
    freqs = [f for f, _ in rows]
    if len(rows) < 2 or np.any(np.diff(freqs) <= 0):
        raise ConfigError(f"Gain profile frequencies must be strictly increasing: {path}")
    logger.debug("Loaded %d gain profile points from %s", len(rows), path)
    return rows
