"""
Readout comb synthesis and the reflected feedline signal.

Every waveform is a complex envelope in the frame of the shared carrier.
Each cavity obeys the linear input-output equation

    da/dt = (i 2π r - π κ) a + sqrt(2π κ_ext) ε(t)

with r the pulled resonance relative to the carrier (MHz) and κ the total
linewidth (MHz). The reflected field is the incident field minus the sum of
the cavity emissions.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator
from scipy.optimize import least_squares
from scipy.signal import lfilter

from .device import (
    QUBIT_STATES,
    DeviceConfig,
    QubitCavityConfig,
    dispersive_shift,
    pulled_resonance,
)
from .utils import ConfigError, FitFailureError

logger = logging.getLogger(__name__)

FLUX_UNITS = "sqrt(photons/us)"
MIN_SAMPLES_PER_TIMESCALE = 10.0


class AliasingError(ConfigError):
    """Raised when a tone offset is not below the Nyquist frequency."""
    pass


class ResolutionError(ConfigError):
    """Raised when the sample rate cannot resolve a cavity's dynamics."""
    pass


class ToneSpec(BaseModel):
    """A single readout tone relative to the carrier."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    channel: str
    offset_freq: float  # MHz
    amplitude: float  # sqrt(photons/us)
    phase: float = 0.0  # rad
    start: float = 0.0  # us
    duration: float  # us

    @field_validator("amplitude")
    @classmethod
    def _non_negative(cls, value):
        if value < 0:
            raise ValueError(f"amplitude must be non-negative, got {value}")
        return value

    @field_validator("duration")
    @classmethod
    def _positive(cls, value):
        if value <= 0:
            raise ValueError(f"duration must be positive, got {value}")
        return value

    @property
    def stop(self) -> float:
        return self.start + self.duration

    @property
    def envelope(self) -> complex:
        return self.amplitude * np.exp(1j * self.phase)


class ReadoutComb(BaseModel):
    """Multiplexed readout pulse: at most one tone per channel."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    tones: List[ToneSpec]

    @model_validator(mode="after")
    def _distinct_channels(self):
        channels = [tone.channel for tone in self.tones]
        if len(set(channels)) != len(channels):
            raise ValueError(f"readout comb has repeated channels: {channels}")
        return self

    @property
    def channels(self) -> List[str]:
        return [tone.channel for tone in self.tones]

    def tone(self, channel: str) -> Optional[ToneSpec]:
        for tone in self.tones:
            if tone.channel == channel:
                return tone
        return None

    def subset(self, channels: Sequence[str]) -> "ReadoutComb":
        """Selective readout: keep only the tones of the given channels."""
        return ReadoutComb(tones=[tone for tone in self.tones if tone.channel in channels])

    def scaled(self, factor: float) -> "ReadoutComb":
        return ReadoutComb(tones=[tone.model_copy(update={"amplitude": tone.amplitude * factor})
                                  for tone in self.tones])


@dataclass(frozen=True)
class ComplexWaveform:
    """
    Uniformly sampled complex baseband envelope.

    When the waveform was synthesized from a comb, ``components`` holds one
    row per tone in ``tones`` (rows sum to ``samples``) so the feedline can
    integrate each tone exactly.
    """

    samples: np.ndarray
    sample_rate: float  # MHz
    t0: float = 0.0  # us
    tones: Tuple[ToneSpec, ...] = ()
    components: Optional[np.ndarray] = None
    units: str = FLUX_UNITS

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def dt(self) -> float:
        return 1.0 / self.sample_rate

    @property
    def times(self) -> np.ndarray:
        return self.t0 + np.arange(len(self.samples)) / self.sample_rate

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate

    def energy(self) -> float:
        """Time-integrated |s|² in photons."""
        return float(np.sum(np.abs(self.samples) ** 2) * self.dt)

    def scaled(self, factor: complex) -> "ComplexWaveform":
        components = None if self.components is None else self.components * factor
        return replace(self, samples=self.samples * factor, components=components)

    def window(self, start: int, stop: int) -> "ComplexWaveform":
        """Samples [start, stop) as a new waveform with a shifted t0."""
        components = None if self.components is None else self.components[:, start:stop]
        return replace(
            self,
            samples=self.samples[start:stop],
            t0=self.t0 + start / self.sample_rate,
            components=components,
        )

    def without_components(self) -> "ComplexWaveform":
        return replace(self, tones=(), components=None)


@dataclass(frozen=True)
class CavityState:
    """Intra-cavity complex amplitudes, one per device channel, in sqrt(photons)."""

    amplitudes: np.ndarray

    @classmethod
    def vacuum(cls, n_channels: int) -> "CavityState":
        return cls(np.zeros(n_channels, dtype=complex))

    @property
    def photons(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2


@dataclass(frozen=True)
class CavityTrajectory:
    """Cavity amplitudes at every sample boundary: shape (len + 1, n_channels)."""

    times: np.ndarray
    amplitudes: np.ndarray
    labels: Tuple[str, ...] = field(default=())

    @property
    def final(self) -> CavityState:
        return CavityState(self.amplitudes[-1].copy())

    @property
    def photons(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2


def _sample_count(span: float, fs: float) -> int:
    # Guard against 0.9999999 * fs style rounding.
    return int(np.ceil(span * fs - 1e-9))


def _check_nyquist(offset: float, fs: float, channel: str) -> None:
    if abs(offset) >= fs / 2:
        raise AliasingError(
            f"Tone for {channel} at offset {offset} MHz aliases at sample rate {fs} MHz"
        )


def synthesize_comb(comb: ReadoutComb, span: float, fs: float, t0: float = 0.0) -> ComplexWaveform:
    """
    Superpose the gated tones of a readout comb.

    Args:
        comb (ReadoutComb): Tones to synthesize.
        span (float): Waveform length in μs.
        fs (float): Sample rate in MHz.
        t0 (float, optional): Time of the first sample in μs. Defaults to 0.

    Returns:
        ComplexWaveform: s[n] = Σ_k A_k exp(i(2π f_k t_n + φ_k)) gate_k(t_n).

    Raises:
        AliasingError: If a tone offset is at or above fs/2.
    """
    n = _sample_count(span, fs)
    times = t0 + np.arange(n) / fs
    components = np.zeros((len(comb.tones), n), dtype=complex)
    for k, tone in enumerate(comb.tones):
        _check_nyquist(tone.offset_freq, fs, tone.channel)
        gate = (times >= tone.start - 1e-12) & (times < tone.stop - 1e-12)
        components[k] = tone.envelope * np.exp(2j * np.pi * tone.offset_freq * times) * gate
    samples = components.sum(axis=0) if len(comb.tones) else np.zeros(n, dtype=complex)
    return ComplexWaveform(samples, fs, t0, tuple(comb.tones), components)


def _state_list(dev: DeviceConfig, qubit_states: Union[Mapping[str, str], Sequence[str]]) -> List[str]:
    if isinstance(qubit_states, Mapping):
        states = [qubit_states.get(label) for label in dev.labels]
    else:
        states = list(qubit_states)
    if len(states) != len(dev.channels) or any(s not in QUBIT_STATES for s in states):
        raise ConfigError(f"Need one qubit state in {QUBIT_STATES} per channel, got {qubit_states}")
    return states


def resonance_offset(dev: DeviceConfig, label: str, qubit_state: str) -> float:
    """Pulled resonance of a channel relative to the carrier, in MHz."""
    return (pulled_resonance(dev.channel(label), qubit_state) - dev.carrier_freq) * 1e3


def reflect(dev: DeviceConfig,
            qubit_states: Union[Mapping[str, str], Sequence[str]],
            drive: ComplexWaveform,
            initial: Optional[CavityState] = None) -> Tuple[ComplexWaveform, CavityTrajectory]:
    """
    Reflect a drive off all cavities on the feedline.

    Each channel is integrated with an exact exponential step: tones carried
    in the drive's components rotate exactly within a sample while their
    envelope is held, so the recurrence a[n+1] = e^{λΔt} a[n] + f[n] has no
    truncation error in the cavity dynamics. Tone k reaches cavity j scaled
    by the leakage ξ[j][k]. A drive without components is held constant over
    each sample and reaches every cavity in full.

    Inside a sample the cavity field splits into the driven response, which
    rotates with the tones and is emitted at the sample point, and a free
    transient, which is emitted as its exact average over the sample in the
    frame of the channel's own tone. The steady state therefore reflects
    with Γ(δ) at every sample, and with κ_int = 0 the reflected energy equals
    the incident energy up to O((κΔt)²).

    Args:
        dev (DeviceConfig): Device on the feedline.
        qubit_states: Qubit state per channel, by label or in device order.
        drive (ComplexWaveform): Incident waveform.
        initial (CavityState, optional): Cavity amplitudes at the first sample,
            for piecewise calls across qubit jumps. Defaults to vacuum.

    Returns:
        tuple: (reflected waveform, cavity trajectory).

    Raises:
        ResolutionError: If fs·min(1/κ, 1/|δ|) < 10 for a channel and its own tone.
    """
    states = _state_list(dev, qubit_states)
    n_channels = len(dev.channels)
    n = len(drive)
    dt = drive.dt
    times = drive.times
    a0 = initial.amplitudes if initial is not None else np.zeros(n_channels, dtype=complex)
    leakage = dev.leakage

    if drive.components is not None:
        tone_index = [dev.index(tone.channel) for tone in drive.tones]
        omegas = [2 * np.pi * tone.offset_freq for tone in drive.tones]
        rows = drive.components
    else:
        tone_index = [None]
        omegas = [0.0]
        rows = drive.samples[np.newaxis, :]

    amplitudes = np.zeros((n + 1, n_channels), dtype=complex)
    emitted = np.zeros(n, dtype=complex)

    for j, (cfg, state) in enumerate(zip(dev.channels, states)):
        r = resonance_offset(dev, cfg.label, state)
        lam = 2j * np.pi * r - np.pi * cfg.kappa
        decay = np.exp(lam * dt)
        coupling = np.sqrt(2 * np.pi * cfg.kappa_ext)

        frame = 2 * np.pi * r
        forcing = np.zeros(n, dtype=complex)
        driven = np.zeros(n, dtype=complex)
        for k, omega in enumerate(omegas):
            if tone_index[k] is None:
                xi = 1.0
                frame = omega
            else:
                xi = leakage[j, tone_index[k]]
                if tone_index[k] == j:
                    _check_resolution(cfg, drive.tones[k].offset_freq - r, drive.sample_rate)
                    frame = omega
            if xi == 0:
                continue
            response = xi * rows[k] / (1j * omega - lam)
            forcing += (np.exp(1j * omega * dt) - decay) * response
            driven += response

        if a0[j] == 0 and not np.any(forcing):
            continue

        y, _ = lfilter([1.0], [1.0, -decay], coupling * forcing, zi=[decay * a0[j]])
        amplitudes[0, j] = a0[j]
        amplitudes[1:, j] = y

        mu = lam - 1j * frame
        average = np.expm1(mu * dt) / (mu * dt)
        driven = coupling * driven
        transient = amplitudes[:-1, j] - driven
        emitted += coupling * (driven + average * transient)

    trajectory_times = np.append(times, drive.t0 + n * dt)
    reflected = ComplexWaveform(drive.samples - emitted, drive.sample_rate, drive.t0)
    return reflected, CavityTrajectory(trajectory_times, amplitudes, tuple(dev.labels))


def _check_resolution(cfg: QubitCavityConfig, detuning: float, fs: float) -> None:
    timescale = 1.0 / cfg.kappa
    if detuning != 0:
        timescale = min(timescale, 1.0 / abs(detuning))
    if fs * timescale < MIN_SAMPLES_PER_TIMESCALE:
        raise ResolutionError(
            f"Sample rate {fs} MHz under-resolves {cfg.label} "
            f"(kappa {cfg.kappa} MHz, detuning {detuning:.3f} MHz)"
        )


def reflection_coefficient(cfg: QubitCavityConfig, detuning):
    """
    Steady-state reflection Γ(δ) = 1 - κ_ext / (κ/2 + iδ).

    Args:
        cfg (QubitCavityConfig): Channel parameters.
        detuning: Drive minus resonance in MHz (scalar or array).

    Returns:
        Complex Γ with the shape of ``detuning``.
    """
    detuning = np.asarray(detuning, dtype=float)
    return 1.0 - cfg.kappa_ext / (cfg.kappa / 2 + 1j * detuning)


def steady_state_photons(cfg: QubitCavityConfig, amplitude: float, detuning: float) -> float:
    """
    Steady-state intra-cavity photon number for a tone of flux amplitude ε.

    n̄ = 2πκ_ext ε² / ((2πδ)² + (πκ)²); on resonance with no internal loss
    this is 4ε²/(2πκ).
    """
    return (2 * np.pi * cfg.kappa_ext * amplitude ** 2
            / ((2 * np.pi * detuning) ** 2 + (np.pi * cfg.kappa) ** 2))


def readout_amplitude(cfg: QubitCavityConfig, photons: float, detuning: Optional[float] = None) -> float:
    """
    Tone amplitude that holds ``photons`` in the cavity.

    The default detuning is |χ|, i.e. a tone at the bare cavity frequency
    sitting midway between the two pulled resonances.
    """
    if photons < 0:
        raise ConfigError(f"Photon number must be non-negative, got {photons}")
    if detuning is None:
        detuning = dispersive_shift(cfg)
    return float(np.sqrt(photons * ((2 * np.pi * detuning) ** 2 + (np.pi * cfg.kappa) ** 2)
                         / (2 * np.pi * cfg.kappa_ext)))


def build_readout_comb(dev: DeviceConfig,
                       photons: Union[float, Mapping[str, float]],
                       length: float,
                       channels: Optional[Sequence[str]] = None,
                       start: float = 0.0,
                       phases: Optional[Mapping[str, float]] = None) -> ReadoutComb:
    """
    Default comb: one tone per selected channel at its bare cavity frequency.

    Args:
        dev (DeviceConfig): Device.
        photons (float or dict): Target photon number, global or per channel.
        length (float): Tone duration in μs.
        channels (list, optional): Channels to read out. Defaults to all.
        start (float, optional): Tone start in μs.
        phases (dict, optional): Per-channel tone phase in radians.

    Returns:
        ReadoutComb: The comb.
    """
    channels = list(channels) if channels is not None else dev.labels
    phases = phases or {}
    tones = []
    for label in channels:
        cfg = dev.channel(label)
        n_bar = photons[label] if isinstance(photons, Mapping) else photons
        tones.append(ToneSpec(
            channel=label,
            offset_freq=dev.offset(label),
            amplitude=readout_amplitude(cfg, n_bar),
            phase=phases.get(label, 0.0),
            start=start,
            duration=length,
        ))
    return ReadoutComb(tones=tones)


@dataclass(frozen=True)
class ReflectionFit:
    """Resonance parameters recovered from a reflection sweep (MHz)."""

    resonance: float
    kappa_ext: float
    kappa_int: float

    @property
    def kappa(self) -> float:
        return self.kappa_ext + self.kappa_int


def fit_reflection(freqs, gammas) -> ReflectionFit:
    """
    Least-squares fit of Γ(f) = 1 - κ_ext / (κ/2 + i(f - f0)) to a complex sweep.

    Args:
        freqs: Drive frequencies in MHz (any common reference).
        gammas: Measured complex reflection coefficients.

    Returns:
        ReflectionFit: Resonance in the units of ``freqs``, linewidths in MHz.

    Raises:
        FitFailureError: If the optimizer does not converge.
    """
    freqs = np.asarray(freqs, dtype=float)
    gammas = np.asarray(gammas, dtype=complex)
    if len(freqs) < 5:
        raise FitFailureError(f"Need at least 5 sweep points to fit a resonance, got {len(freqs)}")

    depth = np.abs(1.0 - gammas) ** 2
    peak = int(np.argmax(depth))
    above = freqs[depth >= depth[peak] / 2]
    kappa0 = max(above.max() - above.min(), np.min(np.diff(np.sort(freqs))))
    kappa_ext0 = np.sqrt(depth[peak]) * kappa0 / 2
    kappa_int0 = max(kappa0 - kappa_ext0, 1e-3)

    def residual(p):
        f0, kappa_ext, kappa_int = p
        model = 1.0 - kappa_ext / ((kappa_ext + kappa_int) / 2 + 1j * (freqs - f0))
        diff = model - gammas
        return np.concatenate([diff.real, diff.imag])

    result = least_squares(
        residual,
        x0=[freqs[peak], kappa_ext0, kappa_int0],
        bounds=([-np.inf, 1e-9, 0.0], [np.inf, np.inf, np.inf]),
        xtol=1e-14, ftol=1e-14, gtol=1e-14,
    )
    if not result.success:
        raise FitFailureError(f"Reflection fit did not converge: {result.message}")

    f0, kappa_ext, kappa_int = result.x
    logger.debug("Reflection fit: f0=%.6f kappa_ext=%.4f kappa_int=%.4f", f0, kappa_ext, kappa_int)
    return ReflectionFit(float(f0), float(kappa_ext), float(kappa_int))

