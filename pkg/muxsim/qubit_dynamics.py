"""
Classical-stochastic qubit dynamics: thermal initialization, control pulses,
relaxation and excitation jumps during readout, and the analytic Rabi/Ramsey
envelopes including crosstalk-induced Stark shift and dephasing.
"""

import logging
from dataclasses import dataclass
from typing import List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from .device import EXCITED, GROUND, DeviceConfig, QubitCavityConfig, dispersive_shift
from .feedline import ToneSpec, resonance_offset, steady_state_photons
from .utils import ConfigError

logger = logging.getLogger(__name__)

DEFAULT_PI_INFIDELITY = 0.005
PULSE_PRESETS = ("none", "pi", "pi_half_pair", "rabi", "ramsey")


def flip(state: str) -> str:
    return EXCITED if state == GROUND else GROUND


class PulseSpec(BaseModel):
    """Named control-pulse preset with its parameters."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    name: Literal["none", "pi", "pi_half_pair", "rabi", "ramsey"] = "none"
    drive_rate: Optional[float] = None  # Rabi frequency, MHz
    duration: Optional[float] = None  # Rabi pulse length, us
    detuning: Optional[float] = None  # Ramsey detuning, MHz
    delay: Optional[float] = None  # Ramsey delay, us

    @model_validator(mode="after")
    def _required_parameters(self):
        if self.name == "rabi" and (self.drive_rate is None or self.duration is None):
            raise ValueError("rabi pulse needs drive_rate and duration")
        if self.name == "ramsey" and (self.detuning is None or self.delay is None):
            raise ValueError("ramsey pulse needs detuning and delay")
        if self.drive_rate is not None and self.drive_rate < 0:
            raise ValueError("drive_rate must be non-negative")
        return self


@dataclass(frozen=True)
class TrajectoryRecord:
    """Piecewise-constant qubit state over one measurement window."""

    channel: str
    initial_state: str
    window: float
    jump_times: Tuple[float, ...] = ()
    pulse_sequence: str = "none"

    def __post_init__(self):
        times = np.asarray(self.jump_times, dtype=float)
        if len(times) and (np.any(np.diff(times) <= 0) or times[0] < 0 or times[-1] >= self.window):
            raise ValueError(f"jump times must be increasing inside [0, {self.window}): {self.jump_times}")

    def state_at(self, t: float) -> str:
        """State at time t; right-continuous at the jumps."""
        flips = int(np.searchsorted(self.jump_times, t, side="right"))
        return self.initial_state if flips % 2 == 0 else flip(self.initial_state)

    @property
    def final_state(self) -> str:
        return self.state_at(self.window)

    def segments(self) -> List[Tuple[float, float, str]]:
        """(start, stop, state) for each constant stretch of the window."""
        edges = [0.0, *self.jump_times, self.window]
        state = self.initial_state
        result = []
        for start, stop in zip(edges[:-1], edges[1:]):
            result.append((start, stop, state))
            state = flip(state)
        return result

    @property
    def first_decay(self) -> Optional[float]:
        """Time of the first e→g jump, if any."""
        for start, stop, state in self.segments():
            if state == EXCITED and stop < self.window:
                return stop
        return None


@dataclass(frozen=True)
class CoherentPhase:
    """Ramsey phase and coherence envelope after a free evolution."""

    channel: str
    phase: float  # rad
    decay_factor: float


def sample_initial_state(cfg: QubitCavityConfig, rng: np.random.Generator) -> str:
    """Thermal initial state: e with probability thermal_excited_pop."""
    return EXCITED if rng.random() < cfg.thermal_excited_pop else GROUND


def upward_rate(cfg: QubitCavityConfig) -> float:
    """Thermal g→e rate in 1/μs from detailed balance."""
    p = cfg.thermal_excited_pop
    return p / (1.0 - p) / cfg.t1


def evolve_during_measurement(cfg: QubitCavityConfig, initial: str, window: float,
                              rng: np.random.Generator, pulse_sequence: str = "none") -> TrajectoryRecord:
    """
    Draw the jump record of one qubit over a measurement window.

    Decay e→g happens at rate 1/T1 and excitation g→e at the detailed-balance
    rate; any number of jumps may occur.

    Args:
        cfg (QubitCavityConfig): Channel parameters.
        initial (str): State at the start of the window.
        window (float): Window length in μs.
        rng (np.random.Generator): Stream for this shot and channel.
        pulse_sequence (str, optional): Name of the preset that preceded the window.

    Returns:
        TrajectoryRecord: The trajectory.
    """
    if window <= 0:
        raise ConfigError(f"Measurement window must be positive, got {window}")

    down = 1.0 / cfg.t1
    up = upward_rate(cfg)
    t = 0.0
    state = initial
    jumps = []
    while True:
        rate = down if state == EXCITED else up
        if rate <= 0:
            break
        t += rng.exponential(1.0 / rate)
        if t >= window:
            break
        jumps.append(t)
        state = flip(state)
    return TrajectoryRecord(cfg.label, initial, window, tuple(jumps), pulse_sequence)


def rabi_decay_time(cfg: QubitCavityConfig) -> float:
    return 1.0 / (1.0 / (2 * cfg.t1) + 1.0 / (2 * cfg.t2_ramsey))


def rabi_population(cfg: QubitCavityConfig, drive_rate: float, duration: float) -> float:
    """
    Excited population after a resonant drive.

    P_e = ½(1 - e^{-t/τ_R} cos(2πΩt)), τ_R = (1/(2T1) + 1/(2T2*))⁻¹.
    """
    if drive_rate < 0:
        raise ConfigError(f"Rabi drive rate must be non-negative, got {drive_rate}")
    envelope = np.exp(-duration / rabi_decay_time(cfg))
    return float(np.clip(0.5 * (1.0 - envelope * np.cos(2 * np.pi * drive_rate * duration)), 0.0, 1.0))


def coherent_phase(cfg: QubitCavityConfig, detuning: float, delay: float,
                   extra_shift: float = 0.0, extra_dephasing_rate: float = 0.0) -> CoherentPhase:
    if delay < 0:
        raise ConfigError(f"Ramsey delay must be non-negative, got {delay}")
    phase = 2 * np.pi * (detuning + extra_shift) * delay
    decay = np.exp(-delay * (1.0 / cfg.t2_ramsey + extra_dephasing_rate))
    return CoherentPhase(cfg.label, float(phase), float(decay))


def ramsey_population(cfg: QubitCavityConfig, detuning: float, delay: float,
                      extra_shift: float = 0.0, extra_dephasing_rate: float = 0.0) -> float:
    """
    Excited population after a π/2 - delay - π/2 sequence.

    Args:
        cfg (QubitCavityConfig): Channel parameters.
        detuning (float): Drive detuning in MHz.
        delay (float): Free evolution in μs.
        extra_shift (float, optional): Additional frequency shift in MHz (Stark).
        extra_dephasing_rate (float, optional): Additional dephasing in 1/μs.

    Returns:
        float: ½(1 + e^{-t(1/T2* + γ)} cos(2π(δf + shift)t)).
    """
    coherence = coherent_phase(cfg, detuning, delay, extra_shift, extra_dephasing_rate)
    return float(np.clip(0.5 * (1.0 + coherence.decay_factor * np.cos(coherence.phase)), 0.0, 1.0))


def stark_shift(chi: float, photons: float) -> float:
    """AC Stark shift 2χn̄ in MHz."""
    return 2.0 * chi * photons


def measurement_induced_dephasing(chi: float, kappa: float, photons: float) -> float:
    """Dephasing rate 8χ²n̄/κ in angular units, returned in 1/μs for χ, κ in MHz."""
    return 16.0 * np.pi * chi ** 2 * photons / kappa


def spurious_photons(dev: DeviceConfig, victim: str, aggressor: ToneSpec,
                     qubit_state: str = GROUND) -> float:
    """Photons an aggressor tone leaks into the victim cavity."""
    cfg = dev.channel(victim)
    xi = dev.leakage[dev.index(victim), dev.index(aggressor.channel)]
    detuning = aggressor.offset_freq - resonance_offset(dev, victim, qubit_state)
    return float(steady_state_photons(cfg, xi * aggressor.amplitude, detuning))


def crosstalk_effects(dev: DeviceConfig, victim: str, aggressor: ToneSpec,
                      qubit_state: str = GROUND) -> Tuple[float, float]:
    """
    Stark shift and extra dephasing of a victim qubit from a leaking aggressor tone.

    Args:
        dev (DeviceConfig): Device with the leakage matrix.
        victim (str): Victim channel label.
        aggressor (ToneSpec): Tone addressed to another channel.
        qubit_state (str, optional): Victim state used for the pulled resonance.

    Returns:
        tuple: (stark_shift in MHz, extra_dephasing_rate in 1/μs).
    """
    cfg = dev.channel(victim)
    photons = spurious_photons(dev, victim, aggressor, qubit_state)
    chi = dispersive_shift(cfg)
    return stark_shift(chi, photons), measurement_induced_dephasing(chi, cfg.kappa, photons)


def calibrate_leakage(dev: DeviceConfig, victim: str, aggressor: ToneSpec,
                      target_photons: float, qubit_state: str = GROUND) -> float:
    """Leakage ξ[victim][aggressor] that puts ``target_photons`` in the victim cavity."""
    unit = dev.with_leakage(victim, aggressor.channel, 1.0)
    per_unit = spurious_photons(unit, victim, aggressor, qubit_state)
    if per_unit <= 0:
        raise ConfigError(f"Aggressor tone on {aggressor.channel} cannot drive {victim}")
    xi = float(np.sqrt(target_photons / per_unit))
    logger.debug("Leakage %s<-%s calibrated to %.4f for %.4f photons", victim, aggressor.channel, xi, target_photons)
    return xi


def excitation_probability(cfg: QubitCavityConfig, pulse: PulseSpec,
                           pi_infidelity: float = DEFAULT_PI_INFIDELITY,
                           extra_shift: float = 0.0, extra_dephasing_rate: float = 0.0) -> float:
    """
    Population transferred out of the initial state by a pulse preset.

    Args:
        cfg (QubitCavityConfig): Channel parameters.
        pulse (PulseSpec): Preset and its parameters.
        pi_infidelity (float, optional): Failure probability of π and π/2-pair pulses.
        extra_shift (float, optional): Stark shift during a Ramsey delay, MHz.
        extra_dephasing_rate (float, optional): Extra dephasing during a Ramsey delay, 1/μs.

    Returns:
        float: Transfer probability in [0, 1].
    """
    if pulse.name == "none":
        return 0.0
    if pulse.name in ("pi", "pi_half_pair"):
        return 1.0 - pi_infidelity
    if pulse.name == "rabi":
        return rabi_population(cfg, pulse.drive_rate, pulse.duration)
    return ramsey_population(cfg, pulse.detuning, pulse.delay, extra_shift, extra_dephasing_rate)


def apply_pulse(state: str, probability: float, rng: np.random.Generator) -> str:
    """Flip the state with the given transfer probability."""
    return flip(state) if rng.random() < probability else state
