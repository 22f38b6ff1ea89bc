"""
Per-shot readout pipeline.

A shot runs herald → keep or discard → control pulse → readout window. The
full path pushes the multiplexed waveform through reflect, amplify, digitize
and demodulate, chaining the cavity dynamics across qubit jumps. The fast
path integrates each channel's own tone in closed form over the same jump
record and adds Gaussian noise of matched variance.

Random numbers for a shot come from independent streams keyed by
(seed, ensemble, shot, stage, channel), so the outcome does not depend on
the order shots run in or on the worker count.
"""

import logging
import math
from dataclasses import dataclass, field
from multiprocessing import Pool
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from .amplifier import (
    AmplifierConfig,
    DigitizerConfig,
    amplify,
    complex_noise,
    decimation_factor,
    decimation_response,
    digitize,
    gain_profile,
    noise_variance,
)
from .analysis import DoubleGaussianFit, ShotOutcome, choose_threshold, rotate_and_project
from .demodulator import DemodResult, build_demod_specs, demodulate_all, snap_integration_length
from .device import EXCITED, GROUND, QUBIT_STATES, DeviceConfig
from .feedline import (
    CavityState,
    ComplexWaveform,
    ReadoutComb,
    ToneSpec,
    build_readout_comb,
    reflect,
    resonance_offset,
    synthesize_comb,
)
from .qubit_dynamics import (
    PulseSpec,
    TrajectoryRecord,
    apply_pulse,
    evolve_during_measurement,
    excitation_probability,
    sample_initial_state,
)
from .utils import Stage, get_worker_count, stream_rng

logger = logging.getLogger(__name__)

CHUNK_SIZE = 250


@dataclass(frozen=True)
class ReadoutSetup:
    """Everything that stays fixed across the shots of one ensemble."""

    dev: DeviceConfig
    amp: AmplifierConfig
    dig: DigitizerConfig
    comb: ReadoutComb
    simulation_rate: float
    integration_length: float
    seed: int = 0
    herald: bool = True
    pi_infidelity: float = 0.005
    fast_path: bool = False

    @classmethod
    def build(cls, dev: DeviceConfig, amp: AmplifierConfig, dig: DigitizerConfig,
              photons, integration_length: float, simulation_rate: float,
              channels: Optional[Sequence[str]] = None, snap: bool = True,
              phases: Optional[Dict[str, float]] = None, **kwargs) -> "ReadoutSetup":
        """Default comb over the selected channels with a snapped integration window."""
        channels = list(channels) if channels is not None else dev.labels
        if snap:
            integration_length = snap_integration_length(
                integration_length, [dev.offset(label) for label in channels], dig.sample_rate)
        comb = build_readout_comb(dev, photons, integration_length, channels, phases=phases)
        return cls(dev, amp, dig, comb, simulation_rate, integration_length, **kwargs)

    @property
    def channels(self) -> List[str]:
        return self.comb.channels


@dataclass
class ShotEngine:
    """Simulates shots for one ReadoutSetup; caches jump-free waveforms, references and herald thresholds."""

    setup: ReadoutSetup
    _drive: ComplexWaveform = field(init=False, repr=False)
    _cache: Dict[Tuple[str, ...], ComplexWaveform] = field(init=False, repr=False, default_factory=dict)
    _references: Dict[str, Tuple[complex, complex]] = field(init=False, repr=False, default_factory=dict)
    _herald_thresholds: Dict[str, float] = field(init=False, repr=False, default_factory=dict)

    def __post_init__(self):
        s = self.setup
        decimation_factor(s.simulation_rate, s.dig.sample_rate)
        self._drive = synthesize_comb(s.comb, s.integration_length, s.simulation_rate)
        self._specs = build_demod_specs(s.comb, 0.0, s.integration_length)
        self._channel_index = {label: s.dev.index(label) for label in s.dev.labels}

    # -- full waveform chain -------------------------------------------------

    def reflected(self, trajectories: Sequence[TrajectoryRecord]) -> ComplexWaveform:
        """Noiseless reflected waveform for one window, chained across all jumps."""
        dev = self.setup.dev
        jumps = sorted({t for trajectory in trajectories for t in trajectory.jump_times})
        if not jumps:
            key = tuple(trajectory.initial_state for trajectory in trajectories)
            if key not in self._cache:
                self._cache[key], _ = reflect(dev, list(key), self._drive)
            return self._cache[key]

        fs = self.setup.simulation_rate
        n = len(self._drive)
        edges = sorted({0, n, *[min(n, max(0, int(round(t * fs)))) for t in jumps]})
        pieces = []
        cavity = CavityState.vacuum(len(dev.channels))
        for i0, i1 in zip(edges[:-1], edges[1:]):
            midpoint = 0.5 * (i0 + i1) / fs
            states = [trajectory.state_at(midpoint) for trajectory in trajectories]
            out, cavity_trajectory = reflect(dev, states, self._drive.window(i0, i1), initial=cavity)
            cavity = cavity_trajectory.final
            pieces.append(out.samples)
        return ComplexWaveform(np.concatenate(pieces), fs, 0.0)

    def detect(self, reflected: ComplexWaveform, noise_rng: Optional[np.random.Generator],
               adc_rng: Optional[np.random.Generator]) -> List[complex]:
        """Amplify, digitize and demodulate; one integrated point per comb tone."""
        s = self.setup
        amplified = amplify(s.amp, reflected, noise_rng, s.dev.carrier_freq)
        digitized = digitize(s.dig, amplified, adc_rng)
        return [result.integrated_point for result in demodulate_all(digitized, self._specs)]

    # -- closed-form path ----------------------------------------------------

    def _output_scale(self, tone: ToneSpec) -> complex:
        s = self.setup
        gain = gain_profile(s.amp, s.dev.carrier_freq + tone.offset_freq * 1e-3)
        factor = decimation_factor(s.simulation_rate, s.dig.sample_rate)
        return np.sqrt(gain) * decimation_response(tone.offset_freq, s.simulation_rate, factor)

    def analytic_point(self, tone: ToneSpec, trajectory: TrajectoryRecord) -> complex:
        """Noiseless integrated point of a channel's own tone over a jump record."""
        means = analytic_bins(self.setup.dev, tone, trajectory, self.setup.integration_length, 1)
        return complex(means[0] * self.setup.integration_length * self._output_scale(tone))

    def point_noise_variance(self, tone: ToneSpec) -> float:
        """Per-quadrature variance of an integrated point from amplifier and ADC noise."""
        s = self.setup
        gain = float(gain_profile(s.amp, s.dev.carrier_freq + tone.offset_freq * 1e-3))
        length = s.integration_length
        amp_part = gain * noise_variance(s.amp, 1.0) * length
        adc_part = length * s.dig.adc_noise_flux ** 2 / s.dig.sample_rate
        return amp_part + adc_part

    # -- references ----------------------------------------------------------

    def references(self) -> Dict[str, Tuple[complex, complex]]:
        """(ref_g, ref_e) per comb channel from noiseless jump-free windows."""
        if self._references:
            return self._references
        s = self.setup
        window = s.integration_length
        for state_index, state in enumerate(QUBIT_STATES):
            trajectories = [TrajectoryRecord(label, state, window) for label in s.dev.labels]
            if s.fast_path:
                points = [self.analytic_point(tone, trajectories[self._channel_index[tone.channel]])
                          for tone in s.comb.tones]
            else:
                noiseless = s.amp.model_copy(update={"efficiency": math.inf})
                amplified = amplify(noiseless, self.reflected(trajectories), None, s.dev.carrier_freq)
                digitized = digitize(s.dig.model_copy(update={"adc_noise_flux": 0.0}), amplified, None)
                points = [r.integrated_point for r in demodulate_all(digitized, self._specs)]
            for tone, point in zip(s.comb.tones, points):
                pair = self._references.setdefault(tone.channel, [0j, 0j])
                pair[state_index] = point
        self._references = {label: (pair[0], pair[1]) for label, pair in self._references.items()}
        return self._references

    def herald_thresholds(self) -> Dict[str, float]:
        """
        Herald threshold per comb channel on the projected axis.

        The herald window sees the thermal mixture, so the threshold is the
        crossing of Gaussians at the two reference levels weighted by
        (1 - p_thermal, p_thermal), both with the integrated-point noise.
        Without noise or thermal population it is the midpoint.
        """
        if self._herald_thresholds:
            return self._herald_thresholds
        s = self.setup
        for tone in s.comb.tones:
            ref_g, ref_e = self.references()[tone.channel]
            level_g, level_e = rotate_and_project([ref_g, ref_e], ref_g, ref_e)
            p = s.dev.channel(tone.channel).thermal_excited_pop
            sigma = math.sqrt(self.point_noise_variance(tone))
            if sigma == 0 or p == 0:
                threshold = 0.5 * (level_g + level_e)
            else:
                threshold, _, _, _ = choose_threshold(
                    DoubleGaussianFit(1.0 - p, p, float(level_g), float(level_e), sigma, sigma))
            self._herald_thresholds[tone.channel] = float(threshold)
        logger.debug("Herald thresholds: %s", self._herald_thresholds)
        return self._herald_thresholds

    # -- one shot ------------------------------------------------------------

    def _window_points(self, trajectories: List[TrajectoryRecord], ensemble: int, shot: int,
                       noise_stage: Stage) -> List[complex]:
        s = self.setup
        if s.fast_path:
            points = []
            for tone in s.comb.tones:
                j = self._channel_index[tone.channel]
                mean = self.analytic_point(tone, trajectories[j])
                rng = stream_rng(s.seed, ensemble, shot, noise_stage, j)
                noise = complex_noise(rng, 1, self.point_noise_variance(tone))[0]
                points.append(mean + noise)
            return points

        noise_rng = stream_rng(s.seed, ensemble, shot, noise_stage, 0)
        adc_rng = stream_rng(s.seed, ensemble, shot, Stage.ADC_NOISE, int(noise_stage))
        return self.detect(self.reflected(trajectories), noise_rng, adc_rng)

    def simulate_shot(self, ensemble: int, shot: int, pulse: PulseSpec, prepared: str) -> List[ShotOutcome]:
        """
        Simulate one multiplexed shot.

        Args:
            ensemble (int): Ensemble index (prepared state or sweep point).
            shot (int): Shot index inside the ensemble.
            pulse (PulseSpec): Control pulse applied to every channel after heralding.
            prepared (str): Label recorded as the prepared state.

        Returns:
            list: One ShotOutcome per comb channel.
        """
        s = self.setup
        dev = s.dev
        window = s.integration_length
        refs = self.references()

        states = [sample_initial_state(cfg, stream_rng(s.seed, ensemble, shot, Stage.INIT, j))
                  for j, cfg in enumerate(dev.channels)]

        herald_pass = {label: True for label in s.channels}
        herald_points: Dict[str, Optional[complex]] = {label: None for label in s.channels}
        if s.herald:
            herald = [evolve_during_measurement(cfg, states[j], window,
                                                stream_rng(s.seed, ensemble, shot, Stage.HERALD_TRAJECTORY, j))
                      for j, cfg in enumerate(dev.channels)]
            points = self._window_points(herald, ensemble, shot, Stage.HERALD_NOISE)
            thresholds = self.herald_thresholds()
            for tone, point in zip(s.comb.tones, points):
                ref_g, ref_e = refs[tone.channel]
                value = rotate_and_project([point], ref_g, ref_e)[0]
                herald_pass[tone.channel] = bool(value < thresholds[tone.channel])
                herald_points[tone.channel] = point
            states = [trajectory.final_state for trajectory in herald]

        readout = []
        for j, cfg in enumerate(dev.channels):
            probability = excitation_probability(cfg, pulse, s.pi_infidelity)
            state = apply_pulse(states[j], probability, stream_rng(s.seed, ensemble, shot, Stage.PULSE, j))
            readout.append(evolve_during_measurement(
                cfg, state, window, stream_rng(s.seed, ensemble, shot, Stage.READOUT_TRAJECTORY, j), pulse.name))

        points = self._window_points(readout, ensemble, shot, Stage.READOUT_NOISE)
        outcomes = []
        for tone, point in zip(s.comb.tones, points):
            ref_g, ref_e = refs[tone.channel]
            outcomes.append(ShotOutcome(
                channel=tone.channel,
                prepared=prepared,
                herald_pass=herald_pass[tone.channel],
                integrated_point=complex(point),
                rotated_value=float(rotate_and_project([point], ref_g, ref_e)[0]),
                truth_trajectory=readout[self._channel_index[tone.channel]],
                herald_point=herald_points[tone.channel],
            ))
        return outcomes

    def simulate_chunk(self, ensemble: int, shots: Sequence[int], pulse: PulseSpec,
                       prepared: str) -> List[ShotOutcome]:
        outcomes = []
        for shot in shots:
            outcomes.extend(self.simulate_shot(ensemble, shot, pulse, prepared))
        return outcomes


def analytic_bins(dev: DeviceConfig, tone: ToneSpec, trajectory: TrajectoryRecord,
                  bin_width: float, n_bins: int) -> np.ndarray:
    """
    Closed-form bin means of the demodulated reflection of a channel's own tone.

    In the frame of the tone the cavity obeys db/dt = μ b + c u with
    μ = i2π(r - f) - πκ, relaxing to b_ss = -c u / μ inside each constant-state
    segment; the integral of b over any sub-interval is exact.

    Returns:
        np.ndarray: Mean of u - c b over each bin, before gain.
    """
    cfg = dev.channel(tone.channel)
    u = tone.envelope
    c = np.sqrt(2 * np.pi * cfg.kappa_ext)
    edges = np.arange(n_bins + 1) * bin_width
    integral = np.zeros(n_bins, dtype=complex)
    b_start = 0j
    for seg_start, seg_stop, state in trajectory.segments():
        mu = 2j * np.pi * (resonance_offset(dev, tone.channel, state) - tone.offset_freq) - np.pi * cfg.kappa
        b_ss = -c * u / mu
        first = int(np.floor(seg_start / bin_width))
        last = min(int(np.ceil(seg_stop / bin_width)), n_bins)
        idx = np.arange(first, last)
        if len(idx):
            t1 = np.maximum(edges[idx], seg_start)
            t2 = np.minimum(edges[idx + 1], seg_stop)
            integral[idx] += (b_ss * (t2 - t1)
                              + (b_start - b_ss) * (np.exp(mu * (t2 - seg_start)) - np.exp(mu * (t1 - seg_start))) / mu)
        b_start = b_ss + (b_start - b_ss) * np.exp(mu * (seg_stop - seg_start))
    return u - c * integral / bin_width


def analytic_trace(dev: DeviceConfig, amp: AmplifierConfig, dig: DigitizerConfig, simulation_rate: float,
                   tone: ToneSpec, trajectory: TrajectoryRecord, trace_bin: float,
                   rng: Optional[np.random.Generator]) -> DemodResult:
    """
    Time-resolved demodulated trace of one channel under continuous readout.

    Bin means carry the exact cavity response and per-quadrature noise of
    variance G/(4η·bin) + adc²/(fs·bin).
    """
    n_bins = int(round(trajectory.window / trace_bin))
    gain = float(gain_profile(amp, dev.carrier_freq + tone.offset_freq * 1e-3))
    factor = decimation_factor(simulation_rate, dig.sample_rate)
    scale = np.sqrt(gain) * decimation_response(tone.offset_freq, simulation_rate, factor)
    means = analytic_bins(dev, tone, trajectory, trace_bin, n_bins) * scale
    variance = (gain * noise_variance(amp, 1.0) + dig.adc_noise_flux ** 2 / dig.sample_rate) / trace_bin
    if variance > 0:
        means = means + complex_noise(rng, n_bins, variance)
    times = np.arange(n_bins) * trace_bin
    return DemodResult(tone.channel, complex(np.sum(means) * trace_bin), means, times)


def trace_references(dev: DeviceConfig, amp: AmplifierConfig, dig: DigitizerConfig, simulation_rate: float,
                     tone: ToneSpec) -> Tuple[complex, complex]:
    """Steady-state trace levels (ground, excited) for a continuous tone."""
    factor = decimation_factor(simulation_rate, dig.sample_rate)
    scale = (np.sqrt(gain_profile(amp, dev.carrier_freq + tone.offset_freq * 1e-3))
             * decimation_response(tone.offset_freq, simulation_rate, factor))
    cfg = dev.channel(tone.channel)
    c = np.sqrt(2 * np.pi * cfg.kappa_ext)
    levels = []
    for state in (GROUND, EXCITED):
        mu = 2j * np.pi * (resonance_offset(dev, tone.channel, state) - tone.offset_freq) - np.pi * cfg.kappa
        levels.append(complex((tone.envelope + c * c * tone.envelope / mu) * scale))
    return levels[0], levels[1]


_WORKER_ENGINE: Optional[ShotEngine] = None


def _init_worker(engine: ShotEngine) -> None:
    global _WORKER_ENGINE
    _WORKER_ENGINE = engine


def _run_chunk(task) -> List[ShotOutcome]:
    ensemble, shots, pulse, prepared = task
    return _WORKER_ENGINE.simulate_chunk(ensemble, shots, pulse, prepared)


def run_ensemble(engine: ShotEngine, ensemble: int, n_shots: int, pulse: PulseSpec, prepared: str,
                 workers: Optional[int] = None, progress: bool = False) -> List[ShotOutcome]:
    """
    Simulate ``n_shots`` shots of one ensemble, in shot order.

    Args:
        engine (ShotEngine): Engine for the readout setup.
        ensemble (int): Ensemble index used in the RNG keys.
        n_shots (int): Number of shots.
        pulse (PulseSpec): Pulse after the herald.
        prepared (str): Prepared-state label.
        workers (int, optional): Worker processes; MUXSIM_THREADS when None.
        progress (bool, optional): Show a progress bar.

    Returns:
        list: ShotOutcomes ordered by shot, then comb channel.
    """
    workers = get_worker_count() if workers is None else workers
    engine.references()
    chunks = [range(start, min(start + CHUNK_SIZE, n_shots)) for start in range(0, n_shots, CHUNK_SIZE)]
    tasks = [(ensemble, chunk, pulse, prepared) for chunk in chunks]
    label = f"ensemble {ensemble} ({prepared})"

    outcomes: List[ShotOutcome] = []
    if workers <= 1 or len(chunks) <= 1:
        for task in tqdm(tasks, desc=label, disable=not progress):
            outcomes.extend(engine.simulate_chunk(*task))
        return outcomes

    logger.debug("Running %d chunks on %d workers", len(chunks), workers)
    with Pool(processes=min(workers, len(chunks)), initializer=_init_worker, initargs=(engine,)) as pool:
        for chunk in tqdm(pool.imap(_run_chunk, tasks), total=len(tasks), desc=label, disable=not progress):
            outcomes.extend(chunk)
    return outcomes
