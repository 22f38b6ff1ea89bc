"""
Core module for the muxsim library: one function per experiment.

Every run_* function takes a resolved ExperimentConfig, writes its data files
into the configured output directory and returns a dict describing the
results.
"""

import functools
import logging
import time
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

import numpy as np

from . import __version__
from .analysis import (
    assign_states,
    detect_jumps,
    detection_dead_time,
    extract_chi,
    fidelity_report,
    fit_rabi,
    fit_ramsey,
    histogram_counts,
    rotate_and_project,
    summarize_jumps,
)
from .config import ExperimentConfig, resolve_amplifier, resolve_device, validate_experiment
from .device import EXCITED, GROUND, QUBIT_STATES, DeviceConfig, dispersive_shift, pulled_resonance
from .feedline import (
    ReadoutComb,
    ToneSpec,
    build_readout_comb,
    fit_reflection,
    readout_amplitude,
    reflect,
    synthesize_comb,
)
from .qubit_dynamics import (
    PulseSpec,
    TrajectoryRecord,
    apply_pulse,
    calibrate_leakage,
    crosstalk_effects,
    evolve_during_measurement,
    ramsey_population,
    sample_initial_state,
    spurious_photons,
)
from .reporting import (
    fidelity_summary_values,
    write_csv,
    write_histogram_csv,
    write_manifest,
    write_summary,
    write_trace_csv,
    write_waveform_csv,
)
from .shot_engine import ReadoutSetup, ShotEngine, analytic_trace, run_ensemble, trace_references
from .utils import ConfigError, FitFailureError, MuxSimError, Stage, ensure_output_dir, stream_rng

logger = logging.getLogger(__name__)

HISTOGRAM_BINS = 100
SPECTROSCOPY_WINDOW = 0.5  # us averaged after settling
EXAMPLE_TRACES = 5


def _guard(func: Callable) -> Callable:
    """Re-raise library errors unchanged and wrap anything else in MuxSimError."""
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except MuxSimError:
            raise
        except Exception as e:
            raise MuxSimError(f"Unexpected error in {func.__name__}: {str(e)}") from e
    return wrapper


def _check(cfg: ExperimentConfig) -> None:
    problems = validate_experiment(cfg)
    if problems:
        raise ConfigError("Invalid configuration:\n  " + "\n  ".join(problems))


def _readout_setup(cfg: ExperimentConfig, dev: DeviceConfig, channels=None, amp=None,
                   fast_path: Optional[bool] = None,
                   integration_length: Optional[float] = None) -> ReadoutSetup:
    return ReadoutSetup.build(
        dev,
        amp if amp is not None else resolve_amplifier(cfg),
        cfg.digitizer,
        cfg.readout.photons,
        cfg.readout.integration_length if integration_length is None else integration_length,
        cfg.simulation_rate,
        channels=channels if channels is not None else cfg.channels,
        snap=cfg.readout.snap_integration and integration_length is None,
        phases=cfg.readout.phases,
        seed=cfg.seed,
        herald=cfg.readout.herald,
        pi_infidelity=cfg.readout.pi_infidelity,
        fast_path=cfg.fast_path if fast_path is None else fast_path,
    )


def _selected(cfg: ExperimentConfig, dev: DeviceConfig) -> List[str]:
    return list(cfg.channels) if cfg.channels else dev.labels


def _fidelities(engine: ShotEngine, shots: int, workers: Optional[int], verbose: bool):
    shots_g = run_ensemble(engine, 0, shots, PulseSpec(name="none"), GROUND, workers, progress=verbose)
    shots_e = run_ensemble(engine, 1, shots, PulseSpec(name="pi"), EXCITED, workers, progress=verbose)
    outcomes = shots_g + shots_e
    report = fidelity_report(outcomes)
    return report, assign_states(outcomes, report)


@_guard
def run_histogram(cfg: ExperimentConfig, verbose: bool = False, workers: Optional[int] = None) -> Dict[str, Any]:
    """
    Single-shot histograms and fidelities for both prepared states.

    With histogram.individual each channel is also read on its own, the
    other comb tones off, over the same integration window and random
    streams, so the two fidelities differ only by multiplexing.

    Args:
        cfg (ExperimentConfig): Resolved configuration.
        verbose (bool, optional): Show progress. Defaults to False.
        workers (int, optional): Worker processes; MUXSIM_THREADS when None.

    Returns:
        dict: Dictionary containing:
            - fidelities: FidelitySummary per channel
            - individual_fidelities: FidelitySummary per channel read alone
              (empty unless histogram.individual is set)
            - shots: assigned ShotOutcome list
            - integration_length: snapped integration length in μs
            - key_results: headline fidelities copied into the manifest
            - outputs: written files

    Raises:
        MuxSimError: If configuration, simulation or analysis fails.
    """
    _check(cfg)
    dev = resolve_device(cfg)
    engine = ShotEngine(_readout_setup(cfg, dev))
    logger.info("Histogram: %d shots per state on %s (%s path)", cfg.shots,
                ", ".join(engine.setup.channels), "fast" if cfg.fast_path else "full")

    report, shots = _fidelities(engine, cfg.shots, workers, verbose)

    individual = {}
    if cfg.histogram.individual:
        for channel in engine.setup.channels:
            alone = ShotEngine(_readout_setup(cfg, dev, channels=[channel],
                                              integration_length=engine.setup.integration_length))
            logger.info("Individual readout of %s with the other tones off", channel)
            individual[channel] = _fidelities(alone, cfg.shots, workers, verbose)[0][channel]

    out = Path(cfg.output_dir)
    outputs = []
    for channel, summary in report.items():
        kept = [s for s in shots if s.channel == channel and s.herald_pass]
        values_g = [s.rotated_value for s in kept if s.prepared == GROUND]
        values_e = [s.rotated_value for s in kept if s.prepared == EXCITED]
        centers, counts_g, counts_e = histogram_counts(values_g, values_e, HISTOGRAM_BINS)
        outputs.append(write_histogram_csv(out / f"histogram_{channel}.csv", centers, counts_g, counts_e))

    references = engine.references()
    values = {
        "experiment": "histogram",
        "shots_per_state": cfg.shots,
        "integration_length_us": engine.setup.integration_length,
        "fast_path": cfg.fast_path,
    }
    for channel, (ref_g, ref_e) in references.items():
        values[f"{channel}.separation"] = abs(ref_e - ref_g)
    values.update(fidelity_summary_values(report))
    key_results = {f"{channel}.fidelity": summary.fidelity for channel, summary in report.items()}
    for channel, summary in individual.items():
        values[f"{channel}.individual_fidelity"] = summary.fidelity
        values[f"{channel}.individual_discard_fraction"] = summary.discard_fraction
        key_results[f"{channel}.individual_fidelity"] = summary.fidelity
    outputs.append(write_summary(out / "summary.txt", values))

    if not cfg.fast_path:
        for state in QUBIT_STATES:
            trajectories = [TrajectoryRecord(label, state, engine.setup.integration_length) for label in dev.labels]
            outputs.append(write_waveform_csv(out / f"waveform_{state}.csv", engine.reflected(trajectories)))

    return {
        "fidelities": report,
        "individual_fidelities": individual,
        "shots": shots,
        "references": references,
        "integration_length": engine.setup.integration_length,
        "key_results": key_results,
        "outputs": outputs,
    }


@_guard
def run_spectroscopy(cfg: ExperimentConfig, verbose: bool = False, workers: Optional[int] = None) -> Dict[str, Any]:
    """
    Swept single-tone reflection of each cavity for both qubit states.

    The tone is held for settle_factor/κ before the reflection is averaged, and
    Γ is the reflected over incident field. Linewidths and pulled resonances
    come from a complex fit of each sweep.

    Returns:
        dict: Per-channel sweeps and fits ('channels') plus 'outputs'.
    """
    _check(cfg)
    dev = resolve_device(cfg)
    settings = cfg.spectroscopy
    fs = cfg.simulation_rate
    out = Path(cfg.output_dir)
    outputs = []
    summary: Dict[str, Any] = {"experiment": "spectroscopy"}
    results = {}

    for label in _selected(cfg, dev):
        channel = dev.channel(label)
        settle = settings.settle_factor / channel.kappa
        span = settle + SPECTROSCOPY_WINDOW
        start = int(round(settle * fs))
        offsets = dev.offset(label) + np.linspace(-settings.span / 2, settings.span / 2, settings.points)
        amplitude = readout_amplitude(channel, settings.photons, detuning=0.0)

        sweeps = {}
        for state in QUBIT_STATES:
            states = {other: GROUND for other in dev.labels}
            states[label] = state
            gammas = []
            for offset in offsets:
                tone = ToneSpec(channel=label, offset_freq=float(offset), amplitude=amplitude, duration=span)
                drive = synthesize_comb(ReadoutComb(tones=[tone]), span, fs)
                reflected, _ = reflect(dev, states, drive)
                incident = drive.samples[start:]
                if amplitude == 0:
                    gammas.append(0j)
                else:
                    gammas.append(complex(np.mean(reflected.samples[start:] / incident)))
            sweeps[state] = np.array(gammas)

        fits = {}
        if amplitude > 0:
            for state in QUBIT_STATES:
                fits[state] = fit_reflection(offsets, sweeps[state])
        freqs_ghz = dev.carrier_freq + offsets * 1e-3
        rows = [(f, *(v for state in QUBIT_STATES for v in (sweeps[state][i].real, sweeps[state][i].imag,
                                                              abs(sweeps[state][i]) * amplitude,
                                                              np.angle(sweeps[state][i]))))
                for i, f in enumerate(freqs_ghz)]
        outputs.append(write_csv(out / f"spectroscopy_{label}.csv",
                                 ["freq_ghz", "gamma_g_re", "gamma_g_im", "amplitude_g", "phase_g",
                                  "gamma_e_re", "gamma_e_im", "amplitude_e", "phase_e"], rows))

        chi = dispersive_shift(channel)
        summary[f"{label}.kappa_configured"] = channel.kappa
        summary[f"{label}.two_chi_abs"] = 2 * abs(chi)
        if fits:
            resonance = {state: dev.carrier_freq + fits[state].resonance * 1e-3 for state in QUBIT_STATES}
            summary[f"{label}.kappa_fit"] = fits[GROUND].kappa
            summary[f"{label}.kappa_ext_fit"] = fits[GROUND].kappa_ext
            summary[f"{label}.kappa_int_fit"] = fits[GROUND].kappa_int
            summary[f"{label}.resonance_g_ghz"] = resonance[GROUND]
            summary[f"{label}.resonance_e_ghz"] = resonance[EXCITED]
            summary[f"{label}.separation_mhz"] = abs(resonance[EXCITED] - resonance[GROUND]) * 1e3
        results[label] = {"freqs_ghz": freqs_ghz, "gamma": sweeps, "fits": fits}
        logger.info("Spectroscopy %s done", label)

    outputs.append(write_summary(out / "summary.txt", summary))
    return {"channels": results, "outputs": outputs}


@_guard
def run_rabi(cfg: ExperimentConfig, verbose: bool = False, workers: Optional[int] = None) -> Dict[str, Any]:
    """
    Simultaneous Rabi oscillations on all selected channels.

    Each pulse duration is one ensemble; the curve is the mean projected
    readout value of kept shots, so its amplitude carries the channel's gain.

    Returns:
        dict: durations, per-channel 'curves' and 'fits', 'outputs'.
    """
    _check(cfg)
    dev = resolve_device(cfg)
    settings = cfg.rabi
    engine = ShotEngine(_readout_setup(cfg, dev))
    channels = engine.setup.channels
    durations = np.linspace(0.0, settings.max_duration, settings.points)

    curves = {label: [] for label in channels}
    for index, duration in enumerate(durations):
        pulse = PulseSpec(name="rabi", drive_rate=settings.drive_rate, duration=float(duration))
        shots = run_ensemble(engine, index, settings.shots_per_point, pulse, GROUND, workers)
        for label in channels:
            values = [s.rotated_value for s in shots if s.channel == label and s.herald_pass]
            curves[label].append(float(np.mean(values)) if values else float("nan"))
        logger.debug("Rabi point %d/%d", index + 1, len(durations))

    fits = {}
    for label in channels:
        try:
            fits[label] = fit_rabi(durations, curves[label])
        except FitFailureError as e:
            logger.warning("Rabi fit failed for %s: %s", label, e)

    out = Path(cfg.output_dir)
    outputs = [write_csv(out / "rabi.csv", ["duration_us", *channels],
                         [(d, *(curves[label][i] for label in channels)) for i, d in enumerate(durations)])]
    summary: Dict[str, Any] = {"experiment": "rabi", "drive_rate_mhz": settings.drive_rate}
    for label, fit in fits.items():
        summary[f"{label}.rabi_freq_mhz"] = fit.freq
        summary[f"{label}.amplitude"] = abs(fit.amplitude)
        summary[f"{label}.decay_time_us"] = fit.decay_time
    outputs.append(write_summary(out / "summary.txt", summary))
    return {"durations": durations, "curves": curves, "fits": fits, "outputs": outputs}


def _ramsey_curve(cfg, dev: DeviceConfig, label: str, delays, detuning: float, shots: Optional[int],
                  ensemble: int, extra_shift: float = 0.0, extra_dephasing_rate: float = 0.0) -> np.ndarray:
    channel = dev.channel(label)
    populations = np.array([ramsey_population(channel, detuning, t, extra_shift, extra_dephasing_rate)
                            for t in delays])
    if shots:
        rng = stream_rng(cfg.seed, ensemble, 0, Stage.POPULATION, dev.index(label))
        populations = rng.binomial(shots, populations) / shots
    return populations


@_guard
def run_ramsey(cfg: ExperimentConfig, verbose: bool = False, workers: Optional[int] = None) -> Dict[str, Any]:
    """
    Ramsey fringes per channel, with binomial projection noise when shots_per_point is set.

    Returns:
        dict: delays, per-channel 'populations' and 'fits', 'outputs'.
    """
    _check(cfg)
    dev = resolve_device(cfg)
    settings = cfg.ramsey
    channels = _selected(cfg, dev)
    delays = np.linspace(0.0, settings.max_delay, settings.points)

    populations = {label: _ramsey_curve(cfg, dev, label, delays, settings.detuning, settings.shots_per_point, 0)
                   for label in channels}
    fits = {label: fit_ramsey(delays, populations[label]) for label in channels}

    out = Path(cfg.output_dir)
    outputs = [write_csv(out / "ramsey.csv", ["delay_us", *channels],
                         [(t, *(populations[label][i] for label in channels)) for i, t in enumerate(delays)])]
    summary: Dict[str, Any] = {"experiment": "ramsey", "detuning_mhz": settings.detuning}
    for label, fit in fits.items():
        summary[f"{label}.freq_mhz"] = fit.freq
        summary[f"{label}.decay_time_us"] = fit.decay_time
        summary[f"{label}.t2_ramsey_us"] = dev.channel(label).t2_ramsey
    outputs.append(write_summary(out / "summary.txt", summary))
    return {"delays": delays, "populations": populations, "fits": fits, "outputs": outputs}


@_guard
def run_crosstalk(cfg: ExperimentConfig, verbose: bool = False, workers: Optional[int] = None) -> Dict[str, Any]:
    """
    Victim Ramsey with the aggressor's readout tone off and on.

    The aggressor tone leaks into the victim cavity with amplitude ratio ξ,
    either configured or calibrated to the target spurious photon number.

    Shifts are reported as magnitudes (delta_freq, delta_decay_time) and as
    on-minus-off values (delta_freq_signed, delta_decay_time_signed).

    Returns:
        dict: leakage, spurious_photons, stark_shift, dephasing_rate, the
            four shift figures, the two fits and 'outputs'.
    """
    _check(cfg)
    dev = resolve_device(cfg)
    settings = cfg.crosstalk
    victim, aggressor = settings.victim, settings.aggressor
    if victim == aggressor:
        raise ConfigError("Crosstalk victim and aggressor must differ")

    tone = build_readout_comb(dev, settings.aggressor_photons, settings.max_delay, [aggressor]).tones[0]
    if settings.leakage is None:
        leakage = calibrate_leakage(dev, victim, tone, settings.target_photons)
    else:
        leakage = settings.leakage
    driven = dev.with_leakage(victim, aggressor, leakage)
    shift, dephasing = crosstalk_effects(driven, victim, tone)
    photons = spurious_photons(driven, victim, tone)

    delays = np.linspace(0.0, settings.max_delay, settings.points)
    p_off = _ramsey_curve(cfg, dev, victim, delays, settings.detuning, settings.shots_per_point, 0)
    p_on = _ramsey_curve(cfg, driven, victim, delays, settings.detuning, settings.shots_per_point, 1,
                         shift, dephasing)
    fit_off = fit_ramsey(delays, p_off)
    fit_on = fit_ramsey(delays, p_on)

    result = {
        "leakage": leakage,
        "spurious_photons": photons,
        "stark_shift": shift,
        "dephasing_rate": dephasing,
        "freq_off": fit_off.freq,
        "freq_on": fit_on.freq,
        "delta_freq_signed": fit_on.freq - fit_off.freq,
        "delta_freq": abs(fit_on.freq - fit_off.freq),
        "decay_time_off": fit_off.decay_time,
        "decay_time_on": fit_on.decay_time,
        "delta_decay_time_signed": fit_on.decay_time - fit_off.decay_time,
        "delta_decay_time": abs(fit_on.decay_time - fit_off.decay_time),
    }
    logger.info("Crosstalk %s<-%s: df=%+.4f MHz, dtau=%+.4f us", victim, aggressor,
                result["delta_freq_signed"], result["delta_decay_time_signed"])

    out = Path(cfg.output_dir)
    outputs = [
        write_csv(out / "crosstalk.csv", ["delay_us", "p_off", "p_on"], zip(delays, p_off, p_on)),
        write_summary(out / "summary.txt", {"experiment": "crosstalk", "victim": victim,
                                            "aggressor": aggressor, **result}),
    ]
    return {**result, "fit_off": fit_off, "fit_on": fit_on, "outputs": outputs}


@_guard
def run_jumps(cfg: ExperimentConfig, verbose: bool = False, workers: Optional[int] = None) -> Dict[str, Any]:
    """
    Quantum-jump traces under a continuous strong tone.

    Each trace starts from a thermal state followed by a π pulse, spans
    window_t1·T1 and is binned at trace_bin. The first e→g jump of traces that
    start in e, counted from the detection dead time on, gives the dwell time,
    tested against Exp(T1).

    Returns:
        dict: per-channel 'reports' (JumpReport) and 'outputs'.
    """
    _check(cfg)
    dev = resolve_device(cfg)
    settings = cfg.jumps
    amp = resolve_amplifier(cfg)
    out = Path(cfg.output_dir)
    outputs = []
    summary: Dict[str, Any] = {"experiment": "jumps", "photons": settings.photons,
                               "trace_bin_us": settings.trace_bin}
    reports = {}

    for label in _selected(cfg, dev):
        j = dev.index(label)
        channel = dev.channel(label)
        n_bins = int(np.ceil(settings.window_t1 * channel.t1 / settings.trace_bin))
        window = n_bins * settings.trace_bin
        tone = build_readout_comb(dev, settings.photons, window, [label]).tones[0]
        ref_g, ref_e = trace_references(dev, amp, cfg.digitizer, cfg.simulation_rate, tone)
        level_g, level_e = rotate_and_project([ref_g, ref_e], ref_g, ref_e)
        threshold = 0.5 * (level_g + level_e)
        dead_time = detection_dead_time(settings.min_dwell, settings.trace_bin)

        single, truths, rows = [], [], []
        for index in range(settings.traces):
            state = sample_initial_state(channel, stream_rng(cfg.seed, j, index, Stage.INIT, j))
            state = apply_pulse(state, 1.0 - cfg.readout.pi_infidelity,
                                stream_rng(cfg.seed, j, index, Stage.PULSE, j))
            truth = evolve_during_measurement(channel, state, window,
                                              stream_rng(cfg.seed, j, index, Stage.READOUT_TRAJECTORY, j), "pi")
            trace = analytic_trace(dev, amp, cfg.digitizer, cfg.simulation_rate, tone, truth, settings.trace_bin,
                                   stream_rng(cfg.seed, j, index, Stage.FAST_NOISE, j))
            report = detect_jumps(trace, threshold, settings.min_dwell, ref_g, ref_e)
            single.append(report)
            truths.append(truth)
            rows.append((index, report.initial_states[0], len(report.jump_times[0]),
                         ";".join(f"{t:.6g}" for t in report.jump_times[0]), len(truth.jump_times)))
            if index < EXAMPLE_TRACES:
                outputs.append(write_trace_csv(out / f"trace_{label}_{index}.csv", trace))

        combined = summarize_jumps(single, channel.t1, truths=truths, bins_per_trace=n_bins,
                                   dead_time=dead_time, bin_width=settings.trace_bin)
        reports[label] = combined
        outputs.append(write_csv(out / f"jumps_{label}.csv",
                                 ["trace", "initial_state", "n_jumps", "jump_times_us", "true_jumps"], rows))
        summary[f"{label}.t1_us"] = channel.t1
        summary[f"{label}.window_us"] = window
        summary[f"{label}.dead_time_us"] = dead_time
        summary[f"{label}.traces_with_decay"] = len(combined.dwell_times)
        summary[f"{label}.mean_dwell_us"] = combined.mean_dwell_time
        summary[f"{label}.ks_pvalue"] = combined.ks_pvalue
        summary[f"{label}.false_jumps_per_100_bins"] = combined.false_jump_rate
        logger.info("Jumps %s: mean dwell %.3f us (T1 %.1f us)", label, combined.mean_dwell_time, channel.t1)

    outputs.append(write_summary(out / "summary.txt", summary))
    return {"reports": reports, "outputs": outputs}


@_guard
def run_chi_calibration(cfg: ExperimentConfig, verbose: bool = False,
                        workers: Optional[int] = None) -> Dict[str, Any]:
    """
    Dispersive shift from Stark-shifted Ramsey fringes at several photon numbers.

    Returns:
        dict: 'chi' with (configured, extracted) per channel and 'outputs'.
    """
    _check(cfg)
    dev = resolve_device(cfg)
    settings = cfg.chi_calibration
    chi = {}
    for label in _selected(cfg, dev):
        rng = stream_rng(cfg.seed, dev.index(label), 0, Stage.POPULATION, 0)
        estimate = extract_chi(dev, label, settings.photon_settings, detuning=settings.detuning,
                               include_dephasing=settings.include_dephasing,
                               shots=settings.shots_per_point, rng=rng)
        chi[label] = (dispersive_shift(dev.channel(label)), estimate)

    out = Path(cfg.output_dir)
    outputs = [write_csv(out / "chi_calibration.csv", ["channel", "chi_configured_mhz", "chi_extracted_mhz",
                                                       "relative_error"],
                         [(label, c, e, abs(e - c) / abs(c)) for label, (c, e) in chi.items()])]
    summary: Dict[str, Any] = {"experiment": "chi_calibration"}
    for label, (configured, extracted) in chi.items():
        summary[f"{label}.chi_configured_mhz"] = configured
        summary[f"{label}.chi_extracted_mhz"] = extracted
    outputs.append(write_summary(out / "summary.txt", summary))
    return {"chi": chi, "outputs": outputs}


@_guard
def calibrate_efficiency(cfg: ExperimentConfig, verbose: bool = False,
                         workers: Optional[int] = None) -> Dict[str, Any]:
    """
    Bisect the amplifier efficiency so one channel reaches a target fidelity.

    Uses the fast path on the calibration channel alone with a fixed seed, so
    every evaluation sees the same random numbers and fidelity rises
    monotonically with efficiency.

    Returns:
        dict: efficiency, fidelity, evaluations.

    Raises:
        FitFailureError: If the target lies outside the efficiency bracket.
    """
    _check(cfg)
    dev = resolve_device(cfg)
    settings = cfg.calibration
    amp = resolve_amplifier(cfg)

    def fidelity_at(efficiency: float) -> float:
        setup = _readout_setup(cfg, dev, channels=[settings.channel],
                               amp=amp.model_copy(update={"efficiency": efficiency}), fast_path=True)
        report, _ = _fidelities(ShotEngine(setup), settings.shots, workers, False)
        value = report[settings.channel].fidelity
        logger.info("efficiency %.5f -> F=%.5f", efficiency, value)
        return value

    low, high = settings.efficiency_low, settings.efficiency_high
    f_low, f_high = fidelity_at(low), fidelity_at(high)
    evaluations = 2
    if not f_low <= settings.target_fidelity <= f_high:
        raise FitFailureError(
            f"Target fidelity {settings.target_fidelity} outside [{f_low:.5f}, {f_high:.5f}] "
            f"for efficiency in [{low}, {high}]"
        )
    fidelity = f_high
    while high - low > settings.tolerance:
        mid = 0.5 * (low + high)
        fidelity = fidelity_at(mid)
        evaluations += 1
        if fidelity < settings.target_fidelity:
            low = mid
        else:
            high = mid
    efficiency = 0.5 * (low + high)
    result = {"efficiency": efficiency, "fidelity": fidelity, "evaluations": evaluations,
              "channel": settings.channel, "target_fidelity": settings.target_fidelity}
    logger.info("Calibrated efficiency %.4f after %d evaluations", efficiency, evaluations)
    path = write_summary(Path(cfg.output_dir) / "calibration.txt", {"experiment": "calibration", **result})
    return {**result, "outputs": [path]}


EXPERIMENT_RUNNERS: Dict[str, Callable[..., Dict[str, Any]]] = {
    "histogram": run_histogram,
    "spectroscopy": run_spectroscopy,
    "rabi": run_rabi,
    "ramsey": run_ramsey,
    "jumps": run_jumps,
    "crosstalk": run_crosstalk,
    "chi_calibration": run_chi_calibration,
}


def run_experiment(cfg: ExperimentConfig, verbose: bool = False, workers: Optional[int] = None) -> Dict[str, Any]:
    """
    Run the configured experiment and write manifest.json next to its outputs.

    Args:
        cfg (ExperimentConfig): Resolved configuration.
        verbose (bool, optional): Show progress bars.
        workers (int, optional): Worker processes; MUXSIM_THREADS when None.

    Returns:
        dict: The experiment result plus 'manifest'.

    Example:
        >>> from muxsim import load_experiment_config, run_experiment
        >>> result = run_experiment(load_experiment_config(overrides={"shots": 2000}))
        >>> print(result["fidelities"]["Q2"].fidelity)
    """
    ensure_output_dir(cfg.output_dir)
    started = datetime.now(timezone.utc)
    clock = time.perf_counter()
    result = EXPERIMENT_RUNNERS[cfg.experiment](cfg, verbose=verbose, workers=workers)
    finished = datetime.now(timezone.utc)
    manifest = write_manifest(Path(cfg.output_dir) / "manifest.json", cfg.model_dump(), __version__,
                              result["outputs"], started.isoformat(), finished.isoformat(),
                              time.perf_counter() - clock, results=result.get("key_results"))
    result["manifest"] = manifest
    return result


def get_library_info() -> Dict[str, Any]:
    """
    Get information about the muxsim library.

    Returns:
        dict: Library information.
    """
    from .device import load_device
    dev = load_device()
    return {
        "version": __version__,
        "experiments": list(EXPERIMENT_RUNNERS),
        "bundled_channels": dev.labels,
        "carrier_freq_ghz": dev.carrier_freq,
        "dispersive_shifts_mhz": {cfg.label: dispersive_shift(cfg) for cfg in dev.channels},
        "pulled_resonances_ghz": {cfg.label: (pulled_resonance(cfg, GROUND), pulled_resonance(cfg, EXCITED))
                                  for cfg in dev.channels},
        "worker_env_var": "MUXSIM_THREADS",
    }
