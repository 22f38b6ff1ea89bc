"""
Analysis of shot ensembles and traces: projection, two-Gaussian mixture fits,
thresholds and fidelities, quantum-jump detection, Rabi/Ramsey fits and
dispersive-shift extraction.
"""

import logging
from collections import defaultdict
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import curve_fit
from scipy.special import erfc
from scipy.stats import kstest

from .device import EXCITED, GROUND, DeviceConfig, dispersive_shift
from .demodulator import DemodResult
from .qubit_dynamics import (
    TrajectoryRecord,
    measurement_induced_dephasing,
    ramsey_population,
    stark_shift,
)
from .utils import FitFailureError, MuxSimError

logger = logging.getLogger(__name__)

MIN_MIXTURE_SAMPLES = 1000
EM_TOLERANCE = 1e-9
EM_MAX_ITERATIONS = 500
THRESHOLD_SCAN_POINTS = 10_000
MIN_RAMSEY_POINTS = 8


class DegenerateReferenceError(MuxSimError):
    """Raised when the ground and excited references coincide."""
    pass


class MissingEnsembleError(MuxSimError):
    """Raised when a prepared-state ensemble is absent."""
    pass


class InsufficientDataError(FitFailureError):
    """Raised when there are too few samples or settings to fit."""
    pass


class CollapsedComponentError(FitFailureError):
    """Raised when a mixture component collapses to zero width."""
    pass


@dataclass(frozen=True)
class ShotOutcome:
    """Result of one shot on one channel."""

    channel: str
    prepared: str
    herald_pass: bool
    integrated_point: complex
    rotated_value: float = float("nan")
    assigned: Optional[str] = None
    truth_trajectory: Optional[TrajectoryRecord] = None
    herald_point: Optional[complex] = None

    def __post_init__(self):
        if self.assigned is not None and not self.herald_pass:
            raise ValueError("discarded shots cannot carry an assigned state")


@dataclass(frozen=True)
class DoubleGaussianFit:
    w0: float
    w1: float
    mu0: float
    mu1: float
    sigma0: float
    sigma1: float
    threshold: float = float("nan")
    err_g_as_e: float = float("nan")
    err_e_as_g: float = float("nan")
    fidelity: float = float("nan")
    log_likelihood: float = float("nan")
    iterations: int = 0

    @property
    def fidelity_alt(self) -> float:
        """F' = 1 - P(e|g) - P(g|e)."""
        return 1.0 - self.err_g_as_e - self.err_e_as_g

    @property
    def main_component(self) -> Tuple[float, float]:
        """(mean, sigma) of the heavier component."""
        if self.w0 >= self.w1:
            return self.mu0, self.sigma0
        return self.mu1, self.sigma1

    def upper_tail(self, t: float) -> float:
        """Mixture probability above t."""
        return float(self.w0 * _upper(t, self.mu0, self.sigma0) + self.w1 * _upper(t, self.mu1, self.sigma1))

    def lower_tail(self, t: float) -> float:
        return 1.0 - self.upper_tail(t)


@dataclass(frozen=True)
class FidelitySummary:
    """Per-channel single-shot readout summary."""

    channel: str
    threshold: float
    fidelity: float
    fidelity_alt: float
    err_g_as_e: float
    err_e_as_g: float
    empirical_err_g_as_e: float
    empirical_err_e_as_g: float
    n_g: int
    n_e: int
    discarded: int
    total: int
    decay_fraction: float
    pulse_error_fraction: float
    excitation_fraction: float
    orientation: int = 1
    method: str = "mixture"
    fit_g: Optional[DoubleGaussianFit] = None
    fit_e: Optional[DoubleGaussianFit] = None

    @property
    def empirical_fidelity(self) -> float:
        return 1.0 - 0.5 * (self.empirical_err_g_as_e + self.empirical_err_e_as_g)

    @property
    def discard_fraction(self) -> float:
        return self.discarded / self.total if self.total else 0.0


@dataclass(frozen=True)
class JumpReport:
    """Detected jumps for one or more traces."""

    jump_times: List[Tuple[float, ...]]
    initial_states: List[str]
    mean_dwell_time: float = float("nan")
    false_jump_rate: float = float("nan")  # per 100 bins
    ks_pvalue: float = float("nan")
    dwell_times: Tuple[float, ...] = ()


@dataclass(frozen=True)
class DampedCosineFit:
    """A e^{-t/τ} cos(2π f t + φ) + B."""

    freq: float
    decay_time: float
    amplitude: float
    phase: float
    offset: float


def _upper(t, mu, sigma):
    if sigma <= 0:
        return np.where(np.asarray(t) >= mu, 0.0, 1.0) if np.ndim(t) else float(t < mu)
    return 0.5 * erfc((t - mu) / (sigma * np.sqrt(2.0)))


def rotate_and_project(points, ref_g: complex, ref_e: complex) -> np.ndarray:
    """
    Project IQ points onto the axis through the two references.

    Args:
        points: Complex integrated points.
        ref_g (complex): Ground-state reference.
        ref_e (complex): Excited-state reference.

    Returns:
        np.ndarray: Re(p · conj(axis)) with axis the unit vector from ref_g to ref_e.

    Raises:
        DegenerateReferenceError: If the references coincide.
    """
    separation = complex(ref_e) - complex(ref_g)
    scale = max(abs(ref_g), abs(ref_e), 1e-300)
    if abs(separation) <= 1e-12 * scale:
        raise DegenerateReferenceError(f"References coincide: {ref_g} vs {ref_e}")
    axis = separation / abs(separation)
    return np.real(np.asarray(points, dtype=complex) * np.conj(axis))


def _component_log_pdf(x, mu, sigma):
    return -0.5 * ((x - mu) / sigma) ** 2 - np.log(sigma) - 0.5 * np.log(2 * np.pi)


def fit_double_gaussian(values, min_samples: int = MIN_MIXTURE_SAMPLES,
                        tol: float = EM_TOLERANCE, max_iter: int = EM_MAX_ITERATIONS) -> DoubleGaussianFit:
    """
    Maximum-likelihood two-Gaussian mixture by expectation maximization.

    Components closer than one pooled standard deviation are merged into a
    single component with weight 1 (the other gets weight 0).

    Args:
        values: Real samples.
        min_samples (int, optional): Minimum sample count. Defaults to 1000.
        tol (float, optional): Per-sample log-likelihood gain that stops the loop.
        max_iter (int, optional): Iteration cap.

    Returns:
        DoubleGaussianFit: Fit with μ0 ≤ μ1, threshold and fidelity filled in.

    Raises:
        InsufficientDataError: If fewer than ``min_samples`` values are given.
        CollapsedComponentError: If a component width collapses.
        FitFailureError: If EM neither converges nor merges, or the likelihood drops.
    """
    x = np.asarray(values, dtype=float)
    if len(x) < min_samples:
        raise InsufficientDataError(f"Need at least {min_samples} samples, got {len(x)}")
    spread = float(np.ptp(x))
    if spread == 0:
        raise CollapsedComponentError("All samples are identical")
    floor = 1e-12 * spread

    mu = np.percentile(x, [25, 75]).astype(float)
    sigma = np.full(2, max(np.std(x) / 2, floor))
    w = np.array([0.5, 0.5])
    previous = -np.inf
    converged = False
    iteration = 0

    for iteration in range(1, max_iter + 1):
        log_p = np.log(np.maximum(w, 1e-300))[:, None] + _component_log_pdf(x[None, :], mu[:, None], sigma[:, None])
        log_total = np.logaddexp(log_p[0], log_p[1])
        current = float(np.mean(log_total))
        if current < previous - 1e-12 * max(1.0, abs(previous)):
            raise FitFailureError(
                f"EM log-likelihood decreased at iteration {iteration}: {previous:.12g} -> {current:.12g}"
            )
        if current - previous < tol:
            converged = True
            break
        previous = current

        resp = np.exp(log_p - log_total)
        n_k = resp.sum(axis=1)
        if np.any(n_k <= 0):
            break
        w = n_k / len(x)
        mu = (resp @ x) / n_k
        sigma = np.sqrt(np.sum(resp * (x[None, :] - mu[:, None]) ** 2, axis=1) / n_k)
        if np.any(sigma < floor):
            raise CollapsedComponentError(
                f"Mixture component collapsed (sigma={sigma.min():.3g}, range={spread:.3g})"
            )

    order = np.argsort(mu)
    w, mu, sigma = w[order], mu[order], sigma[order]
    pooled = np.sqrt(np.sum(w * sigma ** 2))

    if mu[1] - mu[0] < pooled or np.min(w) == 0:
        mean, std = float(np.mean(x)), float(np.std(x))
        fit = DoubleGaussianFit(1.0, 0.0, mean, mean, std, std, log_likelihood=current, iterations=iteration)
        logger.debug("Mixture components merged after %d iterations", iteration)
    elif not converged:
        raise FitFailureError(
            f"EM did not converge in {max_iter} iterations: w={w}, mu={mu}, sigma={sigma}"
        )
    else:
        fit = DoubleGaussianFit(float(w[0]), float(w[1]), float(mu[0]), float(mu[1]),
                                float(sigma[0]), float(sigma[1]),
                                log_likelihood=current, iterations=iteration)

    threshold, err_g, err_e, fidelity = choose_threshold(fit)
    return replace(fit, threshold=threshold, err_g_as_e=err_g, err_e_as_g=err_e, fidelity=fidelity)


def _intersection(fit: DoubleGaussianFit) -> Optional[float]:
    s0, s1 = fit.sigma0, fit.sigma1
    log_ratio = np.log(fit.w0 * s1 / (fit.w1 * s0))
    a = 1.0 / (2 * s1 ** 2) - 1.0 / (2 * s0 ** 2)
    b = fit.mu0 / s0 ** 2 - fit.mu1 / s1 ** 2
    c = fit.mu1 ** 2 / (2 * s1 ** 2) - fit.mu0 ** 2 / (2 * s0 ** 2) + log_ratio

    if abs(a) < 1e-12 * max(abs(b), 1e-300):
        roots = [-c / b] if b != 0 else []
    else:
        disc = b * b - 4 * a * c
        if disc < 0:
            return None
        sq = np.sqrt(disc)
        roots = [(-b - sq) / (2 * a), (-b + sq) / (2 * a)]
    inside = [r for r in roots if min(fit.mu0, fit.mu1) <= r <= max(fit.mu0, fit.mu1)]
    return float(inside[0]) if inside else None


def _scan_threshold(fit: DoubleGaussianFit) -> float:
    low = min(fit.mu0 - 5 * fit.sigma0, fit.mu1 - 5 * fit.sigma1)
    high = max(fit.mu0 + 5 * fit.sigma0, fit.mu1 + 5 * fit.sigma1)
    grid = np.linspace(low, high, THRESHOLD_SCAN_POINTS)
    cost = fit.w0 * _upper(grid, fit.mu0, fit.sigma0) + fit.w1 * (1 - _upper(grid, fit.mu1, fit.sigma1))
    return float(grid[int(np.argmin(cost))])


def choose_threshold(fit: DoubleGaussianFit) -> Tuple[float, float, float, float]:
    """
    Discrimination threshold for a two-component fit.

    The threshold is the crossing of the weighted components between the two
    means, with a grid scan as fallback. Error rates are the tails of each
    component on the wrong side.

    Returns:
        tuple: (threshold, err_g_as_e, err_e_as_g, fidelity) with
            fidelity = 1 - ½(err_g_as_e + err_e_as_g).
    """
    if fit.mu0 == fit.mu1 or fit.w0 == 0 or fit.w1 == 0:
        threshold = 0.5 * (fit.mu0 + fit.mu1)
    else:
        threshold = _intersection(fit)
        if threshold is None:
            logger.warning("No component crossing between the means; scanning for the threshold")
            threshold = _scan_threshold(fit)

    err_g = float(_upper(threshold, fit.mu0, fit.sigma0))
    err_e = float(1.0 - _upper(threshold, fit.mu1, fit.sigma1))
    return threshold, err_g, err_e, 1.0 - 0.5 * (err_g + err_e)


def _error_budget(shots: Sequence[ShotOutcome]) -> Tuple[float, float, float]:
    excited = [s.truth_trajectory for s in shots if s.prepared == EXCITED and s.truth_trajectory]
    ground = [s.truth_trajectory for s in shots if s.prepared == GROUND and s.truth_trajectory]
    decay = np.mean([t.initial_state == EXCITED and t.first_decay is not None for t in excited]) if excited else 0.0
    pulse = np.mean([t.initial_state == GROUND for t in excited]) if excited else 0.0
    excitation = np.mean([t.initial_state == EXCITED or len(t.jump_times) > 0 for t in ground]) if ground else 0.0
    return float(decay), float(pulse), float(excitation)


def fidelity_report(shots: Sequence[ShotOutcome]) -> Dict[str, FidelitySummary]:
    """
    Single-shot fidelity per channel from herald-filtered shot ensembles.

    Each prepared-state ensemble is fitted on its own. The heavier component
    of each fit sets the threshold; the reported errors are the full mixture
    tails on the wrong side, so decay and pulse errors count against the
    fidelity. Degenerate ensembles (too few shots or zero spread) fall back
    to counting against the midpoint of the ensemble medians.

    Args:
        shots (list): ShotOutcome objects, any mix of channels and states.

    Returns:
        dict: FidelitySummary per channel label.

    Raises:
        MissingEnsembleError: If a channel lacks either prepared state.
    """
    by_channel: Dict[str, List[ShotOutcome]] = defaultdict(list)
    for shot in shots:
        by_channel[shot.channel].append(shot)

    report = {}
    for channel, channel_shots in by_channel.items():
        kept = [s for s in channel_shots if s.herald_pass]
        values_g = np.array([s.rotated_value for s in kept if s.prepared == GROUND])
        values_e = np.array([s.rotated_value for s in kept if s.prepared == EXCITED])
        if len(values_g) == 0 or len(values_e) == 0:
            raise MissingEnsembleError(f"Channel {channel} needs both prepared-state ensembles")

        orientation = 1
        if np.median(values_e) < np.median(values_g):
            orientation = -1
            values_g, values_e = -values_g, -values_e

        fit_g = fit_e = None
        method = "mixture"
        try:
            fit_g = fit_double_gaussian(values_g)
            fit_e = fit_double_gaussian(values_e)
            mu_g, sigma_g = fit_g.main_component
            mu_e, sigma_e = fit_e.main_component
            if mu_e <= mu_g:
                raise FitFailureError(f"Main components are not ordered for {channel}")
            threshold, _, _, _ = choose_threshold(
                DoubleGaussianFit(0.5, 0.5, mu_g, mu_e, sigma_g, sigma_e))
            err_g = fit_g.upper_tail(threshold)
            err_e = fit_e.lower_tail(threshold)
        except FitFailureError as e:
            logger.warning("Falling back to empirical counting for %s: %s", channel, e)
            method = "empirical"
            fit_g = fit_e = None
            threshold = 0.5 * (np.median(values_g) + np.median(values_e))
            err_g = float(np.mean(values_g > threshold))
            err_e = float(np.mean(values_e < threshold))

        decay, pulse, excitation = _error_budget(kept)
        report[channel] = FidelitySummary(
            channel=channel,
            threshold=float(orientation * threshold),
            fidelity=1.0 - 0.5 * (err_g + err_e),
            fidelity_alt=1.0 - err_g - err_e,
            err_g_as_e=float(err_g),
            err_e_as_g=float(err_e),
            empirical_err_g_as_e=float(np.mean(values_g > threshold)),
            empirical_err_e_as_g=float(np.mean(values_e < threshold)),
            n_g=len(values_g),
            n_e=len(values_e),
            discarded=len(channel_shots) - len(kept),
            total=len(channel_shots),
            decay_fraction=decay,
            pulse_error_fraction=pulse,
            excitation_fraction=excitation,
            orientation=orientation,
            method=method,
            fit_g=fit_g,
            fit_e=fit_e,
        )
        logger.info("%s: F=%.5f (%s), threshold=%.6g", channel, report[channel].fidelity, method, threshold)
    return report


def assign_states(shots: Sequence[ShotOutcome], report: Dict[str, FidelitySummary]) -> List[ShotOutcome]:
    """Fill in the assigned state of every kept shot using its channel's threshold."""
    assigned = []
    for shot in shots:
        if not shot.herald_pass or shot.channel not in report:
            assigned.append(shot)
            continue
        summary = report[shot.channel]
        excited = summary.orientation * (shot.rotated_value - summary.threshold) > 0
        assigned.append(replace(shot, assigned=EXCITED if excited else GROUND))
    return assigned


def histogram_counts(values_g, values_e, bins: int = 100) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Counts of both ensembles on shared bins: (centers, counts_g, counts_e)."""
    values_g = np.asarray(values_g, dtype=float)
    values_e = np.asarray(values_e, dtype=float)
    edges = np.histogram_bin_edges(np.concatenate([values_g, values_e]), bins=bins)
    counts_g, _ = np.histogram(values_g, bins=edges)
    counts_e, _ = np.histogram(values_e, bins=edges)
    return 0.5 * (edges[:-1] + edges[1:]), counts_g, counts_e


def detect_level_changes(values, times, threshold: float, min_bins: int) -> Tuple[str, Tuple[float, ...]]:
    """
    Hysteretic two-level detection on a real trace.

    The level changes only when ``min_bins`` consecutive bins sit on the other
    side of the threshold; the change time is the start of that run.

    Returns:
        tuple: (initial state, jump times).
    """
    values = np.asarray(values, dtype=float)
    if len(values) == 0:
        raise InsufficientDataError("Empty trace")
    high = values > threshold
    change = np.flatnonzero(np.diff(high.astype(int))) + 1
    starts = np.concatenate([[0], change])
    lengths = np.diff(np.concatenate([starts, [len(high)]]))

    level = None
    initial = None
    jumps = []
    for start, length in zip(starts, lengths):
        if length < min_bins:
            continue
        run_level = bool(high[start])
        if level is None:
            level = initial = run_level
        elif run_level != level:
            jumps.append(float(times[start]))
            level = run_level
    if initial is None:
        initial = bool(np.mean(high) > 0.5)
    return (EXCITED if initial else GROUND), tuple(jumps)


def _dwell_bins(min_dwell: float, bin_width: float) -> int:
    return max(1, int(round(min_dwell / bin_width)))


def detection_dead_time(min_dwell: float, bin_width: float) -> float:
    """
    Earliest first-jump time that detect_jumps reports without bias.

    A decay earlier than this can be absorbed into a ground-state start, so
    dwell times are measured from here on; the exponential is memoryless.
    """
    return (_dwell_bins(min_dwell, bin_width) + 1) * bin_width


def detect_jumps(trace: DemodResult, threshold: float, min_dwell: float,
                 ref_g: complex, ref_e: complex) -> JumpReport:
    """
    Detect quantum jumps in a demodulated trace.

    Args:
        trace (DemodResult): Trace with at least three bins.
        threshold (float): Level on the projected trace separating g from e.
        min_dwell (float): Dwell in μs a new level must hold to count.
        ref_g (complex): Ground reference in trace (bin-mean) units.
        ref_e (complex): Excited reference in trace units.

    Returns:
        JumpReport: Report for this single trace.
    """
    if len(trace.trace) < 3:
        raise InsufficientDataError(f"Trace for {trace.channel} has fewer than 3 bins")
    bin_width = float(trace.trace_times[1] - trace.trace_times[0])
    projected = rotate_and_project(trace.trace, ref_g, ref_e)
    initial, jumps = detect_level_changes(projected, trace.trace_times, threshold,
                                          _dwell_bins(min_dwell, bin_width))
    return JumpReport([jumps], [initial])


def summarize_jumps(reports: Sequence[JumpReport], t1: float, start: float = 0.0,
                    truths: Optional[Sequence[TrajectoryRecord]] = None,
                    bins_per_trace: Optional[int] = None,
                    dead_time: float = 0.0, bin_width: float = 0.0) -> JumpReport:
    """
    Combine single-trace reports into ensemble statistics.

    Dwell times come from traces that start in e and whose first e→g jump
    lies at or after ``start + dead_time``; they are measured from that
    cutoff and tested against Exp(T1) with a KS test. Jump times sit on bin
    edges, so with ``bin_width`` each dwell is taken at the middle of its bin.
    With truths the false-jump rate counts detected jumps beyond the true
    count per 100 bins.
    """
    jump_times = [times for report in reports for times in report.jump_times]
    initial_states = [state for report in reports for state in report.initial_states]
    cutoff = start + dead_time
    dwell = [times[0] - cutoff + 0.5 * bin_width for times, state in zip(jump_times, initial_states)
             if state == EXCITED and times and times[0] >= cutoff - 1e-9]

    mean_dwell = float(np.mean(dwell)) if dwell else float("nan")
    ks_pvalue = float(kstest(dwell, "expon", args=(0, t1)).pvalue) if len(dwell) >= 2 else float("nan")

    false_rate = float("nan")
    if truths is not None and bins_per_trace:
        extra = sum(max(0, len(times) - len(truth.jump_times)) for times, truth in zip(jump_times, truths))
        false_rate = 100.0 * extra / (bins_per_trace * len(jump_times))

    return JumpReport(jump_times, initial_states, mean_dwell, false_rate, ks_pvalue, tuple(dwell))


def _damped_cosine(t, freq, decay_time, amplitude, phase, offset):
    return amplitude * np.exp(-t / decay_time) * np.cos(2 * np.pi * freq * t + phase) + offset


def _fit_damped_cosine(t, y, what: str) -> DampedCosineFit:
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(t) < MIN_RAMSEY_POINTS:
        raise InsufficientDataError(f"{what} fit needs at least {MIN_RAMSEY_POINTS} points, got {len(t)}")

    step = float(np.mean(np.diff(t)))
    offset0 = float(np.mean(y))
    padded = 16 * len(y)
    spectrum = np.abs(np.fft.rfft(y - offset0, n=padded))
    freqs = np.fft.rfftfreq(padded, d=step)
    freq0 = float(freqs[int(np.argmax(spectrum[1:])) + 1])
    amplitude0 = float(y[0] - offset0) or float(np.ptp(y) / 2)
    span = float(t[-1] - t[0])

    try:
        popt, _ = curve_fit(
            _damped_cosine, t, y,
            p0=[freq0, span, amplitude0, 0.0, offset0],
            bounds=([0.0, 1e-6, -np.inf, -np.pi, -np.inf], [np.inf, np.inf, np.inf, np.pi, np.inf]),
            maxfev=20000,
        )
    except (RuntimeError, ValueError) as e:
        raise FitFailureError(f"{what} fit did not converge: {e}") from e

    freq, decay_time, amplitude, phase, offset = popt
    if freq * span < 1:
        logger.warning("%s data spans less than one fringe (f=%.4g MHz over %.4g us)", what, freq, span)
    return DampedCosineFit(float(freq), float(decay_time), float(amplitude), float(phase), float(offset))


def fit_ramsey(times, populations) -> DampedCosineFit:
    """
    Fit Ramsey fringes A e^{-t/τ} cos(2πft + φ) + B.

    The frequency is seeded from the peak of a zero-padded spectrum.

    Raises:
        InsufficientDataError: With fewer than 8 points.
        FitFailureError: If the optimizer fails.
    """
    return _fit_damped_cosine(times, populations, "Ramsey")


def fit_rabi(durations, values) -> DampedCosineFit:
    return _fit_damped_cosine(durations, values, "Rabi")


def extract_chi(dev: DeviceConfig, channel: str, photon_settings: Sequence[float],
                detuning: float = 10.0, delays=None, include_dephasing: bool = False,
                shots: Optional[int] = None, rng: Optional[np.random.Generator] = None) -> float:
    """
    Estimate χ from Ramsey frequencies measured at several photon numbers.

    The Stark shift 2χn̄ moves the fringe frequency linearly in n̄; half the
    fitted slope is χ.

    Args:
        dev (DeviceConfig): Device.
        channel (str): Channel label.
        photon_settings (list): Photon numbers, at least two distinct.
        detuning (float, optional): Ramsey detuning in MHz; keeps fringes positive.
        delays (array, optional): Ramsey delays in μs. Defaults to 201 points over 2·T2*.
        include_dephasing (bool, optional): Also apply measurement-induced dephasing.
        shots (int, optional): Binomial shots per point; exact populations when None.
        rng (np.random.Generator, optional): Required with ``shots``.

    Returns:
        float: χ estimate in MHz.

    Raises:
        InsufficientDataError: With fewer than two distinct photon settings.
    """
    settings = np.asarray(photon_settings, dtype=float)
    if len(np.unique(settings)) < 2:
        raise InsufficientDataError("extract_chi needs at least two distinct photon settings")

    cfg = dev.channel(channel)
    chi = dispersive_shift(cfg)
    if delays is None:
        delays = np.linspace(0.0, 2 * cfg.t2_ramsey, 201)

    frequencies = []
    for photons in settings:
        shift = stark_shift(chi, photons)
        dephasing = measurement_induced_dephasing(chi, cfg.kappa, photons) if include_dephasing else 0.0
        populations = np.array([ramsey_population(cfg, detuning, t, shift, dephasing) for t in delays])
        if shots is not None:
            populations = rng.binomial(shots, populations) / shots
        frequencies.append(fit_ramsey(delays, populations).freq)

    slope = np.polyfit(settings, frequencies, 1)[0]
    logger.debug("%s Ramsey frequencies %s vs photons %s", channel, frequencies, settings.tolist())
    return float(slope / 2)
