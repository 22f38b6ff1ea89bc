"""
Software demodulation of the digitized feedline into per-channel points and traces.
"""

import itertools
import logging
from dataclasses import dataclass
from typing import List, Literal, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from .feedline import ComplexWaveform, ReadoutComb
from .utils import MuxSimError

logger = logging.getLogger(__name__)

DEFAULT_TRACE_BIN = 0.048  # us


class DemodWindowError(MuxSimError):
    """Raised when an integration window does not fit the waveform or sample grid."""
    pass


def _is_multiple(value: float, step: float) -> bool:
    ratio = value / step
    return abs(ratio - round(ratio)) < 1e-6 and round(ratio) >= 1


class DemodSpec(BaseModel):
    """Boxcar integration window for one channel."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    channel: str
    offset_freq: float  # MHz
    integration_start: float = 0.0  # us
    integration_length: float  # us
    trace_bin: Optional[float] = None  # us
    window: Literal["boxcar"] = "boxcar"

    @model_validator(mode="after")
    def _check(self):
        if self.integration_length <= 0:
            raise ValueError(f"integration_length must be positive, got {self.integration_length}")
        if self.trace_bin is not None and not _is_multiple(self.integration_length, self.trace_bin):
            raise ValueError(
                f"trace_bin {self.trace_bin} must divide integration_length {self.integration_length}"
            )
        return self


@dataclass(frozen=True)
class DemodResult:
    """Integrated point in flux·μs, plus binned trace means in flux units."""

    channel: str
    integrated_point: complex
    trace: np.ndarray
    trace_times: np.ndarray


def _sample_index(t: float, wf: ComplexWaveform, what: str) -> int:
    position = (t - wf.t0) * wf.sample_rate
    index = int(round(position))
    if abs(position - index) > 1e-6:
        raise DemodWindowError(f"{what} {t} us is not on the {wf.sample_rate} MHz sample grid")
    return index


def demodulate(wf: ComplexWaveform, spec: DemodSpec) -> DemodResult:
    """
    Mix a channel down to DC and integrate over its window.

    Args:
        wf (ComplexWaveform): Digitized waveform.
        spec (DemodSpec): Channel window.

    Returns:
        DemodResult: Σ s[n] e^{-i2πf t_n} Δt over the window, and bin means.

    Raises:
        DemodWindowError: If the window falls outside the waveform or off the grid.
    """
    start = _sample_index(spec.integration_start, wf, "integration_start")
    count = _sample_index(wf.t0 + spec.integration_length, wf, "integration_length")
    if start < 0 or start + count > len(wf):
        raise DemodWindowError(
            f"Window [{spec.integration_start}, {spec.integration_start + spec.integration_length}) us "
            f"for {spec.channel} is outside the waveform [{wf.t0}, {wf.t0 + wf.duration}) us"
        )

    times = wf.times[start:start + count]
    product = wf.samples[start:start + count] * np.exp(-2j * np.pi * spec.offset_freq * times)
    point = complex(np.sum(product) * wf.dt)

    if spec.trace_bin is None:
        return DemodResult(spec.channel, point, np.zeros(0, dtype=complex), np.zeros(0))

    bin_samples = _sample_index(wf.t0 + spec.trace_bin, wf, "trace_bin")
    n_bins = count // bin_samples
    trace = product[:n_bins * bin_samples].reshape(n_bins, bin_samples).mean(axis=1)
    trace_times = times[0] + np.arange(n_bins) * spec.trace_bin
    return DemodResult(spec.channel, point, trace, trace_times)


def demodulate_all(wf: ComplexWaveform, specs: Sequence[DemodSpec]) -> List[DemodResult]:
    """Demodulate each spec; results keep the spec order."""
    return [demodulate(wf, spec) for spec in specs]


def snap_integration_length(length: float, offsets: Sequence[float], sample_rate: float) -> float:
    """
    Round an integration length to whole beat periods of the closest tone pair.

    The result is a multiple of 1/(minimum spacing) and lies on the sample grid,
    so channels with commensurate spacings integrate to exact orthogonality.
    """
    spacings = [abs(a - b) for a, b in itertools.combinations(offsets, 2) if a != b]
    if spacings:
        period = 1.0 / min(spacings)
        length = max(1, round(length / period)) * period
    snapped = max(1, round(length * sample_rate)) / sample_rate
    logger.debug("Integration length snapped to %.6f us", snapped)
    return snapped


def build_demod_specs(comb: ReadoutComb, integration_start: float, integration_length: float,
                      trace_bin: Optional[float] = None) -> List[DemodSpec]:
    """One DemodSpec per comb tone, sharing a window."""
    return [
        DemodSpec(
            channel=tone.channel,
            offset_freq=tone.offset_freq,
            integration_start=integration_start,
            integration_length=integration_length,
            trace_bin=trace_bin,
        )
        for tone in comb.tones
    ]
